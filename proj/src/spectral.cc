// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rsd/spectral.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>

#include "rsd/errors.h"

namespace rsd::spectral {
namespace {

// The FFTW planner is not thread-safe; execution is.
std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

struct RealBuffer {
  explicit RealBuffer(size_t n)
      : data(static_cast<double*>(fftw_malloc(sizeof(double) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~RealBuffer() { fftw_free(data); }
  RealBuffer(const RealBuffer&) = delete;
  RealBuffer& operator=(const RealBuffer&) = delete;
  double* data;
};

class Plan {
 public:
  explicit Plan(fftw_plan p) : p_(p) {
    if (!p_) throw std::runtime_error("FFTW planning failed");
  }
  ~Plan() {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(p_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void Execute() const { fftw_execute(p_); }

 private:
  fftw_plan p_;
};

void CheckDims(size_t n, int h, int w) {
  RSD_REQUIRE(h > 0 && w > 0 && n == size_t(h) * size_t(w),
              "plane size does not match dimensions");
}

std::vector<std::complex<double>> RunDft(std::span<const std::complex<double>> in,
                                         int h, int w, int sign) {
  const size_t n = size_t(h) * w;
  FftwBuffer buf(n);
  std::unique_ptr<Plan> plan;
  {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    plan = std::make_unique<Plan>(
        fftw_plan_dft_2d(h, w, buf.data, buf.data, sign, FFTW_ESTIMATE));
  }
  std::memcpy(buf.data, in.data(), n * sizeof(fftw_complex));
  plan->Execute();
  std::vector<std::complex<double>> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {buf.data[i][0], buf.data[i][1]};
  return out;
}

std::vector<double> RunR2r(std::span<const double> in, int h, int w,
                           fftw_r2r_kind kind) {
  const size_t n = size_t(h) * w;
  RealBuffer buf(n);
  std::unique_ptr<Plan> plan;
  {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    plan = std::make_unique<Plan>(
        fftw_plan_r2r_2d(h, w, buf.data, buf.data, kind, kind, FFTW_ESTIMATE));
  }
  std::memcpy(buf.data, in.data(), n * sizeof(double));
  plan->Execute();
  return std::vector<double>(buf.data, buf.data + n);
}

// Orthonormal scale of DCT-II index k on an axis of length n, relative to
// FFTW's REDFT10 (which computes 2 * sum x_j cos(pi (j + 1/2) k / n)).
double DctScale(int k, int n) {
  return k == 0 ? std::sqrt(1.0 / (4.0 * n)) : std::sqrt(1.0 / (2.0 * n));
}

}  // namespace

std::vector<std::complex<double>> Fft2(std::span<const double> plane, int h,
                                       int w) {
  CheckDims(plane.size(), h, w);
  std::vector<std::complex<double>> in(plane.begin(), plane.end());
  return RunDft(in, h, w, FFTW_FORWARD);
}

std::vector<double> InverseFft2Real(
    std::span<const std::complex<double>> spectrum, int h, int w) {
  CheckDims(spectrum.size(), h, w);
  const auto out = RunDft(spectrum, h, w, FFTW_BACKWARD);
  const double scale = 1.0 / (double(h) * w);
  std::vector<double> real(out.size());
  for (size_t i = 0; i < out.size(); ++i) real[i] = out[i].real() * scale;
  return real;
}

int RadiusBin(int u, int v, int h, int w) {
  const double fu = SignedFrequency(u, h);
  const double fv = SignedFrequency(v, w);
  return int(std::lround(std::sqrt(fu * fu + fv * fv)));
}

int MaxRadius(int h, int w) {
  int r = 0;
  for (int u : {h / 2, (h - 1) / 2}) {
    for (int v : {w / 2, (w - 1) / 2}) {
      const double d = std::sqrt(double(u) * u + double(v) * v);
      r = std::max(r, int(std::lround(d)));
    }
  }
  return r;
}

std::vector<double> AzimuthalMean(std::span<const double> values, int h,
                                  int w) {
  CheckDims(values.size(), h, w);
  const int rmax = MaxRadius(h, w);
  std::vector<double> sum(size_t(rmax) + 1, 0.0);
  std::vector<int> count(size_t(rmax) + 1, 0);
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const int r = RadiusBin(u, v, h, w);
      sum[size_t(r)] += values[size_t(u) * w + v];
      ++count[size_t(r)];
    }
  }
  for (size_t r = 0; r < sum.size(); ++r) {
    if (count[r] > 0) sum[r] /= count[r];
  }
  return sum;
}

std::vector<double> Dct2(std::span<const double> plane, int h, int w) {
  CheckDims(plane.size(), h, w);
  std::vector<double> c = RunR2r(plane, h, w, FFTW_REDFT10);
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      c[size_t(u) * w + v] *= DctScale(u, h) * DctScale(v, w);
    }
  }
  return c;
}

std::vector<double> InverseDct2(std::span<const double> coeffs, int h, int w) {
  CheckDims(coeffs.size(), h, w);
  std::vector<double> in(coeffs.begin(), coeffs.end());
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      in[size_t(u) * w + v] /= DctScale(u, h) * DctScale(v, w);
    }
  }
  std::vector<double> x = RunR2r(in, h, w, FFTW_REDFT01);
  const double scale = 1.0 / (4.0 * h * w);
  for (double& v : x) v *= scale;
  return x;
}

std::vector<double> FftShift(std::span<const double> values, int h, int w) {
  CheckDims(values.size(), h, w);
  std::vector<double> out(values.size());
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const int su = (u + h / 2) % h;
      const int sv = (v + w / 2) % w;
      out[size_t(su) * w + sv] = values[size_t(u) * w + v];
    }
  }
  return out;
}

}  // namespace rsd::spectral
