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

#include "rsd/degrade.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "rsd/errors.h"
#include "rsd/seed.h"
#include "rsd/spectral.h"

namespace rsd {

const char* OmegaModeName(OmegaMode mode) {
  switch (mode) {
    case OmegaMode::kSR:
      return "SR";
    case OmegaMode::kSRC:
      return "SR_C";
    case OmegaMode::kSRD:
      return "SR_D";
  }
  return "?";
}

OmegaMode ParseOmegaMode(const std::string& name) {
  if (name == "SR") return OmegaMode::kSR;
  if (name == "SR_C" || name == "SR+C") return OmegaMode::kSRC;
  if (name == "SR_D" || name == "SR+D") return OmegaMode::kSRD;
  throw ArgumentError("unknown omega mode '" + name + "'");
}

void OmegaSpec::Validate() const {
  RSD_REQUIRE(corrupt_prob >= 0.0 && corrupt_prob <= 1.0,
              "corrupt_prob must be in [0, 1]");
  RSD_REQUIRE(0.0 <= gray_frac_lo && gray_frac_lo <= gray_frac_hi &&
                  gray_frac_hi <= 1.0,
              "gray fraction range must satisfy 0 <= lo <= hi <= 1");
  RSD_REQUIRE(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  RSD_REQUIRE(sr_factor >= 2, "sr_factor must be >= 2");
}

void PerturbParams::Validate() const {
  RSD_REQUIRE(jpeg_quality >= 1 && jpeg_quality <= 100,
              "jpeg_quality must be in [1, 100]");
  RSD_REQUIRE(blur_kernel >= 1 && blur_kernel % 2 == 1,
              "blur_kernel must be odd and >= 1");
  RSD_REQUIRE(blur_kernel == 1 || blur_sigma > 0.0,
              "blur_sigma must be > 0 for kernels wider than 1");
  RSD_REQUIRE(crop_frac > 0.0 && crop_frac <= 1.0,
              "crop_frac must be in (0, 1]");
  RSD_REQUIRE(noise_sigma >= 0.0, "noise_sigma must be >= 0");
}

Image Downsample(const Image& img, int factor) {
  RSD_REQUIRE(factor >= 1, "downsample factor must be >= 1");
  RSD_REQUIRE(img.height() % factor == 0 && img.width() % factor == 0,
              "image " + std::to_string(img.height()) + "x" +
                  std::to_string(img.width()) + " is not divisible by " +
                  std::to_string(factor));
  const int oh = img.height() / factor, ow = img.width() / factor;
  Image out(img.channels(), oh, ow);
  const float inv = 1.0f / float(factor * factor);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        float s = 0.0f;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            s += img.at(c, y * factor + dy, x * factor + dx);
          }
        }
        out.at(c, y, x) = s * inv;
      }
    }
  }
  return out;
}

Image PartialGrayscale(const Image& img, double frac_lo, double frac_hi,
                       uint64_t seed) {
  RSD_REQUIRE(img.channels() == 3, "partial grayscale needs an RGB image");
  RSD_REQUIRE(0.0 <= frac_lo && frac_lo <= frac_hi && frac_hi <= 1.0,
              "gray fraction range must satisfy 0 <= lo <= hi <= 1");
  std::mt19937_64 rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double frac = frac_lo + (frac_hi - frac_lo) * u;
  const size_t n = img.plane_size();
  const auto k = std::min(n, size_t(std::lround(frac * double(n))));
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  std::vector<uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  for (size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Image out = img;
  auto r = out.plane(0), g = out.plane(1), b = out.plane(2);
  for (size_t i = 0; i < k; ++i) {
    const size_t p = idx[i];
    const float y = 0.299f * r[p] + 0.587f * g[p] + 0.114f * b[p];
    r[p] = g[p] = b[p] = y;
  }
  return out;
}

Image AddGaussianNoise(const Image& img, double sigma, uint64_t seed) {
  RSD_REQUIRE(sigma >= 0.0, "noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  Image out = img;
  for (float& v : out.values()) {
    v = std::clamp(float(double(v) + dist(rng)), 0.0f, 1.0f);
  }
  return out;
}

Image ApplyOmega(const Image& img, const OmegaSpec& spec, uint64_t seed) {
  spec.Validate();
  if (spec.mode == OmegaMode::kSR) return img;
  std::mt19937_64 rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u >= spec.corrupt_prob) return img;
  const uint64_t op_seed = DeriveSeed(seed, {0x0E6A});
  if (spec.mode == OmegaMode::kSRC) {
    return PartialGrayscale(img, spec.gray_frac_lo, spec.gray_frac_hi, op_seed);
  }
  return AddGaussianNoise(img, spec.noise_sigma, op_seed);
}

std::vector<double> GaussianKernel1d(double sigma, int kernel) {
  RSD_REQUIRE(kernel >= 1 && kernel % 2 == 1, "kernel must be odd and >= 1");
  if (kernel == 1) return {1.0};
  RSD_REQUIRE(sigma > 0.0, "blur sigma must be > 0");
  const int r = kernel / 2;
  std::vector<double> taps(static_cast<size_t>(kernel));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[size_t(i + r)] = std::exp(-double(i * i) / (2.0 * sigma * sigma));
    sum += taps[size_t(i + r)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Image GaussianBlur(const Image& img, double sigma, int kernel) {
  const std::vector<double> taps = GaussianKernel1d(sigma, kernel);
  if (kernel == 1) return img;
  const int r = kernel / 2;
  const int h = img.height(), w = img.width();
  Image tmp(img.channels(), h, w), out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) {
          s += taps[size_t(i + r)] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        }
        tmp.at(c, y, x) = float(s);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) {
          s += taps[size_t(i + r)] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        }
        out.at(c, y, x) = float(s);
      }
    }
  }
  return out;
}

Image BilinearResize(const Image& img, int height, int width) {
  RSD_REQUIRE(height > 0 && width > 0, "resize target must be positive");
  if (height == img.height() && width == img.width()) return img;
  Image out(img.channels(), height, width);
  const double sy = double(img.height()) / height;
  const double sx = double(img.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 double(img.height() - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   double(img.width() - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
        const double bot = (1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
        out.at(c, y, x) = float((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Image CenterCropResize(const Image& img, double crop_frac) {
  RSD_REQUIRE(crop_frac > 0.0 && crop_frac <= 1.0, "crop_frac must be in (0, 1]");
  const int ch = int(std::lround(crop_frac * img.height()));
  const int cw = int(std::lround(crop_frac * img.width()));
  RSD_REQUIRE(ch >= 4 && cw >= 4, "crop would be smaller than 4x4");
  if (ch == img.height() && cw == img.width()) return img;
  const int oy = (img.height() - ch) / 2, ox = (img.width() - cw) / 2;
  Image crop(img.channels(), ch, cw);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) crop.at(c, y, x) = img.at(c, oy + y, ox + x);
    }
  }
  return BilinearResize(crop, img.height(), img.width());
}

Image JpegRoundTrip(const Image& img, int quality) {
  return DecodeJpeg(EncodeJpeg(img, quality));
}

Image PerturbP(const Image& img, const PerturbParams& params, uint64_t seed,
               const PerturbHook& hook) {
  params.Validate();
  {
    const int ch = int(std::lround(params.crop_frac * img.height()));
    const int cw = int(std::lround(params.crop_frac * img.width()));
    RSD_REQUIRE(ch >= 4 && cw >= 4, "crop would be smaller than 4x4");
  }
  auto notify = [&](std::string_view stage, const Image& im) {
    if (hook) hook(stage, im);
  };
  Image x = params.jpeg_quality == 100 ? img
                                       : JpegRoundTrip(img, params.jpeg_quality);
  notify("jpeg", x);
  x = GaussianBlur(x, params.blur_sigma, params.blur_kernel);
  notify("blur", x);
  x = CenterCropResize(x, params.crop_frac);
  notify("crop", x);
  x = AddGaussianNoise(x, params.noise_sigma, seed);
  notify("noise", x);
  return x;
}

namespace {

std::vector<double> PlaneToDouble(std::span<const float> p) {
  return std::vector<double>(p.begin(), p.end());
}

std::vector<double> RingMagnitudes(const std::vector<std::complex<double>>& f,
                                   int h, int w) {
  std::vector<double> mag(f.size());
  for (size_t i = 0; i < f.size(); ++i) mag[i] = std::abs(f[i]);
  return spectral::AzimuthalMean(mag, h, w);
}

}  // namespace

RadialProfile ComputeRadialProfile(const Image& img) {
  const Image luma = ToLuma(img);
  const int h = luma.height(), w = luma.width();
  const auto f = spectral::Fft2(PlaneToDouble(luma.plane(0)), h, w);
  RadialProfile p;
  p.bins = RingMagnitudes(f, h, w);
  p.max_radius = int(p.bins.size()) - 1;
  return p;
}

RadialProfile MeanRadialProfile(const Manifest& manifest) {
  RSD_REQUIRE(!manifest.entries.empty(), "empty manifest for radial profile");
  RadialProfile mean;
  int h = 0, w = 0;
  for (const auto& e : manifest.entries) {
    const Image img = LoadImage(e.path);
    if (mean.bins.empty()) {
      h = img.height();
      w = img.width();
      mean = ComputeRadialProfile(img);
      continue;
    }
    RSD_REQUIRE(img.height() == h && img.width() == w,
                "radial profile needs equally sized images");
    const RadialProfile p = ComputeRadialProfile(img);
    for (size_t r = 0; r < p.bins.size(); ++r) mean.bins[r] += p.bins[r];
  }
  for (double& b : mean.bins) b /= double(manifest.size());
  return mean;
}

Image SpectrumEqualize(const Image& img, const RadialProfile& target) {
  const int h = img.height(), w = img.width();
  RSD_REQUIRE(int(target.bins.size()) == spectral::MaxRadius(h, w) + 1,
              "target profile does not match the image size");
  const RadialProfile current = ComputeRadialProfile(img);
  std::vector<double> ratio(current.bins.size(), 1.0);
  for (size_t r = 1; r < ratio.size(); ++r) {
    if (current.bins[r] <= 0.0) continue;
    ratio[r] = std::clamp(target.bins[r] / current.bins[r], kEqualizeMinRatio,
                          kEqualizeMaxRatio);
  }
  Image out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    auto f = spectral::Fft2(PlaneToDouble(img.plane(c)), h, w);
    for (int u = 0; u < h; ++u) {
      for (int v = 0; v < w; ++v) {
        f[size_t(u) * w + v] *= ratio[size_t(spectral::RadiusBin(u, v, h, w))];
      }
    }
    const auto back = spectral::InverseFft2Real(f, h, w);
    auto dst = out.plane(c);
    for (size_t i = 0; i < back.size(); ++i) {
      dst[i] = float(std::clamp(back[i], 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace rsd
