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

#ifndef RSD_DEGRADE_H_
#define RSD_DEGRADE_H_

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rsd/image.h"
#include "rsd/manifest.h"

namespace rsd {

enum class OmegaMode { kSR, kSRC, kSRD };

const char* OmegaModeName(OmegaMode mode);
OmegaMode ParseOmegaMode(const std::string& name);

// Degradation applied to the low-resolution input while the re-synthesizer
// trains: identity (SR), partial grayscaling (SR_C) or Gaussian noise (SR_D),
// each applied with probability corrupt_prob.
struct OmegaSpec {
  OmegaMode mode = OmegaMode::kSR;
  double corrupt_prob = 0.5;
  double gray_frac_lo = 0.10;
  double gray_frac_hi = 0.25;
  double noise_sigma = 4.0 / 255.0;
  int sr_factor = 4;

  void Validate() const;
};

// Ordered test-time perturbation chain: JPEG -> blur -> crop+resize -> noise.
// jpeg_quality == 100 bypasses the codec entirely.
struct PerturbParams {
  int jpeg_quality = 75;
  double blur_sigma = 1.0;
  int blur_kernel = 3;
  double crop_frac = 0.9;
  double noise_sigma = 4.0 / 255.0;

  void Validate() const;
};

// Mean Fourier magnitude per integer frequency radius (luma).
struct RadialProfile {
  std::vector<double> bins;
  int max_radius = 0;
};

// Area-averaging downsample. H and W must be divisible by `factor`.
Image Downsample(const Image& img, int factor);

// Converts round(f * H * W) distinct pixels to BT.601 luma, with f drawn
// uniformly from [frac_lo, frac_hi]. Needs a 3-channel image.
Image PartialGrayscale(const Image& img, double frac_lo, double frac_hi,
                       uint64_t seed);

// Adds i.i.d. N(0, sigma^2) per element, then clips to [0, 1].
Image AddGaussianNoise(const Image& img, double sigma, uint64_t seed);

// `img` is the already downsampled re-synthesizer input.
Image ApplyOmega(const Image& img, const OmegaSpec& spec, uint64_t seed);

// Normalized 1D Gaussian taps, length `kernel` (odd).
std::vector<double> GaussianKernel1d(double sigma, int kernel);

// Separable Gaussian blur with replicated borders.
Image GaussianBlur(const Image& img, double sigma, int kernel);

// Bilinear resampling with half-pixel centers and clamped borders.
Image BilinearResize(const Image& img, int height, int width);

// Central crop of crop_frac of each side, resized back to the input size.
Image CenterCropResize(const Image& img, double crop_frac);

Image JpegRoundTrip(const Image& img, int quality);

// Observer invoked after each perturbation stage with its name
// ("jpeg", "blur", "crop", "noise") and the intermediate image.
using PerturbHook = std::function<void(std::string_view, const Image&)>;

Image PerturbP(const Image& img, const PerturbParams& params, uint64_t seed,
               const PerturbHook& hook = {});

RadialProfile ComputeRadialProfile(const Image& img);

// Mean profile over every image in the manifest (all must share a size).
RadialProfile MeanRadialProfile(const Manifest& manifest);

// Scales every Fourier coefficient of radius r > 0 by
// clamp(target(r) / current(r), 0.2, 5) (same factor for all channels),
// then inverts and clips. Rings with zero current energy are left alone.
Image SpectrumEqualize(const Image& img, const RadialProfile& target);

inline constexpr double kEqualizeMinRatio = 0.2;
inline constexpr double kEqualizeMaxRatio = 5.0;

}  // namespace rsd

#endif  // RSD_DEGRADE_H_
