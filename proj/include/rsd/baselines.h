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

#ifndef RSD_BASELINES_H_
#define RSD_BASELINES_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rsd/detect.h"
#include "rsd/image.h"
#include "rsd/nn/tensor.h"

namespace rsd {

// Frequency-domain and raw-image features for the comparison detectors.
enum class FeatureKind { kImage, kSpectrum1d, kFft2d, kDct2d };

const char* FeatureKindName(FeatureKind kind);  // "image", "spectrum_1d", ...
FeatureKind ParseFeatureKind(const std::string& name);

// Level recorded on baseline classifiers; residual levels are >= 0.
inline constexpr int kBaselineLevel = -1;

// |F|^2 of the luma plane, natural DFT order, row-major [h * w].
std::vector<double> PowerSpectrum(const Image& img);

// log(1 + azimuthal mean of the luma power spectrum), length MaxRadius + 1.
std::vector<double> Spectrum1dFeature(const Image& img);

// Per-channel |F| with the zero frequency at (h/2, w/2), before compression.
nn::Tensor<double> FftMagnitude(const Image& img);

// log(1 + FftMagnitude).
nn::Tensor<float> Fft2dFeature(const Image& img);

// Per-channel orthonormal DCT-II coefficients, before compression.
nn::Tensor<double> DctCoefficients(const Image& img);

// log(1 + |DctCoefficients|).
nn::Tensor<float> Dct2dFeature(const Image& img);

// Classifier input for `kind`; spectrum_1d comes back as a rank-1 tensor.
nn::Tensor<float> ComputeFeature(FeatureKind kind, const Image& img);
std::vector<int> FeatureShape(FeatureKind kind, int channels, int height,
                              int width);

// Linear classifier for spectrum_1d, the residual CNN for the map features.
// `init_seed` seeds the weights; `cfg` drives the same SGD loop the
// residual detectors use.
ClassifierTrainResult TrainBaseline(FeatureKind kind,
                                    const std::vector<Image>& reals,
                                    const std::vector<Image>& fakes,
                                    const TrainConfig& cfg, uint64_t init_seed);

// Probability of fake for one image.
double ClassifyBaseline(const Classifier& c, const Image& img);

FeatureKind BaselineKind(const Classifier& c);

}  // namespace rsd

#endif  // RSD_BASELINES_H_
