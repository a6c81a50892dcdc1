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

#include "rsd/baselines.h"

#include <cmath>

#include "rsd/errors.h"
#include "rsd/nn/image_tensor.h"
#include "rsd/spectral.h"

namespace rsd {
namespace {

std::vector<double> PlaneAsDouble(const Image& img, int c) {
  const auto p = img.plane(c);
  return std::vector<double>(p.begin(), p.end());
}

}  // namespace

const char* FeatureKindName(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kImage:
      return "image";
    case FeatureKind::kSpectrum1d:
      return "spectrum_1d";
    case FeatureKind::kFft2d:
      return "fft_2d";
    case FeatureKind::kDct2d:
      return "dct_2d";
  }
  return "?";
}

FeatureKind ParseFeatureKind(const std::string& name) {
  for (FeatureKind k : {FeatureKind::kImage, FeatureKind::kSpectrum1d,
                        FeatureKind::kFft2d, FeatureKind::kDct2d}) {
    if (name == FeatureKindName(k)) return k;
  }
  throw ArgumentError("unknown feature kind '" + name + "'");
}

std::vector<double> PowerSpectrum(const Image& img) {
  const Image luma = img.channels() == 1 ? img : ToLuma(img);
  const int h = luma.height(), w = luma.width();
  const auto f = spectral::Fft2(PlaneAsDouble(luma, 0), h, w);
  std::vector<double> power(f.size());
  for (size_t i = 0; i < f.size(); ++i) power[i] = std::norm(f[i]);
  return power;
}

std::vector<double> Spectrum1dFeature(const Image& img) {
  std::vector<double> profile =
      spectral::AzimuthalMean(PowerSpectrum(img), img.height(), img.width());
  for (double& v : profile) v = std::log1p(v);
  return profile;
}

nn::Tensor<double> FftMagnitude(const Image& img) {
  const int h = img.height(), w = img.width();
  nn::Tensor<double> out({img.channels(), h, w});
  const size_t plane = size_t(h) * w;
  for (int c = 0; c < img.channels(); ++c) {
    const auto f = spectral::Fft2(PlaneAsDouble(img, c), h, w);
    std::vector<double> mag(f.size());
    for (size_t i = 0; i < f.size(); ++i) mag[i] = std::abs(f[i]);
    const auto shifted = spectral::FftShift(mag, h, w);
    std::copy(shifted.begin(), shifted.end(), out.data() + size_t(c) * plane);
  }
  return out;
}

nn::Tensor<float> Fft2dFeature(const Image& img) {
  const nn::Tensor<double> mag = FftMagnitude(img);
  nn::Tensor<float> out(mag.shape());
  for (size_t i = 0; i < mag.size(); ++i) out[i] = float(std::log1p(mag[i]));
  return out;
}

nn::Tensor<double> DctCoefficients(const Image& img) {
  const int h = img.height(), w = img.width();
  nn::Tensor<double> out({img.channels(), h, w});
  const size_t plane = size_t(h) * w;
  for (int c = 0; c < img.channels(); ++c) {
    const auto d = spectral::Dct2(PlaneAsDouble(img, c), h, w);
    std::copy(d.begin(), d.end(), out.data() + size_t(c) * plane);
  }
  return out;
}

nn::Tensor<float> Dct2dFeature(const Image& img) {
  const nn::Tensor<double> d = DctCoefficients(img);
  nn::Tensor<float> out(d.shape());
  for (size_t i = 0; i < d.size(); ++i) {
    out[i] = float(std::log1p(std::abs(d[i])));
  }
  return out;
}

nn::Tensor<float> ComputeFeature(FeatureKind kind, const Image& img) {
  switch (kind) {
    case FeatureKind::kImage:
      return nn::ImageToTensor<float>(img);
    case FeatureKind::kSpectrum1d: {
      const auto v = Spectrum1dFeature(img);
      nn::Tensor<float> t({int(v.size())});
      for (size_t i = 0; i < v.size(); ++i) t[i] = float(v[i]);
      return t;
    }
    case FeatureKind::kFft2d:
      return Fft2dFeature(img);
    case FeatureKind::kDct2d:
      return Dct2dFeature(img);
  }
  throw ArgumentError("unknown feature kind");
}

std::vector<int> FeatureShape(FeatureKind kind, int channels, int height,
                              int width) {
  if (kind == FeatureKind::kSpectrum1d) {
    return {spectral::MaxRadius(height, width) + 1};
  }
  return {channels, height, width};
}

ClassifierTrainResult TrainBaseline(FeatureKind kind,
                                    const std::vector<Image>& reals,
                                    const std::vector<Image>& fakes,
                                    const TrainConfig& cfg, uint64_t init_seed) {
  RSD_REQUIRE(!reals.empty() && !fakes.empty(),
              "baseline training needs both reals and fakes");
  const Image& first = reals.front();
  const auto shape =
      FeatureShape(kind, first.channels(), first.height(), first.width());
  std::vector<nn::Tensor<float>> inputs;
  std::vector<Label> labels;
  inputs.reserve(reals.size() + fakes.size());
  for (const Image& img : reals) {
    inputs.push_back(ComputeFeature(kind, img));
    labels.push_back(Label::kReal);
  }
  for (const Image& img : fakes) {
    inputs.push_back(ComputeFeature(kind, img));
    labels.push_back(Label::kFake);
  }
  Classifier c = kind == FeatureKind::kSpectrum1d
                     ? BuildLinearClassifier(kBaselineLevel, shape[0], init_seed)
                     : BuildClassifier(kBaselineLevel, shape, init_seed);
  c.tags["feature_kind"] = FeatureKindName(kind);
  return TrainClassifier(std::move(c), inputs, labels, cfg);
}

double ClassifyBaseline(const Classifier& c, const Image& img) {
  return Classify(c, ComputeFeature(BaselineKind(c), img));
}

FeatureKind BaselineKind(const Classifier& c) {
  auto it = c.tags.find("feature_kind");
  if (it == c.tags.end()) {
    throw ArgumentError("classifier carries no baseline feature kind");
  }
  return ParseFeatureKind(it->second);
}

}  // namespace rsd
