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

#ifndef RSD_RESIDUAL_H_
#define RSD_RESIDUAL_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsd/image.h"
#include "rsd/manifest.h"
#include "rsd/nn/tensor.h"
#include "rsd/perceptual.h"
#include "rsd/resynth.h"

namespace rsd {

// Elementwise non-negative residual, [C, H, W].
using ArtifactMap = nn::Tensor<float>;

// |x - phi(downsample(x))|. No degradation is applied at test time.
ArtifactMap PixelArtifact(const Image& x, const SRModel& phi);

// |stage_i(x) - stage_i(phi(downsample(x)))| for 1 <= stage <= n.
ArtifactMap StageArtifact(const Image& x, const SRModel& phi,
                          const StageFeatureExtractor& ext, int stage);

struct ResidualStack {
  std::map<int, ArtifactMap> levels;  // 0 = pixel, i = stage i
  std::string image_id;
  std::string model_id;
};

// Computes the requested levels sharing one reconstruction and one pass of
// the extractor per input.
ResidualStack ArtifactStack(const Image& x, const SRModel& phi,
                            const StageFeatureExtractor& ext,
                            const std::vector<int>& levels = {0, 5},
                            const std::string& image_id = "");

double SpatialMean(const ArtifactMap& map);

// Area under the ROC curve of a scalar score where `positives` (fakes)
// should score higher; ties count one half.
double Auc(std::span<const double> negatives, std::span<const double> positives);

struct HistogramReport {
  int level = 0;
  int n_bins = 64;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> real_counts;
  std::vector<int> fake_counts;
  double real_mean = 0.0;
  double fake_mean = 0.0;
  double auc = 0.5;
  std::vector<double> real_values;
  std::vector<double> fake_values;

  nlohmann::ordered_json ToJson() const;
};

inline constexpr int kHistogramBins = 64;

// Bins both classes over the pooled observed [min, max] range.
HistogramReport BuildHistogramReport(int level, std::span<const double> reals,
                                     std::span<const double> fakes);

// Spatially averaged artifact of `level` for every image of both manifests.
HistogramReport ResidualHistograms(const Manifest& reals, const Manifest& fakes,
                                   const SRModel& phi,
                                   const StageFeatureExtractor& ext, int level);

}  // namespace rsd

#endif  // RSD_RESIDUAL_H_
