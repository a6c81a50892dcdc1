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

#include "rsd/residual.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsd/degrade.h"
#include "rsd/errors.h"

namespace rsd {
namespace {

ArtifactMap AbsDiff(const nn::Tensor<float>& a, const nn::Tensor<float>& b) {
  RSD_REQUIRE(a.shape() == b.shape(), "artifact operands differ in shape");
  ArtifactMap out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i] - b[i]);
  return out;
}

nn::Tensor<float> AsTensor(const Image& img) {
  return nn::Tensor<float>({img.channels(), img.height(), img.width()},
                           std::vector<float>(img.values().begin(),
                                              img.values().end()));
}

}  // namespace

ArtifactMap PixelArtifact(const Image& x, const SRModel& phi) {
  const Image rec = phi.Reconstruct(Downsample(x, phi.sr_factor()));
  return AbsDiff(AsTensor(x), AsTensor(rec));
}

ArtifactMap StageArtifact(const Image& x, const SRModel& phi,
                          const StageFeatureExtractor& ext, int stage) {
  RSD_REQUIRE(stage >= 1 && stage <= ext.n_stages(),
              "stage index " + std::to_string(stage) + " out of range [1, " +
                  std::to_string(ext.n_stages()) + "]");
  return ArtifactStack(x, phi, ext, {stage}).levels.at(stage);
}

ResidualStack ArtifactStack(const Image& x, const SRModel& phi,
                            const StageFeatureExtractor& ext,
                            const std::vector<int>& levels,
                            const std::string& image_id) {
  ResidualStack stack;
  stack.image_id = image_id;
  stack.model_id = "sr_model";
  const Image rec = phi.Reconstruct(Downsample(x, phi.sr_factor()));
  bool need_stages = false;
  for (int level : levels) {
    RSD_REQUIRE(level >= 0 && level <= ext.n_stages(),
                "artifact level " + std::to_string(level) + " out of range");
    need_stages |= level > 0;
  }
  StageFeatures fx, fr;
  if (need_stages) {
    fx = ext.Extract(x);
    fr = ext.Extract(rec);
  }
  for (int level : levels) {
    if (level == 0) {
      stack.levels[0] = AbsDiff(AsTensor(x), AsTensor(rec));
    } else {
      stack.levels[level] = AbsDiff(fx.stages[size_t(level - 1)],
                                    fr.stages[size_t(level - 1)]);
    }
  }
  return stack;
}

double SpatialMean(const ArtifactMap& map) {
  RSD_REQUIRE(!map.empty(), "mean of an empty map");
  double s = 0.0;
  for (float v : map.values()) s += double(v);
  return s / double(map.size());
}

double Auc(std::span<const double> negatives,
           std::span<const double> positives) {
  RSD_REQUIRE(!negatives.empty() && !positives.empty(),
              "AUC needs both classes");
  struct Item {
    double v;
    bool pos;
  };
  std::vector<Item> all;
  for (double v : negatives) all.push_back({v, false});
  for (double v : positives) all.push_back({v, true});
  std::sort(all.begin(), all.end(),
            [](const Item& a, const Item& b) { return a.v < b.v; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double mid_rank = 0.5 * double(i + 1 + j);
    for (size_t k = i; k < j; ++k) {
      if (all[k].pos) rank_sum += mid_rank;
    }
    i = j;
  }
  const double np = double(positives.size()), nn_ = double(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn_);
}

HistogramReport BuildHistogramReport(int level, std::span<const double> reals,
                                     std::span<const double> fakes) {
  RSD_REQUIRE(!reals.empty() && !fakes.empty(),
              "histogram report needs both classes");
  HistogramReport r;
  r.level = level;
  r.n_bins = kHistogramBins;
  r.real_values.assign(reals.begin(), reals.end());
  r.fake_values.assign(fakes.begin(), fakes.end());
  const auto [rmin, rmax] = std::minmax_element(reals.begin(), reals.end());
  const auto [fmin, fmax] = std::minmax_element(fakes.begin(), fakes.end());
  r.lo = std::min(*rmin, *fmin);
  r.hi = std::max(*rmax, *fmax);
  r.real_counts.assign(size_t(r.n_bins), 0);
  r.fake_counts.assign(size_t(r.n_bins), 0);
  const double width = (r.hi - r.lo) / r.n_bins;
  auto bin = [&](double v) {
    if (width <= 0.0) return 0;
    return std::clamp(int((v - r.lo) / width), 0, r.n_bins - 1);
  };
  for (double v : reals) ++r.real_counts[size_t(bin(v))];
  for (double v : fakes) ++r.fake_counts[size_t(bin(v))];
  r.real_mean = std::accumulate(reals.begin(), reals.end(), 0.0) / reals.size();
  r.fake_mean = std::accumulate(fakes.begin(), fakes.end(), 0.0) / fakes.size();
  r.auc = Auc(reals, fakes);
  return r;
}

HistogramReport ResidualHistograms(const Manifest& reals, const Manifest& fakes,
                                   const SRModel& phi,
                                   const StageFeatureExtractor& ext,
                                   int level) {
  auto stats = [&](const Manifest& m) {
    std::vector<double> out;
    for (const auto& e : m.entries) {
      const Image img = LoadImage(e.path);
      out.push_back(SpatialMean(ArtifactStack(img, phi, ext, {level}, e.path)
                                    .levels.at(level)));
    }
    return out;
  };
  const auto r = stats(reals);
  const auto f = stats(fakes);
  return BuildHistogramReport(level, r, f);
}

nlohmann::ordered_json HistogramReport::ToJson() const {
  nlohmann::ordered_json j;
  j["level"] = level;
  j["n_bins"] = n_bins;
  j["range"] = {lo, hi};
  j["real_counts"] = real_counts;
  j["fake_counts"] = fake_counts;
  j["real_mean"] = real_mean;
  j["fake_mean"] = fake_mean;
  j["auc"] = auc;
  j["real_values"] = real_values;
  j["fake_values"] = fake_values;
  return j;
}

}  // namespace rsd
