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

#include <algorithm>
#include <fstream>
#include <set>

#include "rsd/errors.h"
#include "rsd/harness.h"

namespace rsd {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void CheckKeys(const json& j, const std::string& where,
               std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ArgumentError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      throw ArgumentError("unknown config key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void Read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ordered_json TrainToJson(const TrainConfig& t) {
  ordered_json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr"] = t.lr;
  j["momentum"] = t.momentum;
  j["lr_schedule"] = t.lr_schedule;
  return j;
}

TrainConfig TrainFromJson(const json& j, const std::string& where) {
  CheckKeys(j, where, {"epochs", "batch_size", "lr", "momentum", "lr_schedule"});
  TrainConfig t;
  Read(j, "epochs", t.epochs);
  Read(j, "batch_size", t.batch_size);
  Read(j, "lr", t.lr);
  Read(j, "momentum", t.momentum);
  Read(j, "lr_schedule", t.lr_schedule);
  return t;
}

bool IsStageDetector(const std::string& d, int* stage) {
  if (d.rfind("stage", 0) != 0 || d.size() == 5) return false;
  for (size_t i = 5; i < d.size(); ++i) {
    if (d[i] < '0' || d[i] > '9') return false;
  }
  *stage = std::stoi(d.substr(5));
  return true;
}

bool IsBaselineDetector(const std::string& d) {
  try {
    ParseFeatureKind(d);
    return true;
  } catch (const ArgumentError&) {
    return false;
  }
}

}  // namespace

const char* FakeModeName(FakeMode mode) {
  return mode == FakeMode::kPseudoFake ? "pseudo_fake" : "trained_generator";
}

FakeMode ParseFakeMode(const std::string& name) {
  if (name == "pseudo_fake") return FakeMode::kPseudoFake;
  if (name == "trained_generator") return FakeMode::kTrainedGenerator;
  throw ArgumentError("unknown fake_mode '" + name + "'");
}

const char* ConditionName(Condition c) {
  switch (c) {
    case Condition::kRaw:
      return "Raw";
    case Condition::kEqualize:
      return "+E";
    case Condition::kPerturb:
      return "+P";
  }
  return "?";
}

Condition ParseCondition(const std::string& name) {
  for (Condition c :
       {Condition::kRaw, Condition::kEqualize, Condition::kPerturb}) {
    if (name == ConditionName(c)) return c;
  }
  throw ArgumentError("unknown condition '" + name + "'");
}

void GeneratorConfig::Validate() const {
  RSD_REQUIRE(z_dim >= 1, "generator z_dim must be >= 1");
  RSD_REQUIRE(widths.size() == 4, "generator needs four widths");
  for (int w : widths) RSD_REQUIRE(w >= 1, "generator widths must be positive");
  RSD_REQUIRE(steps >= 1 && batch_size >= 1, "generator steps and batch >= 1");
  RSD_REQUIRE(lr > 0.0, "generator lr must be > 0");
  RSD_REQUIRE(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
              "Adam betas must be in [0, 1)");
}

void ExperimentConfig::Validate() const {
  RSD_REQUIRE(n_real >= 2 && n_fake >= 2, "need at least 2 reals and 2 fakes");
  RSD_REQUIRE(test_frac > 0.0 && test_frac < 1.0, "test_frac must be in (0, 1)");
  if (!real_dir.empty() && !std::filesystem::is_directory(real_dir)) {
    throw IoError("real_dir does not exist: " + real_dir);
  }
  omega.Validate();
  sr.Validate();
  extractor.Validate();
  perturb.Validate();
  alphas.Validate(extractor.n_stages);
  RSD_REQUIRE(omega.sr_factor == sr.sr_factor,
              "omega.sr_factor and sr.sr_factor differ");
  RSD_REQUIRE(image_size % sr.sr_factor == 0 && image_size % 4 == 0,
              "image_size must be divisible by sr_factor and 4");
  RSD_REQUIRE(image_size >= (1 << extractor.n_stages),
              "image_size is too small for the extractor depth");
  resynth_train.Validate();
  classifier_train.Validate();
  baseline_train.Validate();
  if (fake_mode == FakeMode::kTrainedGenerator) {
    generator.Validate();
    RSD_REQUIRE(image_size == 64, "trained_generator produces 64x64 images");
  }
  RSD_REQUIRE(threshold >= 0.0 && threshold <= 1.0, "threshold must be in [0,1]");
  RSD_REQUIRE(n_cams >= 0, "n_cams must be >= 0");
  RSD_REQUIRE(!detectors.empty(), "no detectors requested");
  RSD_REQUIRE(!conditions.empty(), "no conditions requested");
  std::set<std::string> seen;
  for (const auto& d : detectors) {
    RSD_REQUIRE(seen.insert(d).second, "duplicate detector '" + d + "'");
    int stage = 0;
    if (d == "pix" || IsBaselineDetector(d)) continue;
    if (IsStageDetector(d, &stage)) {
      RSD_REQUIRE(stage >= 1 && stage <= extractor.n_stages,
                  "detector '" + d + "' exceeds the extractor depth");
      continue;
    }
    if (d == "avg") {
      RSD_REQUIRE(int(betas.betas.size()) == extractor.n_stages + 1,
                  "betas need n_stages + 1 entries");
      betas.Validate();
      continue;
    }
    throw ArgumentError("unknown detector '" + d + "'");
  }
  std::set<Condition> cs;
  for (Condition c : conditions) {
    RSD_REQUIRE(cs.insert(c).second, "duplicate condition");
  }
}

std::vector<int> ExperimentConfig::ResidualLevels() const {
  std::set<int> levels;
  for (const auto& d : detectors) {
    int stage = 0;
    if (d == "pix") {
      levels.insert(0);
    } else if (IsStageDetector(d, &stage)) {
      levels.insert(stage);
    } else if (d == "avg") {
      for (int l : betas.ActiveLevels()) levels.insert(l);
    }
  }
  return {levels.begin(), levels.end()};
}

std::vector<FeatureKind> ExperimentConfig::BaselineKinds() const {
  std::vector<FeatureKind> kinds;
  for (const auto& d : detectors) {
    if (IsBaselineDetector(d)) kinds.push_back(ParseFeatureKind(d));
  }
  return kinds;
}

ordered_json ExperimentConfig::ToJson() const {
  ordered_json j;
  j["data"] = {{"real_dir", real_dir},
               {"n_real", n_real},
               {"n_fake", n_fake},
               {"image_size", image_size},
               {"test_frac", test_frac},
               {"fake_mode", FakeModeName(fake_mode)}};
  j["omega"] = {{"mode", OmegaModeName(omega.mode)},
                {"corrupt_prob", omega.corrupt_prob},
                {"gray_frac", {omega.gray_frac_lo, omega.gray_frac_hi}},
                {"noise_sigma", omega.noise_sigma},
                {"sr_factor", omega.sr_factor}};
  j["alphas"] = alphas.alphas;
  j["betas"] = betas.betas;
  j["perturb"] = {{"jpeg_quality", perturb.jpeg_quality},
                  {"blur_sigma", perturb.blur_sigma},
                  {"blur_kernel", perturb.blur_kernel},
                  {"crop_frac", perturb.crop_frac},
                  {"noise_sigma", perturb.noise_sigma}};
  j["sr"] = {{"n_blocks", sr.n_blocks},
             {"base_channels", sr.base_channels},
             {"growth", sr.growth},
             {"block_layers", sr.block_layers},
             {"sr_factor", sr.sr_factor}};
  j["extractor"] = {{"n_stages", extractor.n_stages},
                    {"widths", extractor.widths},
                    {"use_bias", extractor.use_bias}};
  j["train"] = {{"resynth", TrainToJson(resynth_train)},
                {"classifier", TrainToJson(classifier_train)},
                {"baseline", TrainToJson(baseline_train)}};
  j["generator"] = {{"z_dim", generator.z_dim},
                    {"widths", generator.widths},
                    {"steps", generator.steps},
                    {"batch_size", generator.batch_size},
                    {"lr", generator.lr},
                    {"beta1", generator.beta1},
                    {"beta2", generator.beta2}};
  j["detectors"] = detectors;
  std::vector<std::string> conds;
  for (Condition c : conditions) conds.push_back(ConditionName(c));
  j["conditions"] = conds;
  j["threshold"] = threshold;
  j["n_cams"] = n_cams;
  j["seed"] = seed;
  return j;
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  ExperimentConfig c;
  try {
    CheckKeys(j, "config",
              {"data", "omega", "alphas", "betas", "perturb", "sr", "extractor",
               "train", "generator", "detectors", "conditions", "threshold",
               "n_cams", "seed"});
    if (j.contains("data")) {
      const json& d = j["data"];
      CheckKeys(d, "data", {"real_dir", "n_real", "n_fake", "image_size",
                            "test_frac", "fake_mode"});
      Read(d, "real_dir", c.real_dir);
      Read(d, "n_real", c.n_real);
      Read(d, "n_fake", c.n_fake);
      Read(d, "image_size", c.image_size);
      Read(d, "test_frac", c.test_frac);
      if (d.contains("fake_mode")) {
        c.fake_mode = ParseFakeMode(d["fake_mode"].get<std::string>());
      }
    }
    if (j.contains("omega")) {
      const json& o = j["omega"];
      CheckKeys(o, "omega", {"mode", "corrupt_prob", "gray_frac", "noise_sigma",
                             "sr_factor"});
      if (o.contains("mode")) {
        c.omega.mode = ParseOmegaMode(o["mode"].get<std::string>());
      }
      Read(o, "corrupt_prob", c.omega.corrupt_prob);
      if (o.contains("gray_frac")) {
        const auto g = o["gray_frac"].get<std::vector<double>>();
        RSD_REQUIRE(g.size() == 2, "omega.gray_frac needs [lo, hi]");
        c.omega.gray_frac_lo = g[0];
        c.omega.gray_frac_hi = g[1];
      }
      Read(o, "noise_sigma", c.omega.noise_sigma);
      Read(o, "sr_factor", c.omega.sr_factor);
    }
    Read(j, "alphas", c.alphas.alphas);
    Read(j, "betas", c.betas.betas);
    if (j.contains("perturb")) {
      const json& p = j["perturb"];
      CheckKeys(p, "perturb", {"jpeg_quality", "blur_sigma", "blur_kernel",
                               "crop_frac", "noise_sigma"});
      Read(p, "jpeg_quality", c.perturb.jpeg_quality);
      Read(p, "blur_sigma", c.perturb.blur_sigma);
      Read(p, "blur_kernel", c.perturb.blur_kernel);
      Read(p, "crop_frac", c.perturb.crop_frac);
      Read(p, "noise_sigma", c.perturb.noise_sigma);
    }
    if (j.contains("sr")) {
      const json& s = j["sr"];
      CheckKeys(s, "sr", {"n_blocks", "base_channels", "growth", "block_layers",
                          "sr_factor"});
      Read(s, "n_blocks", c.sr.n_blocks);
      Read(s, "base_channels", c.sr.base_channels);
      Read(s, "growth", c.sr.growth);
      Read(s, "block_layers", c.sr.block_layers);
      Read(s, "sr_factor", c.sr.sr_factor);
    }
    if (j.contains("extractor")) {
      const json& e = j["extractor"];
      CheckKeys(e, "extractor", {"n_stages", "widths", "use_bias"});
      Read(e, "n_stages", c.extractor.n_stages);
      if (e.contains("widths")) {
        Read(e, "widths", c.extractor.widths);
      } else {
        c.extractor.widths = DefaultExtractorWidths(c.extractor.n_stages);
      }
      Read(e, "use_bias", c.extractor.use_bias);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      CheckKeys(t, "train", {"resynth", "classifier", "baseline"});
      if (t.contains("resynth")) {
        c.resynth_train = TrainFromJson(t["resynth"], "train.resynth");
      }
      if (t.contains("classifier")) {
        c.classifier_train = TrainFromJson(t["classifier"], "train.classifier");
      }
      if (t.contains("baseline")) {
        c.baseline_train = TrainFromJson(t["baseline"], "train.baseline");
      }
    }
    if (j.contains("generator")) {
      const json& g = j["generator"];
      CheckKeys(g, "generator", {"z_dim", "widths", "steps", "batch_size", "lr",
                                 "beta1", "beta2"});
      Read(g, "z_dim", c.generator.z_dim);
      Read(g, "widths", c.generator.widths);
      Read(g, "steps", c.generator.steps);
      Read(g, "batch_size", c.generator.batch_size);
      Read(g, "lr", c.generator.lr);
      Read(g, "beta1", c.generator.beta1);
      Read(g, "beta2", c.generator.beta2);
    }
    Read(j, "detectors", c.detectors);
    if (j.contains("conditions")) {
      c.conditions.clear();
      for (const auto& s : j["conditions"].get<std::vector<std::string>>()) {
        c.conditions.push_back(ParseCondition(s));
      }
    }
    Read(j, "threshold", c.threshold);
    Read(j, "n_cams", c.n_cams);
    Read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("bad config value: ") + e.what());
  }
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::FromJson(j);
}

}  // namespace rsd
