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
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "rsd/checkpoint.h"
#include "rsd/errors.h"
#include "rsd/harness.h"
#include "rsd/seed.h"

namespace rsd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Seed keys, one per consumer, so that no two stages share a stream.
constexpr uint64_t kRealSeedKey = 0xDA7A;
constexpr uint64_t kFakeSourceSeedKey = 0xFA4E;
constexpr uint64_t kRealSplitKey = 0x5B1;
constexpr uint64_t kFakeSplitKey = 0x5B2;
constexpr uint64_t kFakeMakeKey = 0xFA;
constexpr uint64_t kExtractorKey = 0xE7;
constexpr uint64_t kResynthKey = 0x7E5;
constexpr uint64_t kClassifierInitKey = 0xC1A5;
constexpr uint64_t kClassifierTrainKey = 0xC1A6;
constexpr uint64_t kBaselineInitKey = 0xBA5E;
constexpr uint64_t kBaselineTrainKey = 0xBA5F;
constexpr uint64_t kPerturbKey = 0x9E27;
constexpr uint64_t kRealDirShuffleKey = 0xD1A;

const Stage kAllStages[] = {Stage::kSplit,     Stage::kFakes,
                            Stage::kResynth,   Stage::kArtifacts,
                            Stage::kDetectors, Stage::kEvaluate,
                            Stage::kReport};

fs::path MarkerPath(const fs::path& root, Stage s) {
  char name[48];
  std::snprintf(name, sizeof(name), "%02d_%s.done", int(s), StageName(s));
  return root / "stages" / name;
}

void WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string ReadText(const fs::path& path) {
  const auto bytes = ReadFileBytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void WriteInputsLog(const fs::path& path, const std::vector<std::string>& paths) {
  std::string text;
  for (const auto& p : paths) text += p + "\n";
  WriteText(path, text);
}

std::vector<std::string> Paths(const Manifest& m) {
  std::vector<std::string> out;
  for (const auto& e : m.entries) out.push_back(e.path);
  return out;
}

std::vector<Image> LoadAll(const Manifest& m) {
  std::vector<Image> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(LoadImage(e.path));
  return out;
}

std::vector<Label> Labels(const Manifest& m) {
  std::vector<Label> out;
  for (const auto& e : m.entries) out.push_back(e.label);
  return out;
}

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

struct Layout {
  fs::path root;
  fs::path manifests() const { return root / "manifests"; }
  fs::path models() const { return root / "models"; }
  fs::path artifacts() const { return root / "artifacts"; }
  fs::path detectors() const { return root / "detectors"; }
  fs::path logs() const { return root / "logs"; }
  fs::path eval() const { return root / "eval"; }
};

// Procedural images go to $RSD_CACHE_DIR when set so repeated experiments
// with the same data settings reuse them.
fs::path SyntheticDataDir(const ExperimentConfig& cfg, const Layout& lay) {
  const char* cache = std::getenv("RSD_CACHE_DIR");
  if (cache == nullptr || *cache == '\0') return lay.root / "data";
  char key[96];
  std::snprintf(key, sizeof(key), "synthetic_s%d_r%d_f%d_%016llx",
                cfg.image_size, cfg.n_real, cfg.n_fake,
                static_cast<unsigned long long>(cfg.seed));
  return fs::absolute(fs::path(cache)) / key;
}

Manifest WriteSynthetic(const fs::path& dir, const char* prefix, int count,
                        int size, uint64_t seed, uint64_t key) {
  fs::create_directories(dir);
  Manifest m;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%s_%05d.png", prefix, i);
    const fs::path p = dir / name;
    if (!fs::exists(p)) {
      // Write then rename so an interrupted run never leaves a torn file.
      const fs::path tmp = dir / (std::string(name) + ".tmp");
      SavePng(SyntheticReal(size, DeriveSeed(seed, {key, uint64_t(i)})), tmp);
      fs::rename(tmp, p);
    }
    m.entries.push_back({p.string(), Label::kReal, "synthetic"});
  }
  return m;
}

void StageSplit(const ExperimentConfig& cfg, const Layout& lay) {
  Manifest reals, sources;
  if (cfg.real_dir.empty()) {
    const fs::path dir = SyntheticDataDir(cfg, lay);
    reals = WriteSynthetic(dir / "real", "real", cfg.n_real, cfg.image_size,
                           cfg.seed, kRealSeedKey);
    sources = WriteSynthetic(dir / "fake_src", "src", cfg.n_fake,
                             cfg.image_size, cfg.seed, kFakeSourceSeedKey);
  } else {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(cfg.real_dir)) {
      const std::string ext = Lower(e.path().extension().string());
      if (e.is_regular_file() &&
          (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) {
        files.push_back(fs::absolute(e.path()).string());
      }
    }
    std::sort(files.begin(), files.end());
    std::mt19937_64 rng(DeriveSeed(cfg.seed, {kRealDirShuffleKey}));
    std::shuffle(files.begin(), files.end(), rng);
    // One half serves as reals, the other as sources for the fakes.
    const size_t half = files.size() / 2;
    RSD_REQUIRE(half >= 2, "real_dir needs at least 4 images");
    for (size_t i = 0; i < files.size(); ++i) {
      const Image img = LoadImage(files[i]);
      if (img.channels() != 3 || img.height() != cfg.image_size ||
          img.width() != cfg.image_size) {
        throw ArgumentError(files[i] + " is not a 3-channel " +
                            std::to_string(cfg.image_size) + "px square image");
      }
      Manifest& dst = i < half ? reals : sources;
      const int cap = i < half ? cfg.n_real : cfg.n_fake;
      if (int(dst.entries.size()) < cap) {
        dst.entries.push_back({files[i], Label::kReal, "real_dir"});
      }
    }
  }
  auto [train, test] =
      SplitManifest(reals, 1.0 - cfg.test_frac, DeriveSeed(cfg.seed, {kRealSplitKey}));
  SaveManifest(reals, lay.manifests() / "real_all.jsonl");
  SaveManifest(sources, lay.manifests() / "fake_src.jsonl");
  SaveManifest(train, lay.manifests() / "real_train.jsonl");
  SaveManifest(test, lay.manifests() / "real_test.jsonl");
}

void StageFakes(const ExperimentConfig& cfg, const Layout& lay) {
  const Manifest sources = LoadManifest(lay.manifests() / "fake_src.jsonl");
  if (cfg.fake_mode == FakeMode::kTrainedGenerator) {
    WriteInputsLog(lay.logs() / "generator_inputs.txt", Paths(sources));
  }
  const Manifest fakes =
      MakeToyFakes(sources, cfg.fake_mode, cfg.generator,
                   DeriveSeed(cfg.seed, {kFakeMakeKey}), lay.root / "fakes");
  auto [train, test] =
      SplitManifest(fakes, 1.0 - cfg.test_frac, DeriveSeed(cfg.seed, {kFakeSplitKey}));
  SaveManifest(fakes, lay.manifests() / "fake_all.jsonl");
  SaveManifest(train, lay.manifests() / "fake_train.jsonl");
  SaveManifest(test, lay.manifests() / "fake_test.jsonl");
}

void StageResynth(const ExperimentConfig& cfg, const Layout& lay) {
  const Manifest reals = LoadManifest(lay.manifests() / "real_train.jsonl");
  const StageFeatureExtractor ext = StageFeatureExtractor::Build(
      cfg.extractor, DeriveSeed(cfg.seed, {kExtractorKey}));
  TrainConfig t = cfg.resynth_train;
  t.seed = DeriveSeed(cfg.seed, {kResynthKey});
  std::vector<std::string> inputs;
  const ResynthResult res =
      TrainResynth(reals, cfg.omega, ext, cfg.alphas, t, cfg.sr, &inputs);
  WriteInputsLog(lay.logs() / "resynth_inputs.txt", inputs);
  fs::create_directories(lay.models());
  SaveCheckpoint(ext.ToCheckpoint(), lay.models() / "extractor.ckpt");
  SaveCheckpoint(res.model.ToCheckpoint(res.log.steps), lay.models() / "phi.ckpt");
}

struct Models {
  SRModel phi;
  StageFeatureExtractor ext;
};

Models LoadModels(const Layout& lay) {
  return {SRModel::FromCheckpoint(
              LoadCheckpoint(lay.models() / "phi.ckpt", CheckpointKind::kSrModel)),
          StageFeatureExtractor::FromCheckpoint(LoadCheckpoint(
              lay.models() / "extractor.ckpt", CheckpointKind::kExtractor))};
}

Manifest TrainSet(const Layout& lay) {
  return Concat(LoadManifest(lay.manifests() / "real_train.jsonl"),
                LoadManifest(lay.manifests() / "fake_train.jsonl"));
}

Manifest TestSet(const Layout& lay) {
  return Concat(LoadManifest(lay.manifests() / "real_test.jsonl"),
                LoadManifest(lay.manifests() / "fake_test.jsonl"));
}

// Training artifacts live in one raw float32 file per level (host byte
// order, samples in train-manifest order) described by index.json.
void StageArtifacts(const ExperimentConfig& cfg, const Layout& lay) {
  const std::vector<int> levels = cfg.ResidualLevels();
  fs::create_directories(lay.artifacts());
  ordered_json index;
  index["levels"] = levels;
  if (levels.empty()) {
    WriteText(lay.artifacts() / "index.json", index.dump(2) + "\n");
    return;
  }
  const Models m = LoadModels(lay);
  const Manifest train = TrainSet(lay);
  WriteInputsLog(lay.logs() / "artifacts_inputs.txt", Paths(train));
  std::map<int, std::ofstream> files;
  std::map<int, std::vector<int>> shapes;
  for (int level : levels) {
    const fs::path p = lay.artifacts() / ("level" + std::to_string(level) + ".f32");
    files[level].open(p, std::ios::binary | std::ios::trunc);
    if (!files[level]) throw IoError("cannot write " + p.string());
  }
  for (const auto& e : train.entries) {
    const ResidualStack stack =
        ArtifactStack(LoadImage(e.path), m.phi, m.ext, levels, e.path);
    for (int level : levels) {
      const ArtifactMap& a = stack.levels.at(level);
      shapes[level] = a.shape();
      files[level].write(reinterpret_cast<const char*>(a.data()),
                         std::streamsize(a.size() * sizeof(float)));
    }
  }
  for (auto& [level, f] : files) {
    f.close();
    if (!f) throw IoError("artifact write failed for level " + std::to_string(level));
  }
  ordered_json sh = ordered_json::object();
  for (const auto& [level, s] : shapes) sh[std::to_string(level)] = s;
  index["shapes"] = sh;
  index["paths"] = Paths(train);
  std::vector<std::string> labels;
  for (Label l : Labels(train)) labels.push_back(LabelName(l));
  index["labels"] = labels;
  WriteText(lay.artifacts() / "index.json", index.dump(2) + "\n");
}

std::vector<nn::Tensor<float>> LoadArtifacts(const Layout& lay, int level,
                                             const std::vector<int>& shape,
                                             size_t count) {
  const fs::path p = lay.artifacts() / ("level" + std::to_string(level) + ".f32");
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::vector<nn::Tensor<float>> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    nn::Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            std::streamsize(t.size() * sizeof(float)));
    if (!in) throw FormatError(p.string() + " is truncated");
    out.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(p.string() + " has trailing data");
  }
  return out;
}

ordered_json FailureRecord(const std::string& where, const std::string& kind,
                           const std::string& message) {
  return {{"where", where}, {"kind", kind}, {"message", message}};
}

std::string BaselineFile(FeatureKind k) {
  return std::string("baseline_") + FeatureKindName(k) + ".ckpt";
}

std::string ClassifierFile(int level) {
  return "clf_level" + std::to_string(level) + ".ckpt";
}

void StageDetectors(const ExperimentConfig& cfg, const Layout& lay) {
  fs::create_directories(lay.detectors());
  ordered_json failures = ordered_json::array();
  const std::vector<int> levels = cfg.ResidualLevels();
  std::map<int, Classifier> trained;
  if (!levels.empty()) {
    const json index = json::parse(ReadText(lay.artifacts() / "index.json"));
    std::vector<Label> labels;
    for (const auto& l : index.at("labels")) {
      labels.push_back(ParseLabel(l.get<std::string>()));
    }
    WriteInputsLog(lay.logs() / "classifier_inputs.txt",
                   index.at("paths").get<std::vector<std::string>>());
    for (int level : levels) {
      const std::string where = "classifier level " + std::to_string(level);
      try {
        const auto shape =
            index.at("shapes").at(std::to_string(level)).get<std::vector<int>>();
        const auto inputs = LoadArtifacts(lay, level, shape, labels.size());
        TrainConfig t = cfg.classifier_train;
        t.seed = DeriveSeed(cfg.seed, {kClassifierTrainKey, uint64_t(level)});
        Classifier c = BuildClassifier(
            level, shape, DeriveSeed(cfg.seed, {kClassifierInitKey, uint64_t(level)}));
        ClassifierTrainResult r = TrainClassifier(std::move(c), inputs, labels, t);
        SaveCheckpoint(r.classifier.ToCheckpoint(r.log.steps),
                       lay.detectors() / ClassifierFile(level));
        trained.emplace(level, std::move(r.classifier));
      } catch (const Error& e) {
        failures.push_back(FailureRecord(where, e.kind(), e.what()));
      }
    }
  }
  if (std::count(cfg.detectors.begin(), cfg.detectors.end(), "avg")) {
    DetectorEnsemble ens;
    ens.betas = cfg.betas;
    ens.threshold = cfg.threshold;
    for (int level : cfg.betas.ActiveLevels()) {
      if (trained.count(level)) ens.classifiers.emplace(level, trained.at(level));
    }
    try {
      ens.Save(lay.detectors() / "ensemble");
    } catch (const Error& e) {
      failures.push_back(FailureRecord("ensemble", e.kind(), e.what()));
    }
  }
  const auto kinds = cfg.BaselineKinds();
  if (!kinds.empty()) {
    const Manifest reals = LoadManifest(lay.manifests() / "real_train.jsonl");
    const Manifest fakes = LoadManifest(lay.manifests() / "fake_train.jsonl");
    WriteInputsLog(lay.logs() / "baseline_inputs.txt",
                   Paths(Concat(reals, fakes)));
    const std::vector<Image> real_imgs = LoadAll(reals);
    const std::vector<Image> fake_imgs = LoadAll(fakes);
    for (FeatureKind k : kinds) {
      try {
        TrainConfig t = cfg.baseline_train;
        t.seed = DeriveSeed(cfg.seed, {kBaselineTrainKey, uint64_t(k)});
        const ClassifierTrainResult r =
            TrainBaseline(k, real_imgs, fake_imgs, t,
                          DeriveSeed(cfg.seed, {kBaselineInitKey, uint64_t(k)}));
        SaveCheckpoint(r.classifier.ToCheckpoint(r.log.steps),
                       lay.detectors() / BaselineFile(k));
      } catch (const Error& e) {
        failures.push_back(FailureRecord(std::string("baseline ") +
                                             FeatureKindName(k),
                                         e.kind(), e.what()));
      }
    }
  }
  WriteText(lay.detectors() / "failures.json", failures.dump(2) + "\n");
}

int StageOf(const std::string& detector) {
  return detector.rfind("stage", 0) == 0 ? std::stoi(detector.substr(5)) : -1;
}

void StageEvaluate(const ExperimentConfig& cfg, const Layout& lay) {
  EvalReport report;
  report.detectors = cfg.detectors;
  for (Condition c : cfg.conditions) report.conditions.push_back(ConditionName(c));
  report.config = cfg.ToJson();
  report.environment = EnvironmentRecord();

  const Manifest test = TestSet(lay);
  report.test_paths = Paths(test);
  report.test_labels = Labels(test);
  const std::vector<Image> raw = LoadAll(test);

  // Detector-level training failures carry through as failed cells.
  for (const auto& f : json::parse(ReadText(lay.detectors() / "failures.json"))) {
    report.failures.push_back(f);
  }

  std::map<int, Classifier> clfs;
  for (int level : cfg.ResidualLevels()) {
    const fs::path p = lay.detectors() / ClassifierFile(level);
    if (fs::exists(p)) {
      clfs.emplace(level, Classifier::FromCheckpoint(
                              LoadCheckpoint(p, CheckpointKind::kClassifier)));
    }
  }
  std::map<FeatureKind, Classifier> baselines;
  for (FeatureKind k : cfg.BaselineKinds()) {
    const fs::path p = lay.detectors() / BaselineFile(k);
    if (fs::exists(p)) {
      baselines.emplace(k, Classifier::FromCheckpoint(
                               LoadCheckpoint(p, CheckpointKind::kClassifier)));
    }
  }

  std::optional<Models> models;
  const int deepest = cfg.extractor.n_stages;
  std::vector<int> levels = cfg.ResidualLevels();
  for (int l : {0, deepest}) {
    if (!std::count(levels.begin(), levels.end(), l)) levels.push_back(l);
  }
  std::sort(levels.begin(), levels.end());
  if (fs::exists(lay.models() / "phi.ckpt")) models = LoadModels(lay);

  RadialProfile profile;
  bool have_profile = false;
  for (Condition cond : cfg.conditions) {
    const std::string cname = ConditionName(cond);
    std::vector<Image> imgs;
    imgs.reserve(raw.size());
    if (cond == Condition::kEqualize && !have_profile) {
      // The target spectrum comes from training reals only.
      const Manifest reals = LoadManifest(lay.manifests() / "real_train.jsonl");
      WriteInputsLog(lay.logs() / "equalize_inputs.txt", Paths(reals));
      profile = MeanRadialProfile(reals);
      have_profile = true;
    }
    for (size_t i = 0; i < raw.size(); ++i) {
      switch (cond) {
        case Condition::kRaw:
          imgs.push_back(raw[i]);
          break;
        case Condition::kEqualize:
          imgs.push_back(report.test_labels[i] == Label::kFake
                             ? SpectrumEqualize(raw[i], profile)
                             : raw[i]);
          break;
        case Condition::kPerturb:
          imgs.push_back(
              PerturbP(raw[i], cfg.perturb, DeriveSeed(cfg.seed, {kPerturbKey, i})));
          break;
      }
    }

    // Per-level probabilities of every test image, plus raw statistics for
    // the histograms and activation maps.
    std::map<int, std::vector<double>> probs;
    std::map<int, std::vector<double>> means;
    std::vector<ArtifactMap> pixel_maps;
    std::string residual_error;
    if (models) {
      try {
        for (size_t i = 0; i < imgs.size(); ++i) {
          ResidualStack s = ArtifactStack(imgs[i], models->phi, models->ext, levels,
                                          report.test_paths[i]);
          for (const auto& [level, clf] : clfs) {
            probs[level].push_back(Classify(clf, s.levels.at(level)));
          }
          if (cond == Condition::kRaw) {
            for (int l : {0, deepest}) {
              means[l].push_back(SpatialMean(s.levels.at(l)));
            }
            if (report.test_labels[i] == Label::kFake &&
                int(pixel_maps.size()) < cfg.n_cams) {
              pixel_maps.push_back(std::move(s.levels.at(0)));
            }
          }
        }
      } catch (const Error& e) {
        residual_error = e.what();
        report.failures.push_back(
            FailureRecord("artifacts under " + cname, e.kind(), e.what()));
        probs.clear();
      }
    } else {
      residual_error = "re-synthesizer checkpoint missing";
    }

    if (cond == Condition::kRaw && !means.empty()) {
      std::vector<double> r, f;
      for (int l : {0, deepest}) {
        r.clear();
        f.clear();
        for (size_t i = 0; i < imgs.size(); ++i) {
          (report.test_labels[i] == Label::kFake ? f : r).push_back(means[l][i]);
        }
        report.histograms.push_back(BuildHistogramReport(l, r, f));
      }
      if (clfs.count(0)) {
        fs::create_directories(lay.eval() / "cams");
        size_t k = 0;
        for (size_t i = 0; i < imgs.size() && k < pixel_maps.size(); ++i) {
          if (report.test_labels[i] != Label::kFake) continue;
          const Image cam = ComputeCam(clfs.at(0), pixel_maps[k], kFakeClass);
          const fs::path p = lay.eval() / "cams" / ("cam_" + std::to_string(k) + ".png");
          SavePng(cam, p);
          report.cams.push_back({report.test_paths[i], p.string(), "pix"});
          ++k;
        }
      }
    }

    for (const auto& det : cfg.detectors) {
      EvalCell cell;
      std::vector<double> scores;
      try {
        if (det == "pix" || StageOf(det) > 0) {
          const int level = det == "pix" ? 0 : StageOf(det);
          if (!clfs.count(level)) throw ArgumentError("classifier was not trained");
          if (!probs.count(level)) throw ArgumentError(residual_error);
          scores = probs.at(level);
        } else if (det == "avg") {
          for (int l : cfg.betas.ActiveLevels()) {
            if (!probs.count(l)) {
              throw ArgumentError("no probabilities for level " + std::to_string(l));
            }
          }
          for (size_t i = 0; i < imgs.size(); ++i) {
            std::map<int, double> p;
            for (int l : cfg.betas.ActiveLevels()) p[l] = probs.at(l)[i];
            scores.push_back(Fuse(p, cfg.betas));
          }
        } else {
          const FeatureKind k = ParseFeatureKind(det);
          if (!baselines.count(k)) throw ArgumentError("baseline was not trained");
          for (const Image& img : imgs) {
            scores.push_back(ClassifyBaseline(baselines.at(k), img));
          }
        }
        cell.accuracy = Accuracy(scores, report.test_labels, cfg.threshold);
        report.scores[det][cname] = scores;
      } catch (const Error& e) {
        cell.failure = e.what();
      }
      report.grid[det][cname] = cell;
    }
  }

  const std::string stage_det = "stage" + std::to_string(deepest);
  const std::string plus_p = ConditionName(Condition::kPerturb);
  if (report.grid.count("pix") && report.grid.count(stage_det) &&
      report.grid["pix"].count(plus_p)) {
    const EvalCell& pix = report.grid["pix"][plus_p];
    const EvalCell& deep = report.grid[stage_det][plus_p];
    ordered_json d;
    d["condition"] = plus_p;
    d["pixel_detector"] = "pix";
    d["stage_detector"] = stage_det;
    d["pix"] = pix.accuracy ? json(*pix.accuracy) : json(nullptr);
    d[stage_det] = deep.accuracy ? json(*deep.accuracy) : json(nullptr);
    if (pix.accuracy && deep.accuracy) {
      d["stage_minus_pix"] = *deep.accuracy - *pix.accuracy;
      d["stage_at_least_pix"] = *deep.accuracy >= *pix.accuracy;
    }
    d["expectation"] =
        "the deepest-stage detector is expected to degrade less than the "
        "pixel detector under perturbation; reported, not gated";
    report.directional = d;
  }
  fs::create_directories(lay.eval());
  WriteText(lay.eval() / "eval.json", report.ToJson().dump(2) + "\n");
}

void StageReport(const Layout& lay) {
  const EvalReport report =
      EvalReport::FromJson(json::parse(ReadText(lay.eval() / "eval.json")));
  EmitReport(report, lay.root);
}

void RunStage(Stage s, const ExperimentConfig& cfg, const Layout& lay) {
  switch (s) {
    case Stage::kSplit:
      return StageSplit(cfg, lay);
    case Stage::kFakes:
      return StageFakes(cfg, lay);
    case Stage::kResynth:
      return StageResynth(cfg, lay);
    case Stage::kArtifacts:
      return StageArtifacts(cfg, lay);
    case Stage::kDetectors:
      return StageDetectors(cfg, lay);
    case Stage::kEvaluate:
      return StageEvaluate(cfg, lay);
    case Stage::kReport:
      return StageReport(lay);
  }
}

// Grid where every cell records why it could not be produced.
EvalReport FailedReport(const ExperimentConfig& cfg, const std::string& why,
                        const ordered_json& failure) {
  EvalReport r;
  r.detectors = cfg.detectors;
  for (Condition c : cfg.conditions) r.conditions.push_back(ConditionName(c));
  for (const auto& d : r.detectors) {
    for (const auto& c : r.conditions) r.grid[d][c] = {std::nullopt, why};
  }
  r.failures.push_back(failure);
  r.config = cfg.ToJson();
  r.environment = EnvironmentRecord();
  return r;
}

}  // namespace

const char* StageName(Stage s) {
  switch (s) {
    case Stage::kSplit:
      return "split";
    case Stage::kFakes:
      return "fakes";
    case Stage::kResynth:
      return "resynth";
    case Stage::kArtifacts:
      return "artifacts";
    case Stage::kDetectors:
      return "detectors";
    case Stage::kEvaluate:
      return "evaluate";
    case Stage::kReport:
      return "report";
  }
  return "?";
}

RunResult RunExperiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                        Stage last) {
  cfg.Validate();
  const Layout lay{fs::absolute(out_dir)};
  fs::create_directories(lay.root / "stages");

  const std::string snapshot = cfg.ToJson().dump(2) + "\n";
  const fs::path config_path = lay.root / "config.json";
  if (fs::exists(config_path)) {
    if (ReadText(config_path) != snapshot) {
      throw ArgumentError(lay.root.string() +
                          " holds a run with a different config; use a fresh "
                          "output directory");
    }
  } else {
    WriteText(config_path, snapshot);
  }
  fs::remove(lay.root / "failure.json");

  RunResult result;
  bool invalidate = false;
  for (Stage s : kAllStages) {
    if (int(s) > int(last)) break;
    const fs::path marker = MarkerPath(lay.root, s);
    if (invalidate) fs::remove(marker);
    if (fs::exists(marker)) continue;
    // Anything downstream was built from the previous outputs.
    invalidate = true;
    for (Stage later : kAllStages) {
      if (int(later) > int(s)) fs::remove(MarkerPath(lay.root, later));
    }
    try {
      RunStage(s, cfg, lay);
    } catch (const Error& e) {
      result.ok = false;
      result.error_kind = e.kind();
      result.error_message = std::string("stage ") + StageName(s) + ": " + e.what();
    } catch (const std::exception& e) {
      result.ok = false;
      result.error_kind = "internal_error";
      result.error_message = std::string("stage ") + StageName(s) + ": " + e.what();
    }
    if (!result.ok) {
      const ordered_json failure =
          FailureRecord(StageName(s), result.error_kind, result.error_message);
      WriteText(lay.root / "failure.json", failure.dump(2) + "\n");
      if (int(last) >= int(Stage::kEvaluate) && int(s) <= int(Stage::kEvaluate)) {
        EvalReport partial = FailedReport(cfg, result.error_message, failure);
        try {
          EmitReport(partial, lay.root);
        } catch (const Error&) {
          // The failure record above is still on disk.
        }
        result.report = std::move(partial);
      }
      return result;
    }
    WriteText(marker, "");
    result.ran.push_back(s);
  }
  if (int(last) >= int(Stage::kEvaluate)) {
    result.report =
        EvalReport::FromJson(json::parse(ReadText(lay.eval() / "eval.json")));
  }
  return result;
}

}  // namespace rsd
