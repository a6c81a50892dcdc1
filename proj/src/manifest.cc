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

#include "rsd/manifest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"
#include "rsd/errors.h"

namespace rsd {

const char* LabelName(Label label) {
  return label == Label::kReal ? "real" : "fake";
}

Label ParseLabel(const std::string& name) {
  if (name == "real") return Label::kReal;
  if (name == "fake") return Label::kFake;
  throw FormatError("unknown label '" + name + "'");
}

size_t Manifest::Count(Label label) const {
  return size_t(std::count_if(entries.begin(), entries.end(),
                              [&](const auto& e) { return e.label == label; }));
}

Manifest Manifest::Filter(Label label) const {
  Manifest out;
  out.seed = seed;
  for (const auto& e : entries) {
    if (e.label == label) out.entries.push_back(e);
  }
  return out;
}

Manifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.path = j.at("path").get<std::string>();
      e.label = ParseLabel(j.at("label").get<std::string>());
      e.source_tag = j.value("source_tag", std::string());
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " +
                        ex.what());
    }
    std::filesystem::path p(e.path);
    if (p.is_relative()) e.path = (base / p).lexically_normal().string();
    if (!seen.insert(e.path).second) {
      throw FormatError("duplicate manifest path " + e.path);
    }
    if (!std::filesystem::exists(e.path)) {
      throw IoError("manifest entry does not exist: " + e.path);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void SaveManifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.path).second) {
      throw ArgumentError("duplicate manifest path " + e.path);
    }
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["path"] = e.path;
    j["label"] = LabelName(e.label);
    j["source_tag"] = e.source_tag;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<Manifest, Manifest> SplitManifest(const Manifest& manifest,
                                            double train_frac, uint64_t seed) {
  RSD_REQUIRE(!manifest.entries.empty(), "cannot split an empty manifest");
  RSD_REQUIRE(train_frac > 0.0 && train_frac < 1.0,
              "train_frac must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<bool> to_train(manifest.size(), false);
  for (Label label : {Label::kReal, Label::kFake}) {
    std::vector<size_t> group;
    for (size_t i = 0; i < manifest.size(); ++i) {
      if (manifest.entries[i].label == label) group.push_back(i);
    }
    std::shuffle(group.begin(), group.end(), rng);
    const auto n_train = size_t(std::lround(train_frac * double(group.size())));
    for (size_t k = 0; k < n_train; ++k) to_train[group[k]] = true;
  }
  Manifest train, test;
  train.seed = test.seed = seed;
  for (size_t i = 0; i < manifest.size(); ++i) {
    (to_train[i] ? train : test).entries.push_back(manifest.entries[i]);
  }
  return {std::move(train), std::move(test)};
}

Manifest Concat(const Manifest& a, const Manifest& b) {
  Manifest out = a;
  out.entries.insert(out.entries.end(), b.entries.begin(), b.entries.end());
  return out;
}

}  // namespace rsd
