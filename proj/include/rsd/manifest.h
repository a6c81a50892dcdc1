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

#ifndef RSD_MANIFEST_H_
#define RSD_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace rsd {

enum class Label { kReal, kFake };

const char* LabelName(Label label);
Label ParseLabel(const std::string& name);

struct ManifestEntry {
  std::string path;
  Label label = Label::kReal;
  std::string source_tag;

  bool operator==(const ManifestEntry&) const = default;
};

// Ordered list of labelled image files. `seed` records the seed of the
// operation that produced the manifest; it is not serialized.
struct Manifest {
  std::vector<ManifestEntry> entries;
  uint64_t seed = 0;

  size_t size() const { return entries.size(); }
  size_t Count(Label label) const;
  Manifest Filter(Label label) const;
};

// JSONL, one {"path", "label", "source_tag"} object per line. Relative
// paths are resolved against the manifest's directory on load. Loading
// fails with IoError if any referenced file is missing and FormatError on
// bad lines or duplicate paths.
Manifest LoadManifest(const std::filesystem::path& path);
void SaveManifest(const Manifest& manifest, const std::filesystem::path& path);

// Label-stratified deterministic split. Each label group keeps
// round(train_frac * n) entries for training; both outputs preserve the
// input order.
std::pair<Manifest, Manifest> SplitManifest(const Manifest& manifest,
                                            double train_frac, uint64_t seed);

Manifest Concat(const Manifest& a, const Manifest& b);

}  // namespace rsd

#endif  // RSD_MANIFEST_H_
