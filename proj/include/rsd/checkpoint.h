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

#ifndef RSD_CHECKPOINT_H_
#define RSD_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rsd {

inline constexpr char kCheckpointMagic[8] = {'R', 'S', 'F', 'O',
                                             'R', 'E', 'N', 'S'};
inline constexpr uint32_t kCheckpointFormatVersion = 1;

enum class CheckpointKind : uint32_t {
  kSrModel = 1,
  kExtractor = 2,
  kClassifier = 3,
  kGenerator = 4,
};

const char* CheckpointKindName(CheckpointKind kind);

struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

struct LogEntry {
  int64_t step = 0;
  double loss = 0.0;

  bool operator==(const LogEntry&) const = default;
};

struct Checkpoint {
  uint32_t format_version = kCheckpointFormatVersion;
  CheckpointKind kind = CheckpointKind::kSrModel;
  std::map<std::string, std::string> arch_config;
  std::vector<NamedArray> weights;
  std::vector<LogEntry> training_log;

  const NamedArray* Find(const std::string& name) const;
  const std::string& Config(const std::string& key) const;
  int ConfigInt(const std::string& key) const;

  bool operator==(const Checkpoint&) const = default;
};

// Layout: 8-byte magic "RSFORENS", little-endian u32 format_version, then
// the payload (kind, arch_config, weights, training_log), all integers
// little-endian and floats as raw IEEE-754 bits.
std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint DeserializeCheckpoint(
    const std::vector<uint8_t>& bytes,
    std::optional<CheckpointKind> expected = std::nullopt);

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws FormatError on a bad magic or truncated payload,
// IncompatibleVersion when format_version differs from this build, and
// KindMismatch when `expected` is given and differs.
Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          std::optional<CheckpointKind> expected = std::nullopt);

}  // namespace rsd

#endif  // RSD_CHECKPOINT_H_
