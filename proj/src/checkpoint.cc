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

#include "rsd/checkpoint.h"

#include <bit>
#include <cstring>

#include "rsd/errors.h"
#include "rsd/image.h"

namespace rsd {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void Pod(T v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void Str(const std::string& s) {
    Pod(uint32_t(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void Bytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& in) : in_(in) {}
  template <typename T>
  T Pod() {
    T v;
    Bytes(&v, sizeof(T));
    return v;
  }
  std::string Str() {
    const auto n = Pod<uint32_t>();
    Need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void Bytes(void* out, size_t n) {
    Need(n);
    std::memcpy(out, in_.data() + pos_, n);
    pos_ += n;
  }
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  void Need(size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated checkpoint");
  }
  const std::vector<uint8_t>& in_;
  size_t pos_ = 0;
};

}  // namespace

const char* CheckpointKindName(CheckpointKind kind) {
  switch (kind) {
    case CheckpointKind::kSrModel:
      return "sr_model";
    case CheckpointKind::kExtractor:
      return "extractor";
    case CheckpointKind::kClassifier:
      return "classifier";
    case CheckpointKind::kGenerator:
      return "generator";
  }
  return "unknown";
}

const NamedArray* Checkpoint::Find(const std::string& name) const {
  for (const auto& w : weights) {
    if (w.name == name) return &w;
  }
  return nullptr;
}

const std::string& Checkpoint::Config(const std::string& key) const {
  auto it = arch_config.find(key);
  if (it == arch_config.end()) {
    throw FormatError("checkpoint arch_config lacks key '" + key + "'");
  }
  return it->second;
}

int Checkpoint::ConfigInt(const std::string& key) const {
  const std::string& v = Config(key);
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw FormatError("arch_config '" + key + "' is not an integer: " + v);
  }
}

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ckpt) {
  Writer w;
  w.Bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.Pod(ckpt.format_version);
  w.Pod(static_cast<uint32_t>(ckpt.kind));
  w.Pod(uint32_t(ckpt.arch_config.size()));
  for (const auto& [k, v] : ckpt.arch_config) {
    w.Str(k);
    w.Str(v);
  }
  w.Pod(uint32_t(ckpt.weights.size()));
  for (const auto& a : ckpt.weights) {
    w.Str(a.name);
    w.Pod(uint32_t(a.shape.size()));
    int64_t count = 1;
    for (int64_t d : a.shape) {
      w.Pod(d);
      count *= d;
    }
    if (count != int64_t(a.values.size())) {
      throw ArgumentError("array '" + a.name + "' shape/value count mismatch");
    }
    w.Pod(uint64_t(a.values.size()));
    w.Bytes(a.values.data(), a.values.size() * sizeof(float));
  }
  w.Pod(uint32_t(ckpt.training_log.size()));
  for (const auto& e : ckpt.training_log) {
    w.Pod(e.step);
    w.Pod(e.loss);
  }
  return w.Take();
}

Checkpoint DeserializeCheckpoint(const std::vector<uint8_t>& bytes,
                                 std::optional<CheckpointKind> expected) {
  Reader r(bytes);
  char magic[8];
  r.Bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw FormatError("bad checkpoint magic");
  }
  Checkpoint c;
  c.format_version = r.Pod<uint32_t>();
  if (c.format_version != kCheckpointFormatVersion) {
    throw IncompatibleVersion(
        "checkpoint format_version " + std::to_string(c.format_version) +
        " is not supported (expected " +
        std::to_string(kCheckpointFormatVersion) + ")");
  }
  const auto kind = r.Pod<uint32_t>();
  if (kind < 1 || kind > 4) throw FormatError("unknown checkpoint kind");
  c.kind = static_cast<CheckpointKind>(kind);
  if (expected && *expected != c.kind) {
    throw KindMismatch(std::string("expected a ") +
                       CheckpointKindName(*expected) + " checkpoint, got " +
                       CheckpointKindName(c.kind));
  }
  const auto n_cfg = r.Pod<uint32_t>();
  for (uint32_t i = 0; i < n_cfg; ++i) {
    std::string k = r.Str();
    c.arch_config[k] = r.Str();
  }
  const auto n_w = r.Pod<uint32_t>();
  for (uint32_t i = 0; i < n_w; ++i) {
    NamedArray a;
    a.name = r.Str();
    const auto ndim = r.Pod<uint32_t>();
    if (ndim > 8) throw FormatError("implausible array rank");
    int64_t count = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      a.shape.push_back(r.Pod<int64_t>());
      if (a.shape.back() < 0) throw FormatError("negative array extent");
      count *= a.shape.back();
    }
    const auto n = r.Pod<uint64_t>();
    if (int64_t(n) != count) throw FormatError("array size mismatch");
    if (n > bytes.size() / sizeof(float)) throw FormatError("truncated array");
    a.values.resize(n);
    r.Bytes(a.values.data(), n * sizeof(float));
    c.weights.push_back(std::move(a));
  }
  const auto n_log = r.Pod<uint32_t>();
  for (uint32_t i = 0; i < n_log; ++i) {
    LogEntry e;
    e.step = r.Pod<int64_t>();
    e.loss = r.Pod<double>();
    c.training_log.push_back(e);
  }
  if (!r.AtEnd()) throw FormatError("trailing bytes after checkpoint");
  return c;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  WriteFileBytes(path, SerializeCheckpoint(ckpt));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          std::optional<CheckpointKind> expected) {
  return DeserializeCheckpoint(ReadFileBytes(path), expected);
}

}  // namespace rsd
