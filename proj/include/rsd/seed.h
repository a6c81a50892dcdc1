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

#ifndef RSD_SEED_H_
#define RSD_SEED_H_

#include <cstdint>
#include <initializer_list>

namespace rsd {

// SplitMix64 finalizer; used to derive independent per-purpose seeds.
inline uint64_t Mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> keys) {
  uint64_t s = Mix64(base);
  for (uint64_t k : keys) s = Mix64(s ^ Mix64(k));
  return s;
}

}  // namespace rsd

#endif  // RSD_SEED_H_
