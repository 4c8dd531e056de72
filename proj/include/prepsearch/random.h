/*
 * Copyright 2026 The Prepsearch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PREPSEARCH_RANDOM_H_
#define PREPSEARCH_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace prepsearch {

using Rng = std::mt19937_64;

// Derives an independent seed for a named sub-stream ("split", "init",
// "batch", "trial/3", ...) so every consumer of randomness is keyed off the
// single run seed without sharing generator state.
inline uint64_t DeriveSeed(uint64_t seed, std::string_view stream) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (h | 1);
  // splitmix64 finalizer.
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng MakeRng(uint64_t seed, std::string_view stream) {
  return Rng(DeriveSeed(seed, stream));
}

// Fisher-Yates over [first, last) with an explicit index draw, so the sequence
// depends only on the generator and not on the standard library's shuffle.
template <typename It>
void Shuffle(It first, It last, Rng& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<long long> pick(0, i);
    std::swap(first[i], first[pick(rng)]);
  }
}

}  // namespace prepsearch

#endif  // PREPSEARCH_RANDOM_H_
