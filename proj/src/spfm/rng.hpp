// Copyright 2026 The SPFM Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spfm {

enum class StreamId : std::uint64_t {
  kInit = 1,
  kData = 2,
  kNoise = 3,
  kTrain = 4,
  kSample = 5,
};

std::string_view to_string(StreamId id);

// Seeded random stream. Distinct (seed, stream, substream) triples are mixed
// through splitmix64 before seeding the engine, so streams never share state.
// Normals use Box-Muller without caching the second variate, which keeps the
// sequence a pure function of the number of draws.
class Rng {
 public:
  Rng(std::uint64_t seed, StreamId stream, std::uint64_t substream = 0);

  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  double normal();                     // N(0, 1)
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

  std::uint64_t seed() const { return seed_; }
  StreamId stream() const { return stream_; }
  std::uint64_t substream() const { return substream_; }

  // Number of raw 64-bit words consumed so far.
  std::uint64_t draws() const { return draws_; }

 private:
  std::uint64_t next();

  std::uint64_t seed_;
  StreamId stream_;
  std::uint64_t substream_;
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace spfm
