// Copyright 2026 The DASH Search Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// A small trained teacher and its aligned candidates, built once per test
// process and shared by the suites that need realistic weights.

#include <vector>

#include "dash/corpus.hpp"
#include "dash/model.hpp"
#include "dash/training.hpp"

namespace dash::testing {

struct ToyWorld {
  CorpusSpec corpus;
  ModelSpec spec;
  TokenSeq stream;
  CorpusSplit split;
  std::vector<TokenSeq> heldout;
  Model teacher;
  Model aligned;
};

const ToyWorld& toy_world();

}  // namespace dash::testing
