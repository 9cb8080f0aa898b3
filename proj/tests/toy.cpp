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

#include "toy.hpp"

#include "support.hpp"

namespace dash::testing {

namespace {

ToyWorld build() {
  CorpusSpec c;
  c.vocab = 20;
  c.branching = 3;
  c.markov_run = 24;
  c.recall_pairs = 2;
  c.recall_gap = 6;
  const ModelSpec spec = tiny_spec(4, 16, 20, 32, 4);
  CorpusGenerator gen(c, 5);
  TokenSeq stream = gen.generate(60000);

  TrainConfig t;
  t.stage = Stage::kTeacher;
  t.steps = 300;
  t.batch = 8;
  t.seq_len = 32;
  t.lr_main = 1e-2;
  t.seed = 1;
  const CorpusSplit split = split_corpus(stream, 0.1);
  Model teacher = train_teacher(spec, t, split.train, 2);

  Model aligned = teacher;
  aligned.seed_linear_from_attention();
  TrainConfig a;
  a.stage = Stage::kAlign;
  a.steps = 150;
  a.batch = 4;
  a.seq_len = 32;
  a.lr_attn = 3e-3;
  a.seed = 3;
  run_training(aligned, &teacher, HybridArch::all(4, OperatorKind::kLinear), a, split.train);

  WindowSampler hs(split.heldout, 32, 4);
  ToyWorld w{c, spec, std::move(stream), {}, hs.batch(16), std::move(teacher), std::move(aligned)};
  w.split = split_corpus(w.stream, 0.1);
  return w;
}

}  // namespace

const ToyWorld& toy_world() {
  static const ToyWorld w = build();
  return w;
}

}  // namespace dash::testing
