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

#include <cmath>
#include <cstring>
#include <numeric>

#include "doctest.h"
#include "dash/autodiff.hpp"
#include "dash/error.hpp"
#include "support.hpp"

using namespace dash;
using dash::testing::random_tensor;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-5;

void check_fd(const ad::ScalarFn& fn, const Tensor& x, double tol = kTol) {
  const auto r = ad::finite_difference_check(fn, x, kStep, tol);
  INFO("max rel error " << r.max_rel_error << " at " << r.worst_index << " analytic " << r.worst_analytic
                        << " numeric " << r.worst_numeric);
  CHECK(r.passed);
  CHECK(r.max_rel_error < tol);
}

// A fixed random projection turns any output into a scalar with nonzero
// gradient everywhere.
ad::NodeId project(ad::Tape& t, ad::NodeId y, std::uint64_t seed) {
  const auto w = t.constant(random_tensor(t.shape(y), seed));
  return ad::sum(t, ad::mul(t, y, w));
}

}  // namespace

TEST_CASE("matmul shape rule and mismatch error") {
  ad::Tape t;
  const auto a = t.constant(Tensor({2, 3}));
  const auto b = t.constant(Tensor({3, 4}));
  CHECK(t.shape(ad::matmul(t, a, b)) == Shape{2, 4});
  CHECK(t.shape(ad::matmul(t, b, b, true, false)) == Shape{4, 4});
  try {
    ad::matmul(t, a, a);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(t, a, b), Error);
}

TEST_CASE("softmax of a zero row is uniform") {
  ad::Tape t;
  const auto y = ad::softmax(t, t.constant(Tensor({1, 3})));
  for (double v : t.value(y).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("masked softmax rows are distributions; fully masked rows are zero") {
  ad::Tape t;
  auto mask = std::make_shared<Tensor>(Shape{3, 4});
  for (std::size_t c = 1; c < 4; ++c) mask->at(0, c) = ad::kMaskedLogit;
  mask->at(1, 3) = ad::kMaskedLogit;
  for (std::size_t c = 0; c < 4; ++c) mask->at(2, c) = ad::kMaskedLogit;
  const auto y = ad::softmax(t, t.constant(random_tensor({3, 4}, 3, 5.0)), mask);
  const auto& v = t.value(y);
  for (double x : v.data) CHECK(x >= 0.0);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += v.at(r, c);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(v.at(0, 0) == 1.0);
  CHECK(v.at(1, 3) == 0.0);
  for (std::size_t c = 0; c < 4; ++c) CHECK(v.at(2, c) == 0.0);
}

TEST_CASE("layer norm of a constant row is zero before the affine terms") {
  ad::Tape t;
  const auto x = t.constant(Tensor::filled({2, 5}, 3.7));
  const auto g = t.constant(Tensor::filled({5}, 1.0));
  const auto b = t.constant(Tensor({5}));
  for (double v : t.value(ad::layer_norm(t, x, g, b)).data) CHECK(v == 0.0);
}

TEST_CASE("backward: linear and quadratic losses") {
  const Tensor x0 = random_tensor({3, 4}, 11);
  {
    ad::Tape t;
    const auto x = t.leaf(x0, 0, true);
    const auto g = t.backward(ad::sum(t, x));
    for (double v : g.at(0).data) CHECK(v == 1.0);
    CHECK(g.at(0).shape == x0.shape);
  }
  {
    ad::Tape t;
    const auto x = t.leaf(x0, 0, true);
    const auto g = t.backward(ad::scale(t, ad::sq_frobenius(t, x), 0.5));
    CHECK(max_abs_diff(g.at(0), x0) < 1e-15);
  }
}

TEST_CASE("backward: unreachable and frozen leaves get zero gradient; non-scalar loss rejected") {
  ad::Tape t;
  const auto x = t.leaf(random_tensor({2, 2}, 1), 0, true);
  t.leaf(random_tensor({3}, 2), 1, true);
  const auto f = t.leaf(random_tensor({2, 2}, 3), 2, false);
  const auto loss = ad::sum(t, ad::mul(t, x, f));
  const auto g = t.backward(loss);
  REQUIRE(g.size() == 3);
  CHECK(g.at(1).shape == Shape{3});
  for (double v : g.at(1).data) CHECK(v == 0.0);
  for (double v : g.at(2).data) CHECK(v == 0.0);
  ad::Tape t2;
  const auto y = t2.leaf(random_tensor({2, 2}, 1), 0, true);
  CHECK_THROWS_AS(t2.backward(y), Error);
}

TEST_CASE("finite differences: identity and a constant function") {
  const auto id = ad::finite_difference_check([](ad::Tape& t, ad::NodeId x) { return ad::sum(t, x); },
                                              Tensor::scalar(0.7), kStep, 1e-9);
  CHECK(id.passed);
  CHECK(id.worst_analytic == 1.0);
  CHECK(id.max_rel_error < 1e-9);

  ad::Tape t;
  const auto x = t.leaf(random_tensor({3, 5}, 4), 0, true);
  const auto g = t.backward(ad::sum(t, ad::softmax(t, x)));
  for (double v : g.at(0).data) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("every primitive matches central differences") {
  const Tensor a = random_tensor({3, 4}, 21);
  const Tensor b = random_tensor({4, 5}, 22);
  const Tensor c = random_tensor({3, 4}, 23);

  SUBCASE("matmul (all transpose combinations)") {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        const Tensor lhs = ta ? random_tensor({4, 3}, 31) : a;
        const Tensor rhs = tb ? random_tensor({5, 4}, 32) : b;
        check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::matmul(t, x, t.constant(rhs), ta, tb), 1); },
                 lhs);
        check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::matmul(t, t.constant(lhs), x, ta, tb), 2); },
                 rhs);
      }
  }
  SUBCASE("add, sub, mul, scale") {
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::add(t, x, t.constant(c)), 3); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::sub(t, t.constant(c), x), 4); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::mul(t, x, x), 5); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::scale(t, x, -2.5), 6); }, a);
  }
  SUBCASE("add_bias and mul_scalar") {
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::add_bias(t, t.constant(a), x), 7); },
             random_tensor({4}, 8));
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::add_bias(t, x, t.constant(Tensor({4}))), 7); },
             a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::mul_scalar(t, t.constant(a), x), 9); },
             Tensor::scalar(0.3));
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::mul_scalar(t, x, t.constant(Tensor::scalar(1.7))), 9); },
             a);
  }
  SUBCASE("index") {
    check_fd([&](ad::Tape& t, ad::NodeId x) { return ad::mul(t, ad::index(t, x, 5), ad::index(t, x, 2)); }, a);
  }
  SUBCASE("softmax (plain and masked) and log_softmax") {
    auto mask = std::make_shared<Tensor>(Shape{3, 4});
    mask->at(0, 3) = ad::kMaskedLogit;
    mask->at(1, 0) = ad::kMaskedLogit;
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::softmax(t, x), 10); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::softmax(t, x, mask), 11); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::log_softmax(t, x), 12); }, a);
  }
  SUBCASE("layer norm in all three inputs") {
    const Tensor g = random_tensor({4}, 13), bb = random_tensor({4}, 14);
    check_fd([&](ad::Tape& t, ad::NodeId x) {
      return project(t, ad::layer_norm(t, x, t.constant(g), t.constant(bb)), 15);
    }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) {
      return project(t, ad::layer_norm(t, t.constant(a), x, t.constant(bb)), 16);
    }, g);
    check_fd([&](ad::Tape& t, ad::NodeId x) {
      return project(t, ad::layer_norm(t, t.constant(a), t.constant(g), x), 17);
    }, bb);
  }
  SUBCASE("row l2 normalisation, sigmoid, silu") {
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::l2_normalize_rows(t, x), 18); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::sigmoid(t, x), 19); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::silu(t, x), 20); }, a);
  }
  SUBCASE("reductions") {
    check_fd([&](ad::Tape& t, ad::NodeId x) { return ad::mul(t, ad::sum(t, x), ad::sum(t, x)); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return ad::mul(t, ad::mean(t, x), ad::sum(t, x)); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return ad::sq_frobenius(t, x); }, a);
  }
  SUBCASE("embedding, slices, concat") {
    const std::vector<int> ids{2, 0, 2, 1};
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::embedding(t, x, ids), 24); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::slice_rows(t, x, 1, 2), 25); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) { return project(t, ad::slice_cols(t, x, 1, 2), 26); }, a);
    check_fd([&](ad::Tape& t, ad::NodeId x) {
      const std::vector<ad::NodeId> parts{ad::slice_cols(t, x, 2, 2), t.constant(c), x};
      return project(t, ad::concat_cols(t, parts), 27);
    }, a);
  }
  SUBCASE("kl_rows in both arguments, several temperatures") {
    for (double tau : {0.5, 1.0, 2.0}) {
      check_fd([&](ad::Tape& t, ad::NodeId x) { return ad::kl_rows(t, t.constant(c), x, tau); }, a);
      check_fd([&](ad::Tape& t, ad::NodeId x) { return ad::kl_rows(t, x, t.constant(c), tau); }, a);
    }
  }
  SUBCASE("delta_scan in every input") {
    const std::size_t T = 6, dh = 3;
    const Tensor q = random_tensor({T, dh}, 40), v = random_tensor({T, dh}, 42);
    Tensor k = random_tensor({T, dh}, 41);
    for (std::size_t r = 0; r < T; ++r) {
      double n = 0.0;
      for (std::size_t j = 0; j < dh; ++j) n += k.at(r, j) * k.at(r, j);
      for (std::size_t j = 0; j < dh; ++j) k.at(r, j) /= std::sqrt(n);
    }
    Tensor g({T, 1}), be({T, 1});
    for (std::size_t r = 0; r < T; ++r) {
      g[r] = 0.5 + 0.07 * static_cast<double>(r);
      be[r] = 0.9 - 0.1 * static_cast<double>(r);
    }
    auto scan = [&](ad::Tape& t, int which, ad::NodeId x) {
      const Tensor* in[5] = {&q, &k, &v, &g, &be};
      ad::NodeId n[5];
      for (int i = 0; i < 5; ++i) n[i] = i == which ? x : t.constant(*in[i]);
      return project(t, ad::delta_scan(t, n[0], n[1], n[2], n[3], n[4]), 43);
    };
    const Tensor* points[5] = {&q, &k, &v, &g, &be};
    for (int w = 0; w < 5; ++w) check_fd([&](ad::Tape& t, ad::NodeId x) { return scan(t, w, x); }, *points[w]);
  }
}

TEST_CASE("distillation KL on random two-token logits: relative error below 1e-6") {
  const Tensor zt = random_tensor({2, 5}, 51);
  const auto r = ad::finite_difference_check(
      [&](ad::Tape& t, ad::NodeId x) { return ad::kl_rows(t, t.constant(zt), x, 1.0); }, random_tensor({2, 5}, 52),
      kStep, 1e-6);
  INFO(r.max_rel_error);
  CHECK(r.passed);
}

TEST_CASE("kl_rows is exactly zero for identical logits") {
  for (double tau : {0.3, 1.0, 4.0}) {
    ad::Tape t;
    const auto z = t.constant(random_tensor({4, 7}, 60, 3.0));
    CHECK(t.value(ad::kl_rows(t, z, z, tau))[0] == 0.0);
  }
}

TEST_CASE("re-running a tape is bit-identical") {
  auto run = [] {
    ad::Tape t;
    const auto x = t.leaf(random_tensor({4, 6}, 70), 0, true);
    const auto y = ad::softmax(t, ad::matmul(t, ad::silu(t, x), x, false, true));
    const auto loss = ad::sq_frobenius(t, ad::log_softmax(t, y));
    auto g = t.backward(loss);
    return std::make_pair(t.value(loss)[0], g.at(0).data);
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::memcmp(&a.first, &b.first, sizeof(double)) == 0);
  CHECK(a.second == b.second);
}
