/* Copyright (c) 2026 The wsiseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "wsiseg/objective.hpp"

using namespace wsiseg;

namespace {

std::vector<double> random_doubles(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<double> random_binary(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.bernoulli(0.4) ? 1.0 : 0.0;
  return v;
}

double dice_of(const std::vector<double>& p, const std::vector<double>& t, double eps = 1.0) {
  return dice_loss<double>(p, t, {}, eps);
}

}  // namespace

TEST_CASE("dice loss fixtures") {
  const std::size_t n = 65536;
  std::vector<double> ones(n, 1.0), zeros(n, 0.0);
  CHECK(dice_of(ones, ones) == doctest::Approx(0.0));
  CHECK(dice_of(ones, zeros) == doctest::Approx(1.0 - 1.0 / 65537.0).epsilon(1e-12));
  CHECK(dice_of(ones, zeros) == doctest::Approx(0.9999847).epsilon(1e-7));
  CHECK(dice_of({1, 1, 0, 0}, {1, 0, 1, 0}, 0.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(dice_of({1, 0}, {1}), Error);
}

TEST_CASE("bce loss fixtures") {
  CHECK(bce_loss<double>(std::vector<double>{0.5}, std::vector<double>{1.0}, {}) ==
        doctest::Approx(std::log(2.0)));
  CHECK(bce_loss<double>(std::vector<double>{0.5}, std::vector<double>{0.0}, {}) ==
        doctest::Approx(0.6931).epsilon(1e-4));
  const double exact = bce_loss<double>(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 0.0}, {});
  CHECK(exact > 0.0);
  CHECK(exact < 2e-7);
  CHECK(bce_loss<double>(std::vector<double>{0.9, 0.2}, std::vector<double>{1.0, 0.0}, {}) ==
        doctest::Approx(0.16425).epsilon(1e-4));
  CHECK(bce_loss<double>(std::vector<double>{0.9, 0.2}, std::vector<double>{1.0, 0.0}, {}) ==
        doctest::Approx((-std::log(0.9) - std::log(0.8)) / 2.0).epsilon(1e-12));
}

TEST_CASE("dice gradient matches central differences") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_doubles(rng, 64, 0.0, 1.0);
    const auto t = random_binary(rng, 64);
    std::vector<double> g(64);
    dice_loss<double>(p, t, g);
    for (std::size_t i = 0; i < 64; ++i) {
      auto up = p, down = p;
      up[i] += 1e-4;
      down[i] -= 1e-4;
      const double num = (dice_of(up, t) - dice_of(down, t)) / 2e-4;
      CHECK(std::abs(num - g[i]) <= 1e-3 * std::max(std::abs(num), 1e-8));
    }
  }
}

TEST_CASE("bce gradient matches central differences") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_doubles(rng, 64, 0.01, 0.99);
    const auto y = random_binary(rng, 64);
    std::vector<double> g(64);
    bce_loss<double>(p, y, g);
    for (std::size_t i = 0; i < 64; ++i) {
      auto up = p, down = p;
      up[i] += 1e-4;
      down[i] -= 1e-4;
      const double num = (bce_loss<double>(up, y, {}) - bce_loss<double>(down, y, {})) / 2e-4;
      CHECK(std::abs(num - g[i]) <= 1e-3 * std::abs(num));
    }
  }
}

TEST_CASE("dice is permutation invariant and symmetric for binary inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_doubles(rng, 100, 0.0, 1.0);
    auto t = random_binary(rng, 100);
    const double base = dice_of(p, t);
    std::vector<std::size_t> order(100);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 99; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    std::vector<double> ps(100), ts(100);
    for (std::size_t i = 0; i < 100; ++i) {
      ps[i] = p[order[i]];
      ts[i] = t[order[i]];
    }
    CHECK(dice_of(ps, ts) == doctest::Approx(base).epsilon(1e-12));
    const auto pb = random_binary(rng, 100);
    CHECK(dice_of(pb, t) == doctest::Approx(dice_of(t, pb)).epsilon(1e-15));
  }
}

TEST_CASE("bce is permutation invariant over the batch") {
  Rng rng(4);
  auto p = random_doubles(rng, 16, 0.05, 0.95);
  auto y = random_binary(rng, 16);
  const double base = bce_loss<double>(p, y, {});
  std::reverse(p.begin(), p.end());
  std::reverse(y.begin(), y.end());
  CHECK(bce_loss<double>(p, y, {}) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("raising a prediction on a positive pixel never raises dice loss") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_doubles(rng, 32, 0.0, 1.0);
    const auto t = random_binary(rng, 32);
    const std::size_t i = rng.below(32);
    if (t[i] != 1.0) continue;
    const double before = dice_of(p, t);
    p[i] = std::min(1.0, p[i] + rng.uniform(0.0, 0.5));
    CHECK(dice_of(p, t) <= before + 1e-15);
  }
}

TEST_CASE("total loss combines the two terms") {
  Rng rng(6);
  Tensor pred({2, 1, 8, 8}), target({2, 1, 8, 8});
  for (float& v : pred.values()) v = static_cast<float>(rng.uniform());
  for (float& v : target.values()) v = rng.bernoulli(0.3) ? 1.0f : 0.0f;
  const std::vector<float> cls{0.9f, 0.2f}, labels{1.0f, 0.0f};

  const LossReport single = total_loss(pred, target, {}, {}, false);
  CHECK(single.bce_loss == 0.0);
  CHECK(single.total == single.dice_loss);
  CHECK(single.batch_size == 2);

  const LossReport multi = total_loss(pred, target, cls, labels, true);
  std::vector<double> pd(pred.values().begin(), pred.values().end());
  std::vector<double> td(target.values().begin(), target.values().end());
  CHECK(multi.dice_loss == doctest::Approx(dice_of(pd, td)).epsilon(1e-6));
  CHECK(multi.bce_loss == doctest::Approx(0.16425).epsilon(1e-4));
  CHECK(multi.total == multi.dice_loss + multi.bce_loss);
  CHECK(multi.dice_loss >= 0.0);
  CHECK(multi.dice_loss <= 1.0);

  CHECK_THROWS_AS(total_loss(pred, target, {}, {}, true), Error);
  Tensor wrong({2, 1, 8, 4});
  CHECK_THROWS_AS(total_loss(pred, wrong, {}, {}, false), Error);

  LossGradients g;
  total_loss(pred, target, cls, labels, true, &g);
  CHECK(g.d_seg.shape() == pred.shape());
  CHECK(g.d_cls.size() == 2);
  CHECK(g.d_cls[0] == doctest::Approx(-1.0 / (0.9 * 2)).epsilon(1e-5));
}
