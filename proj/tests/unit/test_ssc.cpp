#include <doctest.h>

#include <stdexcept>

#include "fixtures.hpp"
#include "starnet/errors.hpp"
#include "starnet/ssc.hpp"

using namespace starnet;
using namespace starnet::testing;

namespace {

const std::vector<int64_t> kChannels{4, 8, 16, 16};

Pyramid random_pyramid(int64_t side, int64_t batch = 1) {
  Pyramid p;
  for (auto c : kChannels) {
    p.push_back(torch::randn({batch, c, side, side}, f64));
    side /= 2;
  }
  return p;
}

StarAggregator random_aggregator(bool zero_bias = true) {
  StarAggregator agg(kChannels);
  agg->to(torch::kFloat64);
  torch::NoGradGuard no_grad;
  for (auto& p : agg->named_parameters()) {
    const bool bias = p.key().find("bias") != std::string::npos;
    if (bias && zero_bias) {
      p.value().zero_();
    } else {
      p.value().normal_(0, 0.3);
    }
  }
  return agg;
}

Pyramid scale(const Pyramid& p, double a) {
  Pyramid out;
  for (const auto& t : p) out.push_back(t * a);
  return out;
}

Pyramid add(const Pyramid& a, const Pyramid& b) {
  Pyramid out;
  for (size_t i = 0; i < a.size(); ++i) out.push_back(a[i] + b[i]);
  return out;
}

double max_diff(const Pyramid& a, const Pyramid& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("ssc") {
  TEST_CASE("summand counts per level") {
    StarAggregator agg(kChannels);
    for (size_t i = 0; i < 4; ++i) {
      CHECK(agg->down_summands(i) == i);
      CHECK(agg->up_summands(i) == 3 - i);
    }
    CHECK_THROWS_AS(agg->down_summands(4), std::out_of_range);
    CHECK_THROWS_AS(agg->same_level(random_pyramid(16), 7), std::out_of_range);

    // One registered path per ordered pair of distinct levels plus one same-level conv each.
    size_t down = 0, up = 0, same = 0;
    for (const auto& m : agg->named_children()) {
      if (m.key().rfind("down", 0) == 0) ++down;
      if (m.key().rfind("up", 0) == 0) ++up;
      if (m.key().rfind("same", 0) == 0) ++same;
    }
    CHECK(down == 6);
    CHECK(up == 6);
    CHECK(same == 4);
  }

  TEST_CASE("output level i has (C_i, S_i)") {
    auto agg = random_aggregator();
    auto f = random_pyramid(56, 2);
    auto down = agg->downsampling(f, 2);
    CHECK(down.sizes() == torch::IntArrayRef{2, 16, 14, 14});
    auto up = agg->upsampling(f, 1);
    CHECK(up.sizes() == torch::IntArrayRef{2, 8, 28, 28});
    auto out = agg->forward(f);
    for (size_t i = 0; i < 4; ++i) CHECK(out[i].sizes() == f[i].sizes());
  }

  TEST_CASE("aggregate is the literal sum of the three terms") {
    auto agg = random_aggregator(false);
    auto f = random_pyramid(16);
    auto out = agg->forward(f);
    for (size_t i = 0; i < 4; ++i) {
      auto ref = agg->same_level(f, i) + agg->downsampling(f, i) + agg->upsampling(f, i);
      CHECK(max_abs(out[i] - ref) < 1e-12);
    }
  }

  TEST_CASE("linear with zero biases") {
    auto agg = random_aggregator();
    auto x = random_pyramid(16), y = random_pyramid(16);
    CHECK(max_diff(agg->forward(scale(x, 2.5)), scale(agg->forward(x), 2.5)) < 1e-6);
    CHECK(max_diff(agg->forward(add(x, y)), add(agg->forward(x), agg->forward(y))) < 1e-6);
    auto zero = scale(x, 0.0);
    CHECK(max_diff(agg->forward(zero), zero) == 0);
  }

  TEST_CASE("every output level depends on every input level") {
    auto agg = random_aggregator(false);
    auto f = random_pyramid(16);
    auto base = agg->forward(f);
    for (size_t j = 0; j < 4; ++j) {
      auto bumped = f;
      bumped[j] = f[j].clone();
      bumped[j][0][0][0][0] += 1.0;
      auto out = agg->forward(bumped);
      for (size_t i = 0; i < 4; ++i) CHECK(max_abs(out[i] - base[i]) > 1e-8);
    }
  }

  TEST_CASE("two aggregators with tied parameters agree") {
    auto a = random_aggregator(false);
    StarAggregator b(kChannels);
    b->to(torch::kFloat64);
    {
      torch::NoGradGuard no_grad;
      auto src = a->named_parameters();
      for (auto& p : b->named_parameters()) p.value().copy_(src[p.key()]);
    }
    auto f = random_pyramid(16);
    CHECK(max_diff(a->forward(f), b->forward(f)) == 0);
  }

  TEST_CASE("pyramid shape errors") {
    StarAggregator agg(kChannels);
    auto f = random_pyramid(16);
    f.pop_back();
    CHECK_THROWS_AS(agg->forward(f), ShapeError);
    f = random_pyramid(16);
    f[2] = torch::randn({1, 16, 3, 3}, f64);
    CHECK_THROWS_AS(agg->forward(f), ShapeError);
  }

  TEST_CASE("DFM chain kernels and shapes") {
    SscConfig cfg{{64, 128, 256, 256}, {7, 5, 3}};
    DfmChain chain(cfg);
    CHECK(chain->kernel_size(1) == 7);
    CHECK(chain->kernel_size(2) == 5);
    CHECK(chain->kernel_size(3) == 3);
    CHECK_THROWS_AS(chain->kernel_size(0), std::out_of_range);
    CHECK_THROWS_AS(chain->kernel_size(4), std::out_of_range);
    auto params = chain->named_parameters();
    CHECK(params["chain1.weight"].sizes() == torch::IntArrayRef{128, 64, 7, 7});
    CHECK(params["chain2.weight"].sizes() == torch::IntArrayRef{256, 128, 5, 5});
    CHECK(params["chain3.weight"].sizes() == torch::IntArrayRef{256, 256, 3, 3});

    torch::NoGradGuard no_grad;
    auto m1 = chain->forward(torch::randn({1, 64, 56, 56}), 1);
    CHECK(m1.sizes() == torch::IntArrayRef{1, 128, 28, 28});
    CHECK(chain->forward(torch::randn({1, 256, 14, 14}), 3).sizes() == torch::IntArrayRef{1, 256, 7, 7});
    CHECK_THROWS_AS(chain->forward(torch::randn({1, 32, 56, 56}), 1), ShapeError);
    CHECK_THROWS_AS(chain->forward(torch::randn({1, 64, 56, 56}), 0), std::out_of_range);
  }

  TEST_CASE("chain configuration errors") {
    CHECK_THROWS_AS((SscConfig{{8, 16, 32}, {7}}.validate()), ConfigError);
    CHECK_THROWS_AS((SscConfig{{8, 16}, {4}}.validate()), ConfigError);
    CHECK_NOTHROW((SscConfig{{8, 16}, {3}}.validate()));
  }
}
