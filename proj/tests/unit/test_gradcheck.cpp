#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "netrecast/autograd.hpp"
#include "netrecast/block.hpp"
#include "netrecast/ops.hpp"
#include "test_util.hpp"

using namespace netrecast;
using testutil::random_tensor;

namespace {

constexpr double kStep = 1e-6;
constexpr double kRtol = 1e-3;
constexpr double kAtol = 1e-8;

struct Outcome {
  int elements = 0;
  int failures = 0;
  std::string first_failure;
};

int g_cases = 0;

// Compares tape gradients of `loss` with respect to every leaf against
// central differences of the same function.
Outcome check(const std::string& label, const std::function<Tensor<double>()>& loss,
              std::vector<Tensor<double>> leaves) {
  ++g_cases;
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor<double> L = loss();
    tape.backward(L);
  }
  for (auto& l : leaves) analytic.emplace_back(l.grad().begin(), l.grad().end());

  Outcome out;
  NoGradScope<double> off;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto v = leaves[k].mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + kStep;
      const double up = loss().item();
      v[i] = saved - kStep;
      const double down = loss().item();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double a = analytic[k][i];
      ++out.elements;
      if (std::abs(a - numeric) > kRtol * std::max(std::abs(a), std::abs(numeric)) + kAtol) {
        if (out.failures++ == 0) {
          out.first_failure = label + ": leaf " + std::to_string(k) + " element " + std::to_string(i) +
                              " analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
        }
      }
    }
  }
  return out;
}

void expect_ok(const Outcome& o) {
  INFO(o.first_failure);
  CHECK(o.elements > 0);
  CHECK(o.failures == 0);
}

// Random target so the loss weights every output element differently.
Tensor<double> target_like(const Tensor<double>& y, Rng& rng) { return random_tensor<double>(y.shape(), rng); }

// Values bounded away from zero so relu kinks stay outside the step.
Tensor<double> away_from_zero(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  return t;
}

// Distinct values with gaps far above the step, for max pooling.
Tensor<double> distinct_values(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.01 * static_cast<double>(i);
  rng.shuffle(d);
  return t;
}

template <typename Blk>
std::vector<Tensor<double>> block_leaves(Blk& b) {
  std::vector<Tensor<double>> out;
  for (auto& e : b.params()) out.push_back(e.value);
  return out;
}

}  // namespace

TEST_SUITE("gradcheck") {
  TEST_CASE("conv2d") {
    Rng rng(101);
    for (int t = 0; t < 24; ++t) {
      const std::int64_t B = 1 + rng.below(2), Cin = 1 + rng.below(3), Cout = 1 + rng.below(3);
      const std::int64_t H = 3 + rng.below(4), W = 3 + rng.below(4);
      const int k = rng.bernoulli(0.6) ? 3 : 1;
      const int stride = 1 + static_cast<int>(rng.below(2));
      const int pad = k == 3 ? static_cast<int>(rng.below(2)) : 0;
      auto x = random_tensor<double>(Shape{B, Cin, H, W}, rng);
      auto w = random_tensor<double>(Shape{Cout, Cin, k, k}, rng);
      auto b = random_tensor<double>(Shape{Cout}, rng);
      const bool with_bias = t % 2 == 0;
      auto fwd = [&] { return with_bias ? conv2d(x, w, b, stride, pad) : conv2d(x, w, stride, pad); };
      Tensor<double> target;
      {
        NoGradScope<double> off;
        target = target_like(fwd(), rng);
      }
      std::vector<Tensor<double>> leaves{x, w};
      if (with_bias) leaves.push_back(b);
      expect_ok(check("conv2d", [&] { return mse_loss(fwd(), target); }, leaves));
    }
  }

  TEST_CASE("mse of conv against a target, every weight element") {
    Rng rng(102);
    auto x = random_tensor<double>(Shape{2, 3, 5, 5}, rng);
    auto w = random_tensor<double>(Shape{4, 3, 3, 3}, rng);
    auto target = random_tensor<double>(Shape{2, 4, 5, 5}, rng);
    expect_ok(check("mse(conv)", [&] { return mse_loss(conv2d(x, w, 1, 1), target); }, {w}));
  }

  TEST_CASE("batchnorm2d") {
    Rng rng(103);
    for (int t = 0; t < 14; ++t) {
      const std::int64_t B = 2 + rng.below(2), C = 1 + rng.below(3), H = 1 + rng.below(3), W = 2 + rng.below(2);
      auto x = random_tensor<double>(Shape{B, C, H, W}, rng, -2.0, 2.0);
      auto gamma = random_tensor<double>(Shape{C}, rng, 0.5, 1.5);
      auto beta = random_tensor<double>(Shape{C}, rng);
      BatchNormStats<double> st{random_tensor<double>(Shape{C}, rng), random_tensor<double>(Shape{C}, rng, 0.5, 2.0)};
      const Mode mode = t % 3 == 2 ? Mode::eval : Mode::train;
      auto target = random_tensor<double>(Shape{B, C, H, W}, rng);
      expect_ok(check("batchnorm2d", [&] { return mse_loss(batchnorm2d(x, gamma, beta, st, mode), target); },
                      {x, gamma, beta}));
    }
  }

  TEST_CASE("add, scale, relu, sum") {
    Rng rng(104);
    for (int t = 0; t < 8; ++t) {
      auto a = away_from_zero(Shape{2, 3, 2}, rng);
      auto b = away_from_zero(Shape{2, 3, 2}, rng);
      const double f = rng.uniform(-2.0, 2.0);
      auto target = random_tensor<double>(Shape{2, 3, 2}, rng);
      expect_ok(check("add", [&] { return mse_loss(add(a, b), target); }, {a, b}));
      expect_ok(check("scale", [&] { return mse_loss(scale(a, f), target); }, {a}));
      expect_ok(check("relu", [&] { return mse_loss(relu(a), target); }, {a}));
    }
    auto x = random_tensor<double>(Shape{3, 4}, rng);
    expect_ok(check("sum", [&] { return sum(x); }, {x}));
  }

  TEST_CASE("concat_channels") {
    Rng rng(105);
    for (int t = 0; t < 6; ++t) {
      const std::int64_t H = 1 + rng.below(3);
      auto a = random_tensor<double>(Shape{2, 1 + static_cast<std::int64_t>(rng.below(3)), H, 2}, rng);
      auto b = random_tensor<double>(Shape{2, 1 + static_cast<std::int64_t>(rng.below(3)), H, 2}, rng);
      auto fwd = [&] {
        std::vector<Tensor<double>> parts{a, b};
        return concat_channels<double>(parts);
      };
      Tensor<double> target;
      {
        NoGradScope<double> off;
        target = target_like(fwd(), rng);
      }
      expect_ok(check("concat", [&] { return mse_loss(fwd(), target); }, {a, b}));
    }
  }

  TEST_CASE("pooling") {
    Rng rng(106);
    for (int t = 0; t < 6; ++t) {
      const std::int64_t S = 2 * (1 + rng.below(3));
      auto x = distinct_values(Shape{2, 2, S, S}, rng);
      auto target = random_tensor<double>(Shape{2, 2, S / 2, S / 2}, rng);
      expect_ok(check("avgpool", [&] { return mse_loss(avgpool2d(x, 2, 2), target); }, {x}));
      expect_ok(check("maxpool", [&] { return mse_loss(maxpool2d(x, 2, 2), target); }, {x}));
      auto gt = random_tensor<double>(Shape{2, 2}, rng);
      expect_ok(check("global_avgpool", [&] { return mse_loss(global_avgpool(x), gt); }, {x}));
    }
  }

  TEST_CASE("linear") {
    Rng rng(107);
    for (int t = 0; t < 6; ++t) {
      const std::int64_t B = 1 + rng.below(3), D = 1 + rng.below(5), K = 1 + rng.below(4);
      auto x = random_tensor<double>(Shape{B, D}, rng);
      auto w = random_tensor<double>(Shape{K, D}, rng);
      auto b = random_tensor<double>(Shape{K}, rng);
      auto target = random_tensor<double>(Shape{B, K}, rng);
      expect_ok(check("linear", [&] { return mse_loss(linear(x, w, b), target); }, {x, w, b}));
    }
  }

  TEST_CASE("loss functions") {
    Rng rng(108);
    for (int t = 0; t < 6; ++t) {
      const std::int64_t B = 1 + rng.below(4), K = 2 + rng.below(5);
      auto logits = random_tensor<double>(Shape{B, K}, rng, -3.0, 3.0);
      std::vector<int> labels;
      for (std::int64_t i = 0; i < B; ++i) labels.push_back(static_cast<int>(rng.below(K)));
      expect_ok(check("cross_entropy", [&] { return cross_entropy(logits, std::span<const int>(labels)); }, {logits}));
      auto target = random_tensor<double>(Shape{B, K}, rng);
      expect_ok(check("mse_loss", [&] { return mse_loss(logits, target); }, {logits}));
    }
  }

  TEST_CASE("single blocks of every kind") {
    Rng rng(109);
    const std::vector<BlockSpec> specs{
        BlockSpec::convolution(2, 3),
        BlockSpec::convolution(3, 2, 2),
        BlockSpec::convolution(2, 3, 1, true),
        BlockSpec::basic(3, 3),
        BlockSpec::basic(2, 4, 2),
        BlockSpec::bottleneck(4, 8, 1, 2),
        BlockSpec::bottleneck(8, 8, 2, 2),
        BlockSpec::dense(3, 2, 2, 2),
        BlockSpec::transition(4, 2),
        BlockSpec::classifier(3, 4),
        BlockSpec::classifier(3, 4, 5),
    };
    for (const auto& spec : specs) {
      Rng init = rng.split(static_cast<std::uint64_t>(g_cases));
      BlockT<double> blk(spec, init);
      auto x = random_tensor<double>(Shape{2, spec.in_channels, 4, 4}, rng);
      Tensor<double> target;
      {
        NoGradScope<double> off;
        target = target_like(blk.forward(x, Mode::train), rng);
      }
      auto leaves = block_leaves(blk);
      leaves.push_back(x);
      expect_ok(check(describe(spec), [&] { return mse_loss(blk.forward(x, Mode::train), target); }, leaves));
    }
  }

  TEST_CASE("conv-bn-relu-conv-bn plus shortcut on 2x4x6x6") {
    Rng rng(110);
    Rng init(5);
    BlockT<double> blk(BlockSpec::basic(4, 4), init);
    auto x = random_tensor<double>(Shape{2, 4, 6, 6}, rng);
    auto target = random_tensor<double>(Shape{2, 4, 6, 6}, rng);
    auto leaves = block_leaves(blk);
    leaves.push_back(x);
    expect_ok(check("basic 4->4", [&] { return mse_loss(blk.forward(x, Mode::train), target); }, leaves));
  }

  TEST_CASE("three randomly composed block chains") {
    Rng rng(111);
    for (int chain = 0; chain < 3; ++chain) {
      std::vector<BlockT<double>> blocks;
      int c = 1 + static_cast<int>(rng.below(3));
      const int c_in = c;
      std::int64_t hw = 4;
      for (int depth = 0; depth < 3; ++depth) {
        const int out = 2 + static_cast<int>(rng.below(3));
        BlockSpec spec;
        switch (rng.below(4)) {
          case 0: spec = BlockSpec::convolution(c, out); break;
          case 1: spec = BlockSpec::basic(c, out); break;
          case 2: spec = BlockSpec::bottleneck(c, 2 * out, 1, out / 2 + 1); break;
          default: spec = BlockSpec::dense(c, 2, 1, 2); break;
        }
        Rng init = rng.split(100 + depth);
        blocks.emplace_back(spec, init);
        c = spec.out_channels;
      }
      Rng init = rng.split(200);
      blocks.emplace_back(BlockSpec::classifier(c, 3), init);
      auto x = random_tensor<double>(Shape{2, c_in, hw, hw}, rng);
      auto target = random_tensor<double>(Shape{2, 3}, rng);
      auto fwd = [&] {
        Tensor<double> h = x;
        for (auto& b : blocks) h = b.forward(h, Mode::train);
        return mse_loss(h, target);
      };
      std::vector<Tensor<double>> leaves{x};
      std::string label = "chain";
      for (auto& b : blocks) {
        label += " " + describe(b.spec());
        for (auto& l : block_leaves(b)) leaves.push_back(l);
      }
      expect_ok(check(label, fwd, leaves));
    }
  }

  TEST_CASE("at least one hundred random cases ran") { CHECK(g_cases >= 100); }
}
