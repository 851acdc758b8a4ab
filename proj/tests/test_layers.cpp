#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "repforge/gradcheck.hpp"
#include "repforge/layers.hpp"
#include "repforge/rng.hpp"

using namespace repforge;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv same-padding geometry matches the paper's table") {
  // 9x784 full: conv1 keeps 9x784
  ConvSpec full{3, 3, 1, 1, 1, 4, Padding::same};
  Rng rng(1);
  const Tensor in = random_tensor({9, 784, 1}, rng);
  const Tensor k = random_tensor({3, 3, 1, 4}, rng);
  const Tensor b = random_tensor({4}, rng);
  const auto [out_full, c1] = conv2d_forward(in, k, b, full);
  CHECK(out_full.shape() == Shape{9, 784, 4});

  // 9x784 disj: stride [3,1] gives 3x784 and windows stay inside one
  // feature group (no vertical padding)
  ConvSpec disj{3, 3, 3, 1, 1, 4, Padding::same};
  const auto [out_disj, c2] = conv2d_forward(in, k, b, disj);
  CHECK(out_disj.shape() == Shape{3, 784, 4});
  const ConvDims dims = conv_output_dims(9, 784, disj);
  CHECK(dims.pad_top == 0);
}

TEST_CASE("conv all-ones window sums") {
  const Tensor in = Tensor::full({3, 3, 1}, 1.0);
  const Tensor k = Tensor::full({3, 3, 1, 1}, 1.0);
  const Tensor b({1});
  ConvSpec spec{3, 3, 1, 1, 1, 1, Padding::same};
  const auto [out, cache] = conv2d_forward(in, k, b, spec);
  CHECK(out.at(1, 1, 0) == 9.0);  // center
  CHECK(out.at(0, 1, 0) == 6.0);  // edge centers
  CHECK(out.at(1, 0, 0) == 6.0);
  CHECK(out.at(0, 0, 0) == 4.0);  // corners
  CHECK(out.at(2, 2, 0) == 4.0);
}

TEST_CASE("conv matches 6-nested-loop reference on 50 random cases") {
  Rng rng(2024);
  int same_count = 0, valid_count = 0, disj_count = 0;
  for (int rep = 0; rep < 50; ++rep) {
    ConvSpec spec;
    spec.window_h = 1 + rng.index(4);
    spec.window_w = 1 + rng.index(4);
    spec.in_channels = 1 + rng.index(3);
    spec.out_maps = 1 + rng.index(5);
    // cycle through the stride/padding combinations the table uses
    switch (rep % 4) {
      case 0:
        spec.stride_y = 1, spec.stride_x = 1, spec.padding = Padding::same;
        break;
      case 1:
        spec.stride_y = 3, spec.stride_x = 1, spec.padding = Padding::same;
        ++disj_count;
        break;
      case 2:
        spec.stride_y = 1 + rng.index(3), spec.stride_x = 1 + rng.index(3);
        spec.padding = Padding::same;
        break;
      default:
        spec.stride_y = 1 + rng.index(2), spec.stride_x = 1 + rng.index(2);
        spec.padding = Padding::valid;
        break;
    }
    const std::size_t h = spec.window_h + rng.index(12);
    const std::size_t w = spec.window_w + rng.index(12);
    Rng data_rng(mix_seed(77, rep));
    const Tensor in = random_tensor({h, w, spec.in_channels}, data_rng);
    const Tensor k = random_tensor(
        {spec.window_h, spec.window_w, spec.in_channels, spec.out_maps},
        data_rng);
    const Tensor b = random_tensor({spec.out_maps}, data_rng);

    const auto [got, cache] = conv2d_forward(in, k, b, spec);
    const Tensor want = testing::conv_reference(in, k, b, spec);
    REQUIRE(got.shape() == want.shape());
    CHECK(testing::max_abs_diff(got, want) < 1e-10);
    if (spec.padding == Padding::same) ++same_count;
    else ++valid_count;
  }
  CHECK(same_count > 0);
  CHECK(valid_count > 0);
  CHECK(disj_count > 0);
}

TEST_CASE("conv backward zero grad and forced kernel gradient") {
  Rng rng(5);
  ConvSpec spec{2, 2, 1, 1, 1, 1, Padding::valid};
  const Tensor in = random_tensor({2, 2, 1}, rng);
  const Tensor k = random_tensor({2, 2, 1, 1}, rng);
  const Tensor b({1});
  const auto [out, cache] = conv2d_forward(in, k, b, spec);
  REQUIRE(out.shape() == Shape{1, 1, 1});

  const ConvGrads zero = conv2d_backward(Tensor({1, 1, 1}), k, cache);
  for (std::size_t i = 0; i < zero.kernels.size(); ++i) CHECK(zero.kernels[i] == 0.0);
  for (std::size_t i = 0; i < zero.input.size(); ++i) CHECK(zero.input[i] == 0.0);
  CHECK(zero.bias[0] == 0.0);

  // single-pixel cotangent of 1: kernel gradient equals the input window
  const ConvGrads g = conv2d_backward(Tensor({1, 1, 1}, {1.0}), k, cache);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(g.kernels[i] == in[i]);
  CHECK(g.bias[0] == 1.0);
}

TEST_CASE("maxpool table geometries") {
  Rng rng(6);
  const Tensor sq = random_tensor({84, 84, 2}, rng);
  const auto [p1, c1] = maxpool_forward(sq, PoolSpec{3, 3, 3, 3});
  CHECK(p1.shape() == Shape{28, 28, 2});

  const Tensor rect = random_tensor({3, 784, 2}, rng);
  const auto [p2, c2] = maxpool_forward(rect, PoolSpec{2, 4, 1, 4});
  CHECK(p2.shape() == Shape{2, 196, 2});
}

TEST_CASE("maxpool constant input ties to first index") {
  const Tensor in = Tensor::full({4, 4, 1}, 3.5);
  const auto [out, cache] = maxpool_forward(in, PoolSpec{2, 2, 2, 2});
  CHECK(out.shape() == Shape{2, 2, 1});
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 3.5);
  CHECK(cache.argmax[0] == 0);       // (0,0)
  CHECK(cache.argmax[1] == 2);       // (0,2)
  CHECK(cache.argmax[2] == 8);       // (2,0)
  CHECK(cache.argmax[3] == 10);      // (2,2)
}

TEST_CASE("maxpool window larger than input is rejected") {
  const Tensor in({2, 2, 1});
  CHECK_THROWS_AS((void)maxpool_forward(in, PoolSpec{3, 3, 1, 1}),
                  std::invalid_argument);
}

TEST_CASE("maxpool backward routes and accumulates") {
  // non-overlapping tiling: exactly one 1 per window
  Rng rng(8);
  const Tensor in = random_tensor({4, 4, 1}, rng);
  const auto [out, cache] = maxpool_forward(in, PoolSpec{2, 2, 2, 2});
  const Tensor grad = maxpool_backward(Tensor::full({2, 2, 1}, 1.0), cache);
  double total = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    CHECK((grad[i] == 0.0 || grad[i] == 1.0));
    total += grad[i];
  }
  CHECK(total == 4.0);

  // overlapping windows sharing one max accumulate additively
  Tensor peak({1, 3, 1}, {0.0, 7.0, 0.0});
  const auto [pout, pcache] = maxpool_forward(peak, PoolSpec{1, 2, 1, 1});
  REQUIRE(pout.shape() == Shape{1, 2, 1});
  const Tensor pgrad = maxpool_backward(Tensor::full({1, 2, 1}, 1.0), pcache);
  CHECK(pgrad[0] == 0.0);
  CHECK(pgrad[1] == 2.0);  // both windows route here
  CHECK(pgrad[2] == 0.0);
}

TEST_CASE("dense forward examples") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  const Tensor in({3}, {4, 5, 6});
  const auto [out, cache] = dense_forward(in, eye, Tensor({3}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == in[i]);

  const Tensor in2({2}, {1, 1});
  const Tensor w({2, 1}, {2, 3});
  const Tensor b({1}, {1});
  const auto [out2, cache2] = dense_forward(in2, w, b);
  CHECK(out2[0] == 6.0);
}

TEST_CASE("relu forward and backward examples") {
  const Tensor in({3}, {-1, 0, 2});
  const auto [out, cache] = relu(in);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
  const Tensor grad = relu_backward(Tensor({3}, {5, 5, 5}), cache);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);  // subgradient 0 at exactly 0
  CHECK(grad[2] == 5.0);
}

TEST_CASE("dropout identity modes are exact") {
  Rng rng(9);
  const Tensor in = random_tensor({100}, rng);
  Rng d1(10);
  const auto [kept, c1] = dropout_apply(in, 1.0, d1, true);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(kept[i] == in[i]);

  Rng d2(11);
  const auto [inf, c2] = dropout_apply(in, 0.5, d2, false);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(inf[i] == in[i]);
  CHECK(c2.identity);
}

TEST_CASE("dropout survivor fraction concentrates around keep_prob") {
  const Tensor in = Tensor::full({100, 1000}, 1.0);
  Rng rng(7);
  const auto [out, cache] = dropout_apply(in, 0.5, rng, true);
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK((cache.mask[i] == 0.0 || cache.mask[i] == 2.0));
    survivors += cache.mask[i] != 0.0;
    CHECK(out[i] == cache.mask[i]);  // input of ones
  }
  const double frac = static_cast<double>(survivors) / out.size();
  CHECK(frac > 0.49);
  CHECK(frac < 0.51);
}

TEST_CASE("dropout backward applies the cached mask") {
  Rng rng(12);
  const Tensor in = random_tensor({64}, rng);
  Rng mask_rng(13);
  const auto [out, cache] = dropout_apply(in, 0.7, mask_rng, true);
  const Tensor ones = Tensor::full({64}, 1.0);
  const Tensor grad = dropout_backward(ones, cache);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == cache.mask[i]);
}

TEST_CASE("dropout rejects keep_prob out of range") {
  Rng rng(1);
  const Tensor in({4});
  CHECK_THROWS_AS((void)dropout_apply(in, 0.0, rng, true), std::invalid_argument);
  CHECK_THROWS_AS((void)dropout_apply(in, 1.5, rng, true), std::invalid_argument);
}

TEST_CASE("softmax cross entropy uniform and extreme logits") {
  const Tensor uniform = Tensor::full({50}, 0.25);
  const SoftmaxLoss sl = softmax_cross_entropy(uniform, 7);
  CHECK(sl.loss == doctest::Approx(std::log(50.0)).epsilon(1e-12));
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(sl.probs[i] == doctest::Approx(0.02).epsilon(1e-12));
  }

  const Tensor extreme({2}, {1000.0, 0.0});
  const SoftmaxLoss easy = softmax_cross_entropy(extreme, 0);
  CHECK(std::isfinite(easy.loss));
  CHECK(easy.loss == doctest::Approx(0.0).epsilon(1e-12));
  const SoftmaxLoss hard = softmax_cross_entropy(extreme, 1);
  CHECK(std::isfinite(hard.loss));
  CHECK(hard.loss == doctest::Approx(1000.0).epsilon(1e-9));

  CHECK_THROWS_AS((void)softmax_cross_entropy(extreme, 2), std::invalid_argument);
}

TEST_CASE("softmax probs sum to 1 and grads sum to 0 within 1e-12") {
  Rng rng(77);
  for (int rep = 0; rep < 40; ++rep) {
    Tensor logits({1 + rng.index(64)});
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits[i] = rng.uniform(-40, 40);
    }
    const SoftmaxLoss sl = softmax_cross_entropy(logits, rng.index(logits.size()));
    double psum = 0.0, gsum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      psum += sl.probs[i];
      gsum += sl.grad_logits[i];
    }
    CHECK(std::abs(psum - 1.0) < 1e-12);
    CHECK(std::abs(gsum) < 1e-12);
  }
}

TEST_CASE("softmax gradient matches finite differences within 1e-5") {
  Rng rng(4242);
  Tensor logits({10});
  for (std::size_t i = 0; i < 10; ++i) logits[i] = rng.uniform(-2, 2);
  const std::size_t label = 3;
  const SoftmaxLoss sl = softmax_cross_entropy(logits, label);
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double saved = logits[i];
    logits[i] = saved + h;
    const double up = softmax_cross_entropy(logits, label).loss;
    logits[i] = saved - h;
    const double down = softmax_cross_entropy(logits, label).loss;
    logits[i] = saved;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - sl.grad_logits[i]) /
                                std::max({1e-8, std::abs(fd),
                                          std::abs(sl.grad_logits[i])}));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("every layer backward agrees with central finite differences") {
  const auto results = run_gradient_suite(1);
  for (const auto& r : results) {
    INFO(r.name, " err ", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("gradient suite flags a sign-flipped conv backward") {
  GradCheckOptions opts;
  opts.conv_backward = [](const Tensor& g, const Tensor& k, const ConvCache& c) {
    ConvGrads grads = conv2d_backward(g, k, c);
    for (std::size_t i = 0; i < grads.kernels.size(); ++i) {
      grads.kernels[i] = -grads.kernels[i];
    }
    return grads;
  };
  const auto results = run_gradient_suite(1, opts);
  bool conv_failed = false;
  for (const auto& r : results) {
    if (r.name == "conv2d") conv_failed = !r.pass;
  }
  CHECK(conv_failed);
}
