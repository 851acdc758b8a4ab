#include "repforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "repforge/rng.hpp"

namespace repforge {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Values on a shuffled 0.05 grid: window-local gaps stay far above the FD
// step, so pooling argmaxes cannot flip.
Tensor tie_free_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::vector<std::size_t> slots(t.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  rng.shuffle(slots);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = 0.05 * static_cast<double>(slots[i]);
  }
  return t;
}

double dot_all(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Max relative error between analytic and central-difference gradients of
// scalar(theta), perturbing every element of theta.
double fd_check(Tensor& theta, const Tensor& analytic,
                const std::function<double()>& scalar, double h) {
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = scalar();
    theta[i] = saved - h;
    const double down = scalar();
    theta[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(fd, analytic[i]));
  }
  return worst;
}

double check_conv(std::uint64_t seed, double h, const ConvBackwardFn& backward) {
  double worst = 0.0;
  const ConvSpec specs[] = {
      {3, 3, 1, 1, 2, 4, Padding::same},
      {3, 3, 3, 1, 2, 4, Padding::same},  // disjoint-style stride
      {2, 2, 2, 2, 2, 3, Padding::valid},
  };
  Rng rng(mix_seed(seed, 0xc0));
  for (const ConvSpec& spec : specs) {
    Tensor input = random_tensor({5, 8, spec.in_channels}, rng);
    Tensor kernels = random_tensor(
        {spec.window_h, spec.window_w, spec.in_channels, spec.out_maps}, rng);
    Tensor bias = random_tensor({spec.out_maps}, rng);
    const auto [out, cache] = conv2d_forward(input, kernels, bias, spec);
    const Tensor cot = random_tensor(out.shape(), rng);

    const ConvGrads grads = backward(cot, kernels, cache);
    const auto scalar = [&] {
      return dot_all(conv2d_forward(input, kernels, bias, spec).first, cot);
    };
    worst = std::max(worst, fd_check(input, grads.input, scalar, h));
    worst = std::max(worst, fd_check(kernels, grads.kernels, scalar, h));
    worst = std::max(worst, fd_check(bias, grads.bias, scalar, h));
  }
  return worst;
}

double check_maxpool(std::uint64_t seed, double h) {
  double worst = 0.0;
  const PoolSpec specs[] = {{2, 2, 2, 2}, {2, 3, 1, 2}};  // tiling + overlap
  Rng rng(mix_seed(seed, 0x9001));
  for (const PoolSpec& spec : specs) {
    Tensor input = tie_free_tensor({6, 8, 3}, rng);
    const auto [out, cache] = maxpool_forward(input, spec);
    const Tensor cot = random_tensor(out.shape(), rng);
    const Tensor grad = maxpool_backward(cot, cache);
    const auto scalar = [&] {
      return dot_all(maxpool_forward(input, spec).first, cot);
    };
    worst = std::max(worst, fd_check(input, grad, scalar, h));
  }
  return worst;
}

double check_dense(std::uint64_t seed, double h) {
  Rng rng(mix_seed(seed, 0xde45e));
  Tensor input = random_tensor({20}, rng);
  Tensor weights = random_tensor({20, 10}, rng);
  Tensor bias = random_tensor({10}, rng);
  const auto [out, cache] = dense_forward(input, weights, bias);
  const Tensor cot = random_tensor(out.shape(), rng);
  const DenseGrads grads = dense_backward(cot, weights, cache);
  const auto scalar = [&] {
    return dot_all(dense_forward(input, weights, bias).first, cot);
  };
  double worst = fd_check(input, grads.input, scalar, h);
  worst = std::max(worst, fd_check(weights, grads.weights, scalar, h));
  worst = std::max(worst, fd_check(bias, grads.bias, scalar, h));
  return worst;
}

double check_relu(std::uint64_t seed, double h) {
  Rng rng(mix_seed(seed, 0x2e1));
  Tensor input({64});
  for (std::size_t i = 0; i < input.size(); ++i) {
    double v = rng.uniform(-1.0, 1.0);
    if (std::abs(v) < 0.01) v += v >= 0.0 ? 0.02 : -0.02;  // stay off the kink
    input[i] = v;
  }
  const auto [out, cache] = relu(input);
  Rng crng(mix_seed(seed, 0x2e2));
  const Tensor cot = random_tensor(out.shape(), crng);
  const Tensor grad = relu_backward(cot, cache);
  const auto scalar = [&] { return dot_all(relu(input).first, cot); };
  return fd_check(input, grad, scalar, h);
}

double check_dropout(std::uint64_t seed, double h) {
  Rng rng(mix_seed(seed, 0xd20));
  Tensor input = random_tensor({64}, rng);
  const double keep = 0.7;
  const std::uint64_t mask_seed = mix_seed(seed, 0xd21);
  const auto run = [&](const Tensor& x) {
    Rng mask_rng(mask_seed);  // same mask on every evaluation
    return dropout_apply(x, keep, mask_rng, /*training=*/true);
  };
  const auto [out, cache] = run(input);
  const Tensor cot = random_tensor(out.shape(), rng);
  const Tensor grad = dropout_backward(cot, cache);
  const auto scalar = [&] { return dot_all(run(input).first, cot); };
  return fd_check(input, grad, scalar, h);
}

double check_softmax(std::uint64_t seed, double h) {
  Rng rng(mix_seed(seed, 0x50f7));
  Tensor logits = random_tensor({10}, rng, -2.0, 2.0);
  const std::size_t label = 3;
  const SoftmaxLoss sl = softmax_cross_entropy(logits, label);
  return fd_check(
      logits, sl.grad_logits,
      [&] { return softmax_cross_entropy(logits, label).loss; }, h);
}

double check_full_model(std::uint64_t seed, double h) {
  Model model = build_model(tiny_model_config(seed));
  Rng rng(mix_seed(seed, 0xf0));
  InputImage img;
  img.layout = model.config.layout;
  img.data = random_tensor({9, 16, 1}, rng);
  img.meta.label = 1;

  Rng fwd_rng(0);
  ForwardCaches caches;
  const Tensor logits =
      forward(model, img, /*training=*/false, fwd_rng, &caches);
  const SoftmaxLoss sl = softmax_cross_entropy(logits, img.meta.label);
  const std::vector<Tensor> grads = backward(model, caches, sl.grad_logits);

  const auto loss = [&] {
    return softmax_cross_entropy(forward(model, img), img.meta.label).loss;
  };
  const std::vector<Tensor*> params = model.parameters();
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    worst = std::max(worst, fd_check(*params[p], grads[p], loss, h));
  }
  return worst;
}

}  // namespace

ModelConfig tiny_model_config(std::uint64_t seed) {
  ModelConfig c;
  c.layout = ImageLayout::rect;
  c.depth = 2;
  c.input_h = 9;
  c.input_w = 16;
  c.input_c = 1;
  c.conv_feature_maps = {2, 3};
  c.fc_widths = {8, 8};
  c.num_classes = 4;
  c.dropout_keep = 1.0;  // keeps the end-to-end loss deterministic
  c.seed = seed;
  c.geometry.resize(2);
  c.geometry[0].conv = ConvSpec{3, 3, 1, 1, 1, 2, Padding::same};
  c.geometry[0].pool = PoolSpec{3, 4, 3, 4};
  c.geometry[1].conv = ConvSpec{3, 3, 1, 1, 2, 3, Padding::same};
  c.geometry[1].pool = PoolSpec{1, 2, 1, 2};
  return c;
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed,
                                                const GradCheckOptions& opts) {
  const ConvBackwardFn conv_bwd =
      opts.conv_backward
          ? opts.conv_backward
          : [](const Tensor& g, const Tensor& k, const ConvCache& c) {
              return conv2d_backward(g, k, c);
            };
  const double h = opts.fd_step;

  std::vector<GradCheckResult> results;
  const auto add = [&](std::string name, double err, double tol) {
    results.push_back({std::move(name), err, tol, err < tol});
  };
  add("conv2d", check_conv(seed, h, conv_bwd), opts.layer_tol);
  add("maxpool", check_maxpool(seed, h), opts.layer_tol);
  add("dense", check_dense(seed, h), opts.layer_tol);
  add("relu", check_relu(seed, h), opts.layer_tol);
  add("dropout", check_dropout(seed, h), opts.layer_tol);
  add("softmax_xent", check_softmax(seed, h), opts.layer_tol);
  add("full_model", check_full_model(seed, h), opts.model_tol);
  return results;
}

}  // namespace repforge
