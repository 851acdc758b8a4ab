#include "repforge/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace repforge {

namespace {

void check_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected rank-3 tensor, got " +
                                shape_str(t.shape()));
  }
}

// Gathers conv input windows into a [out_h*out_w, win_h*win_w*C] matrix;
// out-of-bounds positions contribute zeros.
Tensor im2col(const Tensor& input, const ConvSpec& spec, const ConvDims& d) {
  const std::size_t in_h = input.extent(0), in_w = input.extent(1),
                    ch = input.extent(2);
  const std::size_t patch = spec.window_h * spec.window_w * ch;
  Tensor cols({d.out_h * d.out_w, patch});
  const double* src = input.data();
  double* dst = cols.data();
  for (std::size_t oy = 0; oy < d.out_h; ++oy) {
    for (std::size_t ox = 0; ox < d.out_w; ++ox) {
      double* row = dst + (oy * d.out_w + ox) * patch;
      const std::ptrdiff_t base_y =
          static_cast<std::ptrdiff_t>(oy * spec.stride_y) -
          static_cast<std::ptrdiff_t>(d.pad_top);
      const std::ptrdiff_t base_x =
          static_cast<std::ptrdiff_t>(ox * spec.stride_x) -
          static_cast<std::ptrdiff_t>(d.pad_left);
      for (std::size_t dy = 0; dy < spec.window_h; ++dy) {
        const std::ptrdiff_t y = base_y + static_cast<std::ptrdiff_t>(dy);
        double* prow = row + dy * spec.window_w * ch;
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(in_h)) continue;  // zeros
        for (std::size_t dx = 0; dx < spec.window_w; ++dx) {
          const std::ptrdiff_t x = base_x + static_cast<std::ptrdiff_t>(dx);
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(in_w)) continue;
          const double* cell = src + (static_cast<std::size_t>(y) * in_w +
                                      static_cast<std::size_t>(x)) * ch;
          double* pcell = prow + dx * ch;
          for (std::size_t c = 0; c < ch; ++c) pcell[c] = cell[c];
        }
      }
    }
  }
  return cols;
}

// Scatters a gradient over the cols matrix back onto the input plane,
// accumulating where windows overlap.
Tensor col2im(const Tensor& grad_cols, const ConvSpec& spec, const ConvDims& d,
              std::size_t in_h, std::size_t in_w) {
  const std::size_t ch = spec.in_channels;
  Tensor grad_input({in_h, in_w, ch});
  double* dst = grad_input.data();
  const double* src = grad_cols.data();
  const std::size_t patch = spec.window_h * spec.window_w * ch;
  for (std::size_t oy = 0; oy < d.out_h; ++oy) {
    for (std::size_t ox = 0; ox < d.out_w; ++ox) {
      const double* row = src + (oy * d.out_w + ox) * patch;
      const std::ptrdiff_t base_y =
          static_cast<std::ptrdiff_t>(oy * spec.stride_y) -
          static_cast<std::ptrdiff_t>(d.pad_top);
      const std::ptrdiff_t base_x =
          static_cast<std::ptrdiff_t>(ox * spec.stride_x) -
          static_cast<std::ptrdiff_t>(d.pad_left);
      for (std::size_t dy = 0; dy < spec.window_h; ++dy) {
        const std::ptrdiff_t y = base_y + static_cast<std::ptrdiff_t>(dy);
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(in_h)) continue;
        const double* prow = row + dy * spec.window_w * ch;
        for (std::size_t dx = 0; dx < spec.window_w; ++dx) {
          const std::ptrdiff_t x = base_x + static_cast<std::ptrdiff_t>(dx);
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(in_w)) continue;
          double* cell = dst + (static_cast<std::size_t>(y) * in_w +
                                static_cast<std::size_t>(x)) * ch;
          const double* pcell = prow + dx * ch;
          for (std::size_t c = 0; c < ch; ++c) cell[c] += pcell[c];
        }
      }
    }
  }
  return grad_input;
}

}  // namespace

ConvDims conv_output_dims(std::size_t in_h, std::size_t in_w,
                          const ConvSpec& spec) {
  if (spec.window_h == 0 || spec.window_w == 0 || spec.stride_y == 0 ||
      spec.stride_x == 0) {
    throw std::invalid_argument("conv spec: window and stride must be >= 1");
  }
  ConvDims d;
  if (spec.padding == Padding::same) {
    d.out_h = (in_h + spec.stride_y - 1) / spec.stride_y;
    d.out_w = (in_w + spec.stride_x - 1) / spec.stride_x;
    const std::size_t span_h = (d.out_h - 1) * spec.stride_y + spec.window_h;
    const std::size_t span_w = (d.out_w - 1) * spec.stride_x + spec.window_w;
    const std::size_t pad_h = span_h > in_h ? span_h - in_h : 0;
    const std::size_t pad_w = span_w > in_w ? span_w - in_w : 0;
    d.pad_top = pad_h / 2;   // extra padding goes to the bottom
    d.pad_left = pad_w / 2;  // and to the right
  } else {
    if (in_h < spec.window_h || in_w < spec.window_w) {
      throw std::invalid_argument(
          "valid conv: window " + std::to_string(spec.window_h) + "x" +
          std::to_string(spec.window_w) + " exceeds input " +
          std::to_string(in_h) + "x" + std::to_string(in_w));
    }
    d.out_h = (in_h - spec.window_h) / spec.stride_y + 1;
    d.out_w = (in_w - spec.window_w) / spec.stride_x + 1;
  }
  return d;
}

std::pair<Tensor, ConvCache> conv2d_forward(const Tensor& input,
                                            const Tensor& kernels,
                                            const Tensor& bias,
                                            const ConvSpec& spec) {
  check_rank3(input, "conv2d");
  if (kernels.rank() != 4 || kernels.extent(0) != spec.window_h ||
      kernels.extent(1) != spec.window_w ||
      kernels.extent(2) != spec.in_channels ||
      kernels.extent(3) != spec.out_maps) {
    throw std::invalid_argument("conv2d: kernels " + shape_str(kernels.shape()) +
                                " do not match spec window/channels/maps");
  }
  if (input.extent(2) != spec.in_channels) {
    throw std::invalid_argument(
        "conv2d: input " + shape_str(input.shape()) + " has " +
        std::to_string(input.extent(2)) + " channels, spec expects " +
        std::to_string(spec.in_channels));
  }
  if (bias.rank() != 1 || bias.extent(0) != spec.out_maps) {
    throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) +
                                " does not match out_maps " +
                                std::to_string(spec.out_maps));
  }

  ConvCache cache;
  cache.spec = spec;
  cache.in_h = input.extent(0);
  cache.in_w = input.extent(1);
  cache.dims = conv_output_dims(cache.in_h, cache.in_w, spec);
  cache.cols = im2col(input, spec, cache.dims);

  const std::size_t rows = cache.dims.out_h * cache.dims.out_w;
  const std::size_t patch = spec.window_h * spec.window_w * spec.in_channels;
  Tensor out({cache.dims.out_h, cache.dims.out_w, spec.out_maps});
  detail::mm_nn(cache.cols.data(), kernels.data(), out.data(), rows, patch,
                spec.out_maps);
  double* o = out.data();
  const double* b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < spec.out_maps; ++f) o[r * spec.out_maps + f] += b[f];
  }
  return {std::move(out), std::move(cache)};
}

void conv2d_backward_acc(const Tensor& grad_out, const Tensor& kernels,
                         const ConvCache& cache, Tensor& grad_kernels_acc,
                         Tensor& grad_bias_acc, Tensor* grad_input) {
  const ConvSpec& spec = cache.spec;
  if (grad_out.rank() != 3 || grad_out.extent(0) != cache.dims.out_h ||
      grad_out.extent(1) != cache.dims.out_w ||
      grad_out.extent(2) != spec.out_maps) {
    throw std::invalid_argument("conv2d_backward: grad " +
                                shape_str(grad_out.shape()) +
                                " does not match cached output shape");
  }
  if (!grad_kernels_acc.same_shape(kernels) ||
      grad_bias_acc.size() != spec.out_maps) {
    throw std::invalid_argument(
        "conv2d_backward: accumulator shapes do not match the layer");
  }
  const std::size_t rows = cache.dims.out_h * cache.dims.out_w;
  const std::size_t patch = spec.window_h * spec.window_w * spec.in_channels;

  const double* go = grad_out.data();
  double* gb = grad_bias_acc.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < spec.out_maps; ++f) gb[f] += go[r * spec.out_maps + f];
  }

  detail::mm_tn_acc(cache.cols.data(), grad_out.data(),
                    grad_kernels_acc.data(), rows, patch, spec.out_maps);

  if (grad_input) {
    Tensor grad_cols({rows, patch});
    detail::mm_nt(grad_out.data(), kernels.data(), grad_cols.data(), rows,
                  spec.out_maps, patch);
    *grad_input = col2im(grad_cols, spec, cache.dims, cache.in_h, cache.in_w);
  }
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& kernels,
                          const ConvCache& cache, bool want_input_grad) {
  const ConvSpec& spec = cache.spec;
  ConvGrads g;
  g.kernels = Tensor(kernels.shape());
  g.bias = Tensor({spec.out_maps});
  conv2d_backward_acc(grad_out, kernels, cache, g.kernels, g.bias,
                      want_input_grad ? &g.input : nullptr);
  return g;
}

std::pair<Tensor, PoolCache> maxpool_forward(const Tensor& input,
                                             const PoolSpec& spec) {
  check_rank3(input, "maxpool");
  const std::size_t in_h = input.extent(0), in_w = input.extent(1),
                    ch = input.extent(2);
  if (spec.window_h == 0 || spec.window_w == 0 || spec.stride_y == 0 ||
      spec.stride_x == 0) {
    throw std::invalid_argument("maxpool: window and stride must be >= 1");
  }
  if (in_h < spec.window_h || in_w < spec.window_w) {
    throw std::invalid_argument(
        "maxpool: window " + std::to_string(spec.window_h) + "x" +
        std::to_string(spec.window_w) + " exceeds input " +
        std::to_string(in_h) + "x" + std::to_string(in_w));
  }

  PoolCache cache;
  cache.spec = spec;
  cache.in_h = in_h;
  cache.in_w = in_w;
  cache.channels = ch;
  cache.out_h = (in_h - spec.window_h) / spec.stride_y + 1;
  cache.out_w = (in_w - spec.window_w) / spec.stride_x + 1;
  cache.argmax.resize(cache.out_h * cache.out_w * ch);

  Tensor out({cache.out_h, cache.out_w, ch});
  const double* src = input.data();
  double* dst = out.data();
  for (std::size_t oy = 0; oy < cache.out_h; ++oy) {
    for (std::size_t ox = 0; ox < cache.out_w; ++ox) {
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t y0 = oy * spec.stride_y, x0 = ox * spec.stride_x;
        std::size_t best_idx = (y0 * in_w + x0) * ch + c;
        double best = src[best_idx];
        for (std::size_t dy = 0; dy < spec.window_h; ++dy) {
          for (std::size_t dx = 0; dx < spec.window_w; ++dx) {
            const std::size_t idx = ((y0 + dy) * in_w + (x0 + dx)) * ch + c;
            if (src[idx] > best) {  // strict: ties keep the smallest index
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (oy * cache.out_w + ox) * ch + c;
        dst[o] = best;
        cache.argmax[o] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

Tensor maxpool_backward(const Tensor& grad_out, const PoolCache& cache) {
  if (grad_out.rank() != 3 || grad_out.extent(0) != cache.out_h ||
      grad_out.extent(1) != cache.out_w ||
      grad_out.extent(2) != cache.channels) {
    throw std::invalid_argument("maxpool_backward: grad " +
                                shape_str(grad_out.shape()) +
                                " does not match cached output shape");
  }
  Tensor grad_input({cache.in_h, cache.in_w, cache.channels});
  const double* go = grad_out.data();
  double* gi = grad_input.data();
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) {
    gi[cache.argmax[o]] += go[o];
  }
  return grad_input;
}

std::pair<Tensor, DenseCache> dense_forward(const Tensor& input,
                                            const Tensor& weights,
                                            const Tensor& bias) {
  if (input.rank() != 1 || weights.rank() != 2 ||
      weights.extent(0) != input.extent(0)) {
    throw std::invalid_argument("dense: input " + shape_str(input.shape()) +
                                " incompatible with weights " +
                                shape_str(weights.shape()));
  }
  const std::size_t n = weights.extent(0), m = weights.extent(1);
  if (bias.rank() != 1 || bias.extent(0) != m) {
    throw std::invalid_argument("dense: bias " + shape_str(bias.shape()) +
                                " does not match output width " +
                                std::to_string(m));
  }
  Tensor out({m});
  detail::mm_nn(input.data(), weights.data(), out.data(), 1, n, m);
  double* o = out.data();
  const double* b = bias.data();
  for (std::size_t j = 0; j < m; ++j) o[j] += b[j];
  return {std::move(out), DenseCache{input}};
}

void dense_backward_acc(const Tensor& grad_out, const Tensor& weights,
                        const DenseCache& cache, Tensor& grad_weights_acc,
                        Tensor& grad_bias_acc, Tensor& grad_input) {
  const std::size_t n = weights.extent(0), m = weights.extent(1);
  if (grad_out.rank() != 1 || grad_out.extent(0) != m) {
    throw std::invalid_argument("dense_backward: grad " +
                                shape_str(grad_out.shape()) +
                                " does not match weights " +
                                shape_str(weights.shape()));
  }
  if (cache.input.size() != n) {
    throw std::invalid_argument("dense_backward: cache does not match weights");
  }
  if (!grad_weights_acc.same_shape(weights) || grad_bias_acc.size() != m) {
    throw std::invalid_argument(
        "dense_backward: accumulator shapes do not match the layer");
  }
  const double* go = grad_out.data();
  double* gb = grad_bias_acc.data();
  for (std::size_t j = 0; j < m; ++j) gb[j] += go[j];

  grad_input = Tensor({n});
  detail::mm_nt(weights.data(), grad_out.data(), grad_input.data(), n, m, 1);

  // outer product input x grad_out, accumulated
  double* gw = grad_weights_acc.data();
  const double* in = cache.input.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = in[i];
    double* row = gw + i * m;
    for (std::size_t j = 0; j < m; ++j) row[j] += v * go[j];
  }
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& weights,
                          const DenseCache& cache) {
  DenseGrads g;
  g.weights = Tensor(weights.shape());
  g.bias = Tensor({weights.extent(1)});
  dense_backward_acc(grad_out, weights, cache, g.weights, g.bias, g.input);
  return g;
}

std::pair<Tensor, ReluCache> relu(const Tensor& input) {
  Tensor out(input.shape());
  const double* src = input.data();
  double* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return {std::move(out), ReluCache{input}};
}

Tensor relu_backward(const Tensor& grad_out, const ReluCache& cache) {
  if (!grad_out.same_shape(cache.input)) {
    throw std::invalid_argument("relu_backward: grad " +
                                shape_str(grad_out.shape()) +
                                " does not match cached input " +
                                shape_str(cache.input.shape()));
  }
  Tensor grad_input(grad_out.shape());
  const double* go = grad_out.data();
  const double* in = cache.input.data();
  double* gi = grad_input.data();
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    gi[i] = in[i] > 0.0 ? go[i] : 0.0;
  }
  return grad_input;
}

std::pair<Tensor, DropoutCache> dropout_apply(const Tensor& input,
                                              double keep_prob, Rng& rng,
                                              bool training) {
  if (!(keep_prob > 0.0) || keep_prob > 1.0) {
    throw std::invalid_argument("dropout: keep_prob must be in (0, 1], got " +
                                std::to_string(keep_prob));
  }
  if (!training) {
    return {input, DropoutCache{}};
  }
  DropoutCache cache;
  cache.identity = false;
  cache.mask = Tensor(input.shape());
  Tensor out(input.shape());
  const double scale = 1.0 / keep_prob;
  const double* src = input.data();
  double* msk = cache.mask.data();
  double* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double m = rng.uniform() < keep_prob ? scale : 0.0;
    msk[i] = m;
    dst[i] = src[i] * m;
  }
  return {std::move(out), std::move(cache)};
}

Tensor dropout_backward(const Tensor& grad_out, const DropoutCache& cache) {
  if (cache.identity) return grad_out;
  if (!grad_out.same_shape(cache.mask)) {
    throw std::invalid_argument("dropout_backward: grad " +
                                shape_str(grad_out.shape()) +
                                " does not match cached mask " +
                                shape_str(cache.mask.shape()));
  }
  Tensor grad_input(grad_out.shape());
  const double* go = grad_out.data();
  const double* msk = cache.mask.data();
  double* gi = grad_input.data();
  for (std::size_t i = 0; i < grad_out.size(); ++i) gi[i] = go[i] * msk[i];
  return grad_input;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("softmax: expected rank-1 logits, got " +
                                shape_str(logits.shape()));
  }
  const std::size_t k = logits.size();
  const double* x = logits.data();
  double mx = x[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
  Tensor probs({k});
  double* p = probs.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p[i] = std::exp(x[i] - mx);
    sum += p[i];
  }
  for (std::size_t i = 0; i < k; ++i) p[i] /= sum;
  return probs;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("softmax_cross_entropy: expected rank-1 logits");
  }
  const std::size_t k = logits.size();
  if (label >= k) {
    throw std::invalid_argument("softmax_cross_entropy: label " +
                                std::to_string(label) + " out of range for " +
                                std::to_string(k) + " classes");
  }
  const double* x = logits.data();
  double mx = x[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += std::exp(x[i] - mx);

  SoftmaxLoss r;
  r.probs = Tensor({k});
  double* p = r.probs.data();
  for (std::size_t i = 0; i < k; ++i) p[i] = std::exp(x[i] - mx) / sum;
  // log-space form stays finite even when probs[label] underflows
  r.loss = std::log(sum) - (x[label] - mx);
  r.grad_logits = r.probs;
  r.grad_logits[label] -= 1.0;
  return r;
}

}  // namespace repforge
