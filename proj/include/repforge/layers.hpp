#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "repforge/rng.hpp"
#include "repforge/tensor.hpp"

namespace repforge {

enum class Padding { same, valid };

struct ConvSpec {
  std::size_t window_h = 3, window_w = 3;
  std::size_t stride_y = 1, stride_x = 1;
  std::size_t in_channels = 1, out_maps = 1;
  Padding padding = Padding::same;
};

// Resolved output geometry of a convolution over an in_h x in_w plane.
// same: out = ceil(in / stride), total padding max((out-1)*stride + win - in, 0)
//       split floor-half on top/left, remainder on bottom/right.
// valid: out = floor((in - win) / stride) + 1, requires in >= win.
struct ConvDims {
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;
};
ConvDims conv_output_dims(std::size_t in_h, std::size_t in_w,
                          const ConvSpec& spec);

struct ConvCache {
  ConvSpec spec;
  std::size_t in_h = 0, in_w = 0;
  ConvDims dims;
  Tensor cols;  // im2col matrix [out_h*out_w, win_h*win_w*in_channels]
};

// Cross-correlation (no kernel flip) of input [H,W,C] with kernels [h,w,C,F]
// and bias [F]; zero padding per spec.padding.
std::pair<Tensor, ConvCache> conv2d_forward(const Tensor& input,
                                            const Tensor& kernels,
                                            const Tensor& bias,
                                            const ConvSpec& spec);

struct ConvGrads {
  Tensor input, kernels, bias;
};
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& kernels,
                          const ConvCache& cache, bool want_input_grad = true);

// Accumulating flavor used by the minibatch loop: kernel/bias gradients are
// added into the given buffers instead of materializing a fresh list per
// item. grad_input may be null when the upstream gradient is not needed.
void conv2d_backward_acc(const Tensor& grad_out, const Tensor& kernels,
                         const ConvCache& cache, Tensor& grad_kernels_acc,
                         Tensor& grad_bias_acc, Tensor* grad_input);

struct PoolSpec {
  std::size_t window_h = 2, window_w = 2;
  std::size_t stride_y = 2, stride_x = 2;
};

struct PoolCache {
  PoolSpec spec;
  std::size_t in_h = 0, in_w = 0, channels = 0;
  std::size_t out_h = 0, out_w = 0;
  std::vector<std::uint32_t> argmax;  // flat input index per output cell
};

// Valid (no padding) max pooling over input [H,W,F]; ties go to the smallest
// flat input index.
std::pair<Tensor, PoolCache> maxpool_forward(const Tensor& input,
                                             const PoolSpec& spec);
Tensor maxpool_backward(const Tensor& grad_out, const PoolCache& cache);

struct DenseCache {
  Tensor input;
};

// output[j] = sum_i input[i] * weights[i][j] + bias[j]
std::pair<Tensor, DenseCache> dense_forward(const Tensor& input,
                                            const Tensor& weights,
                                            const Tensor& bias);
struct DenseGrads {
  Tensor input, weights, bias;
};
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& weights,
                          const DenseCache& cache);
void dense_backward_acc(const Tensor& grad_out, const Tensor& weights,
                        const DenseCache& cache, Tensor& grad_weights_acc,
                        Tensor& grad_bias_acc, Tensor& grad_input);

struct ReluCache {
  Tensor input;
};
std::pair<Tensor, ReluCache> relu(const Tensor& input);
// Passes gradient where input > 0; subgradient 0 at exactly 0.
Tensor relu_backward(const Tensor& grad_out, const ReluCache& cache);

struct DropoutCache {
  bool identity = true;        // inference mode or keep_prob handling skipped
  Tensor mask;                 // entries in {0, 1/keep_prob} when !identity
};

// Inverted dropout: in training mode each element is zeroed with probability
// 1 - keep_prob and survivors are scaled by 1/keep_prob; inference is the
// identity.
std::pair<Tensor, DropoutCache> dropout_apply(const Tensor& input,
                                              double keep_prob, Rng& rng,
                                              bool training);
Tensor dropout_backward(const Tensor& grad_out, const DropoutCache& cache);

// Max-shifted softmax over a rank-1 logits vector.
Tensor softmax(const Tensor& logits);

struct SoftmaxLoss {
  double loss = 0.0;
  Tensor probs;
  Tensor grad_logits;  // probs - one_hot(label)
};
SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace repforge
