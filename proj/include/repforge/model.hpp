#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "repforge/imaging.hpp"
#include "repforge/layers.hpp"
#include "repforge/rng.hpp"
#include "repforge/tensor.hpp"

namespace repforge {

struct LayerGeometry {
  ConvSpec conv;
  PoolSpec pool;
};

struct ModelConfig {
  ImageLayout layout = ImageLayout::channels;
  bool disjoint_conv1 = false;  // rect layout only: conv1 stride [3,1]
  int depth = 2;                // number of conv blocks, 2..4
  std::vector<std::size_t> conv_feature_maps;  // one per block
  std::pair<std::size_t, std::size_t> fc_widths{1024, 1024};
  std::size_t num_classes = 50;
  double dropout_keep = 0.5;
  bool dropout_on_conv = false;
  std::uint64_t seed = 0;
  std::vector<LayerGeometry> geometry;  // one per block
  // Input plane override for shrunken test models; 0 = use layout_dims().
  std::size_t input_h = 0, input_w = 0, input_c = 0;

  // Paper geometry for layers 1-2 per layout, 3x3/s1/same conv + 1x4/s[1,4]
  // pool for layers 3-4, feature maps 32-64-128-256, FC (1024,1024) at depth
  // 2-3 and (2048,1024) at depth 4.
  static ModelConfig standard(ImageLayout layout, bool disjoint_conv1,
                              int depth, std::size_t num_classes = 50,
                              std::uint64_t seed = 0);
};

std::string serialize_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

struct ConvBlock {
  ConvSpec spec;
  PoolSpec pool;
  Tensor kernels;  // [h, w, C, F]
  Tensor bias;     // [F]
};

struct DenseLayer {
  Tensor weights;  // [in, out]
  Tensor bias;     // [out]
};

struct StageShape {
  std::string name;  // "input", "conv1", "pool1", ...
  std::size_t h = 0, w = 0, c = 0;
};

struct Model {
  ModelConfig config;
  std::vector<ConvBlock> blocks;
  std::vector<DenseLayer> dense;  // fc1, fc2, output
  std::vector<StageShape> stages;  // geometry trace filled by build_model

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
};

// Instantiates the architecture and validates every intermediate shape;
// infeasible geometry (a pool window larger than its input) raises naming the
// offending layer. Kernels and weights come from a seeded truncated normal
// (sigma 0.1, cut at 2 sigma), biases start at 0.1.
Model build_model(const ModelConfig& config);

struct ForwardCaches {
  std::vector<ConvCache> conv;
  std::vector<ReluCache> conv_relu;
  std::vector<PoolCache> pool;
  std::vector<DropoutCache> conv_drop;  // only when dropout_on_conv
  Shape flatten_from;
  DenseCache fc1, fc2, out;
  ReluCache relu1, relu2;
  DropoutCache drop1, drop2;
};

// Logits for one image. Training mode draws dropout masks from rng; inference
// never touches it.
Tensor forward(const Model& model, const InputImage& image, bool training,
               Rng& rng, ForwardCaches* caches = nullptr);
Tensor forward(const Model& model, const InputImage& image);  // inference

// Adjoint of forward; returns gradients aligned with parameters().
std::vector<Tensor> backward(const Model& model, const ForwardCaches& caches,
                             const Tensor& grad_logits);

// Same adjoint, accumulated into an existing gradient list (the minibatch
// loop sums many items into one buffer without intermediate copies).
void backward_acc(const Model& model, const ForwardCaches& caches,
                  const Tensor& grad_logits, std::vector<Tensor>& grad_acc);

struct Prediction {
  std::size_t cls = 0;
  Tensor probs;
};

// argmax of softmax(logits); ties break toward the smallest class index.
Prediction predict_from_logits(const Tensor& logits);
Prediction predict_rep(const Model& model, const InputImage& image);

}  // namespace repforge
