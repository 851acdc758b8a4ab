#include "repforge/model.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace repforge {

namespace {

constexpr std::uint64_t kInitStream = 0x1317;
constexpr double kInitSigma = 0.1;
constexpr double kInitBias = 0.1;

std::vector<std::size_t> default_feature_maps(int depth) {
  const std::vector<std::size_t> all{32, 64, 128, 256};
  return {all.begin(), all.begin() + depth};
}

LayerGeometry block12_geometry(ImageLayout layout, bool disjoint, int index) {
  LayerGeometry g;
  g.conv.window_h = 3;
  g.conv.window_w = 3;
  g.conv.padding = Padding::same;
  switch (layout) {
    case ImageLayout::square84:
      g.pool = (index == 0) ? PoolSpec{3, 3, 3, 3} : PoolSpec{2, 2, 2, 2};
      break;
    case ImageLayout::rect:
      if (index == 0 && disjoint) {
        g.conv.stride_y = 3;  // windows never straddle two feature groups
        g.pool = PoolSpec{1, 4, 1, 4};
      } else if (index == 0) {
        g.pool = PoolSpec{3, 4, 3, 4};
      } else {
        g.pool = PoolSpec{1, 4, 1, 4};
      }
      break;
    case ImageLayout::channels:
      g.pool = PoolSpec{2, 4, 1, 4};
      break;
  }
  return g;
}

std::string dims_str(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ModelConfig ModelConfig::standard(ImageLayout layout, bool disjoint_conv1,
                                  int depth, std::size_t num_classes,
                                  std::uint64_t seed) {
  if (depth < 2 || depth > 4) {
    throw std::invalid_argument("model depth must be 2..4, got " +
                                std::to_string(depth));
  }
  ModelConfig c;
  c.layout = layout;
  c.disjoint_conv1 = disjoint_conv1 && layout == ImageLayout::rect;
  c.depth = depth;
  c.conv_feature_maps = default_feature_maps(depth);
  c.fc_widths = depth == 4 ? std::pair<std::size_t, std::size_t>{2048, 1024}
                           : std::pair<std::size_t, std::size_t>{1024, 1024};
  c.num_classes = num_classes;
  c.seed = seed;

  c.geometry.resize(depth);
  c.geometry[0] = block12_geometry(layout, c.disjoint_conv1, 0);
  c.geometry[1] = block12_geometry(layout, c.disjoint_conv1, 1);
  for (int i = 2; i < depth; ++i) {
    LayerGeometry g;
    g.conv.padding = Padding::same;
    g.pool = PoolSpec{1, 4, 1, 4};  // keep downsampling the time axis
    c.geometry[i] = g;
  }

  const LayoutDims in = layout_dims(layout);
  std::size_t channels = in.c;
  for (int i = 0; i < depth; ++i) {
    c.geometry[i].conv.in_channels = channels;
    c.geometry[i].conv.out_maps = c.conv_feature_maps[i];
    channels = c.conv_feature_maps[i];
  }
  return c;
}

Model build_model(const ModelConfig& config) {
  if (config.depth < 2 || config.depth > 4) {
    throw std::invalid_argument("model depth must be 2..4");
  }
  if (config.conv_feature_maps.size() != static_cast<std::size_t>(config.depth) ||
      config.geometry.size() != static_cast<std::size_t>(config.depth)) {
    throw std::invalid_argument(
        "model config: feature map and geometry lists must have one entry per "
        "conv layer");
  }
  if (!(config.dropout_keep > 0.0) || config.dropout_keep > 1.0) {
    throw std::invalid_argument("model config: dropout_keep must be in (0, 1]");
  }

  Model model;
  model.config = config;
  Rng rng(mix_seed(config.seed, kInitStream));

  LayoutDims in = layout_dims(config.layout);
  if (config.input_h && config.input_w && config.input_c) {
    in = {config.input_h, config.input_w, config.input_c};
  }
  model.stages.push_back({"input", in.h, in.w, in.c});
  std::size_t h = in.h, w = in.w, ch = in.c;

  for (int i = 0; i < config.depth; ++i) {
    const LayerGeometry& geo = config.geometry[i];
    const std::string conv_name = "conv" + std::to_string(i + 1);
    const std::string pool_name = "pool" + std::to_string(i + 1);
    if (geo.conv.in_channels != ch) {
      throw std::invalid_argument(conv_name + ": expects " +
                                  std::to_string(geo.conv.in_channels) +
                                  " input channels, pipeline provides " +
                                  std::to_string(ch));
    }
    ConvDims cd;
    try {
      cd = conv_output_dims(h, w, geo.conv);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(conv_name + ": " + e.what());
    }
    h = cd.out_h;
    w = cd.out_w;
    ch = geo.conv.out_maps;
    model.stages.push_back({conv_name, h, w, ch});

    if (h < geo.pool.window_h || w < geo.pool.window_w) {
      throw std::invalid_argument(
          pool_name + ": window " + dims_str(geo.pool.window_h, geo.pool.window_w) +
          " exceeds input " + dims_str(h, w));
    }
    h = (h - geo.pool.window_h) / geo.pool.stride_y + 1;
    w = (w - geo.pool.window_w) / geo.pool.stride_x + 1;
    model.stages.push_back({pool_name, h, w, ch});

    ConvBlock block;
    block.spec = geo.conv;
    block.pool = geo.pool;
    block.kernels = Tensor({geo.conv.window_h, geo.conv.window_w,
                            geo.conv.in_channels, geo.conv.out_maps});
    for (std::size_t j = 0; j < block.kernels.size(); ++j) {
      block.kernels[j] = rng.truncated_normal(kInitSigma);
    }
    block.bias = Tensor::full({geo.conv.out_maps}, kInitBias);
    model.blocks.push_back(std::move(block));
  }

  const std::size_t flat = h * w * ch;
  const std::size_t widths[3] = {config.fc_widths.first, config.fc_widths.second,
                                 config.num_classes};
  std::size_t fan_in = flat;
  for (std::size_t l = 0; l < 3; ++l) {
    DenseLayer layer;
    layer.weights = Tensor({fan_in, widths[l]});
    for (std::size_t j = 0; j < layer.weights.size(); ++j) {
      layer.weights[j] = rng.truncated_normal(kInitSigma);
    }
    layer.bias = Tensor::full({widths[l]}, kInitBias);
    model.dense.push_back(std::move(layer));
    fan_in = widths[l];
  }
  return model;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& b : blocks) {
    out.push_back(&b.kernels);
    out.push_back(&b.bias);
  }
  for (auto& d : dense) {
    out.push_back(&d.weights);
    out.push_back(&d.bias);
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> out;
  for (auto& b : blocks) {
    out.push_back(&b.kernels);
    out.push_back(&b.bias);
  }
  for (auto& d : dense) {
    out.push_back(&d.weights);
    out.push_back(&d.bias);
  }
  return out;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out.push_back("conv" + std::to_string(i + 1) + ".kernels");
    out.push_back("conv" + std::to_string(i + 1) + ".bias");
  }
  const char* fc_names[3] = {"fc1", "fc2", "out"};
  for (std::size_t i = 0; i < dense.size(); ++i) {
    out.push_back(std::string(fc_names[i]) + ".weights");
    out.push_back(std::string(fc_names[i]) + ".bias");
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

Tensor forward(const Model& model, const InputImage& image, bool training,
               Rng& rng, ForwardCaches* caches) {
  if (image.layout != model.config.layout) {
    throw std::invalid_argument(std::string("forward: image layout ") +
                                layout_name(image.layout) +
                                " does not match model layout " +
                                layout_name(model.config.layout));
  }
  const StageShape& in = model.stages.front();
  if (image.data.rank() != 3 || image.data.extent(0) != in.h ||
      image.data.extent(1) != in.w || image.data.extent(2) != in.c) {
    throw std::invalid_argument("forward: image " + shape_str(image.data.shape()) +
                                " does not match model input " +
                                std::to_string(in.h) + "x" + std::to_string(in.w) +
                                "x" + std::to_string(in.c));
  }
  ForwardCaches local;
  ForwardCaches& cc = caches ? *caches : local;
  cc = ForwardCaches{};

  Tensor x = image.data;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const ConvBlock& b = model.blocks[i];
    auto [conv_out, conv_cache] = conv2d_forward(x, b.kernels, b.bias, b.spec);
    cc.conv.push_back(std::move(conv_cache));
    auto [act, relu_cache] = relu(conv_out);
    cc.conv_relu.push_back(std::move(relu_cache));
    auto [pooled, pool_cache] = maxpool_forward(act, b.pool);
    cc.pool.push_back(std::move(pool_cache));
    if (model.config.dropout_on_conv) {
      auto [dropped, drop_cache] =
          dropout_apply(pooled, model.config.dropout_keep, rng, training);
      cc.conv_drop.push_back(std::move(drop_cache));
      x = std::move(dropped);
    } else {
      x = std::move(pooled);
    }
  }

  cc.flatten_from = x.shape();
  Tensor flat = x.reshape({x.size()});

  auto [h1, c1] = dense_forward(flat, model.dense[0].weights, model.dense[0].bias);
  cc.fc1 = std::move(c1);
  auto [a1, r1] = relu(h1);
  cc.relu1 = std::move(r1);
  auto [d1, dc1] = dropout_apply(a1, model.config.dropout_keep, rng, training);
  cc.drop1 = std::move(dc1);

  auto [h2, c2] = dense_forward(d1, model.dense[1].weights, model.dense[1].bias);
  cc.fc2 = std::move(c2);
  auto [a2, r2] = relu(h2);
  cc.relu2 = std::move(r2);
  auto [d2, dc2] = dropout_apply(a2, model.config.dropout_keep, rng, training);
  cc.drop2 = std::move(dc2);

  auto [logits, c3] = dense_forward(d2, model.dense[2].weights, model.dense[2].bias);
  cc.out = std::move(c3);
  return std::move(logits);
}

Tensor forward(const Model& model, const InputImage& image) {
  Rng unused(0);
  return forward(model, image, /*training=*/false, unused, nullptr);
}

void backward_acc(const Model& model, const ForwardCaches& caches,
                  const Tensor& grad_logits, std::vector<Tensor>& grad_acc) {
  if (caches.conv.size() != model.blocks.size()) {
    throw std::invalid_argument("backward: caches do not match model depth");
  }
  if (grad_logits.rank() != 1 ||
      grad_logits.extent(0) != model.config.num_classes) {
    throw std::invalid_argument("backward: grad_logits " +
                                shape_str(grad_logits.shape()) +
                                " does not match num_classes " +
                                std::to_string(model.config.num_classes));
  }
  if (grad_acc.size() != model.blocks.size() * 2 + model.dense.size() * 2) {
    throw std::invalid_argument("backward: gradient list does not match model");
  }
  const std::size_t dense_base = model.blocks.size() * 2;

  Tensor g;
  dense_backward_acc(grad_logits, model.dense[2].weights, caches.out,
                     grad_acc[dense_base + 4], grad_acc[dense_base + 5], g);

  g = dropout_backward(g, caches.drop2);
  g = relu_backward(g, caches.relu2);
  Tensor g_fc1;
  dense_backward_acc(g, model.dense[1].weights, caches.fc2,
                     grad_acc[dense_base + 2], grad_acc[dense_base + 3], g_fc1);

  g = dropout_backward(g_fc1, caches.drop1);
  g = relu_backward(g, caches.relu1);
  Tensor g_flat;
  dense_backward_acc(g, model.dense[0].weights, caches.fc1,
                     grad_acc[dense_base + 0], grad_acc[dense_base + 1], g_flat);

  g = g_flat.reshape(caches.flatten_from);
  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    if (model.config.dropout_on_conv) {
      g = dropout_backward(g, caches.conv_drop[i]);
    }
    g = maxpool_backward(g, caches.pool[i]);
    g = relu_backward(g, caches.conv_relu[i]);
    Tensor g_in;
    conv2d_backward_acc(g, model.blocks[i].kernels, caches.conv[i],
                        grad_acc[i * 2 + 0], grad_acc[i * 2 + 1],
                        i > 0 ? &g_in : nullptr);
    if (i > 0) g = std::move(g_in);
  }
}

std::vector<Tensor> backward(const Model& model, const ForwardCaches& caches,
                             const Tensor& grad_logits) {
  std::vector<Tensor> grads;
  const std::vector<const Tensor*> params =
      const_cast<const Model&>(model).parameters();
  grads.reserve(params.size());
  for (const Tensor* p : params) grads.emplace_back(p->shape());
  backward_acc(model, caches, grad_logits, grads);
  return grads;
}

Prediction predict_from_logits(const Tensor& logits) {
  Prediction p;
  p.probs = softmax(logits);
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.probs.size(); ++i) {
    if (p.probs[i] > p.probs[best]) best = i;  // ties keep the smallest index
  }
  p.cls = best;
  return p;
}

Prediction predict_rep(const Model& model, const InputImage& image) {
  return predict_from_logits(forward(model, image));
}

std::string serialize_model_config(const ModelConfig& c) {
  std::ostringstream os;
  os << "repforge-model v1\n";
  os << "layout=" << layout_name(c.layout) << "\n";
  os << "disjoint_conv1=" << (c.disjoint_conv1 ? 1 : 0) << "\n";
  os << "depth=" << c.depth << "\n";
  os << "num_classes=" << c.num_classes << "\n";
  os << "dropout_keep=" << fmt_double(c.dropout_keep) << "\n";
  os << "dropout_on_conv=" << (c.dropout_on_conv ? 1 : 0) << "\n";
  os << "seed=" << c.seed << "\n";
  if (c.input_h && c.input_w && c.input_c) {
    os << "input=" << c.input_h << "x" << c.input_w << "x" << c.input_c << "\n";
  }
  os << "fc_widths=" << c.fc_widths.first << "," << c.fc_widths.second << "\n";
  for (int i = 0; i < c.depth; ++i) {
    const ConvSpec& cs = c.geometry[i].conv;
    const PoolSpec& ps = c.geometry[i].pool;
    os << "conv" << (i + 1) << "=win" << cs.window_h << "x" << cs.window_w
       << " stride" << cs.stride_y << "x" << cs.stride_x << " "
       << (cs.padding == Padding::same ? "same" : "valid") << " in"
       << cs.in_channels << " maps" << cs.out_maps << "\n";
    os << "pool" << (i + 1) << "=win" << ps.window_h << "x" << ps.window_w
       << " stride" << ps.stride_y << "x" << ps.stride_x << "\n";
  }
  return os.str();
}

namespace {

std::pair<std::size_t, std::size_t> parse_hw(const std::string& s,
                                             const std::string& prefix) {
  if (s.rfind(prefix, 0) != 0) {
    throw std::runtime_error("model config: expected '" + prefix +
                             "HxW', got '" + s + "'");
  }
  const std::string body = s.substr(prefix.size());
  const auto x = body.find('x');
  if (x == std::string::npos) {
    throw std::runtime_error("model config: expected '" + prefix +
                             "HxW', got '" + s + "'");
  }
  return {std::stoull(body.substr(0, x)), std::stoull(body.substr(x + 1))};
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

ModelConfig parse_model_config(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "repforge-model v1") {
    throw std::runtime_error("model config: missing 'repforge-model v1' header");
  }
  ModelConfig c;
  c.conv_feature_maps.clear();
  c.geometry.clear();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("model config: bad line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "layout") {
      c.layout = parse_layout(value);
    } else if (key == "disjoint_conv1") {
      c.disjoint_conv1 = value == "1";
    } else if (key == "depth") {
      c.depth = std::stoi(value);
    } else if (key == "num_classes") {
      c.num_classes = std::stoull(value);
    } else if (key == "dropout_keep") {
      c.dropout_keep = std::stod(value);
    } else if (key == "dropout_on_conv") {
      c.dropout_on_conv = value == "1";
    } else if (key == "seed") {
      c.seed = std::stoull(value);
    } else if (key == "input") {
      const auto x1 = value.find('x');
      const auto x2 = value.find('x', x1 + 1);
      if (x1 == std::string::npos || x2 == std::string::npos) {
        throw std::runtime_error("model config: bad input dims '" + value + "'");
      }
      c.input_h = std::stoull(value.substr(0, x1));
      c.input_w = std::stoull(value.substr(x1 + 1, x2 - x1 - 1));
      c.input_c = std::stoull(value.substr(x2 + 1));
    } else if (key == "fc_widths") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) {
        throw std::runtime_error("model config: bad fc_widths '" + value + "'");
      }
      c.fc_widths = {std::stoull(value.substr(0, comma)),
                     std::stoull(value.substr(comma + 1))};
    } else if (key.rfind("conv", 0) == 0) {
      const std::size_t idx = std::stoull(key.substr(4)) - 1;
      if (c.geometry.size() <= idx) c.geometry.resize(idx + 1);
      const auto tok = split_ws(value);
      if (tok.size() != 5) {
        throw std::runtime_error("model config: bad conv line '" + line + "'");
      }
      ConvSpec& cs = c.geometry[idx].conv;
      std::tie(cs.window_h, cs.window_w) = parse_hw(tok[0], "win");
      std::tie(cs.stride_y, cs.stride_x) = parse_hw(tok[1], "stride");
      if (tok[2] == "same") {
        cs.padding = Padding::same;
      } else if (tok[2] == "valid") {
        cs.padding = Padding::valid;
      } else {
        throw std::runtime_error("model config: bad padding '" + tok[2] + "'");
      }
      cs.in_channels = std::stoull(tok[3].substr(2));
      cs.out_maps = std::stoull(tok[4].substr(4));
    } else if (key.rfind("pool", 0) == 0) {
      const std::size_t idx = std::stoull(key.substr(4)) - 1;
      if (c.geometry.size() <= idx) c.geometry.resize(idx + 1);
      const auto tok = split_ws(value);
      if (tok.size() != 2) {
        throw std::runtime_error("model config: bad pool line '" + line + "'");
      }
      PoolSpec& ps = c.geometry[idx].pool;
      std::tie(ps.window_h, ps.window_w) = parse_hw(tok[0], "win");
      std::tie(ps.stride_y, ps.stride_x) = parse_hw(tok[1], "stride");
    } else {
      throw std::runtime_error("model config: unknown key '" + key + "'");
    }
  }
  if (c.geometry.size() != static_cast<std::size_t>(c.depth)) {
    throw std::runtime_error("model config: depth does not match conv/pool lines");
  }
  for (const auto& g : c.geometry) {
    c.conv_feature_maps.push_back(g.conv.out_maps);
  }
  return c;
}

}  // namespace repforge
