#include "repforge/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "repforge/threading.hpp"

namespace repforge {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5f1e;
constexpr std::uint64_t kDropoutStream = 0xd709;

std::vector<InputImage> build_images(const std::vector<SetRecord>& sets,
                                     const Standardizer& st,
                                     ImageLayout layout) {
  std::size_t total = 0;
  for (const auto& s : sets) total += s.reps.size();
  std::vector<InputImage> images(total);
  std::vector<std::pair<std::size_t, std::size_t>> index(total);
  std::size_t k = 0;
  for (std::size_t si = 0; si < sets.size(); ++si) {
    for (std::size_t ri = 0; ri < sets[si].reps.size(); ++ri) index[k++] = {si, ri};
  }
  parallel_for(total, [&](std::size_t i) {
    const auto [si, ri] = index[i];
    const SetRecord& set = sets[si];
    const RepRecord& rep = set.reps[ri];
    const Tensor padded = pad_or_crop(rep);
    const Tensor standardized =
        apply_standardizer(st, padded, valid_length(rep));
    images[i] = format_rep(standardized, layout,
                           RepMeta{set.set_id, ri, set.exercise_id});
  });
  return images;
}

double rep_accuracy(const Model& model, const std::vector<InputImage>& images) {
  if (images.empty()) return 0.0;
  std::vector<unsigned char> correct(images.size(), 0);
  parallel_for(images.size(), [&](std::size_t i) {
    correct[i] = predict_rep(model, images[i]).cls == images[i].meta.label;
  });
  std::size_t hits = 0;
  for (unsigned char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

void scale_inplace(std::vector<Tensor>& acc, double s) {
  for (auto& t : acc) {
    double* a = t.data();
    for (std::size_t j = 0; j < t.size(); ++j) a[j] *= s;
  }
}

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t shuffle_seed,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(shuffle_seed, kShuffleStream), epoch));
  rng.shuffle(order);
  return order;
}

TrainLog run_training(Model& model, AdamState& opt, const SplitDataset& data,
                      const TrainConfig& cfg) {
  if (cfg.batch_size < 1 || cfg.epochs < 1) {
    throw std::invalid_argument("train config: batch_size and epochs must be >= 1");
  }
  if (data.train_sets.empty()) {
    throw std::invalid_argument("run_training: no training sets");
  }
  opt.config.lr = cfg.lr;

  const ImageLayout layout = model.config.layout;
  const std::vector<InputImage> train_images =
      build_images(data.train_sets, data.standardizer, layout);
  std::vector<InputImage> test_images;
  if (cfg.eval_every > 0 && !data.test_sets.empty()) {
    test_images = build_images(data.test_sets, data.standardizer, layout);
  }

  const std::size_t n = train_images.size();
  std::vector<Tensor*> params = model.parameters();

  // Items are dealt to a fixed number of accumulator slots by their position
  // in the epoch and reduced in slot order, so the summation order (and thus
  // every bit of the result) is independent of the worker count.
  constexpr std::size_t kGradSlots = 8;
  std::vector<std::vector<Tensor>> slot_acc(kGradSlots);
  for (auto& acc : slot_acc) {
    acc.reserve(params.size());
    for (const Tensor* p : params) acc.emplace_back(p->shape());
  }
  std::vector<double> slot_loss(kGradSlots, 0.0);

  std::vector<Tensor> grad_acc;
  grad_acc.reserve(params.size());
  for (const Tensor* p : params) grad_acc.emplace_back(p->shape());

  TrainLog log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order =
        epoch_order(n, cfg.shuffle_seed, epoch);

    double epoch_loss_sum = 0.0;
    for (std::size_t batch_start = 0, batch_no = 0; batch_start < n;
         batch_start += cfg.batch_size, ++batch_no) {
      const std::size_t batch_end = std::min(n, batch_start + cfg.batch_size);
      const std::size_t batch_items = batch_end - batch_start;

      parallel_for(kGradSlots, [&](std::size_t slot) {
        slot_loss[slot] = 0.0;
        for (auto& t : slot_acc[slot]) {
          double* a = t.data();
          std::fill(a, a + t.size(), 0.0);
        }
        for (std::size_t pos = batch_start + slot; pos < batch_end;
             pos += kGradSlots) {
          const InputImage& img = train_images[order[pos]];
          Rng item_rng(mix_seed(mix_seed(cfg.shuffle_seed, kDropoutStream),
                                (static_cast<std::uint64_t>(epoch) << 32) ^ pos));
          ForwardCaches caches;
          const Tensor logits =
              forward(model, img, /*training=*/true, item_rng, &caches);
          const SoftmaxLoss sl = softmax_cross_entropy(logits, img.meta.label);
          slot_loss[slot] += sl.loss;
          backward_acc(model, caches, sl.grad_logits, slot_acc[slot]);
        }
      });
      double batch_loss = 0.0;
      for (std::size_t slot = 0; slot < kGradSlots; ++slot) {
        batch_loss += slot_loss[slot];
      }
      // per-parameter reduction over slots, fixed slot order
      parallel_for(params.size(), [&](std::size_t p) {
        double* a = grad_acc[p].data();
        const std::size_t count = grad_acc[p].size();
        std::fill(a, a + count, 0.0);
        for (std::size_t slot = 0; slot < kGradSlots; ++slot) {
          const double* b = slot_acc[slot][p].data();
          for (std::size_t j = 0; j < count; ++j) a[j] += b[j];
        }
      });

      const double inv = 1.0 / static_cast<double>(batch_items);
      batch_loss *= inv;
      scale_inplace(grad_acc, inv);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error(
            "non-finite training loss " + std::to_string(batch_loss) +
            " at epoch " + std::to_string(epoch + 1) + ", batch " +
            std::to_string(batch_no + 1));
      }
      adam_step(params, grad_acc, opt);
      epoch_loss_sum += batch_loss * static_cast<double>(batch_items);
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = epoch_loss_sum / static_cast<double>(n);
    if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
      rec.evaluated = true;
      rec.train_acc = rep_accuracy(model, train_images);
      rec.test_acc = rep_accuracy(model, test_images);
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    log.epochs.push_back(rec);
  }

  if (!cfg.checkpoint_path.empty()) {
    save_checkpoint(model, opt, data.standardizer, cfg.checkpoint_path);
  }
  return log;
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,loss,train_acc,test_acc,seconds\n";
  char buf[64];
  for (const auto& r : log.epochs) {
    out << r.epoch << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << buf << ',';
    if (r.evaluated) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.train_acc, r.test_acc);
      out << buf;
    } else {
      out << ',';
    }
    std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
    out << ',' << buf << '\n';
  }
}

// ---- checkpoint serialization ----

namespace {

constexpr char kMagic[4] = {'R', 'F', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64(std::string& out, double d) {
  const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error("checkpoint " + path_ + ": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) fail("truncated file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

void append_tensor(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t i = 0; i < t.rank(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(t.extent(i)));
  }
  for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
}

}  // namespace

void save_checkpoint(const Model& model, const AdamState& opt,
                     const Standardizer& standardizer,
                     const std::string& path) {
  const std::vector<const Tensor*> params = model.parameters();
  const std::vector<std::string> names = model.parameter_names();

  std::vector<std::pair<std::string, const Tensor*>> entries;
  for (std::size_t i = 0; i < params.size(); ++i) {
    entries.emplace_back(names[i], params[i]);
  }
  const Tensor step({1}, {static_cast<double>(opt.step_count)});
  const Tensor hyper({4}, {opt.config.lr, opt.config.beta1, opt.config.beta2,
                           opt.config.epsilon});
  const Tensor smean({kNumFeatures},
                     std::vector<double>(standardizer.mean.begin(),
                                         standardizer.mean.end()));
  const Tensor sstd({kNumFeatures},
                    std::vector<double>(standardizer.std.begin(),
                                        standardizer.std.end()));
  entries.emplace_back("adam.step", &step);
  entries.emplace_back("adam.hyper", &hyper);
  for (std::size_t i = 0; i < params.size(); ++i) {
    entries.emplace_back("adam.m." + names[i], &opt.first_moment[i]);
    entries.emplace_back("adam.v." + names[i], &opt.second_moment[i]);
  }
  entries.emplace_back("standardizer.mean", &smean);
  entries.emplace_back("standardizer.std", &sstd);

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  const std::string config_text = serialize_model_config(model.config);
  put_u32(out, static_cast<std::uint32_t>(config_text.size()));
  out += config_text;
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) append_tensor(out, name, *tensor);

  std::ofstream f(path, std::ios::binary);
  if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size()))) {
    throw std::runtime_error("cannot write checkpoint " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(blob), path);

  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic, not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    r.fail("unsupported format version " + std::to_string(version));
  }
  const std::uint32_t config_len = r.u32();
  const std::string config_text = r.bytes(config_len);

  std::map<std::string, Tensor> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4) r.fail("tensor " + name + ": bad rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.u32();
      n *= e;
    }
    std::vector<double> data(n);
    for (auto& d : data) d = r.f64();
    tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!r.exhausted()) r.fail("trailing data after last tensor");

  auto take = [&](const std::string& name) -> Tensor {
    auto it = tensors.find(name);
    if (it == tensors.end()) r.fail("missing tensor " + name);
    Tensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };

  Checkpoint ck;
  ck.model = build_model(parse_model_config(config_text));
  const std::vector<Tensor*> params = ck.model.parameters();
  const std::vector<std::string> names = ck.model.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = take(names[i]);
    if (!t.same_shape(*params[i])) {
      r.fail("tensor " + names[i] + " shape " + shape_str(t.shape()) +
             " incompatible with declared config (expects " +
             shape_str(params[i]->shape()) + ")");
    }
    *params[i] = std::move(t);
  }

  const Tensor step = take("adam.step");
  const Tensor hyper = take("adam.hyper");
  if (hyper.size() != 4) r.fail("adam.hyper must hold 4 values");
  AdamConfig ac{hyper[0], hyper[1], hyper[2], hyper[3]};
  ck.opt = AdamState::init(
      std::vector<const Tensor*>(params.begin(), params.end()), ac);
  ck.opt.step_count = static_cast<std::uint64_t>(step[0]);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor m = take("adam.m." + names[i]);
    Tensor v = take("adam.v." + names[i]);
    if (!m.same_shape(*params[i]) || !v.same_shape(*params[i])) {
      r.fail("adam moments for " + names[i] + " incompatible with parameters");
    }
    ck.opt.first_moment[i] = std::move(m);
    ck.opt.second_moment[i] = std::move(v);
  }

  const Tensor smean = take("standardizer.mean");
  const Tensor sstd = take("standardizer.std");
  if (smean.size() != kNumFeatures || sstd.size() != kNumFeatures) {
    r.fail("standardizer tensors must hold 9 values");
  }
  for (std::size_t f9 = 0; f9 < kNumFeatures; ++f9) {
    ck.standardizer.mean[f9] = smean[f9];
    ck.standardizer.std[f9] = sstd[f9];
  }
  if (!tensors.empty()) {
    r.fail("unexpected tensor " + tensors.begin()->first);
  }
  return ck;
}

}  // namespace repforge
