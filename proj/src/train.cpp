#include "trimix/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "trimix/error.hpp"
#include "trimix/rng.hpp"

namespace trimix::train {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- little-endian encoding -------------------------------------------------

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(path_ + ": checkpoint truncated while reading " + what, pos_);
    }
  }

  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

void put_array(std::string& out, std::span<const double> values, Precision p) {
  put_le<std::uint64_t>(out, values.size());
  for (double v : values) {
    if (p == Precision::F32) put_le<float>(out, static_cast<float>(v));
    else put_le<double>(out, v);
  }
}

std::vector<double> get_array(Reader& in, std::size_t expected, Precision p, const std::string& what) {
  const std::size_t at = in.pos();
  const auto n = in.get<std::uint64_t>("array length");
  if (n != expected) {
    throw FormatError("checkpoint array '" + what + "' holds " + std::to_string(n) + " values, expected " +
                          std::to_string(expected),
                      at);
  }
  std::vector<double> out(n);
  for (auto& v : out) v = p == Precision::F32 ? static_cast<double>(in.get<float>("array data")) : in.get<double>("array data");
  return out;
}

std::map<std::string, std::string> parse_meta(const std::string& text) {
  std::map<std::string, std::string> meta;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

const std::string& meta_get(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'", 16);
  return it->second;
}

}  // namespace

AdamState AdamState::zeros(std::span<const Tensor* const> params, AdamOptions options) {
  AdamState s;
  s.options = options;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (grads.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || state.m[i].size() != params[i]->size()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has shape " + shape_str(grads[i].shape()) +
                           ", parameter has " + shape_str(params[i]->shape()));
    }
  }

  const AdamOptions& o = state.options;
  state.t += 1;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->mutable_data();
    const auto g = grads[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k] + o.weight_decay * theta[k];
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      theta[k] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

std::string metrics_csv_row(const MetricsRow& row) {
  const auto& l = row.loss;
  return std::to_string(row.step) + "," + std::to_string(row.epoch) + "," + fmt(l.lambda) + "," + fmt(l.l_bt_inv) +
         "," + fmt(l.l_bt_rr) + "," + fmt(l.l_vrt) + "," + fmt(l.l_con) + "," + fmt(l.total);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write metrics to '" + path + "'");
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << metrics_csv_row(r) << '\n';
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto& o = ckpt.optimizer.options;
  std::string meta;
  meta += "arch=" + ckpt.params.arch.descriptor() + "\n";
  meta += std::string("precision=") + (ckpt.precision == Precision::F32 ? "f32" : "f64") + "\n";
  meta += "epoch=" + std::to_string(ckpt.epoch) + "\n";
  meta += "seed=" + std::to_string(ckpt.seed) + "\n";
  meta += "adam.t=" + std::to_string(ckpt.optimizer.t) + "\n";
  meta += "adam.lr=" + fmt(o.lr) + "\nadam.beta1=" + fmt(o.beta1) + "\nadam.beta2=" + fmt(o.beta2) +
          "\nadam.eps=" + fmt(o.eps) + "\nadam.weight_decay=" + fmt(o.weight_decay) + "\n";
  std::stringstream cfg(ckpt.config_text);
  std::string line;
  while (std::getline(cfg, line))
    if (!line.empty()) meta += "config." + line + "\n";

  std::string out(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, meta.size());
  out += meta;
  const auto tensors = ckpt.params.tensors();
  for (const Tensor* t : tensors) put_array(out, t->data(), ckpt.precision);
  const bool has_state = ckpt.optimizer.m.size() == tensors.size();
  for (std::size_t i = 0; i < tensors.size(); ++i)
    put_array(out, has_state ? std::span<const double>(ckpt.optimizer.m[i]) : std::vector<double>(tensors[i]->size()),
              ckpt.precision);
  for (std::size_t i = 0; i < tensors.size(); ++i)
    put_array(out, has_state ? std::span<const double>(ckpt.optimizer.v[i]) : std::vector<double>(tensors[i]->size()),
              ckpt.precision);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot write checkpoint '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ContractError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint '" + path + "'", 0);
  Reader in(std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()), path);

  if (in.take(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw FormatError(path + ": not a checkpoint (bad magic)", 0);
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto meta_len = in.get<std::uint64_t>("metadata length");
  const auto meta = parse_meta(in.take(meta_len, "metadata"));

  Checkpoint c;
  const std::string& prec = meta_get(meta, "precision");
  if (prec != "f32" && prec != "f64") throw FormatError(path + ": unknown precision '" + prec + "'", 16);
  c.precision = prec == "f32" ? Precision::F32 : Precision::F64;
  try {
    c.epoch = std::stoull(meta_get(meta, "epoch"));
    c.seed = std::stoull(meta_get(meta, "seed"));
    c.optimizer.t = std::stoull(meta_get(meta, "adam.t"));
    c.optimizer.options = {std::stod(meta_get(meta, "adam.lr")), std::stod(meta_get(meta, "adam.beta1")),
                           std::stod(meta_get(meta, "adam.beta2")), std::stod(meta_get(meta, "adam.eps")),
                           std::stod(meta_get(meta, "adam.weight_decay"))};
  } catch (const std::logic_error&) {
    throw FormatError(path + ": malformed checkpoint metadata", 16);
  }
  for (const auto& [k, v] : meta)
    if (k.rfind("config.", 0) == 0) c.config_text += k.substr(7) + "=" + v + "\n";

  const model::Arch arch = model::Arch::parse(meta_get(meta, "arch"));
  c.params = model::init_params(arch, 0);
  const auto tensors = c.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto values = get_array(in, tensors[i]->size(), c.precision, "param" + std::to_string(i));
    *tensors[i] = Tensor(tensors[i]->shape(), std::move(values));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i)
    c.optimizer.m.push_back(get_array(in, tensors[i]->size(), c.precision, "adam.m" + std::to_string(i)));
  for (std::size_t i = 0; i < tensors.size(); ++i)
    c.optimizer.v.push_back(get_array(in, tensors[i]->size(), c.precision, "adam.v" + std::to_string(i)));
  if (!in.at_end()) throw FormatError(path + ": trailing bytes after the last array", in.pos());
  return c;
}

Checkpoint load_checkpoint(const std::string& path, const model::Arch& expected) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.params.arch == expected)) {
    throw ArchMismatchError("checkpoint '" + path + "' has arch " + c.params.arch.descriptor() + ", expected " +
                            expected.descriptor());
  }
  return c;
}

data::AugmentPolicy augment_policy(const TriMixConfig& cfg) {
  return {cfg.aug_pad, cfg.aug_hflip, cfg.aug_brightness, cfg.aug_contrast, cfg.aug_grayscale};
}

DatasetPair load_datasets(const TriMixConfig& cfg) {
  switch (cfg.dataset) {
    case DatasetKind::Idx: {
      data::Dataset train = data::load_idx(cfg.train_images, cfg.train_labels);
      data::Dataset test = data::load_idx(cfg.test_images, cfg.test_labels, train.num_classes);
      return {std::move(train), std::move(test)};
    }
    case DatasetKind::Csv: {
      data::Dataset train = data::load_csv(cfg.train_csv, cfg.csv_channels, cfg.csv_height, cfg.csv_width);
      data::Dataset test =
          data::load_csv(cfg.test_csv, cfg.csv_channels, cfg.csv_height, cfg.csv_width, train.num_classes);
      return {std::move(train), std::move(test)};
    }
    default: {
      data::SyntheticSpec spec{cfg.synthetic_classes, cfg.synthetic_train, cfg.synthetic_grid,
                               derive_seed(cfg.synthetic_seed, {1}), cfg.synthetic_sigma, cfg.synthetic_jitter,
                               cfg.synthetic_noise, cfg.synthetic_background};
      data::Dataset train = data::make_synthetic(spec);
      spec.count = cfg.synthetic_test;
      spec.seed = derive_seed(cfg.synthetic_seed, {2});
      data::Dataset test = data::make_synthetic(spec);
      return {std::move(train), std::move(test)};
    }
  }
}

PretrainResult pretrain(const TriMixConfig& cfg, const data::Dataset& dataset, PretrainOptions options) {
  cfg.validate();
  const model::Arch arch = cfg.arch(dataset.input_width());
  const AdamOptions adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const data::AugmentPolicy policy = augment_policy(cfg);

  PretrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  if (options.resume) {
    ckpt = *options.resume;
    if (!(ckpt.params.arch == arch)) {
      throw ArchMismatchError("resume checkpoint has arch " + ckpt.params.arch.descriptor() + ", config wants " +
                              arch.descriptor());
    }
    ckpt.optimizer.options = adam;
  } else {
    ckpt.params = model::init_params(arch, derive_seed(cfg.seed, {0x1417}));
    const auto tensors = ckpt.params.tensors();
    ckpt.optimizer = AdamState::zeros(std::vector<const Tensor*>(tensors.begin(), tensors.end()), adam);
    ckpt.epoch = 0;
  }
  ckpt.seed = cfg.seed;
  ckpt.config_text = cfg.to_text();
  ckpt.precision = cfg.checkpoint_precision == "f64" ? Precision::F64 : Precision::F32;

  const std::size_t last_epoch = options.stop_after.value_or(cfg.epochs);
  const std::size_t steps_per_epoch = dataset.size() / cfg.batch;
  auto save = [&](const std::string& name) {
    if (options.out_dir.empty()) return;
    std::filesystem::create_directories(options.out_dir);
    save_checkpoint((std::filesystem::path(options.out_dir) / name).string(), ckpt);
  };

  for (std::size_t epoch = ckpt.epoch + 1; epoch <= last_epoch; ++epoch) {
    const auto plan = data::batches(dataset.size(), cfg.batch, cfg.seed, epoch);
    double epoch_total = 0.0;
    for (std::size_t bi = 0; bi < plan.size(); ++bi) {
      const std::uint64_t step = (epoch - 1) * steps_per_epoch + bi + 1;
      const data::ViewPair views = data::two_views(data::gather_images(dataset, plan[bi]),
                                                   data::gather_labels(dataset, plan[bi]), policy,
                                                   {derive_seed(cfg.seed, {0xa06}), epoch, bi});
      Rng step_rng(derive_seed(cfg.seed, {epoch, bi, 0x1a3bda}));

      Tape tape;
      const model::ModelParams bound = model::bind(ckpt.params, tape);
      objective::StepLoss loss;
      try {
        loss = objective::trimix_step_loss(views, bound, cfg, step_rng);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      const Gradients grads = tape.backward(loss.total);
      std::vector<Tensor> g;
      for (const Tensor* t : bound.tensors()) g.push_back(grads.of(*t));
      const auto params = ckpt.params.tensors();
      adam_step(params, g, ckpt.optimizer);

      MetricsRow row{step, epoch, loss.breakdown};
      epoch_total += row.loss.total;
      if (options.on_step) options.on_step(row);
      result.metrics.push_back(row);
    }
    result.epoch_mean_total.push_back(epoch_total / static_cast<double>(plan.size()));
    ckpt.epoch = epoch;
    if (cfg.save_every != 0 && epoch % cfg.save_every == 0) save("checkpoint_epoch" + std::to_string(epoch) + ".tmx");
  }
  save("checkpoint.tmx");
  return result;
}

}  // namespace trimix::train
