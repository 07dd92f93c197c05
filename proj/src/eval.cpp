#include "trimix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "trimix/error.hpp"
#include "trimix/ops.hpp"
#include "trimix/rng.hpp"

namespace trimix::eval {

namespace {

struct Sgd {
  double lr, momentum, weight_decay;
  std::vector<std::vector<double>> buf;

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (buf.empty())
      for (const Tensor* p : params) buf.emplace_back(p->size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto theta = params[i]->mutable_data();
      const auto g = grads[i].data();
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = g[k] + weight_decay * theta[k];
        buf[i][k] = momentum * buf[i][k] + gk;
        theta[k] -= lr * buf[i][k];
      }
    }
  }
};

std::size_t argmax_row(const Tensor& logits, std::size_t r) {
  const std::size_t k = logits.dim(1);
  const double* row = logits.data().data() + r * k;
  return static_cast<std::size_t>(std::max_element(row, row + k) - row);
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r)
    if (argmax_row(logits, r) == static_cast<std::size_t>(labels[r])) ++correct;
  return correct;
}

Tensor rows_of(const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t w = x.row_size();
  std::vector<double> out;
  out.reserve(idx.size() * w);
  for (auto i : idx) {
    const auto row = x.data().subspan(i * w, w);
    out.insert(out.end(), row.begin(), row.end());
  }
  Shape shape = x.shape();
  shape[0] = idx.size();
  return Tensor(std::move(shape), std::move(out));
}

std::vector<int> labels_of(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

// Largest even batch not above both the requested size and n.
std::size_t fit_batch(std::size_t requested, std::size_t n) {
  std::size_t b = std::min(requested, n);
  b -= b % 2;
  if (b < 2) throw ContractError("need at least 2 labelled samples for one batch, have " + std::to_string(n));
  return b;
}

EvalReport make_report(std::string protocol, std::size_t correct, std::size_t n) {
  EvalReport r;
  r.protocol = std::move(protocol);
  r.n = n;
  r.correct = correct;
  r.accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

}  // namespace

std::string EvalReport::csv_line() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", accuracy);
  return protocol + "," + buf + "," + std::to_string(n) + "," + std::to_string(correct) + "," + config_digest;
}

std::string EvalReport::pretty() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s top-1 %.2f%%  (%zu / %zu)", protocol.c_str(), 100.0 * accuracy, correct, n);
  std::string s = buf;
  if (!config_digest.empty()) s += "  config " + config_digest;
  return s;
}

Tensor l2_normalize_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("l2_normalize_rows expects a matrix, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.values());
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += out[r * d + c] * out[r * d + c];
    const double norm = std::sqrt(ss);
    if (!(norm > 1e-12)) throw DegenerateError("feature row " + std::to_string(r) + " has zero norm");
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] /= norm;
  }
  return Tensor(x.shape(), std::move(out));
}

FeatureBank make_bank(const Tensor& raw_features, std::vector<int> labels, std::size_t num_classes) {
  if (raw_features.rows() != labels.size()) throw DimensionError("feature rows and labels differ in count");
  return {l2_normalize_rows(raw_features.detach()), std::move(labels), num_classes};
}

FeatureBank extract_features(const model::ModelParams& params, const data::Dataset& ds) {
  if (params.arch.input != ds.input_width()) {
    throw ArchMismatchError("encoder expects " + std::to_string(params.arch.input) + " inputs, dataset provides " +
                            std::to_string(ds.input_width()));
  }
  return make_bank(model::encode(ds.images, params), ds.labels, ds.num_classes);
}

EvalReport knn_eval(const FeatureBank& train, const FeatureBank& test, std::size_t k) {
  if (train.size() == 0 || test.size() == 0) throw ContractError("knn_eval: empty feature bank");
  if (k == 0 || k > train.size()) {
    throw ContractError("knn_eval: k must lie in [1, " + std::to_string(train.size()) + "], got " + std::to_string(k));
  }
  if (train.features.dim(1) != test.features.dim(1)) throw DimensionError("knn_eval: feature widths differ");
  const std::size_t classes =
      std::max({train.num_classes, static_cast<std::size_t>(*std::max_element(train.labels.begin(), train.labels.end())) + 1});

  const Tensor sim = ops::matmul(test.features, ops::transpose(train.features));
  const std::size_t n_train = train.size();
  std::vector<std::size_t> order(n_train);
  std::vector<std::size_t> votes(classes);
  std::vector<double> weight(classes);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < test.size(); ++t) {
    const double* row = sim.data().data() + t * n_train;
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [row](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(weight.begin(), weight.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const auto cls = static_cast<std::size_t>(train.labels[order[j]]);
      votes[cls] += 1;
      weight[cls] += row[order[j]];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && weight[c] > weight[best])) best = c;
    }
    if (best == static_cast<std::size_t>(test.labels[t])) ++correct;
  }
  return make_report("knn", correct, test.size());
}

ProbeConfig ProbeConfig::from(const TriMixConfig& cfg) {
  return {cfg.probe_epochs, cfg.probe_lr, cfg.probe_momentum, cfg.probe_weight_decay, cfg.probe_batch, cfg.eval_seed};
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  std::vector<double> p(logits.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    if (labels[r] < 0 || y >= k) throw ContractError("softmax_cross_entropy: label out of range");
    const double* in = logits.data().data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(in[c] - mx);
    for (std::size_t c = 0; c < k; ++c) p[r * k + c] = std::exp(in[c] - mx) / total;
    loss -= in[y] - mx - std::log(total);
  }
  loss /= static_cast<double>(b);
  return record_op(Tensor::scalar(loss), {&logits},
                   [p = std::move(p), y = std::vector<int>(labels.begin(), labels.end()), b, k](
                       std::span<const double> g, std::span<std::vector<double>* const> pg) {
                     // d/dlogits = (p - onehot) / B
                     auto& d = *pg[0];
                     const double scale = g[0] / static_cast<double>(b);
                     for (std::size_t r = 0; r < b; ++r)
                       for (std::size_t c = 0; c < k; ++c) {
                         const double onehot = static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0;
                         d[r * k + c] += scale * (p[r * k + c] - onehot);
                       }
                   });
}

EvalReport linear_probe(const FeatureBank& train, const FeatureBank& test, const ProbeConfig& cfg) {
  if (train.size() == 0 || test.size() == 0) throw ContractError("linear_probe: empty feature bank");
  const Tensor& x = train.features;
  const std::size_t d = x.dim(1);
  bool constant = true;
  for (std::size_t r = 1; r < x.rows() && constant; ++r)
    for (std::size_t c = 0; c < d; ++c)
      if (x.at(r, c) != x.at(0, c)) {
        constant = false;
        break;
      }
  if (constant) throw DegenerateError("linear_probe: every training feature row is identical");

  const std::size_t classes = std::max(train.num_classes, test.num_classes);
  Tensor w({d, classes}, 0.0), bias({1, classes}, 0.0);
  Sgd opt{cfg.lr, cfg.momentum, cfg.weight_decay, {}};
  const std::size_t batch = fit_batch(cfg.batch, train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& idx : data::batches(train.size(), batch, cfg.seed, epoch, false)) {
      Tape tape;
      const Tensor wl = tape.leaf(w), bl = tape.leaf(bias);
      const Tensor logits = ops::add_row_vector(ops::matmul(rows_of(x, idx), wl), bl);
      const Tensor loss = softmax_cross_entropy(logits, labels_of(train.labels, idx));
      const Gradients g = tape.backward(loss);
      Tensor* params[] = {&w, &bias};
      const Tensor grads[] = {g.of(wl), g.of(bl)};
      opt.step(params, grads);
    }
  }
  const Tensor logits = ops::add_row_vector(ops::matmul(test.features, w), bias);
  return make_report("probe", count_correct(logits, test.labels), test.size());
}

std::vector<std::size_t> stratified_subset(std::span<const int> labels, std::size_t num_classes, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("label fraction must lie in (0, 1]");
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (static_cast<std::size_t>(labels[i]) == c) members.push_back(i);
    Rng rng(derive_seed(seed, {c, 0x57a7}));
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    // Small epsilon so that e.g. 0.1 * 100 is not floored to 9.
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size()) + 1e-9));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

EvalReport finetune_semi(const model::ModelParams& params, const data::Dataset& train, const data::Dataset& test,
                         double fraction, const ProbeConfig& cfg, std::size_t epochs) {
  if (params.arch.input != train.input_width() || params.arch.input != test.input_width()) {
    throw ArchMismatchError("encoder input width does not match the dataset");
  }
  const auto picked = stratified_subset(train.labels, train.num_classes, fraction, cfg.seed);
  const std::size_t batch = fit_batch(cfg.batch, picked.size());
  const data::Dataset labelled = data::subset(train, picked);
  const std::size_t classes = std::max(train.num_classes, test.num_classes);

  model::ModelParams net;
  net.arch = params.arch;
  net.encoder = params.encoder;
  net.arch.projector.clear();
  Tensor w({params.arch.representation_width(), classes}, 0.0), bias({1, classes}, 0.0);
  Sgd opt{cfg.lr, cfg.momentum, cfg.weight_decay, {}};
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    for (const auto& idx : data::batches(labelled.size(), batch, cfg.seed, epoch, true)) {
      Tape tape;
      const model::ModelParams bound = model::bind(net, tape);
      const Tensor wl = tape.leaf(w), bl = tape.leaf(bias);
      const Tensor y = model::encode(data::gather_images(labelled, idx), bound);
      const Tensor loss = softmax_cross_entropy(ops::add_row_vector(ops::matmul(y, wl), bl),
                                                data::gather_labels(labelled, idx));
      const Gradients g = tape.backward(loss);
      std::vector<Tensor*> ps = net.tensors();
      std::vector<Tensor> gs;
      for (const Tensor* t : bound.tensors()) gs.push_back(g.of(*t));
      ps.push_back(&w);
      ps.push_back(&bias);
      gs.push_back(g.of(wl));
      gs.push_back(g.of(bl));
      opt.step(ps, gs);
    }
  }
  const Tensor logits = ops::add_row_vector(ops::matmul(model::encode(test.images, net), w), bias);
  char name[32];
  std::snprintf(name, sizeof name, "finetune@%g", fraction);
  return make_report(name, count_correct(logits, test.labels), test.size());
}

}  // namespace trimix::eval
