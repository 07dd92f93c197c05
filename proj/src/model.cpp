#include "trimix/model.hpp"

#include <cmath>
#include <sstream>

#include "trimix/error.hpp"
#include "trimix/ops.hpp"
#include "trimix/rng.hpp"

namespace trimix::model {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> split_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, '-')) {
    if (tok.empty()) throw ContractError("bad width list '" + s + "'");
    out.push_back(std::stoul(tok));
  }
  return out;
}

Layer make_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-s, s);
  return {Tensor({in, out}, std::move(w)), Tensor({1, out}, 0.0)};
}

Tensor run_stack(Tensor h, const std::vector<Layer>& layers, Activation act) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (h.dim(1) != l.weight.dim(0)) {
      throw DimensionError("layer " + std::to_string(i) + " expects width " + std::to_string(l.weight.dim(0)) +
                           ", got input " + shape_str(h.shape()));
    }
    h = ops::add_row_vector(ops::matmul(h, l.weight), l.bias);
    if (i + 1 < layers.size() && act == Activation::Relu) h = ops::relu(h);
  }
  return h;
}

}  // namespace

std::string Arch::descriptor() const {
  std::string enc = std::to_string(input);
  if (!encoder.empty()) enc += "-" + join(encoder);
  std::string proj = std::to_string(representation_width());
  if (!projector.empty()) proj += "-" + join(projector);
  return enc + "|" + proj + "|" + (activation == Activation::Relu ? "relu" : "identity");
}

Arch Arch::parse(const std::string& descriptor) {
  std::stringstream ss(descriptor);
  std::string enc, proj, act;
  if (!std::getline(ss, enc, '|') || !std::getline(ss, proj, '|') || !std::getline(ss, act)) {
    throw ContractError("bad arch descriptor '" + descriptor + "'");
  }
  Arch a;
  auto widths = split_widths(enc);
  if (widths.size() < 2) throw ContractError("arch descriptor needs an input and at least one encoder layer");
  a.input = widths.front();
  a.encoder.assign(widths.begin() + 1, widths.end());
  // The projector list repeats the representation width as its first entry.
  auto p = split_widths(proj);
  if (p.empty() || p.front() != a.encoder.back()) {
    throw ContractError("projector in '" + descriptor + "' must start at the representation width");
  }
  a.projector.assign(p.begin() + 1, p.end());
  if (act == "relu") a.activation = Activation::Relu;
  else if (act == "identity") a.activation = Activation::Identity;
  else throw ContractError("unknown activation '" + act + "'");
  return a;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto* stack : {&encoder, &projector})
    for (auto& l : *stack) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto* stack : {&encoder, &projector})
    for (const auto& l : *stack) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

std::size_t parameter_count(const Arch& arch) {
  std::size_t n = 0, in = arch.input;
  for (auto w : arch.encoder) {
    n += in * w + w;
    in = w;
  }
  for (auto w : arch.projector) {
    n += in * w + w;
    in = w;
  }
  return n;
}

ModelParams init_params(const Arch& arch, std::uint64_t seed) {
  if (arch.input == 0 || arch.encoder.empty()) throw ContractError("arch needs an input width and encoder layers");
  for (auto w : arch.encoder)
    if (w == 0) throw ContractError("arch widths must be >= 1");
  for (auto w : arch.projector)
    if (w == 0) throw ContractError("arch widths must be >= 1");

  Rng rng(derive_seed(seed, {0x1417}));
  ModelParams p;
  p.arch = arch;
  std::size_t in = arch.input;
  for (auto w : arch.encoder) {
    p.encoder.push_back(make_layer(in, w, rng));
    in = w;
  }
  for (auto w : arch.projector) {
    p.projector.push_back(make_layer(in, w, rng));
    in = w;
  }
  return p;
}

ModelParams bind(const ModelParams& params, Tape& tape) {
  ModelParams out;
  out.arch = params.arch;
  for (const auto& l : params.encoder) out.encoder.push_back({tape.leaf(l.weight.detach()), tape.leaf(l.bias.detach())});
  for (const auto& l : params.projector)
    out.projector.push_back({tape.leaf(l.weight.detach()), tape.leaf(l.bias.detach())});
  return out;
}

Tensor encode(const Tensor& x, const ModelParams& params) {
  if (x.row_size() != params.arch.input) {
    throw DimensionError("model expects " + std::to_string(params.arch.input) + " input features per sample, got " +
                         shape_str(x.shape()));
  }
  return run_stack(ops::flatten_rows(x), params.encoder, params.arch.activation);
}

Tensor project(const Tensor& y, const ModelParams& params) {
  return run_stack(y, params.projector, params.arch.activation);
}

ForwardResult forward(const Tensor& x, const ModelParams& params) {
  Tensor y = encode(x, params);
  Tensor z = project(y, params);
  return {std::move(y), std::move(z)};
}

}  // namespace trimix::model
