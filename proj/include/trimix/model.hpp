#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimix/tensor.hpp"

namespace trimix::model {

enum class Activation { Relu, Identity };

// Layer widths. The encoder maps input -> encoder.back() (= representation
// width), the projector maps encoder.back() -> projector.back() (= embedding
// width). Activations sit between layers, never after the last layer of
// either stack.
struct Arch {
  std::size_t input = 0;
  std::vector<std::size_t> encoder;
  std::vector<std::size_t> projector;
  Activation activation = Activation::Relu;

  std::size_t representation_width() const { return encoder.back(); }
  std::size_t embedding_width() const { return projector.empty() ? encoder.back() : projector.back(); }

  // e.g. "256-128-64|64-64-64-32|relu"; the projector part starts at the
  // representation width.
  std::string descriptor() const;
  static Arch parse(const std::string& descriptor);

  bool operator==(const Arch&) const = default;
};

struct Layer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]
};

struct ModelParams {
  Arch arch;
  std::vector<Layer> encoder;
  std::vector<Layer> projector;

  // Declaration order: encoder (w, b)..., projector (w, b)...
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t parameter_count() const;
};

std::size_t parameter_count(const Arch& arch);

// Glorot-uniform weights, zero biases; deterministic per seed.
ModelParams init_params(const Arch& arch, std::uint64_t seed);

// Copy of params whose tensors are registered as leaves of tape.
ModelParams bind(const ModelParams& params, Tape& tape);

struct ForwardResult {
  Tensor y;  // representation [B x D_y]
  Tensor z;  // embedding [B x D_z]
};

// x is [B x input] or [B x C x H x W] with C*H*W == input.
Tensor encode(const Tensor& x, const ModelParams& params);
Tensor project(const Tensor& y, const ModelParams& params);
ForwardResult forward(const Tensor& x, const ModelParams& params);

}  // namespace trimix::model
