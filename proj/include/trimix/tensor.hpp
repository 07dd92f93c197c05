#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace trimix {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tape;

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

// Dense row-major array of doubles. A tensor optionally carries a handle
// into the Tape that produced it; operations on tensors that live on a tape
// record their backward rule there, operations on plain tensors do not.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);
  // 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  // First dimension, and the product of the remaining ones.
  std::size_t rows() const;
  std::size_t row_size() const;

  std::span<const double> data() const noexcept { return data_; }
  // Writable access. Only meaningful for tensors that are not on a tape;
  // callers mutate parameters between steps, never recorded values.
  std::span<double> mutable_data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool on_tape() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  NodeId node() const noexcept { return node_; }

  // Same values, no tape handle.
  Tensor detach() const;

 private:
  friend class Tape;

  Shape shape_;
  std::vector<double> data_;
  Tape* tape_ = nullptr;
  NodeId node_ = kNoNode;
};

// Gradients produced by Tape::backward, indexed by node.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::vector<double>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  // Gradient of the loss w.r.t. t. Tensors the loss does not depend on get
  // zeros of their own shape.
  Tensor of(const Tensor& t) const;

 private:
  std::vector<std::vector<double>> grads_;
  std::vector<Shape> shapes_;
};

// Append-only record of a define-by-run computation. Confined to one thread.
class Tape {
 public:
  // grad_out has the recorded output's size. parent_grads[i] is null when
  // input i is a constant, otherwise a zero-initialised accumulator the
  // rule adds into.
  using BackwardFn =
      std::function<void(std::span<const double> grad_out, std::span<std::vector<double>* const> parent_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf (a parameter or input we want gradients for).
  Tensor leaf(Tensor value);

  // Records `value` as the result of an operation over `inputs`. Inputs that
  // are not on this tape are treated as constants. Returns the value with a
  // node handle attached.
  Tensor record(Tensor value, std::span<const Tensor* const> inputs, BackwardFn backward);

  std::size_t size() const noexcept { return nodes_.size(); }

  Gradients backward(const Tensor& loss) const;

 private:
  struct Node {
    std::vector<NodeId> parents;  // kNoNode for constant inputs
    Shape shape;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

// If any input lives on a tape, returns that tape (all taped inputs must
// share it); otherwise null.
Tape* common_tape(std::span<const Tensor* const> inputs);

// Records `value` on the tape shared by `inputs`, or returns it untouched
// when every input is a constant.
Tensor record_op(Tensor value, std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const std::string& what);

}  // namespace trimix
