#include "trimix/tensor.hpp"

#include <cmath>
#include <sstream>

#include "trimix/error.hpp"

namespace trimix {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor::Tensor(Shape shape, double fill) : Tensor(shape, std::vector<double>(shape_numel(shape), fill)) {}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("matrix literal must be non-empty");
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

std::size_t Tensor::rows() const { return dim(0); }

std::size_t Tensor::row_size() const { return data_.size() / dim(0); }

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw DimensionError("at(r, c) needs a 2-D tensor, got " + shape_str(shape_));
  return data_[r * shape_[1] + c];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::detach() const { return Tensor(shape_, data_); }

Tensor Gradients::of(const Tensor& t) const {
  if (t.node() == kNoNode || t.node() >= grads_.size() || grads_[t.node()].empty()) {
    return Tensor(t.shape(), 0.0);
  }
  return Tensor(t.shape(), grads_[t.node()]);
}

Tensor Tape::leaf(Tensor value) {
  value.tape_ = this;
  value.node_ = nodes_.size();
  nodes_.push_back(Node{{}, value.shape_, nullptr});
  return value;
}

Tensor Tape::record(Tensor value, std::span<const Tensor* const> inputs, BackwardFn backward) {
  Node node;
  node.shape = value.shape_;
  node.backward = std::move(backward);
  node.parents.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->tape_ != nullptr && in->tape_ != this) throw ContractError("operands belong to different tapes");
    node.parents.push_back(in->tape_ == this ? in->node_ : kNoNode);
  }
  value.tape_ = this;
  value.node_ = nodes_.size();
  nodes_.push_back(std::move(node));
  return value;
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1 || loss.rank() != 1) {
    throw ContractError("backward needs a scalar loss of shape [1], got " + shape_str(loss.shape()));
  }
  if (loss.tape_ != this || loss.node_ >= nodes_.size()) {
    throw DetachedError("loss is not recorded on this tape");
  }

  std::vector<std::vector<double>> grads(nodes_.size());
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) shapes[i] = nodes_[i].shape;
  grads[loss.node_] = {1.0};

  std::vector<std::vector<double>*> parent_grads;
  for (std::size_t id = loss.node_ + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (grads[id].empty() || !node.backward) continue;
    parent_grads.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const NodeId pid = node.parents[p];
      if (pid == kNoNode) continue;
      if (grads[pid].empty()) grads[pid].assign(shape_numel(nodes_[pid].shape), 0.0);
      parent_grads[p] = &grads[pid];
    }
    node.backward(grads[id], parent_grads);
  }
  return Gradients(std::move(grads), std::move(shapes));
}

Tape* common_tape(std::span<const Tensor* const> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->on_tape()) continue;
    if (tape != nullptr && in->tape() != tape) throw ContractError("operands belong to different tapes");
    tape = in->tape();
  }
  return tape;
}

Tensor record_op(Tensor value, std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward) {
  std::span<const Tensor* const> in(inputs.begin(), inputs.size());
  Tape* tape = common_tape(in);
  if (tape == nullptr) return value;
  return tape->record(std::move(value), in, std::move(backward));
}

void require_finite(const Tensor& t, const std::string& what) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
  }
}

}  // namespace trimix
