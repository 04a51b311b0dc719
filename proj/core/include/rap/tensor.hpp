#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value once registered on a tape
  Tape* tape = nullptr;
};
}  // namespace detail

/// Dense row-major tensor of doubles.
///
/// A Tensor is a shared handle: copies alias the same storage. Tensors created
/// through `Tape::variable` (or produced by an op with a taped input) are
/// recorded on that tape and receive gradients from `Tape::backward`. All
/// other tensors are constants.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access; only legal on tensors not recorded on a tape.
  std::span<double> mutable_values();
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const;
  double operator[](std::size_t flat) const { return node_->value[flat]; }
  double at(std::size_t r, std::size_t c) const;

  Tape* tape() const { return node_->tape; }
  bool on_tape() const { return node_->tape != nullptr; }

  /// Constant copy of the current values, detached from any tape.
  Tensor detach() const;
  /// Constant copy of the accumulated gradient.
  Tensor grad_tensor() const;

  // Used by op implementations.
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Records primitive operations for reverse-mode differentiation.
///
/// Single-threaded. A tape must outlive every tensor recorded on it that is
/// still used as an op input. Tensors belonging to different tapes cannot be
/// mixed in one op.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a copy of `value` as a differentiable leaf.
  Tensor variable(const Tensor& value);

  /// Zeroes every gradient on the tape, seeds d(root)=1 and replays the
  /// recorded operations in reverse. May be called more than once.
  void backward(const Tensor& root);

  std::size_t op_count() const { return ops_.size(); }

  // Used by op implementations.
  Tensor make_output(Shape shape, std::vector<double> values);
  void record(std::function<void()> backward_fn);

 private:
  std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
  std::vector<std::function<void()>> ops_;
};

}  // namespace rap
