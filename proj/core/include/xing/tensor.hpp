#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xing {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Thrown when tensor shapes violate an operation's precondition.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a caller breaks an API contract (wrong graph, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
class Tape;
}

/// Dense row-major float64 array.
///
/// Storage is shared and immutable once constructed; ops always produce new
/// storage. A tensor that participates in a Graph carries the tape it was
/// recorded on and its node id there.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return full({1}, value); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return node_ >= 0; }
  /// Same values, no graph participation.
  Tensor detach() const;

  // Graph plumbing used by ops; not part of the numeric API.
  const std::shared_ptr<detail::Tape>& tape() const { return tape_; }
  int node() const { return node_; }
  const std::shared_ptr<const std::vector<double>>& storage() const { return data_; }
  static Tensor from_storage(Shape shape, std::shared_ptr<const std::vector<double>> data);
  Tensor with_node(std::shared_ptr<detail::Tape> tape, int node) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<detail::Tape> tape_;
  int node_ = -1;
};

/// Bitwise equality of shape and values.
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace xing
