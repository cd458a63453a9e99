#include "xing/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "xing/graph.hpp"

namespace xing {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be >= 1, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate(shape_);
  data_ = std::make_shared<const std::vector<double>>(xing::numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  validate(shape_);
  if (data.size() != xing::numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = xing::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::from_storage(Shape shape, std::shared_ptr<const std::vector<double>> data) {
  validate(shape);
  if (!data || data->size() != xing::numel(shape)) {
    throw ShapeError("storage does not match shape " + to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::with_node(std::shared_ptr<detail::Tape> tape, int node) const {
  Tensor t = detach();
  t.tape_ = std::move(tape);
  t.node_ = node;
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data();
  const auto y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace xing
