#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for any shape/rank disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a primitive produces NaN or Inf while finite checks are on.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// One vertex of the gradient tape. Non-leaf nodes keep their inputs alive
/// and own a closure that pushes `grad` into the inputs' grads.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional participation in the
/// reverse-mode tape. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable view of the values. Only meaningful for leaves (parameters,
  /// inputs); editing an interior node does not re-run its consumers.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  const char* op() const;
  bool is_leaf() const;

  /// Leaf copy of the values, off the tape.
  Tensor detach() const;
  /// Deep copy of values (and grad) keeping the requires_grad flag.
  Tensor clone() const;

  /// Reverse sweep from this scalar. Leaf grads accumulate across calls;
  /// interior grads are recomputed each call.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Builds a result node. When any input requires grad the node is recorded
/// on the tape with `backward`; otherwise the closure is dropped.
Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);
Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node&)> backward);

/// Throws NonFiniteError naming `where` if any value is NaN/Inf.
void check_finite(const Tensor& t, const std::string& where);

/// Per-thread switch for checking every primitive's output. On by default
/// in debug builds, off in release.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled)
      : previous_(finite_checks_enabled()) {
    set_finite_checks(enabled);
  }
  ~FiniteCheckScope() { set_finite_checks(previous_); }
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool previous_;
};

/// Per-thread switch that stops recording new nodes on the tape.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
};

bool grad_recording();

}  // namespace mlf
