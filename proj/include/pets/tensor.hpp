#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pets/common.hpp"

namespace pets {

/// Dense 64-bit float tensor with an optional gradient buffer.
///
/// Copies are shallow: a Tensor is a shared handle to one storage, so
/// passing tensors around or capturing them in tape closures never
/// duplicates data, and gradients accumulate on the shared buffer.
class Tensor {
 public:
  /// Undefined tensor; defined() is false.
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::int64_t> shape);

  /// Tensor with explicit contents; data.size() must equal the shape's
  /// element count.
  static Tensor from(std::vector<std::int64_t> shape,
                     std::vector<double> data);

  /// Rank-0 tensor holding a single value.
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(im_); }

  const std::vector<std::int64_t>& shape() const;
  std::int64_t rank() const;
  std::int64_t numel() const;
  /// Size of dimension i; negative i counts from the end.
  std::int64_t dim(int i) const;

  std::vector<double>& data();
  const std::vector<double>& data() const;

  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  /// Gradient buffer, allocated zero-filled on first access.
  std::vector<double>& grad();
  /// Gradient buffer or nullptr when none has been allocated.
  const std::vector<double>* grad_ptr() const;
  void zero_grad();

  /// Distinct-storage test, used to detect aliasing.
  bool same_storage(const Tensor& other) const { return im_ == other.im_; }

 private:
  struct Impl {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> im_;
  Impl& impl();
  const Impl& impl() const;
};

/// Records the reverse pass of a computation as a list of closures.
///
/// Each differentiable operation that sees a tape appends one closure
/// that propagates the gradient of its output to the gradients of its
/// inputs.  backward() seeds the loss gradient with 1 and replays the
/// closures in reverse order.
class Tape {
 public:
  void record(std::function<void()> vjp);

  /// Runs the reverse pass from a scalar loss.  Throws InvalidInput
  /// when loss is not a single-element tensor, StateError when it does
  /// not require gradients or nothing was recorded.
  void backward(Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

/// Ordered registry of named trainable tensors.
///
/// Registration order is the canonical parameter order used by the
/// optimizer, checkpoints and the parameter count, so model
/// construction must register parameters deterministically.
class ParamStore {
 public:
  /// Registers a tensor filled from U(-a, a) with
  /// a = sqrt(6 / (fan_in + fan_out)).
  Tensor add_xavier(const std::string& name,
                    std::vector<std::int64_t> shape, std::int64_t fan_in,
                    std::int64_t fan_out, Rng& rng);

  /// Registers a zero-filled tensor.
  Tensor add_zeros(const std::string& name,
                   std::vector<std::int64_t> shape);

  /// Registers a tensor filled with a constant.
  Tensor add_const(const std::string& name,
                   std::vector<std::int64_t> shape, double value);

  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }

  /// Looks a parameter up by name; throws StateError if absent.
  Tensor find(const std::string& name) const;

  /// Total number of scalar parameters.
  std::int64_t count() const;

  void zero_grads();

 private:
  Tensor add_named(const std::string& name, Tensor t);
  std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace pets
