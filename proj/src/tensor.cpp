#include "pets/tensor.hpp"

#include <cmath>

namespace pets {

Tensor::Tensor(std::vector<std::int64_t> shape) {
  for (auto d : shape) {
    if (d < 0) {
      throw ShapeError("Tensor: negative dimension in " + shape_str(shape));
    }
  }
  im_ = std::make_shared<Impl>();
  im_->shape = std::move(shape);
  const auto n = shape_numel(im_->shape);
  im_->data.assign(static_cast<std::size_t>(n), 0.0);
}

Tensor Tensor::from(std::vector<std::int64_t> shape,
                    std::vector<double> data) {
  Tensor t(shape);
  if (static_cast<std::int64_t>(data.size()) != t.numel()) {
    throw ShapeError("Tensor::from: " + std::to_string(data.size()) +
                     " values for shape " + shape_str(shape));
  }
  t.im_->data = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t{std::vector<std::int64_t>{}};
  t.im_->data = {v};
  return t;
}

Tensor::Impl& Tensor::impl() {
  if (!im_) throw StateError("Tensor: use of an undefined tensor");
  return *im_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!im_) throw StateError("Tensor: use of an undefined tensor");
  return *im_;
}

const std::vector<std::int64_t>& Tensor::shape() const {
  return impl().shape;
}

std::int64_t Tensor::rank() const {
  return static_cast<std::int64_t>(impl().shape.size());
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl().data.size());
}

std::int64_t Tensor::dim(int i) const {
  const auto& s = impl().shape;
  const int r = static_cast<int>(s.size());
  const int j = i < 0 ? r + i : i;
  if (j < 0 || j >= r) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(i) +
                     " out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(j)];
}

std::vector<double>& Tensor::data() { return impl().data; }
const std::vector<double>& Tensor::data() const { return impl().data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("Tensor::item: shape " + shape_str(shape()) +
                     " is not a single element");
  }
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool v) { impl().requires_grad = v; }

std::vector<double>& Tensor::grad() {
  auto& im = impl();
  if (im.grad.size() != im.data.size()) {
    im.grad.assign(im.data.size(), 0.0);
  }
  return im.grad;
}

const std::vector<double>* Tensor::grad_ptr() const {
  const auto& im = impl();
  if (im.grad.size() != im.data.size()) return nullptr;
  return &im.grad;
}

void Tensor::zero_grad() {
  auto& im = impl();
  im.grad.assign(im.data.size(), 0.0);
}

void Tape::record(std::function<void()> vjp) {
  nodes_.push_back(std::move(vjp));
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw InvalidInput("Tape::backward: loss has shape " +
                       shape_str(loss.shape()) + ", expected a scalar");
  }
  if (!loss.requires_grad()) {
    throw StateError(
        "Tape::backward: loss does not require gradients; nothing to do");
  }
  if (nodes_.empty()) {
    throw StateError("Tape::backward: tape is empty");
  }
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

Tensor ParamStore::add_named(const std::string& name, Tensor t) {
  for (const auto& [n, _] : items_) {
    if (n == name) {
      throw StateError("ParamStore: duplicate parameter name '" + name + "'");
    }
  }
  t.set_requires_grad(true);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::add_xavier(const std::string& name,
                              std::vector<std::int64_t> shape,
                              std::int64_t fan_in, std::int64_t fan_out,
                              Rng& rng) {
  Tensor t(std::move(shape));
  const double a =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : t.data()) v = dist(rng);
  return add_named(name, t);
}

Tensor ParamStore::add_zeros(const std::string& name,
                             std::vector<std::int64_t> shape) {
  return add_named(name, Tensor(std::move(shape)));
}

Tensor ParamStore::add_const(const std::string& name,
                             std::vector<std::int64_t> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = value;
  return add_named(name, t);
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw StateError("ParamStore: no parameter named '" + name + "'");
}

std::int64_t ParamStore::count() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : items_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [_, t] : items_) t.zero_grad();
}

}  // namespace pets
