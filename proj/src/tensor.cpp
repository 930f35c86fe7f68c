// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/tensor.hpp"

#include <atomic>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dstt/errors.hpp"

namespace dstt {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

std::atomic<std::uint64_t> g_mul_adds{0};
thread_local bool t_grad_enabled = true;

}  // namespace

std::uint64_t OpCounter::mul_adds() noexcept {
  return g_mul_adds.load(std::memory_order_relaxed);
}
void OpCounter::reset() noexcept { g_mul_adds.store(0, std::memory_order_relaxed); }
void OpCounter::record(std::uint64_t macs) noexcept {
  g_mul_adds.fetch_add(macs, std::memory_order_relaxed);
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace {

thread_local bool t_kink_active = false;
thread_local std::uint64_t t_kink_hash = 0;

template <typename T>
void fold_signs(std::span<const T> values) {
  // FNV-1a over the three-way sign of each element.
  std::uint64_t h = t_kink_hash;
  for (T v : values) {
    const unsigned char sign = v > T{0} ? 2 : (v < T{0} ? 0 : 1);
    h = (h ^ sign) * 0x100000001B3ULL;
  }
  t_kink_hash = h;
}

}  // namespace

KinkMonitor::KinkMonitor() {
  t_kink_active = true;
  t_kink_hash = 0xCBF29CE484222325ULL;
}
KinkMonitor::~KinkMonitor() { t_kink_active = false; }
std::uint64_t KinkMonitor::fingerprint() const { return t_kink_hash; }
bool KinkMonitor::active() noexcept { return t_kink_active; }
void KinkMonitor::observe(std::span<const float> v) { fold_signs(v); }
void KinkMonitor::observe(std::span<const double> v) { fold_signs(v); }

namespace detail {

template <typename T>
void TensorImpl<T>::accumulate(std::span<const T> g) {
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

template <typename T>
std::span<T> TensorImpl<T>::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), T{0});
  return grad;
}

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), T{0});
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (impl_->grad_fn) throw ContractError("mutable_data() on a non-leaf tensor");
  return impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() needs a single-element tensor, got " + shape_str(shape()));
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (impl_->grad_fn && !on) throw ContractError("cannot clear requires_grad on a non-leaf");
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (impl_) impl_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data);
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) {
    throw ContractError("backward() on a tensor that is not part of a recorded graph");
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto* fn = node->grad_fn.get();
    if (fn && next < fn->inputs.size()) {
      Impl* child = fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  const T one{1};
  impl_->accumulate(std::span<const T>(&one, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (!node->grad_fn) continue;
    if (!node->grad.empty()) node->grad_fn->backward(*node);
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(const detail::TensorImpl<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto node = std::make_shared<detail::GradNode<T>>();
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl()->grad_fn = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

template struct detail::TensorImpl<float>;
template struct detail::TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(const detail::TensorImpl<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(const detail::TensorImpl<double>&)>);

}  // namespace dstt
