// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dstt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Process-wide count of scalar multiply-accumulates performed by forward
/// primitives. One MAC counts as 1; additions and nonlinearities are free.
/// Backward passes are not counted.
class OpCounter {
 public:
  static std::uint64_t mul_adds() noexcept;
  static void reset() noexcept;
  static void record(std::uint64_t macs) noexcept;
};

/// Counts the MACs recorded between construction and `elapsed()`.
class ScopedMacCount {
 public:
  ScopedMacCount() : start_(OpCounter::mul_adds()) {}
  std::uint64_t elapsed() const { return OpCounter::mul_adds() - start_; }

 private:
  std::uint64_t start_;
};

/// Graph recording is on by default; a NoGradGuard turns it off for its
/// lifetime on the current thread.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Fingerprints the branch taken by piecewise-linear ops (relu, leaky relu,
/// abs) while active on the current thread. Two forward passes with equal
/// fingerprints ran through the same linear pieces.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  std::uint64_t fingerprint() const;

  static bool active() noexcept;
  /// Folds one branch decision per element into the active fingerprint.
  static void observe(std::span<const float> pre_activation);
  static void observe(std::span<const double> pre_activation);
};

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct GradNode {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Reads out.grad and accumulates into the inputs that require grad.
  std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> grad_fn;

  // Adds `g` into grad, allocating on first use.
  void accumulate(std::span<const T> g);
  std::span<T> grad_buffer();
};

}  // namespace detail

/// Dense row-major n-d array with optional reverse-mode gradient tracking.
///
/// Copies share storage (handle semantics); values are immutable once an op
/// has produced them, except through `mutable_data()` on leaves, which the
/// optimizer and initializers use.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{1}, {value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const noexcept { return impl_ && !impl_->grad_fn; }

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad();

  /// A new leaf sharing no graph history; data is copied.
  Tensor detach() const;

  /// Reverse sweep from this scalar. Leaves accumulate into `grad`;
  /// intermediate gradients are released after use.
  void backward() const;

  const std::shared_ptr<Impl>& impl() const noexcept { return impl_; }
  static Tensor from_impl(std::shared_ptr<Impl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Builds an op result. When grad mode is on and any input requires grad,
/// a graph node holding `backward` is attached.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(const detail::TensorImpl<T>&)> backward);

/// Element-wise copy into another precision.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> out(x.data().begin(), x.data().end());
  return Tensor<To>(x.shape(), std::move(out));
}

}  // namespace dstt
