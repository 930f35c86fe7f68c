// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#include "dstt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dstt/errors.hpp"
#include "kernels.hpp"

namespace dstt {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Element-wise unary op with derivative expressed through (x, y).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  ImplPtr<T> xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {x}, [xi, deriv](const detail::TensorImpl<T>& o) {
    std::vector<T> g(o.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * deriv(xi->data[i], o.data[i]);
    xi->accumulate(g);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](const detail::TensorImpl<T>& o) {
    if (ai->requires_grad) ai->accumulate(o.grad);
    if (bi->requires_grad) bi->accumulate(o.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](const detail::TensorImpl<T>& o) {
    if (ai->requires_grad) ai->accumulate(o.grad);
    if (bi->requires_grad) {
      std::vector<T> g(o.grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = -o.grad[i];
      bi->accumulate(g);
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](const detail::TensorImpl<T>& o) {
    std::vector<T> g(o.grad.size());
    if (ai->requires_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * bi->data[i];
      ai->accumulate(g);
    }
    if (bi->requires_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = o.grad[i] * ai->data[i];
      bi->accumulate(g);
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary<T>(
      x, [value](T v) { return v + value; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis) {
  if (axis >= x.dim() || bias.numel() != x.size(axis)) {
    throw ShapeError("add_bias: bias of " + std::to_string(bias.numel()) +
                     " values does not match axis " + std::to_string(axis) + " of " +
                     shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t c = 0; c < s.extent; ++c) {
      T* row = out.data() + (o * s.extent + c) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) row[i] += b[c];
    }
  }
  ImplPtr<T> xi = x.impl(), bi = bias.impl();
  return make_result<T>(x.shape(), std::move(out), {x, bias}, [xi, bi, s](const detail::TensorImpl<T>& o) {
    if (xi->requires_grad) xi->accumulate(o.grad);
    if (bi->requires_grad) {
      std::vector<T> g(s.extent, T{0});
      for (std::size_t oo = 0; oo < s.outer; ++oo) {
        for (std::size_t c = 0; c < s.extent; ++c) {
          const T* row = o.grad.data() + (oo * s.extent + c) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) g[c] += row[i];
        }
      }
      bi->accumulate(g);
    }
  });
}

template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& factor, std::size_t axis) {
  Shape expect = x.shape();
  if (axis >= expect.size()) throw ShapeError("mul_broadcast: axis out of range");
  expect[axis] = 1;
  if (factor.shape() != expect) {
    throw ShapeError("mul_broadcast: factor shape " + shape_str(factor.shape()) + " expected " +
                     shape_str(expect));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<T> out(x.numel());
  const auto xd = x.data();
  const auto fd = factor.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t c = 0; c < s.extent; ++c) {
      const std::size_t base = (o * s.extent + c) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) out[base + i] = xd[base + i] * fd[o * s.inner + i];
    }
  }
  ImplPtr<T> xi = x.impl(), fi = factor.impl();
  return make_result<T>(x.shape(), std::move(out), {x, factor}, [xi, fi, s](const detail::TensorImpl<T>& o) {
    if (xi->requires_grad) {
      std::vector<T> g(o.grad.size());
      for (std::size_t oo = 0; oo < s.outer; ++oo) {
        for (std::size_t c = 0; c < s.extent; ++c) {
          const std::size_t base = (oo * s.extent + c) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) {
            g[base + i] = o.grad[base + i] * fi->data[oo * s.inner + i];
          }
        }
      }
      xi->accumulate(g);
    }
    if (fi->requires_grad) {
      std::vector<T> g(fi->data.size(), T{0});
      for (std::size_t oo = 0; oo < s.outer; ++oo) {
        for (std::size_t c = 0; c < s.extent; ++c) {
          const std::size_t base = (oo * s.extent + c) * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) {
            g[oo * s.inner + i] += o.grad[base + i] * xi->data[base + i];
          }
        }
      }
      fi->accumulate(g);
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (KinkMonitor::active()) KinkMonitor::observe(x.data());
  return unary<T>(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  if (KinkMonitor::active()) KinkMonitor::observe(x.data());
  return unary<T>(
      x, [slope](T v) { return v > T{0} ? v : v * slope; },
      [slope](T v, T) { return v > T{0} ? T{1} : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Tensor<T> log_sigmoid(const Tensor<T>& x) {
  // log s(x) = min(x, 0) - log1p(exp(-|x|)); d/dx = s(-x).
  return unary<T>(
      x, [](T v) { return std::min(v, T{0}) - std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        if (v >= T{0}) {
          const T e = std::exp(-v);
          return e / (T{1} + e);
        }
        return T{1} / (T{1} + std::exp(v));
      });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  if (KinkMonitor::active()) KinkMonitor::observe(x.data());
  return unary<T>(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in.data() + r * cols;
    T* dst = out.data() + r * cols;
    const T peak = *std::max_element(src, src + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - peak);
      total += dst[c];
    }
    const T inv = T{1} / total;
    for (std::size_t c = 0; c < cols; ++c) dst[c] *= inv;
  }
  ImplPtr<T> xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {x}, [xi, rows, cols](const detail::TensorImpl<T>& o) {
    std::vector<T> g(o.grad.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = o.data.data() + r * cols;
      const T* gy = o.grad.data() + r * cols;
      T dot{0};
      for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] = y[c] * (gy[c] - dot);
    }
    xi->accumulate(g);
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double total = 0.0;
  for (T v : x.data()) total += static_cast<double>(v);
  ImplPtr<T> xi = x.impl();
  return make_result<T>(Shape{1}, {static_cast<T>(total)}, {x}, [xi](const detail::TensorImpl<T>& o) {
    xi->accumulate(std::vector<T>(xi->data.size(), o.grad[0]));
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  double total = 0.0;
  for (T v : x.data()) total += static_cast<double>(v);
  const double n = static_cast<double>(x.numel());
  ImplPtr<T> xi = x.impl();
  return make_result<T>(Shape{1}, {static_cast<T>(total / n)}, {x}, [xi, n](const detail::TensorImpl<T>& o) {
    xi->accumulate(std::vector<T>(xi->data.size(), static_cast<T>(o.grad[0] / n)));
  });
}

template <typename T>
Tensor<T> abs_sum(const Tensor<T>& x) {
  if (KinkMonitor::active()) KinkMonitor::observe(x.data());
  double total = 0.0;
  for (T v : x.data()) total += std::abs(static_cast<double>(v));
  ImplPtr<T> xi = x.impl();
  return make_result<T>(Shape{1}, {static_cast<T>(total)}, {x}, [xi](const detail::TensorImpl<T>& o) {
    std::vector<T> g(xi->data.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xi->data[i];
      g[i] = v > T{0} ? o.grad[0] : (v < T{0} ? -o.grad[0] : T{0});
    }
    xi->accumulate(g);
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  bool shared_rhs = false;
  if (a.dim() == 2 && b.dim() == 2) {
    m = a.size(0);
    k = a.size(1);
    n = b.size(1);
    if (b.size(0) != k) {
      throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
  } else if (a.dim() == 3 && b.dim() == 3) {
    batch = a.size(0);
    m = a.size(1);
    k = a.size(2);
    n = b.size(2);
    if (b.size(0) != batch || b.size(1) != k) {
      throw ShapeError("matmul: batched operands do not conform, " + shape_str(a.shape()) +
                       " x " + shape_str(b.shape()));
    }
  } else if (a.dim() == 3 && b.dim() == 2) {
    // Shared right operand: identical to a 2-d product over batch*m rows.
    shared_rhs = true;
    m = a.size(0) * a.size(1);
    k = a.size(2);
    n = b.size(1);
    if (b.size(0) != k) {
      throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
  } else {
    throw ShapeError("matmul: unsupported operand ranks " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }

  std::vector<T> out(batch * m * n, T{0});
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm_nn(m, k, n, ad + i * m * k, bd + i * k * n, out.data() + i * m * n);
  }
  OpCounter::record(static_cast<std::uint64_t>(batch) * m * k * n);

  Shape shape;
  if (a.dim() == 2) {
    shape = {m, n};
  } else if (shared_rhs) {
    shape = {a.size(0), a.size(1), n};
  } else {
    shape = {batch, m, n};
  }
  ImplPtr<T> ai = a.impl(), bi = b.impl();
  return make_result<T>(std::move(shape), std::move(out), {a, b},
                        [ai, bi, batch, m, k, n](const detail::TensorImpl<T>& o) {
                          if (ai->requires_grad) {
                            // dA = dC * B^T
                            std::vector<T> g(batch * m * k, T{0});
                            std::vector<T> bt(k * n);
                            for (std::size_t i = 0; i < batch; ++i) {
                              kernels::transpose(k, n, bi->data.data() + i * k * n, bt.data());
                              kernels::gemm_nn(m, n, k, o.grad.data() + i * m * n, bt.data(),
                                               g.data() + i * m * k);
                            }
                            ai->accumulate(g);
                          }
                          if (bi->requires_grad) {
                            // dB = A^T * dC
                            std::vector<T> g(batch * k * n, T{0});
                            std::vector<T> at(m * k);
                            for (std::size_t i = 0; i < batch; ++i) {
                              kernels::transpose(m, k, ai->data.data() + i * m * k, at.data());
                              kernels::gemm_nn(k, m, n, at.data(), o.grad.data() + i * m * n,
                                               g.data() + i * k * n);
                            }
                            bi->accumulate(g);
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  ImplPtr<T> xi = x.impl();
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [xi](const detail::TensorImpl<T>& o) { xi->accumulate(o.grad); });
}

namespace {

// Gathers `src` (shape `in`) into permuted order; `inverse` scatters instead.
template <typename T>
void permute_copy(const Shape& in, const std::vector<std::size_t>& axes, const T* src, T* dst,
                  bool inverse) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out[i] = in[axes[i]];
    step[i] = in_strides[axes[i]];
  }
  const std::size_t total = shape_numel(in);
  const std::size_t last = out[rank - 1];
  const std::size_t last_step = step[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < total; flat += last) {
    if (inverse) {
      for (std::size_t j = 0; j < last; ++j) dst[offset + j * last_step] += src[flat + j];
    } else {
      for (std::size_t j = 0; j < last; ++j) dst[flat + j] = src[offset + j * last_step];
    }
    for (std::size_t d = rank - 1; d-- > 0;) {
      if (++idx[d] < out[d]) {
        offset += step[d];
        break;
      }
      offset -= step[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.dim();
  if (axes.size() != rank) throw ShapeError("permute: axis count does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute: axes are not a permutation");
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.size(axes[i]);
  std::vector<T> out(x.numel());
  permute_copy(x.shape(), axes, x.data().data(), out.data(), false);
  ImplPtr<T> xi = x.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {x}, [xi, axes](const detail::TensorImpl<T>& o) {
    std::vector<T> g(o.grad.size(), T{0});
    permute_copy(xi->shape, axes, o.grad.data(), g.data(), true);
    xi->accumulate(g);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.dim() < 2) throw ShapeError("transpose: rank must be at least 2");
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[x.dim() - 1], axes[x.dim() - 2]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) {
      throw ShapeError("concat: extents differ off the concat axis, " + shape_str(ref) + " vs " +
                       shape_str(s));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit outer = split_at(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t running = 0;
  for (const auto& p : parts) {
    offsets.push_back(running);
    const std::size_t chunk = p.size(axis) * outer.inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk,
                  out.data() + o * outer.extent * outer.inner + running * outer.inner);
    }
    running += p.size(axis);
  }
  std::vector<ImplPtr<T>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result<T>(std::move(out_shape), std::move(out), parts,
                        [impls, offsets, outer, axis](const detail::TensorImpl<T>& o) {
                          for (std::size_t pi = 0; pi < impls.size(); ++pi) {
                            const auto& in = impls[pi];
                            if (!in->requires_grad) continue;
                            const std::size_t chunk = in->shape[axis] * outer.inner;
                            std::vector<T> g(in->data.size());
                            for (std::size_t oo = 0; oo < outer.outer; ++oo) {
                              std::copy_n(o.grad.data() + oo * outer.extent * outer.inner +
                                              offsets[pi] * outer.inner,
                                          chunk, g.data() + oo * chunk);
                            }
                            in->accumulate(g);
                          }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.dim() || begin >= end || end > x.size(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<T> out(s.outer * chunk);
  const auto src = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.data() + (o * s.extent + begin) * s.inner, chunk, out.data() + o * chunk);
  }
  ImplPtr<T> xi = x.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {x},
                        [xi, s, begin, chunk](const detail::TensorImpl<T>& o) {
                          std::vector<T> g(xi->data.size(), T{0});
                          for (std::size_t oo = 0; oo < s.outer; ++oo) {
                            std::copy_n(o.grad.data() + oo * chunk, chunk,
                                        g.data() + (oo * s.extent + begin) * s.inner);
                          }
                          xi->accumulate(g);
                        });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, std::size_t pieces) {
  if (axis >= x.dim() || pieces == 0 || x.size(axis) % pieces != 0) {
    throw ShapeError("split: axis " + std::to_string(axis) + " of " + shape_str(x.shape()) +
                     " does not divide into " + std::to_string(pieces) + " pieces");
  }
  const std::size_t width = x.size(axis) / pieces;
  std::vector<Tensor<T>> out;
  out.reserve(pieces);
  for (std::size_t p = 0; p < pieces; ++p) out.push_back(slice(x, axis, p * width, (p + 1) * width));
  return out;
}

Shape ConvGeometry::output() const {
  const std::size_t rank = input.size();
  if (kernel.size() != rank || stride.size() != rank || padding.size() != rank) {
    throw ShapeError("convolution geometry ranks differ");
  }
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (stride[i] == 0) throw ShapeError("convolution stride must be positive");
    if (input[i] + 2 * padding[i] < kernel[i]) {
      throw ShapeError("convolution kernel " + shape_str(kernel) + " exceeds padded input " +
                       shape_str(input));
    }
    out[i] = (input[i] + 2 * padding[i] - kernel[i]) / stride[i] + 1;
  }
  return out;
}

std::size_t ConvGeometry::kernel_volume() const { return shape_numel(kernel); }

namespace {

// 2-d geometry is handled as 3-d with a unit leading axis.
struct Geom3 {
  std::size_t in[3], k[3], st[3], pad[3], out[3];
};

Geom3 to_geom3(const ConvGeometry& g) {
  const std::size_t rank = g.input.size();
  if (rank != 2 && rank != 3) throw ShapeError("convolution lowering supports 2-d or 3-d inputs");
  const Shape out = g.output();
  Geom3 r{};
  const std::size_t lead = 3 - rank;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i < lead) {
      r.in[i] = r.k[i] = r.st[i] = r.out[i] = 1;
      r.pad[i] = 0;
    } else {
      r.in[i] = g.input[i - lead];
      r.k[i] = g.kernel[i - lead];
      r.st[i] = g.stride[i - lead];
      r.pad[i] = g.padding[i - lead];
      r.out[i] = out[i - lead];
    }
  }
  return r;
}

// Visits every (row, column, source index) of the lowering; `visit` is called
// with src == npos for padding taps.
template <typename Visit>
void for_each_tap(const Geom3& g, std::size_t batch, std::size_t channels, Visit visit) {
  const std::size_t in_vol = g.in[0] * g.in[1] * g.in[2];
  const std::size_t out_vol = g.out[0] * g.out[1] * g.out[2];
  const std::size_t cols = batch * out_vol;
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
      for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          std::size_t col = row * cols;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t plane = (n * channels + c) * in_vol;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * g.st[0] + kd) -
                                        static_cast<std::ptrdiff_t>(g.pad[0]);
              const bool d_ok = id >= 0 && id < static_cast<std::ptrdiff_t>(g.in[0]);
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.st[1] + kh) -
                                          static_cast<std::ptrdiff_t>(g.pad[1]);
                const bool h_ok = d_ok && ih >= 0 && ih < static_cast<std::ptrdiff_t>(g.in[1]);
                const std::size_t base =
                    h_ok ? plane + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2]
                         : 0;
                for (std::size_t ow = 0; ow < g.out[2]; ++ow, ++col) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.st[2] + kw) -
                                            static_cast<std::ptrdiff_t>(g.pad[2]);
                  if (h_ok && iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in[2])) {
                    visit(col, base + static_cast<std::size_t>(iw));
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> lower(const Geom3& g, std::size_t batch, std::size_t channels, const T* src) {
  const std::size_t rows = channels * g.k[0] * g.k[1] * g.k[2];
  const std::size_t cols = batch * g.out[0] * g.out[1] * g.out[2];
  std::vector<T> out(rows * cols, T{0});
  for_each_tap(g, batch, channels, [&](std::size_t col, std::size_t s) { out[col] = src[s]; });
  return out;
}

template <typename T>
std::vector<T> raise(const Geom3& g, std::size_t batch, std::size_t channels, const T* cols) {
  std::vector<T> out(batch * channels * g.in[0] * g.in[1] * g.in[2], T{0});
  for_each_tap(g, batch, channels, [&](std::size_t col, std::size_t s) { out[s] += cols[col]; });
  return out;
}

}  // namespace

template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeometry& geom) {
  const std::size_t rank = geom.input.size();
  if (x.dim() != rank + 2 || !std::equal(geom.input.begin(), geom.input.end(), x.shape().begin() + 2)) {
    throw ShapeError("im2col: input " + shape_str(x.shape()) + " does not match geometry " +
                     shape_str(geom.input));
  }
  const Geom3 g = to_geom3(geom);
  const std::size_t batch = x.size(0), channels = x.size(1);
  Shape out_shape{channels * geom.kernel_volume(), batch * shape_numel(geom.output())};
  auto out = lower(g, batch, channels, x.data().data());
  ImplPtr<T> xi = x.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {x},
                        [xi, g, batch, channels](const detail::TensorImpl<T>& o) {
                          xi->accumulate(raise(g, batch, channels, o.grad.data()));
                        });
}

template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, std::size_t batch, std::size_t channels, const ConvGeometry& geom) {
  const Geom3 g = to_geom3(geom);
  const Shape expect{channels * geom.kernel_volume(), batch * shape_numel(geom.output())};
  if (cols.shape() != expect) {
    throw ShapeError("col2im: columns " + shape_str(cols.shape()) + " expected " + shape_str(expect));
  }
  Shape out_shape{batch, channels};
  out_shape.insert(out_shape.end(), geom.input.begin(), geom.input.end());
  auto out = raise(g, batch, channels, cols.data().data());
  ImplPtr<T> ci = cols.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {cols},
                        [ci, g, batch, channels](const detail::TensorImpl<T>& o) {
                          ci->accumulate(lower(g, batch, channels, o.grad.data()));
                        });
}

namespace {

// Single-group convolution of rank 2 or 3 via im2col + matmul.
template <typename T>
Tensor<T> conv_lowered(const Tensor<T>& x, const Tensor<T>& weight, const ConvGeometry& geom) {
  const std::size_t batch = x.size(0);
  const std::size_t cout = weight.size(0);
  const std::size_t fan_in = weight.numel() / cout;
  Tensor<T> cols = im2col(x, geom);
  if (cols.size(0) != fan_in) {
    throw ShapeError("convolution weight " + shape_str(weight.shape()) +
                     " does not match input channels of " + shape_str(x.shape()));
  }
  Tensor<T> y = matmul(reshape(weight, {cout, fan_in}), cols);
  Shape split_shape{cout, batch};
  const Shape out = geom.output();
  split_shape.insert(split_shape.end(), out.begin(), out.end());
  std::vector<std::size_t> axes(split_shape.size());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[0], axes[1]);
  return permute(reshape(y, split_shape), axes);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding, std::size_t groups) {
  if (x.dim() != 4 || weight.dim() != 4) {
    throw ShapeError("conv2d: expected 4-d input and weight, got " + shape_str(x.shape()) + " and " +
                     shape_str(weight.shape()));
  }
  const std::size_t cin = x.size(1), cout = weight.size(0);
  if (groups == 0 || cin % groups != 0 || cout % groups != 0) {
    throw ConfigError("conv2d: group count " + std::to_string(groups) + " does not divide " +
                      std::to_string(cin) + " input / " + std::to_string(cout) + " output channels");
  }
  if (weight.size(1) != cin / groups) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.size(1) * groups) + " input channels, got " +
                     std::to_string(cin));
  }
  const ConvGeometry geom{{x.size(2), x.size(3)},
                          {weight.size(2), weight.size(3)},
                          {stride, stride},
                          {padding, padding}};
  Tensor<T> y;
  if (groups == 1) {
    y = conv_lowered(x, weight, geom);
  } else {
    auto xs = split(x, 1, groups);
    auto ws = split(weight, 0, groups);
    std::vector<Tensor<T>> ys;
    for (std::size_t g = 0; g < groups; ++g) ys.push_back(conv_lowered(xs[g], ws[g], geom));
    y = concat(ys, 1);
  }
  return bias.defined() ? add_bias(y, bias, 1) : y;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Shape& stride, const Shape& padding) {
  if (x.dim() != 5 || weight.dim() != 5) {
    throw ShapeError("conv3d: expected 5-d input and weight, got " + shape_str(x.shape()) + " and " +
                     shape_str(weight.shape()));
  }
  if (weight.size(1) != x.size(1)) {
    throw ShapeError("conv3d: weight " + shape_str(weight.shape()) + " does not match input " +
                     shape_str(x.shape()));
  }
  const ConvGeometry geom{{x.size(2), x.size(3), x.size(4)},
                          {weight.size(2), weight.size(3), weight.size(4)},
                          stride,
                          padding};
  Tensor<T> y = conv_lowered(x, weight, geom);
  return bias.defined() ? add_bias(y, bias, 1) : y;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding, std::size_t out_h, std::size_t out_w) {
  if (x.dim() != 4 || weight.dim() != 4 || weight.size(0) != x.size(1)) {
    throw ShapeError("conv_transpose2d: input " + shape_str(x.shape()) + " and weight " +
                     shape_str(weight.shape()) + " do not conform");
  }
  const std::size_t batch = x.size(0), cin = x.size(1), cout = weight.size(1);
  const ConvGeometry geom{{out_h, out_w},
                          {weight.size(2), weight.size(3)},
                          {stride, stride},
                          {padding, padding}};
  if (geom.output() != Shape{x.size(2), x.size(3)}) {
    throw ShapeError("conv_transpose2d: output extent " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is not reachable from input " + shape_str(x.shape()));
  }
  const std::size_t positions = x.size(2) * x.size(3);
  Tensor<T> xm = reshape(permute(x, {1, 0, 2, 3}), {cin, batch * positions});
  Tensor<T> wm = transpose(reshape(weight, {cin, cout * geom.kernel_volume()}));
  Tensor<T> y = col2im(matmul(wm, xm), batch, cout, geom);
  return bias.defined() ? add_bias(y, bias, 1) : y;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor) {
  if (x.dim() < 2 || factor == 0) throw ShapeError("upsample_nearest: needs rank >= 2 and factor > 0");
  const std::size_t h = x.size(x.dim() - 2), w = x.size(x.dim() - 1);
  const std::size_t planes = x.numel() / (h * w);
  const std::size_t oh = h * factor, ow = w * factor;
  Shape out_shape = x.shape();
  out_shape[x.dim() - 2] = oh;
  out_shape[x.dim() - 1] = ow;
  std::vector<T> out(planes * oh * ow);
  const auto src = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        out[(p * oh + i) * ow + j] = src[(p * h + i / factor) * w + j / factor];
      }
    }
  }
  ImplPtr<T> xi = x.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {x},
                        [xi, planes, h, w, oh, ow, factor](const detail::TensorImpl<T>& o) {
                          std::vector<T> g(xi->data.size(), T{0});
                          for (std::size_t p = 0; p < planes; ++p) {
                            for (std::size_t i = 0; i < oh; ++i) {
                              for (std::size_t j = 0; j < ow; ++j) {
                                g[(p * h + i / factor) * w + j / factor] += o.grad[(p * oh + i) * ow + j];
                              }
                            }
                          }
                          xi->accumulate(g);
                        });
}

#define DSTT_INSTANTIATE_OPS(T)                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                                   \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&, std::size_t);                    \
  template Tensor<T> mul_broadcast(const Tensor<T>&, const Tensor<T>&, std::size_t);               \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                    \
  template Tensor<T> tanh(const Tensor<T>&);                                                       \
  template Tensor<T> log(const Tensor<T>&);                                                        \
  template Tensor<T> log_sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> abs(const Tensor<T>&);                                                        \
  template Tensor<T> softmax(const Tensor<T>&);                                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);                                                       \
  template Tensor<T> abs_sum(const Tensor<T>&);                                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                   \
  template Tensor<T> transpose(const Tensor<T>&);                                                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                           \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);               \
  template std::vector<Tensor<T>> split(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> im2col(const Tensor<T>&, const ConvGeometry&);                                \
  template Tensor<T> col2im(const Tensor<T>&, std::size_t, std::size_t, const ConvGeometry&);      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,     \
                            std::size_t, std::size_t);                                             \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Shape&,    \
                            const Shape&);                                                         \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                      std::size_t, std::size_t, std::size_t, std::size_t);         \
  template Tensor<T> upsample_nearest(const Tensor<T>&, std::size_t);

DSTT_INSTANTIATE_OPS(float)
DSTT_INSTANTIATE_OPS(double)

#undef DSTT_INSTANTIATE_OPS

}  // namespace dstt
