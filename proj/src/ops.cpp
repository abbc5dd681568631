// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mms::ops {

namespace {

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_rank(const BasicTensor<T>& x, Index rank, const char* op, const char* what) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank " + std::to_string(rank) +
                     ", got shape " + to_string(x.shape()));
  }
}

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a, b}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node<T>& self) {
    const auto& x = self.inputs[0]->data;
    const auto& y = self.inputs[1]->data;
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), "scale", {x}, [factor](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += offset;
  return make_result<T>(x.shape(), std::move(out), "add_scalar", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>(x.shape(), std::move(out), "relu", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const auto& in = self.inputs[0]->data;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (in[i] > T(0)) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) {
    // Branch on sign so exp never overflows.
    if (v >= T(0)) {
      v = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      v = e / (T(1) + e);
    }
  }
  return make_result<T>(x.shape(), std::move(out), "sigmoid", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T s = self.data[i];
        g[i] += self.grad[i] * s * (T(1) - s);
      }
    }
  });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= v;
  return make_result<T>(x.shape(), std::move(out), "square", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const auto& in = self.inputs[0]->data;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += T(2) * in[i] * self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
  return make_result<T>(x.shape(), std::move(out), "gelu", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
      const auto& in = self.inputs[0]->data;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T v = in[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        g[i] += self.grad[i] * (cdf + v * pdf);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return make_result<T>({1}, {acc}, "sum", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const T up = self.grad[0];
      for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g[i] += up;
    }
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {x}, [](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  require_rank(x, 2, "transpose", "input");
  const Index rows = x.dim(0);
  const Index cols = x.dim(1);
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) out[sz(c * rows + r)] = in[sz(r * cols + c)];
  }
  return make_result<T>({cols, rows}, std::move(out), "transpose", {x},
                        [rows, cols](detail::Node<T>& self) {
                          if (T* g = input_grad(self, 0)) {
                            for (Index r = 0; r < rows; ++r) {
                              for (Index c = 0; c < cols; ++c) {
                                g[r * cols + c] += self.grad[sz(c * rows + r)];
                              }
                            }
                          }
                        });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < static_cast<Index>(shape.size()); ++i) {
    if (i < axis) s.outer *= shape[sz(i)];
    if (i == axis) s.extent = shape[sz(i)];
    if (i > axis) s.inner *= shape[sz(i)];
  }
  return s;
}

}  // namespace

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& xs, Index axis) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  const Shape& first = xs.front().shape();
  if (axis < 0 || axis >= static_cast<Index>(first.size())) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + to_string(first));
  }
  Shape out_shape = first;
  out_shape[sz(axis)] = 0;
  std::vector<Index> extents;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Shape& s = xs[k].shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = (static_cast<Index>(d) == axis) || s[d] == first[d];
    if (!ok) {
      throw ShapeError("concat: input " + std::to_string(k) + " has shape " + to_string(s) +
                       ", incompatible with " + to_string(first) + " along axis " + std::to_string(axis));
    }
    extents.push_back(s[sz(axis)]);
    out_shape[sz(axis)] += s[sz(axis)];
  }
  const AxisSplit split = split_at(out_shape, axis);
  std::vector<T> out(sz(numel(out_shape)));
  Index offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto in = xs[k].data();
    const Index block = extents[k] * split.inner;
    for (Index o = 0; o < split.outer; ++o) {
      std::copy_n(in.begin() + o * block, block,
                  out.begin() + o * split.extent * split.inner + offset * split.inner);
    }
    offset += extents[k];
  }
  return make_result<T>(out_shape, std::move(out), "concat", xs,
                        [split, extents](detail::Node<T>& self) {
                          Index off = 0;
                          for (std::size_t k = 0; k < extents.size(); ++k) {
                            const Index block = extents[k] * split.inner;
                            if (T* g = input_grad(self, k)) {
                              for (Index o = 0; o < split.outer; ++o) {
                                const T* src = self.grad.data() + o * split.extent * split.inner +
                                               off * split.inner;
                                T* dst = g + o * block;
                                for (Index i = 0; i < block; ++i) dst[i] += src[i];
                              }
                            }
                            off += extents[k];
                          }
                        });
}

template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, Index axis, Index start, Index length) {
  if (axis < 0 || axis >= x.rank() || start < 0 || length <= 0 || start + length > x.dim(axis)) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") invalid on axis " + std::to_string(axis) + " of " + to_string(x.shape()));
  }
  const AxisSplit split = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[sz(axis)] = length;
  const auto in = x.data();
  std::vector<T> out(sz(split.outer * length * split.inner));
  const Index block = length * split.inner;
  for (Index o = 0; o < split.outer; ++o) {
    std::copy_n(in.begin() + o * split.extent * split.inner + start * split.inner, block,
                out.begin() + o * block);
  }
  return make_result<T>(std::move(out_shape), std::move(out), "narrow", {x},
                        [split, start, block](detail::Node<T>& self) {
                          if (T* g = input_grad(self, 0)) {
                            for (Index o = 0; o < split.outer; ++o) {
                              T* dst = g + o * split.extent * split.inner + start * split.inner;
                              const T* src = self.grad.data() + o * block;
                              for (Index i = 0; i < block; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> map_to_tokens(const BasicTensor<T>& x) {
  require_rank(x, 3, "map_to_tokens", "feature map");
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

template <typename T>
BasicTensor<T> tokens_to_map(const BasicTensor<T>& x, Index height, Index width) {
  require_rank(x, 2, "tokens_to_map", "token matrix");
  if (x.dim(0) != height * width) {
    throw ShapeError("tokens_to_map: " + std::to_string(x.dim(0)) + " tokens do not tile " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  return reshape(transpose(x), {x.dim(1), height, width});
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ, lhs " + to_string(a.shape()) + " rhs " +
                     to_string(b.shape()));
  }
  const Index m = a.dim(0);
  const Index k = a.dim(1);
  const Index n = b.dim(1);
  const T* A = a.data().data();
  const T* B = b.data().data();
  std::vector<T> out(sz(m * n), T(0));
  for (Index i = 0; i < m; ++i) {
    T* c = out.data() + i * n;
    for (Index t = 0; t < k; ++t) {
      const T av = A[i * k + t];
      const T* brow = B + t * n;
      for (Index j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return make_result<T>({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node<T>& self) {
    const T* A = self.inputs[0]->data.data();
    const T* B = self.inputs[1]->data.data();
    const T* G = self.grad.data();
    if (T* ga = input_grad(self, 0)) {
      for (Index i = 0; i < m; ++i) {
        for (Index t = 0; t < k; ++t) {
          T acc = T(0);
          for (Index j = 0; j < n; ++j) acc += G[i * n + j] * B[t * n + j];
          ga[i * k + t] += acc;
        }
      }
    }
    if (T* gb = input_grad(self, 1)) {
      for (Index i = 0; i < m; ++i) {
        for (Index t = 0; t < k; ++t) {
          const T av = A[i * k + t];
          for (Index j = 0; j < n; ++j) gb[t * n + j] += av * G[i * n + j];
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const Index rows = x.dim(0);
  const Index in = x.dim(1);
  const Index out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  if (bias && bias->shape() != Shape{out_dim}) {
    throw ShapeError("linear: bias " + to_string(bias->shape()) + " for " + std::to_string(out_dim) +
                     " outputs");
  }
  const T* X = x.data().data();
  const T* Wt = weight.data().data();
  const T* b = bias ? bias->data().data() : nullptr;
  std::vector<T> out(sz(rows * out_dim));
  for (Index r = 0; r < rows; ++r) {
    const T* xr = X + r * in;
    for (Index o = 0; o < out_dim; ++o) {
      const T* wr = Wt + o * in;
      T acc = T(0);
      for (Index i = 0; i < in; ++i) acc += xr[i] * wr[i];
      out[sz(r * out_dim + o)] = b ? acc + b[o] : acc;
    }
  }
  auto backward = [rows, in, out_dim](detail::Node<T>& self) {
    const T* X = self.inputs[0]->data.data();
    const T* Wt = self.inputs[1]->data.data();
    const T* G = self.grad.data();
    if (T* gx = input_grad(self, 0)) {
      for (Index r = 0; r < rows; ++r) {
        for (Index o = 0; o < out_dim; ++o) {
          const T gv = G[r * out_dim + o];
          const T* wr = Wt + o * in;
          T* dst = gx + r * in;
          for (Index i = 0; i < in; ++i) dst[i] += gv * wr[i];
        }
      }
    }
    if (T* gw = input_grad(self, 1)) {
      for (Index r = 0; r < rows; ++r) {
        const T* xr = X + r * in;
        for (Index o = 0; o < out_dim; ++o) {
          const T gv = G[r * out_dim + o];
          T* dst = gw + o * in;
          for (Index i = 0; i < in; ++i) dst[i] += gv * xr[i];
        }
      }
    }
    if (self.inputs.size() > 2) {
      if (T* gb = input_grad(self, 2)) {
        for (Index r = 0; r < rows; ++r) {
          for (Index o = 0; o < out_dim; ++o) gb[o] += G[r * out_dim + o];
        }
      }
    }
  };
  if (bias) return make_result<T>({rows, out_dim}, std::move(out), "linear", {x, weight, *bias}, backward);
  return make_result<T>({rows, out_dim}, std::move(out), "linear", {x, weight}, backward);
}

template <typename T>
BasicTensor<T> pointwise(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                         const std::optional<BasicTensor<T>>& bias) {
  require_rank(x, 3, "pointwise", "input");
  require_rank(weight, 2, "pointwise", "weight");
  const Index cin = x.dim(0);
  const Index cout = weight.dim(0);
  const Index pixels = x.dim(1) * x.dim(2);
  if (weight.dim(1) != cin) {
    throw ShapeError("pointwise: input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  if (bias && bias->shape() != Shape{cout}) {
    throw ShapeError("pointwise: bias " + to_string(bias->shape()) + " for " + std::to_string(cout) +
                     " outputs");
  }
  const T* X = x.data().data();
  const T* Wt = weight.data().data();
  std::vector<T> out(sz(cout * pixels), T(0));
  for (Index o = 0; o < cout; ++o) {
    T* dst = out.data() + o * pixels;
    for (Index i = 0; i < cin; ++i) {
      const T w = Wt[o * cin + i];
      const T* src = X + i * pixels;
      for (Index p = 0; p < pixels; ++p) dst[p] += w * src[p];
    }
    if (bias) {
      const T b = bias->data()[sz(o)];
      for (Index p = 0; p < pixels; ++p) dst[p] += b;
    }
  }
  auto backward = [cin, cout, pixels](detail::Node<T>& self) {
    const T* X = self.inputs[0]->data.data();
    const T* Wt = self.inputs[1]->data.data();
    const T* G = self.grad.data();
    if (T* gx = input_grad(self, 0)) {
      for (Index o = 0; o < cout; ++o) {
        const T* src = G + o * pixels;
        for (Index i = 0; i < cin; ++i) {
          const T w = Wt[o * cin + i];
          T* dst = gx + i * pixels;
          for (Index p = 0; p < pixels; ++p) dst[p] += w * src[p];
        }
      }
    }
    if (T* gw = input_grad(self, 1)) {
      for (Index o = 0; o < cout; ++o) {
        const T* go = G + o * pixels;
        for (Index i = 0; i < cin; ++i) {
          const T* xi = X + i * pixels;
          T acc = T(0);
          for (Index p = 0; p < pixels; ++p) acc += go[p] * xi[p];
          gw[o * cin + i] += acc;
        }
      }
    }
    if (self.inputs.size() > 2) {
      if (T* gb = input_grad(self, 2)) {
        for (Index o = 0; o < cout; ++o) {
          T acc = T(0);
          for (Index p = 0; p < pixels; ++p) acc += G[o * pixels + p];
          gb[o] += acc;
        }
      }
    }
  };
  const Shape shape{cout, x.dim(1), x.dim(2)};
  if (bias) return make_result<T>(shape, std::move(out), "pointwise", {x, weight, *bias}, backward);
  return make_result<T>(shape, std::move(out), "pointwise", {x, weight}, backward);
}

Index conv_output_extent(Index input, Index kernel, Index stride, Index pad) {
  if (stride <= 0 || pad < 0 || kernel <= 0) {
    throw ShapeError("conv2d: invalid geometry (kernel " + std::to_string(kernel) + ", stride " +
                     std::to_string(stride) + ", pad " + std::to_string(pad) + ")");
  }
  const Index span = input + 2 * pad - kernel;
  if (span < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(input + 2 * pad));
  }
  return span / stride + 1;
}

namespace {

// Valid output range [lo, hi) along one axis for kernel tap `tap`, i.e. the
// outputs whose input coordinate o*stride - pad + tap lands inside [0, extent).
std::pair<Index, Index> tap_range(Index out_extent, Index in_extent, Index stride, Index pad, Index tap) {
  Index lo = 0;
  const Index first = tap - pad;
  if (first < 0) lo = (-first + stride - 1) / stride;
  Index hi = out_extent;
  // largest o with o*stride + first <= in_extent - 1
  const Index last_ok = in_extent - 1 - first;
  if (last_ok < 0) return {0, 0};
  hi = std::min(hi, last_ok / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, ConvGeometry geo) {
  require_rank(x, 3, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const Index cin = x.dim(0);
  const Index height = x.dim(1);
  const Index width = x.dim(2);
  const Index cout = weight.dim(0);
  const Index k = weight.dim(2);
  if (weight.dim(3) != k) throw ShapeError("conv2d: kernel must be square, got " + to_string(weight.shape()));
  if (geo.groups <= 0 || cin % geo.groups != 0 || cout % geo.groups != 0) {
    throw ShapeError("conv2d: grouping error, " + std::to_string(cin) + " input / " +
                     std::to_string(cout) + " output channels not divisible by groups " +
                     std::to_string(geo.groups));
  }
  const Index cin_g = cin / geo.groups;
  const Index cout_g = cout / geo.groups;
  if (weight.dim(1) != cin_g) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " channels per group, input gives " +
                     std::to_string(cin_g));
  }
  if (bias && bias->shape() != Shape{cout}) {
    throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " for " + std::to_string(cout) +
                     " outputs");
  }
  const Index oh = conv_output_extent(height, k, geo.stride, geo.pad);
  const Index ow = conv_output_extent(width, k, geo.stride, geo.pad);
  const Index s = geo.stride;
  const Index p = geo.pad;

  // Per-tap valid output ranges, shared by forward and backward.
  std::vector<std::pair<Index, Index>> rows(sz(k)), cols(sz(k));
  for (Index t = 0; t < k; ++t) {
    rows[sz(t)] = tap_range(oh, height, s, p, t);
    cols[sz(t)] = tap_range(ow, width, s, p, t);
  }

  const T* X = x.data().data();
  const T* Wt = weight.data().data();
  std::vector<T> out(sz(cout * oh * ow), T(0));
  for (Index oc = 0; oc < cout; ++oc) {
    T* dst = out.data() + oc * oh * ow;
    if (bias) std::fill(dst, dst + oh * ow, bias->data()[sz(oc)]);
    const Index group = oc / cout_g;
    for (Index icl = 0; icl < cin_g; ++icl) {
      const T* src = X + (group * cin_g + icl) * height * width;
      const T* wk = Wt + (oc * cin_g + icl) * k * k;
      for (Index ky = 0; ky < k; ++ky) {
        const auto [y0, y1] = rows[sz(ky)];
        for (Index kx = 0; kx < k; ++kx) {
          const T w = wk[ky * k + kx];
          const auto [x0, x1] = cols[sz(kx)];
          for (Index oy = y0; oy < y1; ++oy) {
            const Index off = (oy * s - p + ky) * width - p + kx;
            T* drow = dst + oy * ow;
            for (Index ox = x0; ox < x1; ++ox) drow[ox] += w * src[off + ox * s];
          }
        }
      }
    }
  }

  auto backward = [=](detail::Node<T>& self) {
    const T* X = self.inputs[0]->data.data();
    const T* Wt = self.inputs[1]->data.data();
    const T* G = self.grad.data();
    T* gx = input_grad(self, 0);
    T* gw = input_grad(self, 1);
    for (Index oc = 0; oc < cout; ++oc) {
      const T* go = G + oc * oh * ow;
      const Index group = oc / cout_g;
      for (Index icl = 0; icl < cin_g; ++icl) {
        const Index ic = group * cin_g + icl;
        const T* src = X + ic * height * width;
        const T* wk = Wt + (oc * cin_g + icl) * k * k;
        for (Index ky = 0; ky < k; ++ky) {
          const auto [y0, y1] = rows[sz(ky)];
          for (Index kx = 0; kx < k; ++kx) {
            const auto [x0, x1] = cols[sz(kx)];
            const T w = wk[ky * k + kx];
            T acc = T(0);
            for (Index oy = y0; oy < y1; ++oy) {
              const Index off = (oy * s - p + ky) * width - p + kx;
              const T* grow = go + oy * ow;
              if (gx) {
                T* xplane = gx + ic * height * width;
                for (Index ox = x0; ox < x1; ++ox) xplane[off + ox * s] += w * grow[ox];
              }
              if (gw) {
                for (Index ox = x0; ox < x1; ++ox) acc += grow[ox] * src[off + ox * s];
              }
            }
            if (gw) gw[(oc * cin_g + icl) * k * k + ky * k + kx] += acc;
          }
        }
      }
    }
    if (self.inputs.size() > 2) {
      if (T* gb = input_grad(self, 2)) {
        for (Index oc = 0; oc < cout; ++oc) {
          T acc = T(0);
          for (Index i = 0; i < oh * ow; ++i) acc += G[oc * oh * ow + i];
          gb[oc] += acc;
        }
      }
    }
  };
  const Shape shape{cout, oh, ow};
  if (bias) return make_result<T>(shape, std::move(out), "conv2d", {x, weight, *bias}, backward);
  return make_result<T>(shape, std::move(out), "conv2d", {x, weight}, backward);
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, Index axis) {
  if (axis < 0 || axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  }
  const AxisSplit split = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (Index o = 0; o < split.outer; ++o) {
    for (Index i = 0; i < split.inner; ++i) {
      const Index base = o * split.extent * split.inner + i;
      T peak = in[sz(base)];
      for (Index e = 1; e < split.extent; ++e) peak = std::max(peak, in[sz(base + e * split.inner)]);
      T total = T(0);
      for (Index e = 0; e < split.extent; ++e) {
        const T v = std::exp(in[sz(base + e * split.inner)] - peak);
        out[sz(base + e * split.inner)] = v;
        total += v;
      }
      const T inv = T(1) / total;
      for (Index e = 0; e < split.extent; ++e) out[sz(base + e * split.inner)] *= inv;
    }
  }
  return make_result<T>(x.shape(), std::move(out), "softmax", {x}, [split](detail::Node<T>& self) {
    T* g = input_grad(self, 0);
    if (!g) return;
    const T* y = self.data.data();
    const T* G = self.grad.data();
    for (Index o = 0; o < split.outer; ++o) {
      for (Index i = 0; i < split.inner; ++i) {
        const Index base = o * split.extent * split.inner + i;
        T dot = T(0);
        for (Index e = 0; e < split.extent; ++e) {
          const Index at = base + e * split.inner;
          dot += G[at] * y[at];
        }
        for (Index e = 0; e < split.extent; ++e) {
          const Index at = base + e * split.inner;
          g[at] += y[at] * (G[at] - dot);
        }
      }
    }
  });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const Index c = x.dim(x.rank() - 1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " +
                     to_string(beta.shape()) + " for last extent " + std::to_string(c));
  }
  const Index rows = x.numel() / c;
  const T* X = x.data().data();
  const T* ga = gamma.data().data();
  const T* be = beta.data().data();
  std::vector<T> out(sz(rows * c));
  std::vector<T> xhat(sz(rows * c));
  std::vector<T> rstd(sz(rows));
  for (Index r = 0; r < rows; ++r) {
    const T* xr = X + r * c;
    T mu = T(0);
    for (Index i = 0; i < c; ++i) mu += xr[i];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (Index i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + eps);
    rstd[sz(r)] = inv;
    for (Index i = 0; i < c; ++i) {
      const T h = (xr[i] - mu) * inv;
      xhat[sz(r * c + i)] = h;
      out[sz(r * c + i)] = ga[i] * h + be[i];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [rows, c, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node<T>& self) {
        const T* G = self.grad.data();
        const T* ga = self.inputs[1]->data.data();
        T* gx = input_grad(self, 0);
        T* gg = input_grad(self, 1);
        T* gb = input_grad(self, 2);
        for (Index r = 0; r < rows; ++r) {
          const T* gr = G + r * c;
          const T* hr = xhat.data() + r * c;
          if (gg || gb) {
            for (Index i = 0; i < c; ++i) {
              if (gg) gg[i] += gr[i] * hr[i];
              if (gb) gb[i] += gr[i];
            }
          }
          if (gx) {
            T sum_d = T(0);
            T sum_dh = T(0);
            for (Index i = 0; i < c; ++i) {
              const T d = gr[i] * ga[i];
              sum_d += d;
              sum_dh += d * hr[i];
            }
            const T inv_c = T(1) / static_cast<T>(c);
            const T rs = rstd[sz(r)];
            for (Index i = 0; i < c; ++i) {
              const T d = gr[i] * ga[i];
              gx[r * c + i] += rs * (d - inv_c * sum_d - hr[i] * inv_c * sum_dh);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Spatial

namespace {

struct Tap {
  Index lo;
  Index hi;
  double frac;  // weight of hi
};

// Source taps for half-pixel-center resampling of one axis.
std::vector<Tap> resample_taps(Index in, Index out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    Index lo = static_cast<Index>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const Index hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, Index out_height, Index out_width) {
  require_rank(x, 3, "bilinear_upsample", "input");
  const Index c = x.dim(0);
  const Index h = x.dim(1);
  const Index w = x.dim(2);
  if (out_height < h || out_width < w) {
    throw ShapeError("bilinear_upsample: downscaling " + to_string(x.shape()) + " to " +
                     std::to_string(out_height) + "x" + std::to_string(out_width) + " is unsupported");
  }
  const auto ty = resample_taps(h, out_height);
  const auto tx = resample_taps(w, out_width);
  const T* X = x.data().data();
  std::vector<T> out(sz(c * out_height * out_width));
  for (Index ch = 0; ch < c; ++ch) {
    const T* src = X + ch * h * w;
    T* dst = out.data() + ch * out_height * out_width;
    for (Index oy = 0; oy < out_height; ++oy) {
      const Tap& a = ty[sz(oy)];
      const T fy = static_cast<T>(a.frac);
      for (Index ox = 0; ox < out_width; ++ox) {
        const Tap& b = tx[sz(ox)];
        const T fx = static_cast<T>(b.frac);
        const T top = src[a.lo * w + b.lo] * (T(1) - fx) + src[a.lo * w + b.hi] * fx;
        const T bot = src[a.hi * w + b.lo] * (T(1) - fx) + src[a.hi * w + b.hi] * fx;
        dst[oy * out_width + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return make_result<T>({c, out_height, out_width}, std::move(out), "bilinear_upsample", {x},
                        [=](detail::Node<T>& self) {
                          T* g = input_grad(self, 0);
                          if (!g) return;
                          const T* G = self.grad.data();
                          for (Index ch = 0; ch < c; ++ch) {
                            T* dst = g + ch * h * w;
                            const T* src = G + ch * out_height * out_width;
                            for (Index oy = 0; oy < out_height; ++oy) {
                              const Tap& a = ty[sz(oy)];
                              const T fy = static_cast<T>(a.frac);
                              for (Index ox = 0; ox < out_width; ++ox) {
                                const Tap& b = tx[sz(ox)];
                                const T fx = static_cast<T>(b.frac);
                                const T v = src[oy * out_width + ox];
                                dst[a.lo * w + b.lo] += v * (T(1) - fy) * (T(1) - fx);
                                dst[a.lo * w + b.hi] += v * (T(1) - fy) * fx;
                                dst[a.hi * w + b.lo] += v * fy * (T(1) - fx);
                                dst[a.hi * w + b.hi] += v * fy * fx;
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x, 3, "global_avg_pool", "input");
  const Index c = x.dim(0);
  const Index pixels = x.dim(1) * x.dim(2);
  const T* X = x.data().data();
  std::vector<T> out(sz(c));
  for (Index ch = 0; ch < c; ++ch) {
    T acc = T(0);
    for (Index p = 0; p < pixels; ++p) acc += X[ch * pixels + p];
    out[sz(ch)] = acc / static_cast<T>(pixels);
  }
  return make_result<T>({c}, std::move(out), "global_avg_pool", {x}, [c, pixels](detail::Node<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (Index ch = 0; ch < c; ++ch) {
        const T v = self.grad[sz(ch)] / static_cast<T>(pixels);
        for (Index p = 0; p < pixels; ++p) g[ch * pixels + p] += v;
      }
    }
  });
}

template <typename T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, const BasicTensor<T>& gate) {
  require_rank(x, 3, "scale_channels", "input");
  const Index c = x.dim(0);
  if (gate.shape() != Shape{c}) {
    throw ShapeError("scale_channels: gate " + to_string(gate.shape()) + " for " + std::to_string(c) +
                     " channels");
  }
  const Index pixels = x.dim(1) * x.dim(2);
  const T* X = x.data().data();
  const T* Gt = gate.data().data();
  std::vector<T> out(sz(c * pixels));
  for (Index ch = 0; ch < c; ++ch) {
    for (Index p = 0; p < pixels; ++p) out[sz(ch * pixels + p)] = X[ch * pixels + p] * Gt[ch];
  }
  return make_result<T>(x.shape(), std::move(out), "scale_channels", {x, gate},
                        [c, pixels](detail::Node<T>& self) {
                          const T* X = self.inputs[0]->data.data();
                          const T* Gt = self.inputs[1]->data.data();
                          const T* G = self.grad.data();
                          if (T* gx = input_grad(self, 0)) {
                            for (Index ch = 0; ch < c; ++ch) {
                              for (Index p = 0; p < pixels; ++p) gx[ch * pixels + p] += G[ch * pixels + p] * Gt[ch];
                            }
                          }
                          if (T* gg = input_grad(self, 1)) {
                            for (Index ch = 0; ch < c; ++ch) {
                              T acc = T(0);
                              for (Index p = 0; p < pixels; ++p) acc += G[ch * pixels + p] * X[ch * pixels + p];
                              gg[ch] += acc;
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Order-independent sum

template <typename T>
BasicTensor<T> add_n(const std::vector<BasicTensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("add_n: empty input list");
  for (std::size_t k = 1; k < xs.size(); ++k) require_same_shape(xs.front(), xs[k], "add_n");
  const std::size_t n = xs.front().data().size();
  std::vector<T> out(n);
  std::vector<T> terms(xs.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < xs.size(); ++k) terms[k] = xs[k].data()[i];
    std::sort(terms.begin(), terms.end());
    T acc = T(0);
    for (const T t : terms) acc += t;
    out[i] = acc;
  }
  return make_result<T>(xs.front().shape(), std::move(out), "add_n", xs, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (T* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

#define MMS_INSTANTIATE(T)                                                                           \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                           \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                               \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                            \
  template BasicTensor<T> square(const BasicTensor<T>&);                                             \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                               \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                     \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                          \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, Index);                         \
  template BasicTensor<T> narrow(const BasicTensor<T>&, Index, Index, Index);                        \
  template BasicTensor<T> add_n(const std::vector<BasicTensor<T>>&);                                 \
  template BasicTensor<T> map_to_tokens(const BasicTensor<T>&);                                      \
  template BasicTensor<T> tokens_to_map(const BasicTensor<T>&, Index, Index);                        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                       \
                                 const std::optional<BasicTensor<T>>&);                              \
  template BasicTensor<T> pointwise(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                    const std::optional<BasicTensor<T>>&);                           \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                       \
                                 const std::optional<BasicTensor<T>>&, ConvGeometry);                \
  template BasicTensor<T> softmax(const BasicTensor<T>&, Index);                                     \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                     const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> bilinear_upsample(const BasicTensor<T>&, Index, Index);                    \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                    \
  template BasicTensor<T> scale_channels(const BasicTensor<T>&, const BasicTensor<T>&);

MMS_INSTANTIATE(float)
MMS_INSTANTIATE(double)
#undef MMS_INSTANTIATE

}  // namespace mms::ops
