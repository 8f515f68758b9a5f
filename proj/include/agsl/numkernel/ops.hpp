#pragma once

// Differentiable kernel ops over Tape values. Each op checks shapes,
// charges its FLOPs to the tape's current bucket, and records a backward
// closure that accumulates into parent gradient buffers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "agsl/numkernel/tape.hpp"

namespace agsl::ops {

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b, const char* op) {
    if (!a.valid() || a.tape() != b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
    return *a.tape();
}

inline std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

/// Broadcast plan for two equal-rank operands: each axis must match or be 1.
struct Broadcast {
    Shape out;
    std::vector<std::size_t> sa, sb;  // strides into a/b, 0 on broadcast axes
    bool trivial = false;
};

inline Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) throw ShapeError(op, {a, b}, "rank mismatch");
    Broadcast p;
    p.trivial = a == b;
    p.out.resize(a.size());
    auto sta = strides_of(a), stb = strides_of(b);
    p.sa.resize(a.size());
    p.sb.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1) throw ShapeError(op, {a, b});
        p.out[i] = std::max(a[i], b[i]);
        p.sa[i] = a[i] == 1 && p.out[i] != 1 ? 0 : sta[i];
        p.sb[i] = b[i] == 1 && p.out[i] != 1 ? 0 : stb[i];
    }
    return p;
}

/// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
    const std::size_t n = shape_numel(p.out);
    if (p.trivial) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    const std::size_t r = p.out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < n; ++o) {
        f(o, ia, ib);
        for (std::size_t ax = r; ax-- > 0;) {
            if (++idx[ax] < p.out[ax]) {
                ia += p.sa[ax];
                ib += p.sb[ax];
                break;
            }
            ia -= p.sa[ax] * (p.out[ax] - 1);
            ib -= p.sb[ax] * (p.out[ax] - 1);
            idx[ax] = 0;
        }
    }
}

template <typename Fwd, typename Deriv>
Var unary(Var a, const char* op, std::uint64_t cost, Fwd fwd, Deriv deriv) {
    Tape& t = *a.tape();
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    t.charge(cost * x.size());
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia, deriv](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const Tensor& xv = tp.node(ia).value;
                      const Tensor& yv = tp.node(self).value;
                      if (!tp.node(ia).requires_grad) return;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
                  },
                  op);
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "add");
    auto plan = detail::plan_broadcast(a.shape(), b.shape(), "add");
    Tensor y(plan.out);
    const Tensor &x1 = a.value(), &x2 = b.value();
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x1[i] + x2[j]; });
    t.charge(flop_cost::kElementwise * y.size());
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(y), {ia, ib},
                  [ia, ib, plan](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const bool ra = tp.node(ia).requires_grad, rb = tp.node(ib).requires_grad;
                      Tensor* ga = ra ? &tp.grad_buffer(ia) : nullptr;
                      Tensor* gb = rb ? &tp.grad_buffer(ib) : nullptr;
                      detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                          if (ga) (*ga)[i] += g[o];
                          if (gb) (*gb)[j] += g[o];
                      });
                  },
                  "add");
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "sub");
    auto plan = detail::plan_broadcast(a.shape(), b.shape(), "sub");
    Tensor y(plan.out);
    const Tensor &x1 = a.value(), &x2 = b.value();
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x1[i] - x2[j]; });
    t.charge(flop_cost::kElementwise * y.size());
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(y), {ia, ib},
                  [ia, ib, plan](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      Tensor* ga = tp.node(ia).requires_grad ? &tp.grad_buffer(ia) : nullptr;
                      Tensor* gb = tp.node(ib).requires_grad ? &tp.grad_buffer(ib) : nullptr;
                      detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                          if (ga) (*ga)[i] += g[o];
                          if (gb) (*gb)[j] -= g[o];
                      });
                  },
                  "sub");
}

inline Var mul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "mul");
    auto plan = detail::plan_broadcast(a.shape(), b.shape(), "mul");
    Tensor y(plan.out);
    const Tensor &x1 = a.value(), &x2 = b.value();
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { y[o] = x1[i] * x2[j]; });
    t.charge(flop_cost::kElementwise * y.size());
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(y), {ia, ib},
                  [ia, ib, plan](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const Tensor &va = tp.node(ia).value, &vb = tp.node(ib).value;
                      Tensor* ga = tp.node(ia).requires_grad ? &tp.grad_buffer(ia) : nullptr;
                      Tensor* gb = tp.node(ib).requires_grad ? &tp.grad_buffer(ib) : nullptr;
                      detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
                          if (ga) (*ga)[i] += g[o] * vb[j];
                          if (gb) (*gb)[j] += g[o] * va[i];
                      });
                  },
                  "mul");
}

inline Var scale(Var a, double c) {
    return detail::unary(a, "scale", flop_cost::kElementwise, [c](double x) { return c * x; },
                         [c](double, double) { return c; });
}

/// a + c for a scalar constant c.
inline Var shift(Var a, double c) {
    return detail::unary(a, "shift", flop_cost::kElementwise, [c](double x) { return x + c; },
                         [](double, double) { return 1.0; });
}

inline Var sigmoid(Var a) {
    return detail::unary(
        a, "sigmoid", flop_cost::kSigmoid,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
    return detail::unary(a, "tanh", flop_cost::kTanh, [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
    return detail::unary(a, "relu", flop_cost::kElementwise, [](double x) { return x > 0 ? x : 0.0; },
                         [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

/// |x| with derivative 0 at x == 0.
inline Var abs(Var a) {
    return detail::unary(a, "abs", flop_cost::kElementwise, [](double x) { return std::abs(x); },
                         [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

/// Derivative is 1 strictly inside (lo, hi) and 0 elsewhere.
inline Var clamp(Var a, double lo, double hi) {
    return detail::unary(a, "clamp", flop_cost::kClamp, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                         [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- linear algebra

/// (m×k)·(k×n) → m×n
inline Var matmul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "matmul");
    const Shape &sa = a.shape(), &sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) throw ShapeError("matmul", {sa, sb});
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    Tensor y(Shape{m, n});
    const auto &A = a.value().data(), &B = b.value().data();
    auto& Y = y.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) Y[i * n + j] += av * B[p * n + j];
        }
    t.charge(flop_cost::kMac * m * k * n);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(y), {ia, ib},
                  [ia, ib, m, k, n](Tape& tp, std::size_t self) {
                      const auto& G = tp.node(self).grad.data();
                      const auto &A = tp.node(ia).value.data(), &B = tp.node(ib).value.data();
                      if (tp.node(ia).requires_grad) {
                          auto& GA = tp.grad_buffer(ia).data();
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  double s = 0;
                                  for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
                                  GA[i * k + p] += s;
                              }
                      }
                      if (tp.node(ib).requires_grad) {
                          auto& GB = tp.grad_buffer(ib).data();
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  const double av = A[i * k + p];
                                  for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
                              }
                      }
                  },
                  "matmul");
}

/// (b×m×k)·(b×k×n) → b×m×n
inline Var bmm(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "bmm");
    const Shape &sa = a.shape(), &sb = b.shape();
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) throw ShapeError("bmm", {sa, sb});
    const std::size_t bs = sa[0], m = sa[1], k = sa[2], n = sb[2];
    Tensor y(Shape{bs, m, n});
    const auto &A = a.value().data(), &B = b.value().data();
    auto& Y = y.data();
    for (std::size_t q = 0; q < bs; ++q) {
        const double* Aq = A.data() + q * m * k;
        const double* Bq = B.data() + q * k * n;
        double* Yq = Y.data() + q * m * n;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = Aq[i * k + p];
                for (std::size_t j = 0; j < n; ++j) Yq[i * n + j] += av * Bq[p * n + j];
            }
    }
    t.charge(flop_cost::kMac * bs * m * k * n);
    const std::size_t ia = a.id(), ib = b.id();
    return t.push(std::move(y), {ia, ib},
                  [ia, ib, bs, m, k, n](Tape& tp, std::size_t self) {
                      const auto& G = tp.node(self).grad.data();
                      const auto &A = tp.node(ia).value.data(), &B = tp.node(ib).value.data();
                      double* GA = tp.node(ia).requires_grad ? tp.grad_buffer(ia).data().data() : nullptr;
                      double* GB = tp.node(ib).requires_grad ? tp.grad_buffer(ib).data().data() : nullptr;
                      for (std::size_t q = 0; q < bs; ++q) {
                          const double* Gq = G.data() + q * m * n;
                          const double* Aq = A.data() + q * m * k;
                          const double* Bq = B.data() + q * k * n;
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t p = 0; p < k; ++p) {
                                  if (GA) {
                                      double s = 0;
                                      for (std::size_t j = 0; j < n; ++j) s += Gq[i * n + j] * Bq[p * n + j];
                                      GA[q * m * k + i * k + p] += s;
                                  }
                                  if (GB) {
                                      const double av = Aq[i * k + p];
                                      for (std::size_t j = 0; j < n; ++j) GB[q * k * n + p * n + j] += av * Gq[i * n + j];
                                  }
                              }
                      }
                  },
                  "bmm");
}

/// Graph aggregation: Y[i, ...] = Σ_j A[i,j] · X[j, ...] with A of shape N×N
/// and X of shape N×(anything). Exactly-zero entries of A are skipped, so
/// pruned edges contribute neither arithmetic nor FLOPs.
inline Var aggregate(Var adj, Var x) {
    Tape& t = detail::same_tape(adj, x, "aggregate");
    const Shape &sa = adj.shape(), &sx = x.shape();
    if (sa.size() != 2 || sa[0] != sa[1] || sx.empty() || sx[0] != sa[0]) throw ShapeError("aggregate", {sa, sx});
    const std::size_t n = sa[0];
    const std::size_t cols = x.value().size() / std::max<std::size_t>(n, 1);
    Tensor y(sx);
    const auto &A = adj.value().data(), &X = x.value().data();
    auto& Y = y.data();
    std::uint64_t nnz = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double w = A[i * n + j];
            if (w == 0.0) continue;
            ++nnz;
            for (std::size_t c = 0; c < cols; ++c) Y[i * cols + c] += w * X[j * cols + c];
        }
    t.charge(flop_cost::kMac * nnz * cols);
    const std::size_t ia = adj.id(), ix = x.id();
    return t.push(std::move(y), {ia, ix},
                  [ia, ix, n, cols](Tape& tp, std::size_t self) {
                      const auto& G = tp.node(self).grad.data();
                      const auto &A = tp.node(ia).value.data(), &X = tp.node(ix).value.data();
                      double* GA = tp.node(ia).requires_grad ? tp.grad_buffer(ia).data().data() : nullptr;
                      double* GX = tp.node(ix).requires_grad ? tp.grad_buffer(ix).data().data() : nullptr;
                      for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < n; ++j) {
                              const double w = A[i * n + j];
                              if (GA) {
                                  double s = 0;
                                  for (std::size_t c = 0; c < cols; ++c) s += G[i * cols + c] * X[j * cols + c];
                                  GA[i * n + j] += s;
                              }
                              if (GX && w != 0.0)
                                  for (std::size_t c = 0; c < cols; ++c) GX[j * cols + c] += w * G[i * cols + c];
                          }
                  },
                  "aggregate");
}

// ---------------------------------------------------------------- layout

inline Var reshape(Var a, Shape shape) {
    Tape& t = *a.tape();
    Tensor y = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  },
                  "reshape");
}

/// Generic axis permutation; out.shape[i] = in.shape[axes[i]].
inline Var permute(Var a, std::vector<std::size_t> axes) {
    Tape& t = *a.tape();
    const Shape& s = a.shape();
    if (axes.size() != s.size()) throw ShapeError("permute", {s}, "axes rank mismatch");
    std::vector<bool> seen(s.size(), false);
    Shape out(s.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= s.size() || seen[axes[i]]) throw ShapeError("permute", {s}, "invalid axes");
        seen[axes[i]] = true;
        out[i] = s[axes[i]];
    }
    const auto in_st = detail::strides_of(s);
    std::vector<std::size_t> src_st(s.size());
    for (std::size_t i = 0; i < axes.size(); ++i) src_st[i] = in_st[axes[i]];
    // map[o] = source flat index of output element o
    const std::size_t total = shape_numel(out);
    auto map = std::make_shared<std::vector<std::size_t>>(total);
    {
        std::vector<std::size_t> idx(out.size(), 0);
        std::size_t src = 0;
        for (std::size_t o = 0; o < total; ++o) {
            (*map)[o] = src;
            for (std::size_t ax = out.size(); ax-- > 0;) {
                if (++idx[ax] < out[ax]) {
                    src += src_st[ax];
                    break;
                }
                src -= src_st[ax] * (out[ax] - 1);
                idx[ax] = 0;
            }
        }
    }
    Tensor y(out);
    const Tensor& x = a.value();
    for (std::size_t o = 0; o < total; ++o) y[o] = x[(*map)[o]];
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia, map](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t o = 0; o < g.size(); ++o) ga[(*map)[o]] += g[o];
                  },
                  "permute");
}

inline Var transpose(Var a) {
    if (a.shape().size() != 2) throw ShapeError("transpose", {a.shape()});
    return permute(a, {1, 0});
}

/// Concatenates along the last axis; leading axes must agree.
inline Var concat_last(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last: no inputs");
    Tape& t = *parts[0].tape();
    Shape lead = parts[0].shape();
    if (lead.empty()) throw ShapeError("concat_last", {lead}, "scalar input");
    lead.pop_back();
    std::size_t total_last = 0;
    std::vector<std::size_t> widths, ids;
    for (const Var& p : parts) {
        Shape s = p.shape();
        if (p.tape() != &t || s.empty()) throw ShapeError("concat_last", {s});
        const std::size_t w = s.back();
        s.pop_back();
        if (s != lead) throw ShapeError("concat_last", {parts[0].shape(), p.shape()});
        widths.push_back(w);
        ids.push_back(p.id());
        total_last += w;
    }
    const std::size_t rows = shape_numel(lead);
    Shape out = lead;
    out.push_back(total_last);
    Tensor y(out);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& x = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[k]; ++c) y[r * total_last + off + c] = x[r * widths[k] + c];
        off += widths[k];
    }
    return t.push(std::move(y), ids,
                  [ids, widths, rows, total_last](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      std::size_t off = 0;
                      for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (tp.node(ids[k]).requires_grad) {
                              Tensor& gk = tp.grad_buffer(ids[k]);
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t c = 0; c < widths[k]; ++c)
                                      gk[r * widths[k] + c] += g[r * total_last + off + c];
                          }
                          off += widths[k];
                      }
                  },
                  "concat_last");
}

inline Var concat_last(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat_last(std::span<const Var>(v));
}

/// Columns [begin, end) of the last axis.
inline Var slice_last(Var a, std::size_t begin, std::size_t end) {
    Tape& t = *a.tape();
    const Shape& s = a.shape();
    if (s.empty() || begin >= end || end > s.back())
        throw ShapeError("slice_last", {s}, "range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
    const std::size_t w = s.back(), nw = end - begin, rows = a.value().size() / w;
    Shape out = s;
    out.back() = nw;
    Tensor y(out);
    const Tensor& x = a.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < nw; ++c) y[r * nw + c] = x[r * w + begin + c];
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia, rows, w, nw, begin](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t c = 0; c < nw; ++c) ga[r * w + begin + c] += g[r * nw + c];
                  },
                  "slice_last");
}

/// Flat gather: y[k] = a.flat[indices[k]], shape {indices.size()}.
inline Var gather(Var a, std::vector<std::size_t> indices) {
    Tape& t = *a.tape();
    const Tensor& x = a.value();
    Tensor y(Shape{indices.size()});
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= x.size()) throw ShapeError("gather", {x.shape()}, "index out of range");
        y[k] = x[indices[k]];
    }
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia, idx = std::move(indices)](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t k = 0; k < idx.size(); ++k) ga[idx[k]] += g[k];
                  },
                  "gather");
}

// ---------------------------------------------------------------- reductions

inline Var sum(Var a) {
    Tape& t = *a.tape();
    double s = 0;
    for (double v : a.value().data()) s += v;
    t.charge(a.value().size());
    const std::size_t ia = a.id();
    return t.push(Tensor::scalar(s), {ia},
                  [ia](Tape& tp, std::size_t self) {
                      const double g = tp.node(self).grad[0];
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                  },
                  "sum");
}

inline Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean", {a.shape()}, "empty");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Mean over one axis; that axis is removed from the output shape.
inline Var mean_axis(Var a, std::size_t axis) {
    Tape& t = *a.tape();
    const Shape& s = a.shape();
    if (axis >= s.size()) throw ShapeError("mean_axis", {s}, "axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Shape out = s;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    Tensor y(out);
    const Tensor& x = a.value();
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i) y[o * inner + i] += x[(o * len + l) * inner + i];
    for (auto& v : y.data()) v *= inv;
    t.charge(x.size() + y.size());
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia, outer, len, inner, inv](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t o = 0; o < outer; ++o)
                          for (std::size_t l = 0; l < len; ++l)
                              for (std::size_t i = 0; i < inner; ++i) ga[(o * len + l) * inner + i] += g[o * inner + i] * inv;
                  },
                  "mean_axis");
}

// ---------------------------------------------------------------- normalisation

/// Numerically stable softmax over the last axis.
inline Var softmax_last(Var a) {
    Tape& t = *a.tape();
    const Shape& s = a.shape();
    if (s.empty() || s.back() == 0) throw ShapeError("softmax_last", {s});
    const std::size_t w = s.back(), rows = a.value().size() / w;
    Tensor y(s);
    const Tensor& x = a.value();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < w; ++c) mx = std::max(mx, x[r * w + c]);
        double z = 0;
        for (std::size_t c = 0; c < w; ++c) z += (y[r * w + c] = std::exp(x[r * w + c] - mx));
        for (std::size_t c = 0; c < w; ++c) y[r * w + c] /= z;
    }
    t.charge(flop_cost::kSoftmax * x.size());
    const std::size_t ia = a.id();
    return t.push(std::move(y), {ia},
                  [ia, rows, w](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const Tensor& yv = tp.node(self).value;
                      Tensor& ga = tp.grad_buffer(ia);
                      for (std::size_t r = 0; r < rows; ++r) {
                          double dot = 0;
                          for (std::size_t c = 0; c < w; ++c) dot += g[r * w + c] * yv[r * w + c];
                          for (std::size_t c = 0; c < w; ++c) ga[r * w + c] += yv[r * w + c] * (g[r * w + c] - dot);
                      }
                  },
                  "softmax_last");
}

/// Layer normalisation over the last axis with learnable gain and bias
/// (both shaped {width}).
inline Var layer_norm_last(Var a, Var gain, Var bias, double eps = 1e-5) {
    Tape& t = *a.tape();
    const Shape& s = a.shape();
    if (s.empty() || gain.shape() != Shape{s.back()} || bias.shape() != Shape{s.back()})
        throw ShapeError("layer_norm_last", {s, gain.shape(), bias.shape()});
    const std::size_t w = s.back(), rows = a.value().size() / w;
    const Tensor &x = a.value(), &gv = gain.value(), &bv = bias.value();
    Tensor y(s);
    auto xhat = std::make_shared<Tensor>(s);
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0;
        for (std::size_t c = 0; c < w; ++c) mu += x[r * w + c];
        mu /= static_cast<double>(w);
        double var = 0;
        for (std::size_t c = 0; c < w; ++c) var += (x[r * w + c] - mu) * (x[r * w + c] - mu);
        var /= static_cast<double>(w);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < w; ++c) {
            const double h = (x[r * w + c] - mu) * is;
            (*xhat)[r * w + c] = h;
            y[r * w + c] = h * gv[c] + bv[c];
        }
    }
    t.charge(flop_cost::kLayerNorm * x.size() + flop_cost::kLayerNormRow * rows);
    const std::size_t ia = a.id(), ig = gain.id(), ib = bias.id();
    return t.push(std::move(y), {ia, ig, ib},
                  [ia, ig, ib, rows, w, xhat, inv_std](Tape& tp, std::size_t self) {
                      const Tensor& g = tp.node(self).grad;
                      const Tensor& gv = tp.node(ig).value;
                      if (tp.node(ig).requires_grad) {
                          Tensor& gg = tp.grad_buffer(ig);
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < w; ++c) gg[c] += g[r * w + c] * (*xhat)[r * w + c];
                      }
                      if (tp.node(ib).requires_grad) {
                          Tensor& gb = tp.grad_buffer(ib);
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < w; ++c) gb[c] += g[r * w + c];
                      }
                      if (tp.node(ia).requires_grad) {
                          Tensor& ga = tp.grad_buffer(ia);
                          const double fw = static_cast<double>(w);
                          for (std::size_t r = 0; r < rows; ++r) {
                              double sum_d = 0, sum_dx = 0;
                              for (std::size_t c = 0; c < w; ++c) {
                                  const double d = g[r * w + c] * gv[c];
                                  sum_d += d;
                                  sum_dx += d * (*xhat)[r * w + c];
                              }
                              for (std::size_t c = 0; c < w; ++c) {
                                  const double d = g[r * w + c] * gv[c];
                                  ga[r * w + c] += (*inv_std)[r] / fw * (fw * d - sum_d - (*xhat)[r * w + c] * sum_dx);
                              }
                          }
                      }
                  },
                  "layer_norm_last");
}

}  // namespace agsl::ops
