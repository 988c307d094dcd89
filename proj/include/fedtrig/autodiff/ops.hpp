#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedtrig/autodiff/graph.hpp"

// Differentiable primitives. Each op computes its value eagerly and records
// a closure that maps the output gradient onto its inputs.
namespace fedtrig::ad {

namespace detail {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ArgumentError("Var is not bound to a graph");
  return *a.graph;
}

inline Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ArgumentError("operands live on different graphs");
  return graph_of(a);
}

inline void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
}

inline void require_rank(const char* op, Var a, std::size_t lo, std::size_t hi) {
  const std::size_t r = a.shape().size();
  if (r < lo || r > hi) {
    throw ShapeError(std::string(op) + ": unsupported rank " + std::to_string(r));
  }
}

// Accumulates `scale * upstream` into input `id` when it needs a gradient.
inline void accumulate(const Graph& g, GradBuffers& grads, std::size_t id,
                       std::span<const double> upstream, double scale = 1.0) {
  if (!g.requires_grad(id)) return;
  auto dst = grads.at(id, upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) dst[i] += scale * upstream[i];
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_rank("matmul", a, 2, 2);
  detail::require_rank("matmul", b, 2, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  detail::MutMap(out.data(), m, n).noalias() =
      detail::ConstMap(a.value().data().data(), m, k) *
      detail::ConstMap(b.value().data().data(), k, n);
  const std::size_t ia = a.id, ib = b.id;
  return g.record(
      "matmul", Tensor({m, n}, std::move(out)), {ia, ib},
      [ia, ib, m, k, n](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
        detail::ConstMap dc(up.data(), m, n);
        if (gr.requires_grad(ia)) {
          detail::MutMap da(grads.at(ia, m * k).data(), m, k);
          da.noalias() += dc * detail::ConstMap(gr.value(ib).data().data(), k, n).transpose();
        }
        if (gr.requires_grad(ib)) {
          detail::MutMap db(grads.at(ib, k * n).data(), k, n);
          db.noalias() += detail::ConstMap(gr.value(ia).data().data(), m, k).transpose() * dc;
        }
      });
}

inline Var add(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record("add", Tensor(a.shape(), std::move(out)), {ia, ib},
                  [ia, ib](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    detail::accumulate(gr, grads, ia, up);
                    detail::accumulate(gr, grads, ib, up);
                  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record("sub", Tensor(a.shape(), std::move(out)), {ia, ib},
                  [ia, ib](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    detail::accumulate(gr, grads, ia, up);
                    detail::accumulate(gr, grads, ib, up, -1.0);
                  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record(
      "mul", Tensor(a.shape(), std::move(out)), {ia, ib},
      [ia, ib](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
        const Tensor& av = gr.value(ia);
        const Tensor& bv = gr.value(ib);
        if (gr.requires_grad(ia)) {
          auto da = grads.at(ia, up.size());
          for (std::size_t i = 0; i < up.size(); ++i) da[i] += up[i] * bv[i];
        }
        if (gr.requires_grad(ib)) {
          auto db = grads.at(ib, up.size());
          for (std::size_t i = 0; i < up.size(); ++i) db[i] += up[i] * av[i];
        }
      });
}

// x (m x n) + bias (n), the bias repeated on every row.
inline Var add_rowwise(Var x, Var bias) {
  Graph& g = detail::graph_of(x, bias);
  detail::require_rank("add_rowwise", x, 2, 2);
  detail::require_rank("add_rowwise", bias, 1, 1);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.shape()[0] != n) throw ShapeError("add_rowwise: bias length mismatch");
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x.value()[r * n + c] + bias.value()[c];
  }
  const std::size_t ix = x.id, ib = bias.id;
  return g.record("add_rowwise", Tensor({m, n}, std::move(out)), {ix, ib},
                  [ix, ib, m, n](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    detail::accumulate(gr, grads, ix, up);
                    if (gr.requires_grad(ib)) {
                      auto db = grads.at(ib, n);
                      for (std::size_t r = 0; r < m; ++r) {
                        for (std::size_t c = 0; c < n; ++c) db[c] += up[r * n + c];
                      }
                    }
                  });
}

inline Var scale(Var a, double s) {
  Graph& g = detail::graph_of(a);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.value()[i];
  const std::size_t ia = a.id;
  return g.record("scale", Tensor(a.shape(), std::move(out)), {ia},
                  [ia, s](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    detail::accumulate(gr, grads, ia, up, s);
                  });
}

inline Var add_scalar(Var a, double s) {
  Graph& g = detail::graph_of(a);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
  const std::size_t ia = a.id;
  return g.record("add_scalar", Tensor(a.shape(), std::move(out)), {ia},
                  [ia](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    detail::accumulate(gr, grads, ia, up);
                  });
}

inline Var relu(Var a) {
  Graph& g = detail::graph_of(a);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.value()[i]);
  const std::size_t ia = a.id;
  return g.record("relu", Tensor(a.shape(), std::move(out)), {ia},
                  [ia](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    const Tensor& x = gr.value(ia);
                    auto dx = grads.at(ia, up.size());
                    for (std::size_t i = 0; i < up.size(); ++i) {
                      if (x[i] > 0.0) dx[i] += up[i];
                    }
                  });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Graph& g = detail::graph_of(a);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(a.value()[i]);
  const std::size_t ia = a.id;
  const std::size_t self = g.size();
  return g.record("sigmoid", Tensor(a.shape(), std::move(out)), {ia},
                  [ia, self](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    const Tensor& y = gr.value(self);
                    auto dx = grads.at(ia, up.size());
                    for (std::size_t i = 0; i < up.size(); ++i) dx[i] += up[i] * y[i] * (1.0 - y[i]);
                  });
}

// Elementwise clamp to [lo, hi]; the gradient passes only strictly inside.
inline Var clamp(Var a, double lo, double hi) {
  Graph& g = detail::graph_of(a);
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.value()[i], lo, hi);
  const std::size_t ia = a.id;
  return g.record("clamp", Tensor(a.shape(), std::move(out)), {ia},
                  [ia, lo, hi](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    const Tensor& x = gr.value(ia);
                    auto dx = grads.at(ia, up.size());
                    for (std::size_t i = 0; i < up.size(); ++i) {
                      if (x[i] > lo && x[i] < hi) dx[i] += up[i];
                    }
                  });
}

inline Tensor softmax_value(const Tensor& logits) {
  const std::size_t c = logits.last_extent();
  if (logits.rank() < 1 || logits.rank() > 2 || c < 2) {
    throw ShapeError("softmax: need rank 1 or 2 with last extent >= 2, got " +
                     to_string(logits.shape()));
  }
  logits.check_finite("softmax");
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < logits.outer_count(); ++r) {
    const double* x = logits.data().data() + r * c;
    double* y = out.data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= total;
  }
  return Tensor(logits.shape(), std::move(out));
}

// Softmax over the last axis, stabilized by subtracting the slice max.
inline Var softmax(Var logits) {
  Graph& g = detail::graph_of(logits);
  Tensor value = softmax_value(logits.value());
  const std::size_t c = value.last_extent();
  const std::size_t ia = logits.id;
  const std::size_t self = g.size();
  return g.record("softmax", std::move(value), {ia},
                  [ia, self, c](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    const Tensor& y = gr.value(self);
                    auto dx = grads.at(ia, up.size());
                    for (std::size_t r = 0; r < up.size() / c; ++r) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < c; ++j) dot += up[r * c + j] * y[r * c + j];
                      for (std::size_t j = 0; j < c; ++j) {
                        dx[r * c + j] += y[r * c + j] * (up[r * c + j] - dot);
                      }
                    }
                  });
}

inline Var sum(Var a) {
  Graph& g = detail::graph_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const std::size_t ia = a.id;
  const std::size_t n = a.value().size();
  return g.record("sum", Tensor::scalar(total), {ia},
                  [ia, n](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    if (!gr.requires_grad(ia)) return;
                    auto dx = grads.at(ia, n);
                    for (auto& v : dx) v += up[0];
                  });
}

inline Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// Population standard deviation (divide by the length) of a rank-1 tensor,
// or of each row of a rank-2 tensor (giving one value per row).
inline Var population_std(Var a) {
  Graph& g = detail::graph_of(a);
  detail::require_rank("population_std", a, 1, 2);
  const Tensor& x = a.value();
  const std::size_t c = x.last_extent();
  if (c < 2) throw ArgumentError("population_std: length must be >= 2");
  const std::size_t rows = x.outer_count();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = x.data().data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += p[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (p[j] - mu) * (p[j] - mu);
    out[r] = std::sqrt(var / static_cast<double>(c));
  }
  Tensor value = x.rank() == 1 ? Tensor::scalar(out[0]) : Tensor::vector(std::move(out));
  const std::size_t ia = a.id;
  const std::size_t self = g.size();
  return g.record(
      "population_std", std::move(value), {ia},
      [ia, self, c, rows](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
        const Tensor& x = gr.value(ia);
        const Tensor& s = gr.value(self);
        auto dx = grads.at(ia, rows * c);
        for (std::size_t r = 0; r < rows; ++r) {
          if (s[r] == 0.0) continue;  // subgradient 0 at a constant slice
          const double* p = x.data().data() + r * c;
          double mu = 0.0;
          for (std::size_t j = 0; j < c; ++j) mu += p[j];
          mu /= static_cast<double>(c);
          const double k = up[r] / (static_cast<double>(c) * s[r]);
          for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += k * (p[j] - mu);
        }
      });
}

inline constexpr double kLogClamp = 1e-12;

// Mean over rows of -ln(max(probs[row, label_row], 1e-12)). A rank-1 input
// is a single row.
inline Var cross_entropy(Var probs, std::span<const std::size_t> labels) {
  Graph& g = detail::graph_of(probs);
  detail::require_rank("cross_entropy", probs, 1, 2);
  const Tensor& p = probs.value();
  const std::size_t c = p.last_extent();
  const std::size_t rows = p.outer_count();
  if (labels.size() != rows) throw ArgumentError("cross_entropy: one label per row required");
  for (std::size_t lab : labels) {
    if (lab >= c) {
      throw ArgumentError("cross_entropy: label " + std::to_string(lab) +
                          " out of range for " + std::to_string(c) + " classes");
    }
  }
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    total -= std::log(std::max(p[r * c + labels[r]], kLogClamp));
  }
  std::vector<std::size_t> labs(labels.begin(), labels.end());
  const std::size_t ia = probs.id;
  return g.record(
      "cross_entropy", Tensor::scalar(total / static_cast<double>(rows)), {ia},
      [ia, c, rows, labs = std::move(labs)](const Graph& gr, std::span<const double> up,
                                            GradBuffers& grads) {
        const Tensor& p = gr.value(ia);
        auto dx = grads.at(ia, rows * c);
        for (std::size_t r = 0; r < rows; ++r) {
          const double v = p[r * c + labs[r]];
          if (v > kLogClamp) dx[r * c + labs[r]] -= up[0] / (static_cast<double>(rows) * v);
        }
      });
}

inline Var cross_entropy(Var probs, std::size_t label) {
  return cross_entropy(probs, std::span<const std::size_t>(&label, 1));
}

inline Var reshape(Var a, Shape shape) {
  Graph& g = detail::graph_of(a);
  Tensor value = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return g.record("reshape", std::move(value), {ia},
                  [ia](const Graph& gr, std::span<const double> up, GradBuffers& grads) {
                    detail::accumulate(gr, grads, ia, up);
                  });
}

// Concatenation of rank-1 tensors, or of rank-2 tensors along axis 0 (rows)
// or axis 1 (columns).
inline Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  Graph& g = detail::graph_of(parts[0]);
  const std::size_t rank = parts[0].shape().size();
  if (rank < 1 || rank > 2 || axis >= rank) throw ShapeError("concat: unsupported rank/axis");
  for (const Var& p : parts) {
    if (p.graph != &g) throw ArgumentError("concat: operands on different graphs");
    if (p.shape().size() != rank) throw ShapeError("concat: rank mismatch");
    if (rank == 2 && p.shape()[1 - axis] != parts[0].shape()[1 - axis]) {
      throw ShapeError("concat: off-axis extent mismatch");
    }
  }
  // Rank-1 and row concatenation are plain appends in row-major order.
  const bool append = rank == 1 || axis == 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  std::size_t along = 0;
  for (const Var& p : parts) {
    ids.push_back(p.id);
    widths.push_back(append ? p.value().size() : p.shape()[1]);
    along += p.shape()[axis];
  }
  const std::size_t rows = append ? 1 : parts[0].shape()[0];
  const std::size_t total_width =
      append ? std::accumulate(widths.begin(), widths.end(), std::size_t{0}) : along;
  std::vector<double> out(rows * total_width);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data().data() + r * widths[k], widths[k],
                  out.data() + r * total_width + offset);
    }
    offset += widths[k];
  }
  Shape shape = parts[0].shape();
  shape[axis] = along;
  return g.record(
      "concat", Tensor(std::move(shape), std::move(out)), ids,
      [ids, widths, rows, total_width](const Graph& gr, std::span<const double> up,
                                       GradBuffers& grads) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (gr.requires_grad(ids[k])) {
            auto dx = grads.at(ids[k], rows * widths[k]);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < widths[k]; ++j) {
                dx[r * widths[k] + j] += up[r * total_width + offset + j];
              }
            }
          }
          offset += widths[k];
        }
      });
}

inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

// Rows [begin, begin + count) of a rank-2 tensor.
inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = detail::graph_of(a);
  detail::require_rank("slice_rows", a, 2, 2);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (count == 0 || begin + count > m) throw ShapeError("slice_rows: range out of bounds");
  std::vector<double> out(a.value().data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          a.value().data().begin() +
                              static_cast<std::ptrdiff_t>((begin + count) * n));
  const std::size_t ia = a.id;
  return g.record("slice_rows", Tensor({count, n}, std::move(out)), {ia},
                  [ia, begin, m, n](const Graph&, std::span<const double> up,
                                    GradBuffers& grads) {
                    auto dx = grads.at(ia, m * n);
                    for (std::size_t i = 0; i < up.size(); ++i) dx[begin * n + i] += up[i];
                  });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace fedtrig::ad
