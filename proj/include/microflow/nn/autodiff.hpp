#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/nn/params.hpp"
#include "microflow/nn/tensor.hpp"

namespace microflow::nn {

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode autodiff tape. Nodes are appended in evaluation order; backward
// walks them in reverse, so gradient accumulation order is fixed and results
// are bit-reproducible. A tape built with grad disabled records values only.
class Tape {
public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(ModelParams* params = nullptr, bool grad_enabled = true)
      : params_(params), grad_enabled_(grad_enabled) {
    nodes_.reserve(256);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor t) {
    require_finite(t, "graph input");
    return push(std::move(t), false, {});
  }

  Var param(ParamId id) {
    if (params_ == nullptr) throw InvariantError("tape has no parameter store");
    auto& entry = (*params_)[id];
    Node n;
    n.ref = &entry.value;
    n.needs_grad = grad_enabled_ && entry.trainable;
    n.param = static_cast<std::ptrdiff_t>(id);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Var param(const std::string& name) {
    if (params_ == nullptr) throw InvariantError("tape has no parameter store");
    return param(params_->id(name));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref != nullptr ? *n.ref : n.value;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Records an op result. `back` receives the output gradient and must add
  // into its inputs' grad() buffers.
  Var push(Tensor value, bool needs_grad, Backward back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  // Gradient buffer for node `id`, allocated on first use.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 && value(id).size() != 0) {
      const Tensor& v = value(id);
      n.grad = Tensor(v.rows(), v.cols());
    }
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 and propagates. Parameter gradients are added
  // into the ModelParams accumulators.
  void backward(Var root) {
    if (root.tape != this) throw InvariantError("backward on foreign variable");
    const Tensor& rv = value(root.id);
    if (rv.size() != 1) throw DimensionError("backward requires a scalar root, got " + rv.shape_string());
    if (!std::isfinite(rv.item())) throw NumericError("non-finite loss");
    if (!nodes_[root.id].needs_grad) return;
    grad(root.id)[0] += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.param >= 0) {
        Tensor& acc = (*params_)[static_cast<ParamId>(n.param)].grad;
        auto src = n.grad.values();
        auto dst = acc.values();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
      } else if (n.back) {
        // Every consumer of node i sits later on the tape, so its gradient
        // is complete and can be handed off.
        const Tensor g = std::move(n.grad);
        n.back(*this, g);
      }
    }
  }

private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool needs_grad = false;
    std::ptrdiff_t param = -1;
    Backward back;
  };

  ModelParams* params_;
  bool grad_enabled_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw InvariantError("variables from different tapes");
  return *a.tape;
}

inline void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

inline std::string shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + " shape mismatch: " + a.shape_string() + " vs " + b.shape_string();
}

// Elementwise unary op; `df` is the derivative as a function of the input.
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ai = a.id;
  return t.push(std::move(y), t.needs_grad(ai), [ai, df](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    Tensor& gx = tp.grad(ai);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) throw DimensionError(detail::shapes("matmul", A, B));
  Tensor out(A.rows(), B.cols());
  kernel::gemm_nn(A, B, out);
  const std::size_t ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi), [ai, bi](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(ai)) kernel::gemm_nt(g, tp.value(bi), tp.grad(ai));
    if (tp.needs_grad(bi)) kernel::gemm_tn(tp.value(ai), g, tp.grad(bi));
  });
}

// a (m x k) times b^T where b is (n x k).
inline Var matmul_bt(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) throw DimensionError(detail::shapes("matmul_bt", A, B));
  Tensor out(A.rows(), B.rows());
  kernel::gemm_nt(A, B, out);
  const std::size_t ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi), [ai, bi](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(ai)) kernel::gemm_nn(g, tp.value(bi), tp.grad(ai));
    if (tp.needs_grad(bi)) kernel::gemm_tn(g, tp.value(ai), tp.grad(bi));
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary ops. `add` also broadcasts a 1 x n row over an m x n
// matrix and a 1 x 1 scalar over anything.
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  enum class Mode { Same, Row, Scalar } mode;
  if (A.same_shape(B)) {
    mode = Mode::Same;
  } else if (B.rows() == 1 && B.cols() == A.cols()) {
    mode = Mode::Row;
  } else if (B.size() == 1) {
    mode = Mode::Scalar;
  } else {
    throw DimensionError(detail::shapes("add", A, B));
  }
  Tensor out = A;
  const std::size_t n = A.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += mode == Mode::Same ? B[i] : mode == Mode::Row ? B[i % n] : B[0];
  }
  const std::size_t ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi), [ai, bi, mode, n](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(ai)) detail::add_into(tp.grad(ai), g);
    if (tp.needs_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[mode == Mode::Same ? i : mode == Mode::Row ? i % n : 0] += g[i];
      }
    }
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) throw DimensionError(detail::shapes("sub", A, B));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  const std::size_t ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi), [ai, bi](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(ai)) detail::add_into(tp.grad(ai), g);
    if (tp.needs_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

// Elementwise (Hadamard) product; `b` may also be a broadcast row.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool row = !A.same_shape(B);
  if (row && !(B.rows() == 1 && B.cols() == A.cols())) throw DimensionError(detail::shapes("mul", A, B));
  const std::size_t n = A.cols();
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= row ? B[i % n] : B[i];
  const std::size_t ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi), [ai, bi, row, n](Tape& tp, const Tensor& g) {
    const Tensor& A = tp.value(ai);
    const Tensor& B = tp.value(bi);
    if (tp.needs_grad(ai)) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (row ? B[i % n] : B[i]);
    }
    if (tp.needs_grad(bi)) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[row ? i % n : i] += g[i] * A[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Scalar ops
// ---------------------------------------------------------------------------

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  const std::size_t ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, s](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (auto& v : out.values()) v += s;
  const std::size_t ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape& tp, const Tensor& g) {
    detail::add_into(tp.grad(ai), g);
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_scalar(double x) {
  // log(1 + e^x) without overflow
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline Var sigmoid(Var a) {
  return detail::unary(a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double x) {
    const double y = std::tanh(x);
    return 1.0 - y * y;
  });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

inline Var softplus(Var a) { return detail::unary(a, softplus_scalar, sigmoid_scalar); }

inline Var abs(Var a) {
  return detail::unary(a, [](double x) { return std::fabs(x); },
                       [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Var sqrt(Var a) {
  return detail::unary(a, [](double x) { return std::sqrt(x); },
                       [](double x) { return x > 0 ? 0.5 / std::sqrt(x) : 0.0; });
}

// log(1 + x) for x > -1.
inline Var log1p(Var a) {
  return detail::unary(a, [](double x) { return std::log1p(x); }, [](double x) { return 1.0 / (1.0 + x); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ai = a.id;
  return t.push(Tensor::scalar(s), t.needs_grad(ai), [ai](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(ai);
    for (auto& v : ga.values()) v += g[0];
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

// Squared L2 norm of all entries, as a 1 x 1 tensor.
inline Var sum_squares(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const std::size_t ai = a.id;
  return t.push(Tensor::scalar(s), t.needs_grad(ai), [ai](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * x[i] * g[0];
  });
}

// Per-row sum: (m x n) -> (m x 1).
inline Var row_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row_span(r)) s += v;
    out[r] = s;
  }
  const std::size_t ai = a.id, n = x.cols();
  return t.push(std::move(out), t.needs_grad(ai), [ai, n](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i / n];
  });
}

// Column-wise max over rows: (m x n) -> (1 x n). Ties go to the first row.
inline Var row_maxpool(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  if (x.rows() == 0) throw DimensionError("row_maxpool over zero rows");
  Tensor out(1, x.cols());
  std::vector<std::size_t> arg(x.cols(), 0);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double best = x(0, c);
    for (std::size_t r = 1; r < x.rows(); ++r) {
      if (x(r, c) > best) {
        best = x(r, c);
        arg[c] = r;
      }
    }
    out[c] = best;
  }
  const std::size_t ai = a.id, n = x.cols();
  return t.push(std::move(out), t.needs_grad(ai), [ai, n, arg = std::move(arg)](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(ai);
    for (std::size_t c = 0; c < n; ++c) ga(arg[c], c) += g[c];
  });
}

// Softmax along each row. Entries equal to -inf-like masks (<= -1e9) get
// probability exactly 0 when at least one entry in the row is finite-scale.
inline Var row_softmax(Var a) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row_span(r);
    auto out = y.row_span(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      s += out[c];
    }
    for (auto& v : out) v /= s;
  }
  const std::size_t ai = a.id;
  const std::size_t yi = t.size();  // index this node will get
  return t.push(std::move(y), t.needs_grad(ai), [ai, yi](Tape& tp, const Tensor& g) {
    const Tensor& y = tp.value(yi);
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row_span(r);
      auto gr = g.row_span(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      for (std::size_t c = 0; c < yr.size(); ++c) ga(r, c) += yr[c] * (gr[c] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// Horizontal concatenation of tensors with equal row counts.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& t = *parts[0].tape;
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool needs = false;
  for (const Var& p : parts) {
    if (p.tape != &t) throw InvariantError("variables from different tapes");
    if (p.rows() != m) throw DimensionError(detail::shapes("concat_cols", parts[0].value(), p.value()));
    n += p.cols();
    needs = needs || t.needs_grad(p.id);
  }
  Tensor out(m, n);
  std::vector<std::pair<std::size_t, std::size_t>> layout;  // (node id, column offset)
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy(v.row_span(r).begin(), v.row_span(r).end(), out.row_span(r).begin() + static_cast<std::ptrdiff_t>(off));
    }
    layout.emplace_back(p.id, off);
    off += v.cols();
  }
  return t.push(std::move(out), needs, [layout = std::move(layout), m](Tape& tp, const Tensor& g) {
    for (const auto& [id, off] : layout) {
      if (!tp.needs_grad(id)) continue;
      Tensor& gp = tp.grad(id);
      const std::size_t w = gp.cols();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
      }
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

// Vertical concatenation of tensors with equal column counts.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& t = *parts[0].tape;
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  bool needs = false;
  for (const Var& p : parts) {
    if (p.cols() != n) throw DimensionError(detail::shapes("concat_rows", parts[0].value(), p.value()));
    m += p.rows();
    needs = needs || t.needs_grad(p.id);
  }
  Tensor out(m, n);
  std::vector<std::pair<std::size_t, std::size_t>> layout;  // (node id, row offset)
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off * n));
    layout.emplace_back(p.id, off);
    off += v.rows();
  }
  return t.push(std::move(out), needs, [layout = std::move(layout), n](Tape& tp, const Tensor& g) {
    for (const auto& [id, off] : layout) {
      if (!tp.needs_grad(id)) continue;
      Tensor& gp = tp.grad(id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off * n + i];
    }
  });
}

// Columns [start, start + len).
inline Var slice_cols(Var a, std::size_t start, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  if (start + len > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for " + x.shape_string());
  }
  Tensor out(x.rows(), len);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < len; ++c) out(r, c) = x(r, start + c);
  }
  const std::size_t ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, start, len](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(ai);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < len; ++c) ga(r, start + c) += g(r, c);
    }
  });
}

// Repeats a 1 x n row m times.
inline Var repeat_rows(Var row, std::size_t m) {
  Tape& t = *row.tape;
  const Tensor& x = row.value();
  if (x.rows() != 1) throw DimensionError("repeat_rows expects a row, got " + x.shape_string());
  Tensor out(m, x.cols());
  for (std::size_t r = 0; r < m; ++r) std::copy(x.values().begin(), x.values().end(), out.row_span(r).begin());
  const std::size_t ai = row.id, n = x.cols();
  return t.push(std::move(out), t.needs_grad(ai), [ai, n](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i % n] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Operator sugar
// ---------------------------------------------------------------------------

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace microflow::nn
