#include "pfn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfn/error.hpp"

namespace pfn {

namespace {

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(s));
  }
}

}  // namespace

Var Tape::push(Shape shape, std::vector<double> value,
               std::function<void(Tape&, std::uint32_t)> adjoint, const char* op) {
  for (double v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw Error("invalid tape variable");
  return nodes_[v.id];
}

std::span<const double> Tape::val(std::uint32_t id) const {
  const auto& n = nodes_[id];
  if (n.external != nullptr) return n.external->values();
  return n.value;
}

std::span<double> Tape::grad_of(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(shape_size(n.shape), 0.0);
  return n.grad;
}

const Shape& Tape::shape(Var v) const { return node(v).shape; }

std::span<const double> Tape::value(Var v) const {
  node(v);
  return val(v.id);
}

double Tape::scalar(Var v) const {
  const auto& n = node(v);
  if (shape_size(n.shape) != 1) throw DimensionError("scalar() on " + shape_string(n.shape));
  return val(v.id)[0];
}

double Tape::residual(Var v) const {
  scalar(v);
  return node(v).residual;
}

std::span<const double> Tape::grad(Var v) const { return node(v).grad; }

Var Tape::parameter(Tensor& t) {
  Var v = parameter(static_cast<const Tensor&>(t));
  if (t.has_grad()) nodes_[v.id].sink = &t;
  return v;
}

Var Tape::parameter(const Tensor& t) {
  if (!t.all_finite()) throw NumericError("parameter: non-finite value");
  Node n;
  n.shape = t.shape();
  n.external = &t;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor t) {
  const Shape s = t.shape();
  auto values = std::vector<double>(t.values().begin(), t.values().end());
  return push(s, std::move(values), nullptr, "constant");
}

Var Tape::constant(std::vector<double> values) {
  const auto n = values.size();
  if (n == 0) throw DimensionError("constant: empty vector");
  return push({n}, std::move(values), nullptr, "constant");
}

Var Tape::linear(Var x, Var w, Var b) {
  const Shape ws = shape(w);
  const Shape xs = shape(x);
  require_rank(ws, 2, "linear");
  require_rank(xs, 1, "linear");
  const std::size_t m = ws[0], n = ws[1];
  if (xs[0] != n) {
    throw DimensionError("linear: weight " + shape_string(ws) + " vs input " + shape_string(xs));
  }
  if (b.valid()) require_same(shape(b), Shape{m}, "linear bias");
  auto xv = val(x.id), wv = val(w.id);
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double* wr = wv.data() + r * n;
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xv[c];
    out[r] = acc;
  }
  if (b.valid()) {
    auto bv = val(b.id);
    for (std::size_t r = 0; r < m; ++r) out[r] += bv[r];
  }
  return push({m}, std::move(out),
              [x, w, b, m, n](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto xv = t.val(x.id), wv = t.val(w.id);
                auto gx = t.grad_of(x.id);
                auto gw = t.grad_of(w.id);
                for (std::size_t r = 0; r < m; ++r) {
                  const double gr = g[r];
                  if (gr == 0.0) continue;
                  const double* wr = wv.data() + r * n;
                  double* gwr = gw.data() + r * n;
                  for (std::size_t c = 0; c < n; ++c) {
                    gx[c] += wr[c] * gr;
                    gwr[c] += gr * xv[c];
                  }
                }
                if (b.valid()) {
                  auto gb = t.grad_of(b.id);
                  for (std::size_t r = 0; r < m; ++r) gb[r] += g[r];
                }
              },
              "linear");
}

Var Tape::linear_rows(Var x, Var w, Var b) {
  const Shape ws = shape(w);
  const Shape xs = shape(x);
  require_rank(ws, 2, "linear_rows");
  require_rank(xs, 2, "linear_rows");
  const std::size_t m = ws[0], n = ws[1], rows = xs[0];
  if (xs[1] != n) {
    throw DimensionError("linear_rows: weight " + shape_string(ws) + " vs input " +
                         shape_string(xs));
  }
  if (b.valid()) require_same(shape(b), Shape{m}, "linear_rows bias");
  auto xv = val(x.id), wv = val(w.id);
  std::vector<double> out(rows * m, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = xv.data() + i * n;
    for (std::size_t r = 0; r < m; ++r) {
      const double* wr = wv.data() + r * n;
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xr[c];
      out[i * m + r] = acc;
    }
  }
  if (b.valid()) {
    auto bv = val(b.id);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t r = 0; r < m; ++r) out[i * m + r] += bv[r];
  }
  return push({rows, m}, std::move(out),
              [x, w, b, m, n, rows](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto xv = t.val(x.id), wv = t.val(w.id);
                auto gx = t.grad_of(x.id);
                auto gw = t.grad_of(w.id);
                for (std::size_t i = 0; i < rows; ++i) {
                  const double* xr = xv.data() + i * n;
                  double* gxr = gx.data() + i * n;
                  for (std::size_t r = 0; r < m; ++r) {
                    const double gr = g[i * m + r];
                    if (gr == 0.0) continue;
                    const double* wr = wv.data() + r * n;
                    double* gwr = gw.data() + r * n;
                    for (std::size_t c = 0; c < n; ++c) {
                      gxr[c] += wr[c] * gr;
                      gwr[c] += gr * xr[c];
                    }
                  }
                }
                if (b.valid()) {
                  auto gb = t.grad_of(b.id);
                  for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t r = 0; r < m; ++r) gb[r] += g[i * m + r];
                }
              },
              "linear_rows");
}

Var Tape::add(Var a, Var b) {
  require_same(shape(a), shape(b), "add");
  auto av = val(a.id), bv = val(b.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  double residual = 0.0;
  if (out.size() == 1) {
    const double x = av[0], y = bv[0], z = out[0];
    const double yv = z - x;
    residual = ((x - (z - yv)) + (y - yv)) + nodes_[a.id].residual + nodes_[b.id].residual;
  }
  const Var sum = push(shape(a), std::move(out),
              [a, b](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                auto gb = t.grad_of(b.id);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
              },
              "add");
  nodes_[sum.id].residual = residual;
  return sum;
}

Var Tape::sub(Var a, Var b) {
  require_same(shape(a), shape(b), "sub");
  auto av = val(a.id), bv = val(b.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return push(shape(a), std::move(out),
              [a, b](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                auto gb = t.grad_of(b.id);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
              },
              "sub");
}

Var Tape::hadamard(Var a, Var b) {
  require_same(shape(a), shape(b), "hadamard");
  auto av = val(a.id), bv = val(b.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return push(shape(a), std::move(out),
              [a, b](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto av = t.val(a.id), bv = t.val(b.id);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                auto gb = t.grad_of(b.id);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
              },
              "hadamard");
}

Var Tape::scale(Var a, double factor) {
  auto av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const double residual =
      out.size() == 1 ? std::fma(av[0], factor, -out[0]) + nodes_[a.id].residual * factor : 0.0;
  const Var scaled = push(shape(a), std::move(out),
              [a, factor](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
              },
              "scale");
  nodes_[scaled.id].residual = residual;
  return scaled;
}

Var Tape::one_minus(Var a) {
  auto av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - av[i];
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
              },
              "one_minus");
}

Var Tape::tanh(Var a) {
  auto av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto y = t.val(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
              },
              "tanh");
}

Var Tape::sigmoid(Var a) {
  auto av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    // Evaluate on the side where exp() cannot overflow.
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto y = t.val(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
              },
              "sigmoid");
}

Var Tape::elu(Var a) {
  auto av = val(a.id);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : std::expm1(av[i]);
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto av = t.val(a.id);
                auto y = t.val(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i)
                  ga[i] += g[i] * (av[i] > 0.0 ? 1.0 : y[i] + 1.0);
              },
              "elu");
}

Var Tape::elementwise(std::string_view op, Var a, Var b) {
  const bool binary = op == "add" || op == "sub" || op == "hadamard";
  if (binary && !b.valid()) throw DimensionError(std::string(op) + ": missing second operand");
  if (op == "add") return add(a, b);
  if (op == "sub") return sub(a, b);
  if (op == "hadamard") return hadamard(a, b);
  if (b.valid()) throw DimensionError(std::string(op) + ": unary operation given two operands");
  if (op == "tanh") return tanh(a);
  if (op == "sigmoid") return sigmoid(a);
  if (op == "elu") return elu(a);
  if (op == "one_minus") return one_minus(a);
  throw Error("unknown elementwise operation: " + std::string(op));
}

Var Tape::softmax(Var a) {
  require_rank(shape(a), 1, "softmax");
  auto av = val(a.id);
  const double mx = *std::max_element(av.begin(), av.end());
  std::vector<double> out(av.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(av[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto y = t.val(self);
                double dot = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
              },
              "softmax");
}

Var Tape::cumsum(Var a) {
  require_rank(shape(a), 1, "cumsum");
  auto av = val(a.id);
  std::vector<double> out(av.size());
  double run = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    run += av[i];
    out[i] = run;
  }
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                double run = 0.0;
                for (std::size_t i = g.size(); i-- > 0;) {
                  run += g[i];
                  ga[i] += run;
                }
              },
              "cumsum");
}

Var Tape::cummax(Var a) {
  const Var out = cumsum(softmax(a));
  // Rounding in the running sum can overshoot 1 by an ulp.
  for (auto& v : nodes_[out.id].value) v = std::min(v, 1.0);
  return out;
}

Var Tape::suffix_sum(Var a) {
  require_rank(shape(a), 1, "suffix_sum");
  auto av = val(a.id);
  std::vector<double> out(av.size());
  double run = 0.0;
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = run;
    run += av[i];
  }
  return push(shape(a), std::move(out),
              [a](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                double run = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  ga[i] += run;
                  run += g[i];
                }
              },
              "suffix_sum");
}

Var Tape::one_minus_cummax(Var a) { return suffix_sum(softmax(a)); }

Var Tape::tile(Var a, std::size_t times) {
  require_rank(shape(a), 1, "tile");
  if (times == 0) throw DimensionError("tile: zero repetitions");
  if (times == 1) return a;
  auto av = val(a.id);
  const std::size_t n = av.size();
  std::vector<double> out(n * times);
  for (std::size_t r = 0; r < times; ++r) std::copy(av.begin(), av.end(), out.begin() + r * n);
  return push({n * times}, std::move(out),
              [a, n, times](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t r = 0; r < times; ++r)
                  for (std::size_t i = 0; i < n; ++i) ga[i] += g[r * n + i];
              },
              "tile");
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  std::vector<double> out;
  std::vector<Var> ids(parts.begin(), parts.end());
  for (Var p : ids) {
    require_rank(shape(p), 1, "concat");
    auto pv = val(p.id);
    out.insert(out.end(), pv.begin(), pv.end());
  }
  const std::size_t n = out.size();
  return push({n}, std::move(out),
              [ids](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                std::size_t off = 0;
                for (Var p : ids) {
                  auto gp = t.grad_of(p.id);
                  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
                  off += gp.size();
                }
              },
              "concat");
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  std::vector<Var> ids(rows.begin(), rows.end());
  const Shape first = shape(ids.front());
  require_rank(first, 1, "stack_rows");
  const std::size_t n = first[0];
  std::vector<double> out;
  out.reserve(ids.size() * n);
  for (Var r : ids) {
    require_same(shape(r), first, "stack_rows");
    auto rv = val(r.id);
    out.insert(out.end(), rv.begin(), rv.end());
  }
  return push({ids.size(), n}, std::move(out),
              [ids, n](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  auto gr = t.grad_of(ids[k].id);
                  for (std::size_t i = 0; i < n; ++i) gr[i] += g[k * n + i];
                }
              },
              "stack_rows");
}

Var Tape::row(Var m, std::size_t i) {
  const Shape s = shape(m);
  require_rank(s, 2, "row");
  if (i >= s[0]) throw DimensionError("row: index out of range");
  const std::size_t n = s[1];
  auto mv = val(m.id);
  std::vector<double> out(mv.begin() + i * n, mv.begin() + (i + 1) * n);
  return push({n}, std::move(out),
              [m, i, n](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto gm = t.grad_of(m.id);
                for (std::size_t c = 0; c < n; ++c) gm[i * n + c] += g[c];
              },
              "row");
}

Var Tape::concat_cols(Var a, Var b) {
  const Shape as = shape(a);
  const Shape bs = shape(b);
  require_rank(as, 2, "concat_cols");
  require_rank(bs, 2, "concat_cols");
  if (as[0] != bs[0]) throw DimensionError("concat_cols: row count mismatch");
  const std::size_t rows = as[0], na = as[1], nb = bs[1];
  auto av = val(a.id), bv = val(b.id);
  std::vector<double> out(rows * (na + nb));
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(av.begin() + i * na, na, out.begin() + i * (na + nb));
    std::copy_n(bv.begin() + i * nb, nb, out.begin() + i * (na + nb) + na);
  }
  return push({rows, na + nb}, std::move(out),
              [a, b, rows, na, nb](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                auto gb = t.grad_of(b.id);
                for (std::size_t i = 0; i < rows; ++i) {
                  for (std::size_t c = 0; c < na; ++c) ga[i * na + c] += g[i * (na + nb) + c];
                  for (std::size_t c = 0; c < nb; ++c) gb[i * nb + c] += g[i * (na + nb) + na + c];
                }
              },
              "concat_cols");
}

Var Tape::col_block(Var m, std::size_t begin, std::size_t width) {
  const Shape s = shape(m);
  require_rank(s, 2, "col_block");
  if (width == 0 || begin + width > s[1]) throw DimensionError("col_block: range out of bounds");
  const std::size_t rows = s[0], cols = s[1];
  auto mv = val(m.id);
  std::vector<double> out(rows * width);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(mv.begin() + i * cols + begin, width, out.begin() + i * width);
  return push({rows, width}, std::move(out),
              [m, begin, width, rows, cols](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto gm = t.grad_of(m.id);
                for (std::size_t i = 0; i < rows; ++i)
                  for (std::size_t c = 0; c < width; ++c) gm[i * cols + begin + c] += g[i * width + c];
              },
              "col_block");
}

Var Tape::max_rows(Var m) {
  const Shape s = shape(m);
  require_rank(s, 2, "max_rows");
  const std::size_t rows = s[0], n = s[1];
  auto mv = val(m.id);
  std::vector<double> out(mv.begin(), mv.begin() + n);
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t i = 1; i < rows; ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      if (mv[i * n + c] > out[c]) {
        out[c] = mv[i * n + c];
        arg[c] = i;
      }
    }
  }
  return push({n}, std::move(out),
              [m, n, arg](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto gm = t.grad_of(m.id);
                for (std::size_t c = 0; c < n; ++c) gm[arg[c] * n + c] += g[c];
              },
              "max_rows");
}

Var Tape::pairwise_sum(Var a, Var b, Var c) {
  const Shape as = shape(a);
  require_rank(as, 2, "pairwise_sum");
  require_same(shape(b), as, "pairwise_sum");
  const std::size_t len = as[0], h = as[1];
  if (c.valid()) require_same(shape(c), Shape{h}, "pairwise_sum offset");
  auto av = val(a.id), bv = val(b.id);
  std::vector<double> out(len * len * h);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      double* o = out.data() + (i * len + j) * h;
      for (std::size_t k = 0; k < h; ++k) o[k] = av[i * h + k] + bv[j * h + k];
    }
  }
  if (c.valid()) {
    auto cv = val(c.id);
    for (std::size_t p = 0; p < len * len; ++p)
      for (std::size_t k = 0; k < h; ++k) out[p * h + k] += cv[k];
  }
  return push({len * len, h}, std::move(out),
              [a, b, c, len, h](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                auto gb = t.grad_of(b.id);
                for (std::size_t i = 0; i < len; ++i) {
                  for (std::size_t j = 0; j < len; ++j) {
                    const double* gp = g.data() + (i * len + j) * h;
                    for (std::size_t k = 0; k < h; ++k) {
                      ga[i * h + k] += gp[k];
                      gb[j * h + k] += gp[k];
                    }
                  }
                }
                if (c.valid()) {
                  auto gc = t.grad_of(c.id);
                  for (std::size_t p = 0; p < len * len; ++p)
                    for (std::size_t k = 0; k < h; ++k) gc[k] += g[p * h + k];
                }
              },
              "pairwise_sum");
}

Var Tape::gather_rows(Var table, std::span<const std::size_t> ids) {
  const Shape s = shape(table);
  require_rank(s, 2, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const std::size_t n = s[1];
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  auto tv = val(table.id);
  std::vector<double> out(rows.size() * n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= s[0]) throw DimensionError("gather_rows: id out of range");
    std::copy_n(tv.begin() + rows[k] * n, n, out.begin() + k * n);
  }
  return push({rows.size(), n}, std::move(out),
              [table, rows, n](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto gt = t.grad_of(table.id);
                for (std::size_t k = 0; k < rows.size(); ++k)
                  for (std::size_t c = 0; c < n; ++c) gt[rows[k] * n + c] += g[k * n + c];
              },
              "gather_rows");
}

Var Tape::mask_multiply(Var a, std::vector<double> factor) {
  auto av = val(a.id);
  if (factor.size() != av.size()) throw DimensionError("mask_multiply: size mismatch");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor[i];
  return push(shape(a), std::move(out),
              [a, factor = std::move(factor)](Tape& t, std::uint32_t self) {
                auto g = t.out_grad(self);
                auto ga = t.grad_of(a.id);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor[i];
              },
              "mask_multiply");
}

namespace {

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }
  // What value() lost to rounding.
  double residual() const { return comp_ - (value() - sum_); }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace

Var Tape::sum(Var a) {
  auto av = val(a.id);
  CompensatedSum acc;
  for (double v : av) acc.add(v);
  const double total = acc.value();
  const Var out = push({1}, {total},
              [a](Tape& t, std::uint32_t self) {
                const double g = t.out_grad(self)[0];
                auto ga = t.grad_of(a.id);
                for (auto& v : ga) v += g;
              },
              "sum");
  nodes_[out.id].residual = acc.residual();
  return out;
}

Var Tape::bce_sum(Var p, std::span<const double> target, std::span<const double> weight,
                  double eps) {
  auto pv = val(p.id);
  if (target.size() != pv.size() || weight.size() != pv.size()) {
    throw DimensionError("bce_sum: target/weight size " + std::to_string(target.size()) + "/" +
                         std::to_string(weight.size()) + " vs predictions " +
                         std::to_string(pv.size()));
  }
  std::vector<double> y(target.begin(), target.end());
  std::vector<double> w(weight.begin(), weight.end());
  CompensatedSum acc;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double q = std::clamp(pv[i], eps, 1.0 - eps);
    acc.add(-w[i] * (y[i] * std::log(q) + (1.0 - y[i]) * std::log1p(-q)));
  }
  const Var out = push({1}, {acc.value()},
              [p, y = std::move(y), w = std::move(w), eps](Tape& t, std::uint32_t self) {
                const double g = t.out_grad(self)[0];
                auto pv = t.val(p.id);
                auto gp = t.grad_of(p.id);
                for (std::size_t i = 0; i < pv.size(); ++i) {
                  if (w[i] == 0.0) continue;
                  // Clamped cells are flat.
                  if (pv[i] < eps || pv[i] > 1.0 - eps) continue;
                  const double q = pv[i];
                  gp[i] += g * w[i] * (-y[i] / q + (1.0 - y[i]) / (1.0 - q));
                }
              },
              "bce_sum");
  nodes_[out.id].residual = acc.residual();
  return out;
}

void Tape::backward(Var root) {
  node(root);
  for (auto& n : nodes_) n.grad.clear();
  auto seed = grad_of(root.id);
  std::fill(seed.begin(), seed.end(), 1.0);
  visits_ = 0;
  for (std::uint32_t id = root.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    ++visits_;
    if (n.grad.empty()) continue;
    if (n.adjoint) n.adjoint(*this, id);
    if (n.sink != nullptr) {
      auto dst = n.sink->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

}  // namespace pfn
