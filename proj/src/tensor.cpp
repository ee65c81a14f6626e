#include "vrnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <sstream>

namespace vrnn {

namespace {

size_t product(const std::vector<size_t>& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

}  // namespace

std::string shape_str(const std::vector<size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<size_t> s, std::vector<double> values)
    : shape(std::move(s)), v(std::move(values)) {
  if (product(shape) != v.size())
    throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                     std::to_string(v.size()) + " values");
}

Tensor Tensor::zeros(std::vector<size_t> s) {
  size_t n = product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<size_t> s, double value) {
  size_t n = product(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str(shape));
  return shape[0];
}

size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str(shape));
  return shape[1];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " values");
  return v[0];
}

double& Tensor::at(size_t i, size_t j) { return v[i * cols() + j]; }
double Tensor::at(size_t i, size_t j) const { return v[i * cols() + j]; }

// ---------------------------------------------------------------- Tape

Tensor Tape::leaf(const Tensor& value) {
  Tensor out = value;
  out.node = record("leaf", out.shape, {}, nullptr);
  return out;
}

int Tape::record(const char* kind, std::vector<size_t> out_shape, std::vector<int> parents,
                 BackwardFn fn) {
  nodes_.push_back(Node{kind, std::move(out_shape), std::move(parents), std::move(fn)});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const Tensor& g) {
  Tensor& slot = grads_[static_cast<size_t>(node)];
  if (slot.v.empty()) {
    slot = Tensor::zeros(nodes_[static_cast<size_t>(node)].shape);
  }
  for (size_t i = 0; i < g.v.size(); ++i) slot.v[i] += g.v[i];
}

void Tape::backward(const Tensor& loss) {
  if (loss.node < 0) throw ContractError("backward: loss is not on this tape");
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, shape " + shape_str(loss.shape));
  accumulate(loss.node, Tensor::full(loss.shape, 1.0));
  for (int i = loss.node; i >= 0; --i) {
    const Node& n = nodes_[static_cast<size_t>(i)];
    if (grads_[static_cast<size_t>(i)].v.empty() || !n.fn) continue;
    n.fn(*this, grads_[static_cast<size_t>(i)]);
  }
}

bool Tape::has_grad(const Tensor& x) const {
  return x.node >= 0 && !grads_[static_cast<size_t>(x.node)].v.empty();
}

const Tensor& Tape::grad(const Tensor& x) const {
  if (x.node < 0) throw ContractError("grad: tensor is not tracked on this tape");
  return grad(x.node);
}

const Tensor& Tape::grad(int node) const {
  const Tensor& g = grads_[static_cast<size_t>(node)];
  if (g.v.empty()) throw ContractError("grad: node has no gradient (not an ancestor of the loss)");
  return g;
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw ShapeError("matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  const size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (size_t i = 0; i < m; ++i) {
    const double* arow = &a.v[i * k];
    double* orow = &out.v[i * n];
    for (size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.v[p * n];
      for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (tape) {
    Tensor av = a, bv = b;
    out.node = tape->record("matmul", out.shape, {a.node, b.node},
                            [av, bv](Tape& t, const Tensor& g) {
                              const size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
                              if (av.node >= 0) {
                                // dA = g . B^T
                                Tensor da = Tensor::zeros({m, k});
                                for (size_t i = 0; i < m; ++i)
                                  for (size_t p = 0; p < k; ++p) {
                                    double s = 0.0;
                                    const double* grow = &g.v[i * n];
                                    const double* brow = &bv.v[p * n];
                                    for (size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                                    da.v[i * k + p] = s;
                                  }
                                t.accumulate(av.node, da);
                              }
                              if (bv.node >= 0) {
                                // dB = A^T . g
                                Tensor db = Tensor::zeros({k, n});
                                for (size_t i = 0; i < m; ++i) {
                                  const double* grow = &g.v[i * n];
                                  for (size_t p = 0; p < k; ++p) {
                                    const double av_ip = av.v[i * k + p];
                                    if (av_ip == 0.0) continue;
                                    double* dbrow = &db.v[p * n];
                                    for (size_t j = 0; j < n; ++j) dbrow[j] += av_ip * grow[j];
                                  }
                                }
                                t.accumulate(bv.node, db);
                              }
                            });
  }
  return out;
}

Tensor transpose(const Tensor& a, Tape* tape) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 required, got " + shape_str(a.shape));
  const size_t m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.v[j * m + i] = a.v[i * n + j];
  if (tape) {
    int anode = a.node;
    out.node = tape->record("transpose", out.shape, {anode},
                            [anode](Tape& t, const Tensor& g) {
                              if (anode >= 0) t.accumulate(anode, transpose(g));
                            });
  }
  return out;
}

// ---------------------------------------------------------------- unary

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Elementwise op with backward expressed via saved input and output values.
Tensor unary_impl(const char* kind, const Tensor& x, Tape* tape,
                  const std::function<double(double)>& fwd,
                  const std::function<double(double xi, double yi)>& dydx) {
  Tensor out = x;
  out.node = -1;
  for (double& e : out.v) e = fwd(e);
  if (tape) {
    Tensor xin = x, yout = out;
    out.node = tape->record(kind, out.shape, {x.node},
                            [xin, yout, dydx](Tape& t, const Tensor& g) {
                              if (xin.node < 0) return;
                              Tensor gx = Tensor::zeros(xin.shape);
                              for (size_t i = 0; i < gx.v.size(); ++i)
                                gx.v[i] = g.v[i] * dydx(xin.v[i], yout.v[i]);
                              t.accumulate(xin.node, gx);
                            });
  }
  return out;
}

}  // namespace

Tensor exp(const Tensor& x, Tape* tape) {
  return unary_impl("exp", x, tape, [](double a) { return std::exp(a); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& x, Tape* tape) {
  for (size_t i = 0; i < x.v.size(); ++i)
    if (!(x.v[i] > 0.0))
      throw DomainError("log: non-positive entry " + std::to_string(x.v[i]) + " at index " +
                        std::to_string(i));
  return unary_impl("log", x, tape, [](double a) { return std::log(a); },
                    [](double xi, double) { return 1.0 / xi; });
}

Tensor tanh(const Tensor& x, Tape* tape) {
  return unary_impl("tanh", x, tape, [](double a) { return std::tanh(a); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
  return unary_impl("sigmoid", x, tape, stable_sigmoid,
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x, Tape* tape) {
  return unary_impl("relu", x, tape, [](double a) { return a > 0.0 ? a : 0.0; },
                    [](double xi, double) { return xi > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x, Tape* tape) {
  return unary_impl("softplus", x, tape, stable_softplus,
                    [](double xi, double) { return stable_sigmoid(xi); });
}

Tensor neg(const Tensor& x, Tape* tape) {
  return unary_impl("neg", x, tape, [](double a) { return -a; },
                    [](double, double) { return -1.0; });
}

Tensor square(const Tensor& x, Tape* tape) {
  return unary_impl("square", x, tape, [](double a) { return a * a; },
                    [](double xi, double) { return 2.0 * xi; });
}

Tensor affine(const Tensor& x, double s, double c, Tape* tape) {
  return unary_impl("affine", x, tape, [s, c](double a) { return a * s + c; },
                    [s](double, double) { return s; });
}

Tensor clamp(const Tensor& x, double lo, double hi, Tape* tape) {
  return unary_impl("clamp", x, tape,
                    [lo, hi](double a) { return std::min(std::max(a, lo), hi); },
                    [lo, hi](double xi, double) { return (xi > lo && xi < hi) ? 1.0 : 0.0; });
}

Tensor unary(UnaryKind kind, const Tensor& x, Tape* tape) {
  switch (kind) {
    case UnaryKind::Exp: return exp(x, tape);
    case UnaryKind::Log: return log(x, tape);
    case UnaryKind::Tanh: return tanh(x, tape);
    case UnaryKind::Sigmoid: return sigmoid(x, tape);
    case UnaryKind::Relu: return relu(x, tape);
    case UnaryKind::Softplus: return softplus(x, tape);
    case UnaryKind::Neg: return neg(x, tape);
    case UnaryKind::Square: return square(x, tape);
  }
  throw ContractError("unary: unknown kind");
}

// ---------------------------------------------------------------- binary

namespace {

// The single supported broadcast: b is a row vector applied to every row of a.
bool row_broadcast(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1];
}

Tensor binary_impl(const char* kind, const Tensor& a, const Tensor& b, Tape* tape,
                   const std::function<double(double, double)>& fwd,
                   const std::function<double(double ai, double bi)>& dda,
                   const std::function<double(double ai, double bi)>& ddb) {
  const bool bcast = row_broadcast(a, b);
  if (!bcast && a.shape != b.shape)
    throw ShapeError(std::string(kind) + ": incompatible shapes " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  Tensor out = Tensor::zeros(a.shape);
  if (bcast) {
    const size_t m = a.shape[0], n = a.shape[1];
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) out.v[i * n + j] = fwd(a.v[i * n + j], b.v[j]);
  } else {
    for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = fwd(a.v[i], b.v[i]);
  }
  if (tape) {
    Tensor av = a, bv = b;
    out.node = tape->record(kind, out.shape, {a.node, b.node},
                            [av, bv, bcast, dda, ddb](Tape& t, const Tensor& g) {
                              if (bcast) {
                                const size_t m = av.shape[0], n = av.shape[1];
                                if (av.node >= 0) {
                                  Tensor ga = Tensor::zeros(av.shape);
                                  for (size_t i = 0; i < m; ++i)
                                    for (size_t j = 0; j < n; ++j)
                                      ga.v[i * n + j] =
                                          g.v[i * n + j] * dda(av.v[i * n + j], bv.v[j]);
                                  t.accumulate(av.node, ga);
                                }
                                if (bv.node >= 0) {
                                  Tensor gb = Tensor::zeros(bv.shape);
                                  for (size_t i = 0; i < m; ++i)
                                    for (size_t j = 0; j < n; ++j)
                                      gb.v[j] += g.v[i * n + j] * ddb(av.v[i * n + j], bv.v[j]);
                                  t.accumulate(bv.node, gb);
                                }
                                return;
                              }
                              if (av.node >= 0) {
                                Tensor ga = Tensor::zeros(av.shape);
                                for (size_t i = 0; i < ga.v.size(); ++i)
                                  ga.v[i] = g.v[i] * dda(av.v[i], bv.v[i]);
                                t.accumulate(av.node, ga);
                              }
                              if (bv.node >= 0) {
                                Tensor gb = Tensor::zeros(bv.shape);
                                for (size_t i = 0; i < gb.v.size(); ++i)
                                  gb.v[i] = g.v[i] * ddb(av.v[i], bv.v[i]);
                                t.accumulate(bv.node, gb);
                              }
                            });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_impl("add", a, b, tape, [](double x, double y) { return x + y; },
                     [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_impl("sub", a, b, tape, [](double x, double y) { return x - y; },
                     [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_impl("mul", a, b, tape, [](double x, double y) { return x * y; },
                     [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_impl("div", a, b, tape, [](double x, double y) { return x / y; },
                     [](double, double y) { return 1.0 / y; },
                     [](double x, double y) { return -x / (y * y); });
}

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b, Tape* tape) {
  switch (kind) {
    case BinaryKind::Add: return add(a, b, tape);
    case BinaryKind::Sub: return sub(a, b, tape);
    case BinaryKind::Mul: return mul(a, b, tape);
    case BinaryKind::Div: return div(a, b, tape);
  }
  throw ContractError("binary: unknown kind");
}

// ---------------------------------------------------------------- reduce

namespace {

struct AxisView {
  size_t outer, axis, inner;  // x viewed as [outer x axis x inner]
};

AxisView axis_view(const Tensor& x, size_t axis) {
  if (axis >= x.rank())
    throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape));
  AxisView v{1, x.shape[axis], 1};
  for (size_t i = 0; i < axis; ++i) v.outer *= x.shape[i];
  for (size_t i = axis + 1; i < x.rank(); ++i) v.inner *= x.shape[i];
  return v;
}

std::vector<size_t> drop_axis(const std::vector<size_t>& s, size_t axis) {
  std::vector<size_t> out;
  for (size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  return out;
}

}  // namespace

Tensor sum(const Tensor& x, size_t axis, Tape* tape) {
  AxisView av = axis_view(x, axis);
  Tensor out = Tensor::zeros(drop_axis(x.shape, axis));
  for (size_t o = 0; o < av.outer; ++o)
    for (size_t a = 0; a < av.axis; ++a)
      for (size_t in = 0; in < av.inner; ++in)
        out.v[o * av.inner + in] += x.v[(o * av.axis + a) * av.inner + in];
  if (tape) {
    Tensor xin = x;
    out.node = tape->record("sum", out.shape, {x.node},
                            [xin, av](Tape& t, const Tensor& g) {
                              if (xin.node < 0) return;
                              Tensor gx = Tensor::zeros(xin.shape);
                              for (size_t o = 0; o < av.outer; ++o)
                                for (size_t a = 0; a < av.axis; ++a)
                                  for (size_t in = 0; in < av.inner; ++in)
                                    gx.v[(o * av.axis + a) * av.inner + in] =
                                        g.v[o * av.inner + in];
                              t.accumulate(xin.node, gx);
                            });
  }
  return out;
}

Tensor mean(const Tensor& x, size_t axis, Tape* tape) {
  double inv = 1.0 / static_cast<double>(x.shape[axis]);
  return affine(sum(x, axis, tape), inv, 0.0, tape);
}

Tensor logsumexp(const Tensor& x, size_t axis, Tape* tape) {
  AxisView av = axis_view(x, axis);
  Tensor out = Tensor::zeros(drop_axis(x.shape, axis));
  for (size_t o = 0; o < av.outer; ++o)
    for (size_t in = 0; in < av.inner; ++in) {
      double m = -std::numeric_limits<double>::infinity();
      for (size_t a = 0; a < av.axis; ++a)
        m = std::max(m, x.v[(o * av.axis + a) * av.inner + in]);
      double s = 0.0;
      for (size_t a = 0; a < av.axis; ++a)
        s += std::exp(x.v[(o * av.axis + a) * av.inner + in] - m);
      out.v[o * av.inner + in] = m + std::log(s);
    }
  if (tape) {
    Tensor xin = x, yout = out;
    out.node = tape->record("logsumexp", out.shape, {x.node},
                            [xin, yout, av](Tape& t, const Tensor& g) {
                              if (xin.node < 0) return;
                              // d/dx_i = exp(x_i - lse)
                              Tensor gx = Tensor::zeros(xin.shape);
                              for (size_t o = 0; o < av.outer; ++o)
                                for (size_t a = 0; a < av.axis; ++a)
                                  for (size_t in = 0; in < av.inner; ++in) {
                                    size_t xi = (o * av.axis + a) * av.inner + in;
                                    size_t yi = o * av.inner + in;
                                    gx.v[xi] = g.v[yi] * std::exp(xin.v[xi] - yout.v[yi]);
                                  }
                              t.accumulate(xin.node, gx);
                            });
  }
  return out;
}

Tensor reduce(ReduceKind kind, const Tensor& x, size_t axis, Tape* tape) {
  switch (kind) {
    case ReduceKind::Sum: return sum(x, axis, tape);
    case ReduceKind::Mean: return mean(x, axis, tape);
    case ReduceKind::LogSumExp: return logsumexp(x, axis, tape);
  }
  throw ContractError("reduce: unknown kind");
}

// ---------------------------------------------------------------- concat/slice/reshape

Tensor concat(const std::vector<Tensor>& parts, size_t axis, Tape* tape) {
  if (parts.empty()) throw ContractError("concat: no parts");
  const size_t rank = parts[0].rank();
  if (axis >= rank) throw ShapeError("concat: axis out of range");
  size_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < rank; ++i)
      if (i != axis && p.shape[i] != parts[0].shape[i])
        throw ShapeError("concat: non-axis dims differ, " + shape_str(p.shape) + " vs " +
                         shape_str(parts[0].shape));
    axis_total += p.shape[axis];
  }
  std::vector<size_t> out_shape = parts[0].shape;
  out_shape[axis] = axis_total;
  Tensor out = Tensor::zeros(out_shape);
  AxisView ov = axis_view(out, axis);

  size_t offset = 0;
  for (const Tensor& p : parts) {
    const size_t pa = p.shape[axis];
    for (size_t o = 0; o < ov.outer; ++o)
      for (size_t a = 0; a < pa; ++a)
        for (size_t in = 0; in < ov.inner; ++in)
          out.v[(o * ov.axis + offset + a) * ov.inner + in] = p.v[(o * pa + a) * ov.inner + in];
    offset += pa;
  }
  if (tape) {
    std::vector<int> parents;
    std::vector<size_t> widths;
    std::vector<std::vector<size_t>> shapes;
    for (const Tensor& p : parts) {
      parents.push_back(p.node);
      widths.push_back(p.shape[axis]);
      shapes.push_back(p.shape);
    }
    out.node = tape->record("concat", out.shape, parents,
                            [parents, widths, shapes, ov](Tape& t, const Tensor& g) {
                              size_t offset = 0;
                              for (size_t pi = 0; pi < parents.size(); ++pi) {
                                const size_t pa = widths[pi];
                                if (parents[pi] >= 0) {
                                  Tensor gp = Tensor::zeros(shapes[pi]);
                                  for (size_t o = 0; o < ov.outer; ++o)
                                    for (size_t a = 0; a < pa; ++a)
                                      for (size_t in = 0; in < ov.inner; ++in)
                                        gp.v[(o * pa + a) * ov.inner + in] =
                                            g.v[(o * ov.axis + offset + a) * ov.inner + in];
                                  t.accumulate(parents[pi], gp);
                                }
                                offset += pa;
                              }
                            });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, size_t axis, Tape* tape) {
  return concat(std::vector<Tensor>{a, b}, axis, tape);
}

Tensor slice(const Tensor& x, size_t axis, size_t lo, size_t hi, Tape* tape) {
  if (axis >= x.rank()) throw ShapeError("slice: axis out of range");
  if (lo > hi || hi > x.shape[axis])
    throw ShapeError("slice: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") out of bounds for " + shape_str(x.shape));
  AxisView xv = axis_view(x, axis);
  std::vector<size_t> out_shape = x.shape;
  out_shape[axis] = hi - lo;
  Tensor out = Tensor::zeros(out_shape);
  const size_t w = hi - lo;
  for (size_t o = 0; o < xv.outer; ++o)
    for (size_t a = 0; a < w; ++a)
      for (size_t in = 0; in < xv.inner; ++in)
        out.v[(o * w + a) * xv.inner + in] = x.v[(o * xv.axis + lo + a) * xv.inner + in];
  if (tape) {
    int xnode = x.node;
    std::vector<size_t> xshape = x.shape;
    out.node = tape->record("slice", out.shape, {xnode},
                            [xnode, xshape, xv, lo, w](Tape& t, const Tensor& g) {
                              if (xnode < 0) return;
                              Tensor gx = Tensor::zeros(xshape);
                              for (size_t o = 0; o < xv.outer; ++o)
                                for (size_t a = 0; a < w; ++a)
                                  for (size_t in = 0; in < xv.inner; ++in)
                                    gx.v[(o * xv.axis + lo + a) * xv.inner + in] =
                                        g.v[(o * w + a) * xv.inner + in];
                              t.accumulate(xnode, gx);
                            });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<size_t> new_shape, Tape* tape) {
  if (product(new_shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape) + " -> " + shape_str(new_shape));
  Tensor out = x;
  out.shape = new_shape;
  out.node = -1;
  if (tape) {
    int xnode = x.node;
    std::vector<size_t> xshape = x.shape;
    out.node = tape->record("reshape", out.shape, {xnode},
                            [xnode, xshape](Tape& t, const Tensor& g) {
                              if (xnode < 0) return;
                              Tensor gx = g;
                              gx.shape = xshape;
                              gx.node = -1;
                              t.accumulate(xnode, gx);
                            });
  }
  return out;
}

Tensor tile_cols(const Tensor& x, size_t n, Tape* tape) {
  if (x.rank() != 1) throw ShapeError("tile_cols: rank-1 required, got " + shape_str(x.shape));
  const size_t m = x.shape[0];
  Tensor out = Tensor::zeros({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.v[i * n + j] = x.v[i];
  if (tape) {
    int xnode = x.node;
    out.node = tape->record("tile_cols", out.shape, {xnode},
                            [xnode, m, n](Tape& t, const Tensor& g) {
                              if (xnode < 0) return;
                              Tensor gx = Tensor::zeros({m});
                              for (size_t i = 0; i < m; ++i)
                                for (size_t j = 0; j < n; ++j) gx.v[i] += g.v[i * n + j];
                              t.accumulate(xnode, gx);
                            });
  }
  return out;
}

// ---------------------------------------------------------------- grad_check

double grad_check(const std::function<Tensor(const Tensor&, Tape&)>& f, const Tensor& x,
                  double step) {
  Tensor analytic;
  {
    Tape tape;
    Tensor xt = tape.leaf(x);
    Tensor y = f(xt, tape);
    if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
    tape.backward(y);
    analytic = tape.has_grad(xt) ? tape.grad(xt) : Tensor::zeros(x.shape);
  }
  double worst = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp.v[i] += step;
    xm.v[i] -= step;
    Tape tp, tm;
    double fp = f(tp.leaf(xp), tp).item();
    double fm = f(tm.leaf(xm), tm).item();
    double fd = (fp - fm) / (2.0 * step);
    double err = std::abs(analytic.v[i] - fd) / std::max(1.0, std::abs(analytic.v[i]));
    if (std::isnan(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace vrnn
