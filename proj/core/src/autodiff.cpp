#include "cordcpd/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "cordcpd/params.hpp"

namespace cordcpd::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  if (out.empty()) out.push_back(last);
  else out.back() = last;
  return out;
}

template <typename F>
Var unary_from_output(Var x, const char* op, F&& f, double (*deriv_from_out)(double)) {
  Tape& tape = x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) v = f(v);
  const auto xid = x.id();
  return tape.record(std::move(out), x.requires_grad(),
                     [xid, deriv_from_out](Tape& t, std::uint32_t self) {
                       const Tensor& y = t.value(self);
                       const Tensor& gy = *t.grad_if_present(self);
                       Tensor& gx = t.grad(xid);
                       for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * deriv_from_out(y[i]);
                     },
                     op);
}

}  // namespace

IndexPtr make_index(Index index) { return std::make_shared<const Index>(std::move(index)); }

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr, "constant"); }

Var Tape::variable(Tensor value) {
  return record(std::move(value), true, [](Tape&, std::uint32_t) {}, "variable");
}

Var Tape::param(const ParamStore& store, std::size_t param_id) {
  if (bound_store_ != nullptr && bound_store_ != &store) {
    throw std::logic_error("tape already bound to a different parameter store");
  }
  bound_store_ = &store;
  for (const auto& [pid, node] : bound_params_) {
    if (pid == param_id) return Var(this, node);
  }
  Var v = grad_enabled_ ? variable(store.tensor(param_id)) : constant(store.tensor(param_id));
  bound_params_.emplace_back(param_id, v.id());
  return v;
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward, const char* op) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad_if_present(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward on an empty tape");
  if (&loss.tape() != this) throw std::logic_error("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad(loss.id())[0] = 1.0;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.has_grad && n.backward) n.backward(*this, id);
  }
}

std::vector<double> Tape::param_gradients(const ParamStore& store) const {
  std::vector<double> out(store.size(), 0.0);
  if (bound_store_ == nullptr) return out;
  if (bound_store_ != &store) throw std::logic_error("gradient requested for an unbound store");
  for (const auto& [pid, node] : bound_params_) {
    const Tensor* g = grad_if_present(node);
    if (g == nullptr) continue;
    const auto& slot = store.slot(pid);
    for (std::size_t i = 0; i < slot.size; ++i) out[slot.offset + i] += (*g)[i];
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  bound_params_.clear();
  bound_store_ = nullptr;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ai = a.id(), bi = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return a.tape().record(std::move(out), ra || rb,
                         [ai, bi, ra, rb](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           if (ra) {
                             Tensor& ga = t.grad(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (rb) {
                             Tensor& gb = t.grad(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                           }
                         },
                         "add");
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ai = a.id(), bi = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return a.tape().record(std::move(out), ra || rb,
                         [ai, bi, ra, rb](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           if (ra) {
                             Tensor& ga = t.grad(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (rb) {
                             Tensor& gb = t.grad(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                         },
                         "sub");
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ai = a.id(), bi = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return a.tape().record(std::move(out), ra || rb,
                         [ai, bi, ra, rb](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           if (ra) {
                             const Tensor& bv = t.value(bi);
                             Tensor& ga = t.grad(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (rb) {
                             const Tensor& av = t.value(ai);
                             Tensor& gb = t.grad(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                           }
                         },
                         "mul");
}

Var affine(Var x, double scale, double shift) {
  Tensor out = x.value();
  for (double& v : out.data()) v = scale * v + shift;
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, scale](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
                         },
                         "affine");
}

Var add_row(Var x, Var b) {
  require_same_tape(x, b);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (b.value().size() != cols) {
    throw ShapeError("add_row: bias of size " + std::to_string(b.value().size()) + " for " +
                     std::to_string(cols) + " columns");
  }
  Tensor out = x.value();
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  const auto xi = x.id(), bi = b.id();
  const bool rx = x.requires_grad(), rb = b.requires_grad();
  return x.tape().record(std::move(out), rx || rb,
                         [xi, bi, rx, rb, rows, cols](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           if (rx) {
                             Tensor& gx = t.grad(xi);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           }
                           if (rb) {
                             Tensor& gb = t.grad(bi);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                           }
                         },
                         "add_row");
}

Var mul_row(Var x, Var gvec) {
  require_same_tape(x, gvec);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gvec.value().size() != cols) throw ShapeError("mul_row: gain size does not match columns");
  Tensor out = x.value();
  const Tensor& gv = gvec.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= gv[c];
  const auto xi = x.id(), gi = gvec.id();
  const bool rx = x.requires_grad(), rg = gvec.requires_grad();
  return x.tape().record(std::move(out), rx || rg,
                         [xi, gi, rx, rg, rows, cols](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           if (rx) {
                             const Tensor& gv = t.value(gi);
                             Tensor& gx = t.grad(xi);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * gv[c];
                           }
                           if (rg) {
                             const Tensor& xv = t.value(xi);
                             Tensor& gg = t.grad(gi);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) gg[c] += g[r * cols + c] * xv[r * cols + c];
                           }
                         },
                         "mul_row");
}

Var row_scale(Var x, Var w) {
  require_same_tape(x, w);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (w.value().size() != rows) throw ShapeError("row_scale: weight count does not match rows");
  Tensor out = x.value();
  const Tensor& wv = w.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= wv[r];
  const auto xi = x.id(), wi = w.id();
  const bool rx = x.requires_grad(), rw = w.requires_grad();
  return x.tape().record(std::move(out), rx || rw,
                         [xi, wi, rx, rw, rows, cols](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           if (rx) {
                             const Tensor& wv = t.value(wi);
                             Tensor& gx = t.grad(xi);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r * cols + c] * wv[r];
                           }
                           if (rw) {
                             const Tensor& xv = t.value(xi);
                             Tensor& gw = t.grad(wi);
                             for (std::size_t r = 0; r < rows; ++r) {
                               double acc = 0.0;
                               for (std::size_t c = 0; c < cols; ++c) acc += g[r * cols + c] * xv[r * cols + c];
                               gw[r] += acc;
                             }
                           }
                         },
                         "row_scale");
}

Var sigmoid(Var x) {
  return unary_from_output(
      x, "sigmoid", [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary_from_output(x, "tanh", [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary_from_output(x, "relu", [](double v) { return v > 0 ? v : 0.0; },
                           [](double y) { return y > 0 ? 1.0 : 0.0; });
}

Var elu(Var x) {
  // For y <= 0, y = exp(v) - 1 and dy/dv = y + 1.
  return unary_from_output(x, "elu", [](double v) { return v > 0 ? v : std::expm1(v); },
                           [](double y) { return y > 0 ? 1.0 : y + 1.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var x, Var w) {
  require_same_tape(x, w);
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || wv.dim(0) != x.cols()) {
    throw ShapeError("matmul: " + shape_string(x.shape()) + " times " + shape_string(wv.shape()));
  }
  const std::size_t rows = x.rows(), k = x.cols(), c = wv.dim(1);
  Tensor out(with_last(x.shape(), c));
  as_mat(out, rows, c).noalias() = as_mat(x.value(), rows, k) * as_mat(wv, k, c);
  const auto xi = x.id(), wi = w.id();
  const bool rx = x.requires_grad(), rw = w.requires_grad();
  return x.tape().record(std::move(out), rx || rw,
                         [xi, wi, rx, rw, rows, k, c](Tape& t, std::uint32_t self) {
                           const auto g = as_mat(*t.grad_if_present(self), rows, c);
                           if (rx) as_mat(t.grad(xi), rows, k).noalias() += g * as_mat(t.value(wi), k, c).transpose();
                           if (rw) as_mat(t.grad(wi), k, c).noalias() += as_mat(t.value(xi), rows, k).transpose() * g;
                         },
                         "matmul");
}

Var linear(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || wv.dim(0) != x.cols()) {
    throw ShapeError("linear: " + shape_string(x.shape()) + " times " + shape_string(wv.shape()));
  }
  const std::size_t rows = x.rows(), k = x.cols(), c = wv.dim(1);
  if (b.value().size() != c) throw ShapeError("linear: bias size does not match output width");
  Tensor out(with_last(x.shape(), c));
  auto om = as_mat(out, rows, c);
  om.noalias() = as_mat(x.value(), rows, k) * as_mat(wv, k, c);
  om.rowwise() += as_mat(b.value(), 1, c).row(0);
  const auto xi = x.id(), wi = w.id(), bi = b.id();
  const bool rx = x.requires_grad(), rw = w.requires_grad(), rb = b.requires_grad();
  return x.tape().record(std::move(out), rx || rw || rb,
                         [xi, wi, bi, rx, rw, rb, rows, k, c](Tape& t, std::uint32_t self) {
                           const auto g = as_mat(*t.grad_if_present(self), rows, c);
                           if (rx) as_mat(t.grad(xi), rows, k).noalias() += g * as_mat(t.value(wi), k, c).transpose();
                           if (rw) as_mat(t.grad(wi), k, c).noalias() += as_mat(t.value(xi), rows, k).transpose() * g;
                           if (rb) as_mat(t.grad(bi), 1, c).row(0) += g.colwise().sum();
                         },
                         "linear");
}

Var batched_matmul(Var a, Var b, std::size_t batch, bool transpose_b) {
  require_same_tape(a, b);
  if (batch == 0 || a.rows() % batch != 0 || b.rows() % batch != 0) {
    throw ShapeError("batched_matmul: row counts not divisible by batch");
  }
  const std::size_t m = a.rows() / batch, k = a.cols();
  std::size_t n = 0;
  if (transpose_b) {
    if (b.cols() != k) throw ShapeError("batched_matmul: inner dimensions differ");
    n = b.rows() / batch;
  } else {
    if (b.rows() / batch != k) throw ShapeError("batched_matmul: inner dimensions differ");
    n = b.cols();
  }
  Tensor out(Shape{batch * m, n});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatMap ai(av.data().data() + i * m * k, m, k);
    MatMap oi(out.data().data() + i * m * n, m, n);
    if (transpose_b) {
      ConstMatMap bi(bv.data().data() + i * n * k, n, k);
      oi.noalias() = ai * bi.transpose();
    } else {
      ConstMatMap bi(bv.data().data() + i * k * n, k, n);
      oi.noalias() = ai * bi;
    }
  }
  const auto aid = a.id(), bid = b.id();
  const bool ra = a.requires_grad(), rb = b.requires_grad();
  return a.tape().record(
      std::move(out), ra || rb,
      [aid, bid, ra, rb, batch, m, k, n, transpose_b](Tape& t, std::uint32_t self) {
        const Tensor& g = *t.grad_if_present(self);
        const Tensor& av = t.value(aid);
        const Tensor& bv = t.value(bid);
        Tensor* ga = ra ? &t.grad(aid) : nullptr;
        Tensor* gb = rb ? &t.grad(bid) : nullptr;
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMatMap gi(g.data().data() + i * m * n, m, n);
          ConstMatMap ai(av.data().data() + i * m * k, m, k);
          if (transpose_b) {
            ConstMatMap bi(bv.data().data() + i * n * k, n, k);
            if (ga) MatMap(ga->data().data() + i * m * k, m, k).noalias() += gi * bi;
            if (gb) MatMap(gb->data().data() + i * n * k, n, k).noalias() += gi.transpose() * ai;
          } else {
            ConstMatMap bi(bv.data().data() + i * k * n, k, n);
            if (ga) MatMap(ga->data().data() + i * m * k, m, k).noalias() += gi * bi.transpose();
            if (gb) MatMap(gb->data().data() + i * k * n, k, n).noalias() += ai.transpose() * gi;
          }
        }
      },
      "batched_matmul");
}

Var softmax_rows(Var x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, rows, cols](Tape& t, std::uint32_t self) {
                           const Tensor& y = t.value(self);
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const std::size_t o = r * cols;
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * y[o + c];
                             for (std::size_t c = 0; c < cols; ++c) gx[o + c] += y[o + c] * (g[o + c] - dot);
                           }
                         },
                         "softmax_rows");
}

Var layer_norm_rows(Var x, double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out = x.value();
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) row[c] = (row[c] - mu) * is;
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, rows, cols, inv_std](Tape& t, std::uint32_t self) {
                           const Tensor& y = t.value(self);
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           const double inv_n = 1.0 / static_cast<double>(cols);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const std::size_t o = r * cols;
                             double mg = 0.0, mgy = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) {
                               mg += g[o + c];
                               mgy += g[o + c] * y[o + c];
                             }
                             mg *= inv_n;
                             mgy *= inv_n;
                             for (std::size_t c = 0; c < cols; ++c)
                               gx[o + c] += (*inv_std)[r] * (g[o + c] - mg - y[o + c] * mgy);
                           }
                         },
                         "layer_norm_rows");
}

// ---------------------------------------------------------------------------
// Structural

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         },
                         "reshape");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out(with_last(parts[0].shape(), cols));
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * w, w, out.data().data() + r * cols + off);
    off += w;
  }
  return parts[0].tape().record(std::move(out), rg,
                                [ids, widths, rows, cols](Tape& t, std::uint32_t self) {
                                  const Tensor& g = *t.grad_if_present(self);
                                  std::size_t off = 0;
                                  for (std::size_t p = 0; p < ids.size(); ++p) {
                                    const std::size_t w = widths[p];
                                    if (t.requires_grad(ids[p])) {
                                      Tensor& gp = t.grad(ids[p]);
                                      for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * cols + off + c];
                                    }
                                    off += w;
                                  }
                                },
                                "concat_cols");
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin >= end || end > cols) throw ShapeError("slice_cols: bad range");
  const std::size_t w = end - begin;
  Tensor out(with_last(x.shape(), w));
  const Tensor& v = x.value();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data().data() + r * cols + begin, w, out.data().data() + r * w);
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, rows, cols, begin, w](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
                         },
                         "slice_cols");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool rg = false;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
  }
  Tensor out(Shape{rows, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  return parts[0].tape().record(std::move(out), rg,
                                [ids](Tape& t, std::uint32_t self) {
                                  const Tensor& g = *t.grad_if_present(self);
                                  std::size_t off = 0;
                                  for (auto id : ids) {
                                    const std::size_t n = t.value(id).size();
                                    if (t.requires_grad(id)) {
                                      Tensor& gp = t.grad(id);
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                                    }
                                    off += n;
                                  }
                                },
                                "concat_rows");
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin >= end || end > rows) throw ShapeError("slice_rows: bad range");
  const Tensor& v = x.value();
  Tensor out(Shape{end - begin, cols},
             std::vector<double>(v.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                 v.data().begin() + static_cast<std::ptrdiff_t>(end * cols)));
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, begin, cols](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
                         },
                         "slice_rows");
}

Var gather_rows(Var x, IndexPtr index) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const Index& idx = *index;
  Tensor out(Shape{idx.size(), cols});
  const Tensor& v = x.value();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(v.data().data() + idx[r] * cols, cols, out.data().data() + r * cols);
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, index, cols](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           const Index& idx = *index;
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             double* dst = gx.data().data() + idx[r] * cols;
                             const double* src = g.data().data() + r * cols;
                             for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                           }
                         },
                         "gather_rows");
}

Var scatter_add_rows(Var x, IndexPtr index, std::size_t n_out) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const Index& idx = *index;
  if (idx.size() != rows) throw ShapeError("scatter_add_rows: index length does not match rows");
  Tensor out(Shape{n_out, cols});
  const Tensor& v = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= n_out) throw ShapeError("scatter_add_rows: index out of range");
    double* dst = out.data().data() + idx[r] * cols;
    const double* src = v.data().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi, index, cols](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           const Index& idx = *index;
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             const double* src = g.data().data() + idx[r] * cols;
                             double* dst = gx.data().data() + r * cols;
                             for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                           }
                         },
                         "scatter_add_rows");
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const auto xi = x.id();
  return x.tape().record(Tensor::scalar(total), x.requires_grad(),
                         [xi](Tape& t, std::uint32_t self) {
                           const double g = (*t.grad_if_present(self))[0];
                           for (double& v : t.grad(xi).data()) v += g;
                         },
                         "sum");
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return affine(sum(x), 1.0 / n, 0.0);
}

Var sum_squares(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v * v;
  const auto xi = x.id();
  return x.tape().record(Tensor::scalar(total), x.requires_grad(),
                         [xi](Tape& t, std::uint32_t self) {
                           const double g = (*t.grad_if_present(self))[0];
                           const Tensor& xv = t.value(xi);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * g * xv[i];
                         },
                         "sum_squares");
}

// ---------------------------------------------------------------------------
// Fused recurrent gates

Var gru_gates(Var xi, Var hh, Var h_prev) {
  require_same_tape(xi, hh);
  require_same_tape(xi, h_prev);
  const std::size_t rows = h_prev.rows(), H = h_prev.cols();
  if (xi.rows() != rows || hh.rows() != rows || xi.cols() != 3 * H || hh.cols() != 3 * H) {
    throw ShapeError("gru_gates: expected rows x 3H projections for hidden width " + std::to_string(H));
  }
  const Tensor& xv = xi.value();
  const Tensor& hv = hh.value();
  const Tensor& pv = h_prev.value();
  auto gates = std::make_shared<Tensor>(Shape{rows, 3 * H});  // r, z, n
  Tensor out(Shape{rows, H});
  auto sig = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o3 = r * 3 * H, o = r * H;
    for (std::size_t c = 0; c < H; ++c) {
      const double rg = sig(xv[o3 + c] + hv[o3 + c]);
      const double zg = sig(xv[o3 + H + c] + hv[o3 + H + c]);
      const double ng = std::tanh(xv[o3 + 2 * H + c] + rg * hv[o3 + 2 * H + c]);
      (*gates)[o3 + c] = rg;
      (*gates)[o3 + H + c] = zg;
      (*gates)[o3 + 2 * H + c] = ng;
      out[o + c] = (1.0 - zg) * ng + zg * pv[o + c];
    }
  }
  const auto xid = xi.id(), hid = hh.id(), pid = h_prev.id();
  const bool rx = xi.requires_grad(), rh = hh.requires_grad(), rp = h_prev.requires_grad();
  return xi.tape().record(
      std::move(out), rx || rh || rp,
      [xid, hid, pid, rx, rh, rp, rows, H, gates](Tape& t, std::uint32_t self) {
        const Tensor& g = *t.grad_if_present(self);
        const Tensor& hv = t.value(hid);
        const Tensor& pv = t.value(pid);
        Tensor* gx = rx ? &t.grad(xid) : nullptr;
        Tensor* gh = rh ? &t.grad(hid) : nullptr;
        Tensor* gp = rp ? &t.grad(pid) : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o3 = r * 3 * H, o = r * H;
          for (std::size_t c = 0; c < H; ++c) {
            const double rg = (*gates)[o3 + c];
            const double zg = (*gates)[o3 + H + c];
            const double ng = (*gates)[o3 + 2 * H + c];
            const double go = g[o + c];
            const double dn = go * (1.0 - zg) * (1.0 - ng * ng);
            const double dz = go * (pv[o + c] - ng) * zg * (1.0 - zg);
            const double dr = dn * hv[o3 + 2 * H + c] * rg * (1.0 - rg);
            if (gp) (*gp)[o + c] += go * zg;
            if (gx) {
              (*gx)[o3 + c] += dr;
              (*gx)[o3 + H + c] += dz;
              (*gx)[o3 + 2 * H + c] += dn;
            }
            if (gh) {
              (*gh)[o3 + c] += dr;
              (*gh)[o3 + H + c] += dz;
              (*gh)[o3 + 2 * H + c] += dn * rg;
            }
          }
        }
      },
      "gru_gates");
}

Var straight_through_one_hot(Var x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape(), 0.0);
  const Tensor& v = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data().data() + r * cols;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
    out[r * cols + best] = 1.0;
  }
  const auto xi = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [xi](Tape& t, std::uint32_t self) {
                           const Tensor& g = *t.grad_if_present(self);
                           Tensor& gx = t.grad(xi);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         },
                         "straight_through_one_hot");
}

}  // namespace cordcpd::ad
