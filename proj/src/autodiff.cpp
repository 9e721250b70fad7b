#include "driftmeta/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace driftmeta {
namespace ad {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape* same_tape(const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid()) throw Error("op on default-constructed tensor");
  if (a.tape() != b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

Tape* own_tape(const Tensor& a) {
  if (!a.valid()) throw Error("op on default-constructed tensor");
  return a.tape();
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + shape_of(a) +
                     " vs " + shape_of(b) + ")");
}

void require_scalar(const char* op, const Matrix& s) {
  if (s.rows() != 1 || s.cols() != 1)
    throw ShapeError(std::string(op) + ": expected 1x1 scalar, got " +
                     shape_of(s));
}

}  // namespace

const Matrix& Tensor::value() const {
  if (!valid()) throw Error("value() on default-constructed tensor");
  return tape_->value(id_);
}

const Matrix& Tensor::grad() const {
  if (!valid()) throw Error("grad() on default-constructed tensor");
  return tape_->grad(id_);
}

Tensor Tape::leaf(Matrix value) { return push(std::move(value), nullptr); }

Tensor Tape::push(Matrix value, std::function<void(Tape&)> back) {
  if (ran_backward_) throw Error("tape already ran backward; no new nodes");
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::grad(int id) const {
  if (!ran_backward_) throw Error("grad requested before backward()");
  return nodes_[static_cast<size_t>(id)].grad;
}

void Tape::backward(const Tensor& loss) {
  if (ran_backward_) throw Error("backward() ran twice on one tape");
  if (!loss.valid() || loss.tape() != this)
    throw Error("backward: loss is not on this tape");
  const Matrix& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward: loss must be 1x1, got " + shape_of(lv));
  for (Node& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  ran_backward_ = true;
  nodes_[static_cast<size_t>(loss.id())].grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->back) it->back(*this);
  }
  for (const Node& n : nodes_) {
    if (!n.grad.allFinite()) throw ValueError("non-finite gradient on tape");
  }
}

// ---- primitives ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows())
    throw ShapeError("matmul: inner dimensions disagree (" + shape_of(av) +
                     " * " + shape_of(bv) + ")");
  const int ia = a.id(), ib = b.id(), io = t->size();
  return t->push(av * bv, [ia, ib, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia).noalias() += g * tp.value(ib).transpose();
    tp.grad_ref(ib).noalias() += tp.value(ia).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  Tape* t = own_tape(a);
  const int ia = a.id(), io = t->size();
  return t->push(a.value().transpose(), [ia, io](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  const int ia = a.id(), ib = b.id(), io = t->size();
  return t->push(a.value() + b.value(), [ia, ib, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(ib) += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  const int ia = a.id(), ib = b.id(), io = t->size();
  return t->push(a.value() - b.value(), [ia, ib, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(ib) -= g;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* t = same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  const int ia = a.id(), ib = b.id(), io = t->size();
  return t->push(a.value().cwiseProduct(b.value()), [ia, ib, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g.cwiseProduct(tp.value(ib));
    tp.grad_ref(ib) += g.cwiseProduct(tp.value(ia));
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  Tape* t = same_tape(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw ShapeError("add_rowvec: need 1x" + std::to_string(av.cols()) +
                     " row, got " + shape_of(rv));
  Matrix out = av;
  out.rowwise() += rv.row(0);
  const int ia = a.id(), ir = row.id(), io = t->size();
  return t->push(std::move(out), [ia, ir, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(ir) += g.colwise().sum();
  });
}

Tensor colwise_scale(const Tensor& a, const Tensor& w) {
  Tape* t = same_tape(a, w);
  const Matrix& av = a.value();
  const Matrix& wv = w.value();
  if (wv.cols() != 1 || wv.rows() != av.rows())
    throw ShapeError("colwise_scale: need " + std::to_string(av.rows()) +
                     "x1 weights, got " + shape_of(wv));
  Matrix out = (av.array().colwise() * wv.col(0).array()).matrix();
  const int ia = a.id(), iw = w.id(), io = t->size();
  return t->push(std::move(out), [ia, iw, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) +=
        (g.array().colwise() * tp.value(iw).col(0).array()).matrix();
    tp.grad_ref(iw) += g.cwiseProduct(tp.value(ia)).rowwise().sum();
  });
}

Tensor scale(const Tensor& a, double c) {
  Tape* t = own_tape(a);
  const int ia = a.id(), io = t->size();
  return t->push(a.value() * c, [ia, io, c](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io) * c;
  });
}

Tensor add_const(const Tensor& a, double c) {
  Tape* t = own_tape(a);
  const int ia = a.id(), io = t->size();
  return t->push(Matrix(a.value().array() + c), [ia, io](Tape& tp) {
    tp.grad_ref(ia) += tp.grad_ref(io);
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  Tape* t = same_tape(a, s);
  require_scalar("mul_scalar", s.value());
  const double sv = s.value()(0, 0);
  const int ia = a.id(), is = s.id(), io = t->size();
  return t->push(a.value() * sv, [ia, is, io, sv](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g * sv;
    tp.grad_ref(is)(0, 0) += g.cwiseProduct(tp.value(ia)).sum();
  });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  Tape* t = same_tape(a, s);
  require_scalar("div_scalar", s.value());
  const double sv = s.value()(0, 0);
  if (sv == 0.0) throw ValueError("div_scalar: division by zero scale");
  const int ia = a.id(), is = s.id(), io = t->size();
  return t->push(a.value() / sv, [ia, is, io, sv](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g / sv;
    tp.grad_ref(is)(0, 0) -=
        g.cwiseProduct(tp.value(ia)).sum() / (sv * sv);
  });
}

Tensor add_scalar(const Tensor& a, const Tensor& s) {
  Tape* t = same_tape(a, s);
  require_scalar("add_scalar", s.value());
  const double sv = s.value()(0, 0);
  const int ia = a.id(), is = s.id(), io = t->size();
  return t->push(Matrix(a.value().array() + sv), [ia, is, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(is)(0, 0) += g.sum();
  });
}

Tensor sub_scalar(const Tensor& a, const Tensor& s) {
  Tape* t = same_tape(a, s);
  require_scalar("sub_scalar", s.value());
  const double sv = s.value()(0, 0);
  const int ia = a.id(), is = s.id(), io = t->size();
  return t->push(Matrix(a.value().array() - sv), [ia, is, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia) += g;
    tp.grad_ref(is)(0, 0) -= g.sum();
  });
}

Tensor tanh(const Tensor& a) {
  Tape* t = own_tape(a);
  const int ia = a.id(), io = t->size();
  return t->push(Matrix(a.value().array().tanh()), [ia, io](Tape& tp) {
    const Matrix& y = tp.value(io);
    tp.grad_ref(ia).array() +=
        tp.grad_ref(io).array() * (1.0 - y.array().square());
  });
}

Tensor sigmoid(const Tensor& a) {
  Tape* t = own_tape(a);
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ia = a.id(), io = t->size();
  return t->push(std::move(out), [ia, io](Tape& tp) {
    const Matrix& y = tp.value(io);
    tp.grad_ref(ia).array() +=
        tp.grad_ref(io).array() * y.array() * (1.0 - y.array());
  });
}

Tensor relu(const Tensor& a) {
  Tape* t = own_tape(a);
  Matrix out = a.value().cwiseMax(0.0);
  const int ia = a.id(), io = t->size();
  return t->push(std::move(out), [ia, io](Tape& tp) {
    // Subgradient 0 exactly at the hinge.
    const auto mask = (tp.value(ia).array() > 0.0).cast<double>();
    tp.grad_ref(ia).array() += tp.grad_ref(io).array() * mask;
  });
}

Tensor sqrt_elem(const Tensor& a) {
  Tape* t = own_tape(a);
  if ((a.value().array() < 0.0).any())
    throw ValueError("sqrt_elem: negative input");
  Matrix out = a.value().array().sqrt().matrix();
  const int ia = a.id(), io = t->size();
  return t->push(std::move(out), [ia, io](Tape& tp) {
    const Matrix& y = tp.value(io);
    // d sqrt(u) = g / (2 sqrt(u)); zero output takes subgradient 0.
    const auto safe = (y.array() > 0.0).cast<double>();
    tp.grad_ref(ia).array() +=
        safe * tp.grad_ref(io).array() / (2.0 * y.array()).max(1e-300);
  });
}

Tensor softmax_rows(const Tensor& a) {
  Tape* t = own_tape(a);
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const double mx = av.row(r).maxCoeff();
    Eigen::ArrayXd e = (av.row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  const int ia = a.id(), io = t->size();
  return t->push(std::move(out), [ia, io](Tape& tp) {
    const Matrix& y = tp.value(io);
    const Matrix& g = tp.grad_ref(io);
    Matrix& ga = tp.grad_ref(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

Tensor cosine_rows(const Tensor& x, const Tensor& p) {
  Tape* t = same_tape(x, p);
  const Matrix& xv = x.value();
  const Matrix& pv = p.value();
  if (xv.cols() != pv.cols())
    throw ShapeError("cosine_rows: feature dims disagree (" + shape_of(xv) +
                     " vs " + shape_of(pv) + ")");
  Vector xn = xv.rowwise().norm();
  Vector pn = pv.rowwise().norm();
  if ((xn.array() == 0.0).any())
    throw ValueError("cosine_rows: zero-norm input row");
  if ((pn.array() == 0.0).any())
    throw ValueError("cosine_rows: zero-norm reference row");
  Matrix out = (xv * pv.transpose());
  out.array().colwise() /= xn.array();
  out.array().rowwise() /= pn.transpose().array();
  const int ix = x.id(), ip = p.id(), io = t->size();
  return t->push(std::move(out), [ix, ip, io, xn, pn](Tape& tp) {
    const Matrix& xv = tp.value(ix);
    const Matrix& pv = tp.value(ip);
    const Matrix& y = tp.value(io);
    const Matrix& g = tp.grad_ref(io);
    const Matrix gy = g.cwiseProduct(y);
    // x_j part: (sum_i g_ji p_i / pn_i) / xn_j - x_j * sum_i g_ji y_ji / xn_j^2
    Matrix gp_scaled =
        (g.array().rowwise() / pn.transpose().array()).matrix();
    Matrix gx = gp_scaled * pv;
    gx.array().colwise() /= xn.array();
    gx.array() -= xv.array().colwise() *
                  (gy.rowwise().sum().array() / xn.array().square());
    tp.grad_ref(ix) += gx;
    // p_i part: (g^T scaled by 1/xn) x / pn_i - p_i * sum_j g_ji y_ji / pn_i^2
    Matrix gx_scaled = (g.array().colwise() / xn.array()).matrix();
    Matrix gp = gx_scaled.transpose() * xv;
    gp.array().colwise() /= pn.array();
    gp.array() -= pv.array().colwise() *
                  (gy.colwise().sum().transpose().array() / pn.array().square());
    tp.grad_ref(ip) += gp;
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != 1 || bv.rows() != 1)
    throw ShapeError("cosine_similarity: expects row vectors, got " +
                     shape_of(av) + " and " + shape_of(bv));
  return cosine_rows(a, b);
}

Tensor sum_all(const Tensor& a) {
  Tape* t = own_tape(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id(), io = t->size();
  return t->push(std::move(out), [ia, io](Tape& tp) {
    tp.grad_ref(ia).array() += tp.grad_ref(io)(0, 0);
  });
}

Tensor mean_rows(const Tensor& a) {
  Tape* t = own_tape(a);
  const Matrix& av = a.value();
  if (av.rows() == 0) throw ShapeError("mean_rows: empty input");
  Matrix out = av.colwise().mean();
  const int ia = a.id(), io = t->size();
  const double inv = 1.0 / static_cast<double>(av.rows());
  return t->push(std::move(out), [ia, io, inv](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    tp.grad_ref(ia).array().rowwise() += g.row(0).array() * inv;
  });
}

Tensor frobenius_sq(const Tensor& a) {
  Tape* t = own_tape(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  const int ia = a.id(), io = t->size();
  return t->push(std::move(out), [ia, io](Tape& tp) {
    tp.grad_ref(ia) += 2.0 * tp.grad_ref(io)(0, 0) * tp.value(ia);
  });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  Tape* t = same_tape(pred, target);
  require_same_shape("mse", pred.value(), target.value());
  const Matrix& pv = pred.value();
  if (pv.size() == 0) throw ShapeError("mse: empty input");
  Matrix out(1, 1);
  out(0, 0) = (pv - target.value()).squaredNorm() /
              static_cast<double>(pv.size());
  const int ip = pred.id(), ig = target.id(), io = t->size();
  const double inv = 2.0 / static_cast<double>(pv.size());
  return t->push(std::move(out), [ip, ig, io, inv](Tape& tp) {
    const double g = tp.grad_ref(io)(0, 0);
    const Matrix d = (tp.value(ip) - tp.value(ig)) * (g * inv);
    tp.grad_ref(ip) += d;
    tp.grad_ref(ig) -= d;
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape* t = own_tape(parts.front());
  Eigen::Index total = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Tensor& p : parts) {
    same_tape(parts.front(), p);
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column counts disagree (" +
                       std::to_string(cols) + " vs " +
                       std::to_string(p.cols()) + ")");
    total += p.rows();
  }
  Matrix out(total, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(at);
    at += p.rows();
  }
  const int io = t->size();
  return t->push(std::move(out), [ids, offsets, io](Tape& tp) {
    const Matrix& g = tp.grad_ref(io);
    for (size_t k = 0; k < ids.size(); ++k) {
      Matrix& gi = tp.grad_ref(ids[k]);
      gi += g.middleRows(offsets[k], gi.rows());
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  Tape* t = own_tape(a);
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols())
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(av.cols()) + " columns");
  const int ia = a.id(), io = t->size();
  return t->push(av.middleCols(start, count), [ia, io, start, count](Tape& tp) {
    tp.grad_ref(ia).middleCols(start, count) += tp.grad_ref(io);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  Tape* t = own_tape(a);
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(av.rows()) + " rows");
  const int ia = a.id(), io = t->size();
  return t->push(av.middleRows(start, count), [ia, io, start, count](Tape& tp) {
    tp.grad_ref(ia).middleRows(start, count) += tp.grad_ref(io);
  });
}

Tensor l2_norm(const Tensor& a) { return sqrt_elem(frobenius_sq(a)); }

}  // namespace ad
}  // namespace driftmeta
