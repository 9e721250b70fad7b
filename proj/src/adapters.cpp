#include "driftmeta/adapters.hpp"

#include <cmath>

#include "driftmeta/errors.hpp"

namespace driftmeta {

AdapterParams AdapterParams::init(int n_proj, int d, double omega, Rng& rng) {
  if (n_proj < 1) throw ValueError("adapters: n_proj must be >= 1");
  if (d < 1) throw ValueError("adapters: feature dim must be >= 1");
  if (omega <= 0.0) throw ValueError("adapters: omega must be positive");
  AdapterParams a;
  a.n_proj = n_proj;
  a.omega = omega;
  a.w.assign(n_proj, Matrix::Zero(d, d));
  a.b.assign(n_proj, Matrix::Zero(1, d));
  a.p = Matrix(n_proj, d);
  for (int i = 0; i < n_proj; ++i) {
    double norm = 0.0;
    // resample on the (measure-zero) chance of a near-zero vector
    while (norm < 1e-12) {
      for (int j = 0; j < d; ++j) a.p(i, j) = rng.normal();
      norm = a.p.row(i).norm();
    }
    a.p.row(i) /= norm;
  }
  a.h = Matrix::Ones(n_proj, 1);
  a.z = Matrix::Zero(n_proj, 1);
  return a;
}

void AdapterParams::visit(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  char name[32];
  for (int i = 0; i < n_proj; ++i) {
    std::snprintf(name, sizeof(name), "w%d", i);
    fn(name, w[i]);
    std::snprintf(name, sizeof(name), "b%d", i);
    fn(name, b[i]);
  }
  fn("p", p);
  fn("h", h);
  fn("z", z);
}

AdapterVars bind_adapters(Binder& bind, AdapterParams& a,
                          const std::string& prefix) {
  AdapterVars v;
  v.n_proj = a.n_proj;
  v.omega = a.omega;
  v.w.reserve(a.n_proj);
  v.b.reserve(a.n_proj);
  for (int i = 0; i < a.n_proj; ++i) {
    v.w.push_back(bind.bind(prefix + ".w" + std::to_string(i), a.w[i]));
    v.b.push_back(bind.bind(prefix + ".b" + std::to_string(i), a.b[i]));
  }
  v.p = bind.bind(prefix + ".p", a.p);
  v.h = bind.bind(prefix + ".h", a.h);
  v.z = bind.bind(prefix + ".z", a.z);
  return v;
}

AdapterVars freeze_adapters(Binder& bind, const AdapterParams& a) {
  AdapterVars v;
  v.n_proj = a.n_proj;
  v.omega = a.omega;
  v.w.reserve(a.n_proj);
  v.b.reserve(a.n_proj);
  for (int i = 0; i < a.n_proj; ++i) {
    v.w.push_back(bind.constant(a.w[i]));
    v.b.push_back(bind.constant(a.b[i]));
  }
  v.p = bind.constant(a.p);
  v.h = bind.constant(a.h);
  v.z = bind.constant(a.z);
  return v;
}

ad::Tensor projection_weights(ad::Tensor x, const AdapterVars& a) {
  ad::Tensor cos = ad::cosine_rows(x, a.p);
  return ad::softmax_rows(ad::scale(cos, 1.0 / (a.omega * a.omega)));
}

ad::Tensor adapt_data(ad::Tensor x, ad::Tensor beta, const AdapterVars& a) {
  ad::Tensor out = x;
  for (int i = 0; i < a.n_proj; ++i) {
    ad::Tensor proj = ad::add_rowvec(ad::matmul(x, a.w[i]), a.b[i]);
    out = ad::add(out, ad::colwise_scale(proj, ad::slice_cols(beta, i, 1)));
  }
  return out;
}

ad::Tensor adapt_labels(ad::Tensor y, ad::Tensor beta, const AdapterVars& a) {
  if (y.cols() != 1) throw ShapeError("adapt_labels: labels must be n x 1");
  ad::Tensor out;
  for (int i = 0; i < a.n_proj; ++i) {
    ad::Tensor hi = ad::slice_rows(a.h, i, 1);  // 1 x 1
    ad::Tensor zi = ad::slice_rows(a.z, i, 1);
    ad::Tensor term = ad::add_scalar(ad::mul_scalar(y, hi), zi);
    ad::Tensor gated = ad::mul(term, ad::slice_cols(beta, i, 1));
    out = (i == 0) ? gated : ad::add(out, gated);
  }
  return out;
}

ad::Tensor invert_labels(ad::Tensor yhat, ad::Tensor beta,
                         const AdapterVars& a) {
  if (yhat.cols() != 1) {
    throw ShapeError("invert_labels: predictions must be n x 1");
  }
  for (int i = 0; i < a.n_proj; ++i) {
    if (a.h.value()(i, 0) == 0.0) {
      throw ValueError("invert_labels: label scale h[" + std::to_string(i) +
                       "] is zero, transform not invertible");
    }
  }
  ad::Tensor out;
  for (int i = 0; i < a.n_proj; ++i) {
    ad::Tensor hi = ad::slice_rows(a.h, i, 1);
    ad::Tensor zi = ad::slice_rows(a.z, i, 1);
    ad::Tensor term = ad::div_scalar(ad::sub_scalar(yhat, zi), hi);
    ad::Tensor gated = ad::mul(term, ad::slice_cols(beta, i, 1));
    out = (i == 0) ? gated : ad::add(out, gated);
  }
  return out;
}

}  // namespace driftmeta
