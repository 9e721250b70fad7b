#include "driftmeta/models.hpp"

#include <cmath>

#include "driftmeta/errors.hpp"

namespace driftmeta {

namespace {
Matrix uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}
}  // namespace

Forecaster Forecaster::init_mlp(int d, int hidden, int q, Rng& rng) {
  if (d < 1 || hidden < 1 || q < 1)
    throw ValueError("forecaster: dimensions must be positive");
  Forecaster f;
  f.arch = Arch::Mlp;
  f.d = d;
  f.hidden = hidden;
  f.q = q;
  f.w1 = uniform_init(rng, d, hidden, d);
  f.b1 = uniform_init(rng, 1, hidden, d);
  f.w2 = uniform_init(rng, hidden, q, hidden);
  f.b2 = uniform_init(rng, 1, q, hidden);
  f.w3 = uniform_init(rng, q, 1, q);
  f.b3 = uniform_init(rng, 1, 1, q);
  return f;
}

Forecaster Forecaster::init_recurrent(int d, int q, int steps, Rng& rng) {
  if (steps < 1) throw ValueError("forecaster: steps must be positive");
  if (d % steps != 0)
    throw ValueError("forecaster: " + std::to_string(d) +
                     " features do not split into " + std::to_string(steps) +
                     " equal time steps");
  Forecaster f;
  f.arch = Arch::Recurrent;
  f.d = d;
  f.q = q;
  f.steps = steps;
  const int step_in = d / steps;
  f.w1 = uniform_init(rng, step_in, q, step_in);  // input weights
  f.b1 = Matrix();                                // unused
  f.w2 = uniform_init(rng, q, q, q);              // recurrence
  f.b2 = uniform_init(rng, 1, q, q);
  f.w3 = uniform_init(rng, q, 1, q);
  f.b3 = uniform_init(rng, 1, 1, q);
  return f;
}

void Forecaster::visit(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("w1", w1);
  if (arch == Arch::Mlp) fn("b1", b1);
  fn("w2", w2);
  fn("b2", b2);
  fn("w3", w3);
  fn("b3", b3);
}

ForecasterVars bind_forecaster(Binder& b, Forecaster& f,
                               const std::string& prefix) {
  ForecasterVars v;
  v.arch = f.arch;
  v.steps = f.steps;
  v.w1 = b.bind(prefix + ".w1", f.w1);
  if (f.arch == Arch::Mlp) v.b1 = b.bind(prefix + ".b1", f.b1);
  v.w2 = b.bind(prefix + ".w2", f.w2);
  v.b2 = b.bind(prefix + ".b2", f.b2);
  v.w3 = b.bind(prefix + ".w3", f.w3);
  v.b3 = b.bind(prefix + ".b3", f.b3);
  return v;
}

ForecasterVars freeze_forecaster(Binder& b, const Forecaster& f) {
  ForecasterVars v;
  v.arch = f.arch;
  v.steps = f.steps;
  v.w1 = b.constant(f.w1);
  if (f.arch == Arch::Mlp) v.b1 = b.constant(f.b1);
  v.w2 = b.constant(f.w2);
  v.b2 = b.constant(f.b2);
  v.w3 = b.constant(f.w3);
  v.b3 = b.constant(f.b3);
  return v;
}

ad::Tensor encode(const ForecasterVars& f, ad::Tensor x) {
  using namespace ad;
  if (f.arch == Arch::Mlp) {
    Tensor h = tanh(add_rowvec(matmul(x, f.w1), f.b1));
    return tanh(add_rowvec(matmul(h, f.w2), f.b2));
  }
  // Recurrent: march over equal slices of the feature vector.
  const Eigen::Index step_in = f.w1.rows();
  if (x.cols() != step_in * f.steps)
    throw ShapeError("encode: " + std::to_string(x.cols()) +
                     " features do not form " + std::to_string(f.steps) +
                     " steps of " + std::to_string(step_in));
  Tensor h;
  for (int t = 0; t < f.steps; ++t) {
    Tensor xt = slice_cols(x, t * step_in, step_in);
    Tensor pre = matmul(xt, f.w1);
    if (t > 0) pre = add(pre, matmul(h, f.w2));
    h = tanh(add_rowvec(pre, f.b2));
  }
  return h;
}

ad::Tensor head(const ForecasterVars& f, ad::Tensor s) {
  return ad::add_rowvec(ad::matmul(s, f.w3), f.b3);
}

ad::Tensor predict(const ForecasterVars& f, ad::Tensor x) {
  return head(f, encode(f, x));
}

}  // namespace driftmeta
