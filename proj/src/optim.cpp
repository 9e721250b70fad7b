#include "driftmeta/optim.hpp"

#include <cmath>

#include "driftmeta/errors.hpp"

namespace driftmeta {

namespace {
void check_pairs(const std::vector<ParamRef>& params,
                 const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer: " + std::to_string(params.size()) +
                     " params vs " + std::to_string(grads.size()) + " grads");
  for (size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = *params[i].value;
    const Matrix& g = *grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw ShapeError("optimizer: shape mismatch for " + params[i].name);
    if (!g.allFinite())
      throw ValueError("non-finite gradient for " + params[i].name);
  }
}
}  // namespace

void sgd_step(const std::vector<ParamRef>& params,
              const std::vector<const Matrix*>& grads, double lr) {
  check_pairs(params, grads);
  for (size_t i = 0; i < params.size(); ++i) {
    *params[i].value -= lr * (*grads[i]);
  }
}

void Adam::step(const std::vector<ParamRef>& params,
                const std::vector<const Matrix*>& grads) {
  check_pairs(params, grads);
  if (m_.empty()) {
    for (const ParamRef& p : params) {
      m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size())
    throw ShapeError("Adam: parameter group size changed across steps");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *grads[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const Matrix m_hat = m_[i] / c1;
    const Matrix v_hat = v_[i] / c2;
    params[i].value->array() -=
        cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
  }
}

}  // namespace driftmeta
