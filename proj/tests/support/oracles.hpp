#pragma once

// Independent reference computations for tests. Everything here is written
// as plain loops over doubles, deliberately avoiding the library's own code
// paths so the two sides cannot share a bug.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "driftmeta/autodiff.hpp"
#include "driftmeta/rng.hpp"

namespace oracle {

using driftmeta::Matrix;

// Loss as a function of a set of parameter matrices.
using LossFn = std::function<double(const std::vector<Matrix>&)>;

// Central finite differences for every entry of every parameter.
inline std::vector<Matrix> finite_diff(const LossFn& f,
                                       std::vector<Matrix> params,
                                       double h = 1e-6) {
  std::vector<Matrix> grads;
  for (size_t k = 0; k < params.size(); ++k) {
    Matrix g = Matrix::Zero(params[k].rows(), params[k].cols());
    for (Eigen::Index i = 0; i < params[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < params[k].cols(); ++j) {
        const double saved = params[k](i, j);
        params[k](i, j) = saved + h;
        const double up = f(params);
        params[k](i, j) = saved - h;
        const double dn = f(params);
        params[k](i, j) = saved;
        g(i, j) = (up - dn) / (2.0 * h);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Relative agreement with an absolute floor for near-zero entries.
inline bool close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= abs_floor + rel * std::max(std::abs(a), std::abs(b));
}

inline bool grads_close(const std::vector<Matrix>& a,
                        const std::vector<Matrix>& b, double rel = 1e-5,
                        double abs_floor = 1e-7) {
  if (a.size() != b.size()) return false;
  for (size_t k = 0; k < a.size(); ++k) {
    if (a[k].rows() != b[k].rows() || a[k].cols() != b[k].cols()) return false;
    for (Eigen::Index i = 0; i < a[k].rows(); ++i)
      for (Eigen::Index j = 0; j < a[k].cols(); ++j)
        if (!close(a[k](i, j), b[k](i, j), rel, abs_floor)) return false;
  }
  return true;
}

inline Matrix random_matrix(driftmeta::Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// ---- straight-line formula oracles ---------------------------------------

// Mixture weights: softmax over references of cos(x_j, p_i) / omega^2.
inline Matrix projection_weights_ref(const Matrix& x, const Matrix& p,
                                     double omega) {
  const int n = static_cast<int>(x.rows());
  const int np = static_cast<int>(p.rows());
  Matrix beta(n, np);
  for (int j = 0; j < n; ++j) {
    std::vector<double> scores(np);
    for (int i = 0; i < np; ++i) {
      double dot = 0, nx = 0, npp = 0;
      for (int k = 0; k < x.cols(); ++k) {
        dot += x(j, k) * p(i, k);
        nx += x(j, k) * x(j, k);
        npp += p(i, k) * p(i, k);
      }
      scores[i] = dot / (std::sqrt(nx) * std::sqrt(npp)) / (omega * omega);
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0;
    for (int i = 0; i < np; ++i) denom += std::exp(scores[i] - mx);
    for (int i = 0; i < np; ++i) beta(j, i) = std::exp(scores[i] - mx) / denom;
  }
  return beta;
}

// x~_j = x_j + sum_i beta(j,i) * (x_j W_i + b_i)
inline Matrix adapt_data_ref(const Matrix& x, const std::vector<Matrix>& w,
                             const std::vector<Matrix>& b, const Matrix& p,
                             double omega) {
  const Matrix beta = projection_weights_ref(x, p, omega);
  Matrix out = x;
  for (int j = 0; j < x.rows(); ++j) {
    for (size_t i = 0; i < w.size(); ++i) {
      for (int c = 0; c < x.cols(); ++c) {
        double t = b[i](0, c);
        for (int k = 0; k < x.cols(); ++k) t += x(j, k) * w[i](k, c);
        out(j, c) += beta(j, static_cast<int>(i)) * t;
      }
    }
  }
  return out;
}

// y~_j = sum_i beta(j,i) * (y_j * h_i + z_i)
inline Eigen::VectorXd adapt_labels_ref(const Eigen::VectorXd& y,
                                        const Matrix& beta,
                                        const Eigen::VectorXd& h,
                                        const Eigen::VectorXd& z) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(y.size());
  for (int j = 0; j < y.size(); ++j)
    for (int i = 0; i < h.size(); ++i)
      out(j) += beta(j, i) * (y(j) * h(i) + z(i));
  return out;
}

// y_j = sum_i beta(j,i) * (yhat_j - z_i) / h_i
inline Eigen::VectorXd invert_labels_ref(const Eigen::VectorXd& yhat,
                                         const Matrix& beta,
                                         const Eigen::VectorXd& h,
                                         const Eigen::VectorXd& z) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(yhat.size());
  for (int j = 0; j < yhat.size(); ++j)
    for (int i = 0; i < h.size(); ++i)
      out(j) += beta(j, i) * (yhat(j) - z(i)) / h(i);
  return out;
}

// Two-layer tanh network with a linear head, loops only.
inline Matrix mlp_forward_ref(const Matrix& x, const Matrix& w1,
                              const Matrix& b1, const Matrix& w2,
                              const Matrix& b2, const Matrix& w3,
                              const Matrix& b3) {
  Matrix h1(x.rows(), w1.cols());
  for (int n = 0; n < x.rows(); ++n)
    for (int j = 0; j < w1.cols(); ++j) {
      double t = b1(0, j);
      for (int k = 0; k < x.cols(); ++k) t += x(n, k) * w1(k, j);
      h1(n, j) = std::tanh(t);
    }
  Matrix h2(x.rows(), w2.cols());
  for (int n = 0; n < x.rows(); ++n)
    for (int j = 0; j < w2.cols(); ++j) {
      double t = b2(0, j);
      for (int k = 0; k < w1.cols(); ++k) t += h1(n, k) * w2(k, j);
      h2(n, j) = std::tanh(t);
    }
  Matrix y(x.rows(), 1);
  for (int n = 0; n < x.rows(); ++n) {
    double t = b3(0, 0);
    for (int k = 0; k < w2.cols(); ++k) t += h2(n, k) * w3(k, 0);
    y(n, 0) = t;
  }
  return y;
}

// Attention pooling of sample embeddings:
//   score_k = tanh(s_k V2) v3 ; alpha = softmax(score) over all samples
//   E = sum_k alpha_k (s_k V1 + eps)
inline Eigen::RowVectorXd embed_task_ref(const Matrix& s, const Matrix& v1,
                                         const Eigen::RowVectorXd& eps,
                                         const Matrix& v2,
                                         const Eigen::VectorXd& v3) {
  const int m = static_cast<int>(s.rows());
  std::vector<double> score(m);
  for (int k = 0; k < m; ++k) {
    double acc = 0;
    for (int a = 0; a < v2.cols(); ++a) {
      double t = 0;
      for (int q = 0; q < s.cols(); ++q) t += s(k, q) * v2(q, a);
      acc += std::tanh(t) * v3(a);
    }
    score[k] = acc;
  }
  const double mx = *std::max_element(score.begin(), score.end());
  double denom = 0;
  for (int k = 0; k < m; ++k) denom += std::exp(score[k] - mx);
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(s.cols());
  for (int k = 0; k < m; ++k) {
    const double alpha = std::exp(score[k] - mx) / denom;
    for (int c = 0; c < s.cols(); ++c) {
      double t = eps(c);
      for (int q = 0; q < s.cols(); ++q) t += s(k, q) * v1(q, c);
      out(c) += alpha * t;
    }
  }
  return out;
}

// max(||ep - et|| - ||ep - en|| + gamma, 0)
inline double triplet_loss_ref(const Eigen::RowVectorXd& ep,
                               const Eigen::RowVectorXd& et,
                               const Eigen::RowVectorXd& en, double gamma) {
  double dt = 0, dn = 0;
  for (int i = 0; i < ep.size(); ++i) {
    dt += (ep(i) - et(i)) * (ep(i) - et(i));
    dn += (ep(i) - en(i)) * (ep(i) - en(i));
  }
  return std::max(std::sqrt(dt) - std::sqrt(dn) + gamma, 0.0);
}

// Textbook two-pass Pearson. Returns NaN when either side is constant.
inline double pearson_ref(const std::vector<double>& a,
                          const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) { ma += a[i]; mb += b[i]; }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

// Average ranks by counting: rank of x = #{y < x} + (#{y == x} + 1) / 2.
inline std::vector<double> ranks_ref(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    int less = 0, equal = 0;
    for (size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++less;
      if (v[j] == v[i]) ++equal;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

inline double spearman_ref(const std::vector<double>& a,
                           const std::vector<double>& b) {
  return pearson_ref(ranks_ref(a), ranks_ref(b));
}

// Friedman statistic straight from the definition; scores[method][scenario],
// higher better.
inline std::pair<std::vector<double>, double> friedman_ref(
    const std::vector<std::vector<double>>& scores) {
  const size_t k = scores.size(), n = scores[0].size();
  std::vector<double> mean_rank(k, 0.0);
  for (size_t s = 0; s < n; ++s) {
    std::vector<double> col(k);
    for (size_t m = 0; m < k; ++m) col[m] = -scores[m][s];
    const auto r = ranks_ref(col);
    for (size_t m = 0; m < k; ++m) mean_rank[m] += r[m] / n;
  }
  double acc = 0;
  for (double r : mean_rank) acc += (r - (k + 1) / 2.0) * (r - (k + 1) / 2.0);
  const double chi = 12.0 * n / (k * (k + 1.0)) * acc;
  return {mean_rank, chi};
}

}  // namespace oracle
