#pragma once

#include <functional>
#include <string>
#include <vector>

#include "driftmeta/autodiff.hpp"
#include "driftmeta/bind.hpp"
#include "driftmeta/rng.hpp"

namespace driftmeta {

// Data and label adapters. Every sample is softly assigned to `n_proj`
// learned projections by the cosine between the sample and a prototype:
//
//   beta(j,i) = softmax_i( cos(x_j, p_i) / omega^2 )
//   x~_j = x_j + sum_i beta(j,i) (x_j W_i + b_i)
//   y~_j = sum_i beta(j,i) (y_j h_i + z_i)
//
// and label predictions are mapped back through the inverse transform
//   y_j = sum_i beta(j,i) (yhat_j - z_i) / h_i.
//
// Identity start: W = 0, b = 0, h = 1, z = 0 makes both adapters pass data
// through unchanged, so a fresh model equals its unadapted baseline.
struct AdapterParams {
  int n_proj = 8;
  double omega = 1.0;
  std::vector<Matrix> w;  // n_proj of d x d
  std::vector<Matrix> b;  // n_proj of 1 x d
  Matrix p;               // n_proj x d prototypes (random unit rows)
  Matrix h;               // n_proj x 1 label scales
  Matrix z;               // n_proj x 1 label shifts

  static AdapterParams init(int n_proj, int d, double omega, Rng& rng);
  void visit(const std::function<void(const std::string&, Matrix&)>& fn);
};

struct AdapterVars {
  int n_proj = 0;
  double omega = 1.0;
  std::vector<ad::Tensor> w, b;
  ad::Tensor p, h, z;
};

AdapterVars bind_adapters(Binder& bind, AdapterParams& a,
                          const std::string& prefix = "ad");
AdapterVars freeze_adapters(Binder& bind, const AdapterParams& a);

// Soft assignment weights for every sample row: n x n_proj, rows sum to 1.
ad::Tensor projection_weights(ad::Tensor x, const AdapterVars& a);

// x~ as above; same shape as x.
ad::Tensor adapt_data(ad::Tensor x, ad::Tensor beta, const AdapterVars& a);

// y~ from labels y (n x 1) and precomputed beta.
ad::Tensor adapt_labels(ad::Tensor y, ad::Tensor beta, const AdapterVars& a);

// Inverse label map applied to raw predictions (n x 1). Any h_i == 0 is an
// error: the transform is no longer invertible.
ad::Tensor invert_labels(ad::Tensor yhat, ad::Tensor beta,
                         const AdapterVars& a);

}  // namespace driftmeta
