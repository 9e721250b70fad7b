#pragma once

#include <functional>
#include <string>

#include "driftmeta/autodiff.hpp"
#include "driftmeta/bind.hpp"
#include "driftmeta/rng.hpp"

namespace driftmeta {

enum class Arch { Mlp, Recurrent };

// Forecaster parameters: an encoder producing q-dimensional sample
// embeddings plus a linear head to the scalar trend prediction.
//
// Mlp:       x -> tanh(x W1 + b1) -> tanh(h W2 + b2) = s
// Recurrent: features reshaped into `steps` chunks; a tanh recurrence
//            h_t = tanh(x_t Wx + h_{t-1} Wh + bh); s = h_last
struct Forecaster {
  Arch arch = Arch::Mlp;
  int d = 0;       // input features
  int hidden = 64; // Mlp only
  int q = 32;      // embedding width
  int steps = 6;   // Recurrent only

  Matrix w1, b1;  // Mlp: d x hidden, 1 x hidden | Recurrent: (d/steps) x q, unused
  Matrix w2, b2;  // Mlp: hidden x q, 1 x q      | Recurrent: q x q (Wh), 1 x q (bh)
  Matrix w3, b3;  // head: q x 1, 1 x 1

  static Forecaster init_mlp(int d, int hidden, int q, Rng& rng);
  // Requires d divisible by `steps`.
  static Forecaster init_recurrent(int d, int q, int steps, Rng& rng);

  void visit(const std::function<void(const std::string&, Matrix&)>& fn);
};

struct ForecasterVars {
  Arch arch;
  int steps = 0;
  ad::Tensor w1, b1, w2, b2, w3, b3;
};

// Binds all forecaster parameters for updates.
ForecasterVars bind_forecaster(Binder& b, Forecaster& f,
                               const std::string& prefix = "f");
// Puts current values on the tape without tracking them (frozen encoder).
ForecasterVars freeze_forecaster(Binder& b, const Forecaster& f);

// n x d -> n x q sample embeddings.
ad::Tensor encode(const ForecasterVars& f, ad::Tensor x);
// n x q -> n x 1 predictions.
ad::Tensor head(const ForecasterVars& f, ad::Tensor s);
// Exactly head(encode(x)); the split is definitional, not approximate.
ad::Tensor predict(const ForecasterVars& f, ad::Tensor x);

}  // namespace driftmeta
