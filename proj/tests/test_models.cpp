#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "driftmeta/bind.hpp"
#include "driftmeta/models.hpp"
#include "driftmeta/optim.hpp"
#include "driftmeta/rng.hpp"
#include "support/oracles.hpp"

using namespace driftmeta;

namespace {

Matrix predict_values(Forecaster& f, const Matrix& x) {
  ad::Tape tape;
  Binder bind(tape);
  ForecasterVars v = bind_forecaster(bind, f);
  return predict(v, bind.constant(x)).value();
}

// Straight-line MLP forward, loops only.
Matrix mlp_ref(const Forecaster& f, const Matrix& x) {
  Matrix h1(x.rows(), f.hidden);
  for (int n = 0; n < x.rows(); ++n)
    for (int j = 0; j < f.hidden; ++j) {
      double t = f.b1(0, j);
      for (int k = 0; k < f.d; ++k) t += x(n, k) * f.w1(k, j);
      h1(n, j) = std::tanh(t);
    }
  Matrix s(x.rows(), f.q);
  for (int n = 0; n < x.rows(); ++n)
    for (int j = 0; j < f.q; ++j) {
      double t = f.b2(0, j);
      for (int k = 0; k < f.hidden; ++k) t += h1(n, k) * f.w2(k, j);
      s(n, j) = std::tanh(t);
    }
  Matrix y(x.rows(), 1);
  for (int n = 0; n < x.rows(); ++n) {
    double t = f.b3(0, 0);
    for (int k = 0; k < f.q; ++k) t += s(n, k) * f.w3(k, 0);
    y(n, 0) = t;
  }
  return y;
}

// Straight-line recurrent forward: chunks of d/steps features, tanh cell.
Matrix recurrent_ref(const Forecaster& f, const Matrix& x) {
  const int in = f.d / f.steps;
  Matrix y(x.rows(), 1);
  for (int n = 0; n < x.rows(); ++n) {
    std::vector<double> h(f.q, 0.0);
    for (int t = 0; t < f.steps; ++t) {
      std::vector<double> nh(f.q);
      for (int j = 0; j < f.q; ++j) {
        double acc = f.b2(0, j);
        for (int k = 0; k < in; ++k) acc += x(n, t * in + k) * f.w1(k, j);
        for (int k = 0; k < f.q; ++k) acc += h[k] * f.w2(k, j);
        nh[j] = std::tanh(acc);
      }
      h = nh;
    }
    double t = f.b3(0, 0);
    for (int k = 0; k < f.q; ++k) t += h[k] * f.w3(k, 0);
    y(n, 0) = t;
  }
  return y;
}

}  // namespace

TEST_CASE("mlp forward matches a plain-loop reference") {
  Rng rng(21);
  Forecaster f = Forecaster::init_mlp(5, 7, 4, rng);
  const Matrix x = oracle::random_matrix(rng, 6, 5);
  const Matrix got = predict_values(f, x);
  const Matrix want = mlp_ref(f, x);
  REQUIRE(got.rows() == 6);
  REQUIRE(got.cols() == 1);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("recurrent forward matches a plain-loop reference") {
  Rng rng(22);
  Forecaster f = Forecaster::init_recurrent(12, 8, 6, rng);
  const Matrix x = oracle::random_matrix(rng, 5, 12);
  const Matrix got = predict_values(f, x);
  const Matrix want = recurrent_ref(f, x);
  REQUIRE(got.rows() == 5);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predict is exactly head of encode") {
  Rng rng(23);
  for (int which = 0; which < 2; ++which) {
    Forecaster f = which == 0 ? Forecaster::init_mlp(6, 9, 5, rng)
                              : Forecaster::init_recurrent(6, 5, 3, rng);
    const Matrix x = oracle::random_matrix(rng, 4, 6);

    ad::Tape tape;
    Binder bind(tape);
    ForecasterVars v = bind_forecaster(bind, f);
    ad::Tensor xs = bind.constant(x);
    const Matrix joint = predict(v, xs).value();
    const Matrix split = head(v, encode(v, xs)).value();
    CHECK(joint == split);
  }
}

TEST_CASE("zeroed mlp embeds everything to zero") {
  Rng rng(24);
  Forecaster f = Forecaster::init_mlp(4, 6, 3, rng);
  f.visit([](const std::string&, Matrix& m) { m.setZero(); });
  f.b3(0, 0) = 0.25;

  ad::Tape tape;
  Binder bind(tape);
  ForecasterVars v = bind_forecaster(bind, f);
  ad::Tensor xs = bind.constant(oracle::random_matrix(rng, 5, 4));
  const Matrix s = encode(v, xs).value();
  CHECK(s.isZero(0.0));
  const Matrix y = head(v, encode(v, xs)).value();
  CHECK((y.array() == 0.25).all());
}

TEST_CASE("embedding widths and shape guards") {
  Rng rng(25);
  Forecaster mlp = Forecaster::init_mlp(12, 64, 32, rng);
  Forecaster rec = Forecaster::init_recurrent(12, 32, 6, rng);
  const Matrix x = oracle::random_matrix(rng, 3, 12);

  for (Forecaster* f : {&mlp, &rec}) {
    ad::Tape tape;
    Binder bind(tape);
    ForecasterVars v = bind_forecaster(bind, *f);
    ad::Tensor s = encode(v, bind.constant(x));
    CHECK(s.rows() == 3);
    CHECK(s.cols() == 32);
  }

  CHECK_THROWS_AS(Forecaster::init_recurrent(13, 32, 6, rng), ValueError);

  ad::Tape tape;
  Binder bind(tape);
  ForecasterVars v = bind_forecaster(bind, mlp);
  CHECK_THROWS_AS(encode(v, bind.constant(oracle::random_matrix(rng, 3, 7))),
                  ShapeError);
}

TEST_CASE("initialization is seed-determined") {
  Rng a(31), b(31), c(32);
  Forecaster fa = Forecaster::init_mlp(8, 16, 4, a);
  Forecaster fb = Forecaster::init_mlp(8, 16, 4, b);
  Forecaster fc = Forecaster::init_mlp(8, 16, 4, c);
  CHECK(fa.w1 == fb.w1);
  CHECK(fa.w3 == fb.w3);
  CHECK(fa.w1 != fc.w1);

  // bounded by 1/sqrt(fan_in)
  CHECK(fa.w1.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(fa.w2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
}

TEST_CASE("loss gradients through both encoders pass finite differences") {
  for (uint64_t seed : {41u, 42u}) {
    Rng rng(seed);
    for (int which = 0; which < 2; ++which) {
      Forecaster proto = which == 0 ? Forecaster::init_mlp(4, 5, 3, rng)
                                    : Forecaster::init_recurrent(4, 3, 2, rng);
      const Matrix x = oracle::random_matrix(rng, 6, 4);
      const Matrix y = oracle::random_matrix(rng, 6, 1);

      std::vector<Matrix> params;
      proto.visit([&](const std::string&, Matrix& m) { params.push_back(m); });

      auto run = [&](const std::vector<Matrix>& ps, bool want_grad,
                     std::vector<Matrix>* grads) {
        Forecaster f = proto;
        size_t k = 0;
        f.visit([&](const std::string&, Matrix& m) { m = ps[k++]; });
        ad::Tape tape;
        Binder bind(tape);
        ForecasterVars v = bind_forecaster(bind, f);
        ad::Tensor loss =
            ad::mse(predict(v, bind.constant(x)), bind.constant(y));
        const double out = loss.value()(0, 0);
        if (want_grad) {
          tape.backward(loss);
          for (const Matrix* g : bind.grads()) grads->push_back(*g);
        }
        return out;
      };

      std::vector<Matrix> got;
      run(params, true, &got);
      const auto want = oracle::finite_diff(
          [&](const std::vector<Matrix>& ps) { return run(ps, false, nullptr); },
          params);
      INFO("arch ", which, " seed ", seed);
      CHECK(oracle::grads_close(got, want));
    }
  }
}

TEST_CASE("adam fits a small noiseless linear relation") {
  Rng rng(51);
  const int n = 64, d = 6;
  const Matrix x = oracle::random_matrix(rng, n, d);
  Matrix w_true = oracle::random_matrix(rng, d, 1, 0.3);
  const Matrix y = x * w_true;

  Forecaster f = Forecaster::init_mlp(d, 16, 8, rng);
  Adam opt(AdamConfig{.lr = 0.01});
  double loss = 0;
  for (int it = 0; it < 400; ++it) {
    ad::Tape tape;
    Binder bind(tape);
    ForecasterVars v = bind_forecaster(bind, f);
    ad::Tensor l = ad::mse(predict(v, bind.constant(x)), bind.constant(y));
    loss = l.value()(0, 0);
    tape.backward(l);
    opt.step(bind.params(), bind.grads());
  }
  CHECK(loss < 1e-3);
}
