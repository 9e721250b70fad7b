#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <vector>

#include "driftmeta/autodiff.hpp"
#include "driftmeta/optim.hpp"
#include "driftmeta/rng.hpp"
#include "support/oracles.hpp"

using driftmeta::Matrix;
using driftmeta::Rng;
namespace ad = driftmeta::ad;

namespace {

using Builder =
    std::function<ad::Tensor(ad::Tape&, const std::vector<ad::Tensor>&)>;

double eval_loss(const Builder& build, const std::vector<Matrix>& params) {
  ad::Tape tape;
  std::vector<ad::Tensor> vars;
  for (const Matrix& p : params) vars.push_back(tape.leaf(p));
  return build(tape, vars).value()(0, 0);
}

std::vector<Matrix> tape_grads(const Builder& build,
                               const std::vector<Matrix>& params) {
  ad::Tape tape;
  std::vector<ad::Tensor> vars;
  for (const Matrix& p : params) vars.push_back(tape.leaf(p));
  ad::Tensor loss = build(tape, vars);
  tape.backward(loss);
  std::vector<Matrix> out;
  for (const ad::Tensor& v : vars) out.push_back(v.grad());
  return out;
}

void check_against_fd(const char* label, const Builder& build,
                      const std::vector<Matrix>& params) {
  INFO(label);
  const auto got = tape_grads(build, params);
  const auto want = oracle::finite_diff(
      [&](const std::vector<Matrix>& p) { return eval_loss(build, p); },
      params);
  CHECK(oracle::grads_close(got, want));
}

// Projects an arbitrary op output to a generic scalar so every entry of the
// output contributes to the gradient.
ad::Tensor pick(ad::Tape& t, ad::Tensor out, const Matrix& weights) {
  return ad::sum_all(ad::mul(out, t.leaf(weights)));
}

}  // namespace

TEST_CASE("every primitive passes central finite differences") {
  for (uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    const Matrix a34 = oracle::random_matrix(rng, 3, 4);
    const Matrix b42 = oracle::random_matrix(rng, 4, 2);
    const Matrix c34 = oracle::random_matrix(rng, 3, 4);
    const Matrix r32 = oracle::random_matrix(rng, 3, 2);
    const Matrix r34 = oracle::random_matrix(rng, 3, 4);
    const Matrix r43 = oracle::random_matrix(rng, 4, 3);
    const Matrix row = oracle::random_matrix(rng, 1, 4);
    const Matrix colw = oracle::random_matrix(rng, 3, 1);
    const Matrix scalar = oracle::random_matrix(rng, 1, 1, 0.5).array() + 1.5;
    const Matrix pos34 = a34.array().abs() + 0.5;
    const Matrix proto = oracle::random_matrix(rng, 5, 4);
    const Matrix r35 = oracle::random_matrix(rng, 3, 5);
    const Matrix r14 = oracle::random_matrix(rng, 1, 4);
    const Matrix r11 = oracle::random_matrix(rng, 1, 1);
    const Matrix r64 = oracle::random_matrix(rng, 6, 4);
    const Matrix r33 = oracle::random_matrix(rng, 3, 3);

    check_against_fd(
        "matmul",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::matmul(v[0], v[1]), r32);
        },
        {a34, b42});
    check_against_fd(
        "transpose",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::transpose(v[0]), r43);
        },
        {a34});
    check_against_fd(
        "add",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::add(v[0], v[1]), r34);
        },
        {a34, c34});
    check_against_fd(
        "sub",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::sub(v[0], v[1]), r34);
        },
        {a34, c34});
    check_against_fd(
        "mul",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::mul(v[0], v[1]), r34);
        },
        {a34, c34});
    check_against_fd(
        "add_rowvec",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::add_rowvec(v[0], v[1]), r34);
        },
        {a34, row});
    check_against_fd(
        "colwise_scale",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::colwise_scale(v[0], v[1]), r34);
        },
        {a34, colw});
    check_against_fd(
        "scale+add_const",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::add_const(ad::scale(v[0], -1.7), 0.3), r34);
        },
        {a34});
    check_against_fd(
        "mul_scalar",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::mul_scalar(v[0], v[1]), r34);
        },
        {a34, scalar});
    check_against_fd(
        "div_scalar",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::div_scalar(v[0], v[1]), r34);
        },
        {a34, scalar});
    check_against_fd(
        "add_scalar",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::add_scalar(v[0], v[1]), r34);
        },
        {a34, scalar});
    check_against_fd(
        "sub_scalar",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::sub_scalar(v[0], v[1]), r34);
        },
        {a34, scalar});
    check_against_fd(
        "tanh",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::tanh(v[0]), r34);
        },
        {a34});
    check_against_fd(
        "sigmoid",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::sigmoid(v[0]), r34);
        },
        {a34});
    check_against_fd(
        "relu",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::relu(v[0]), r34);
        },
        {a34});
    check_against_fd(
        "sqrt_elem",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::sqrt_elem(v[0]), r34);
        },
        {pos34});
    check_against_fd(
        "softmax_rows",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::softmax_rows(v[0]), r34);
        },
        {a34});
    check_against_fd(
        "cosine_rows",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::cosine_rows(v[0], v[1]), r35);
        },
        {a34, proto});
    check_against_fd(
        "cosine_similarity",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::cosine_similarity(v[0], v[1]), r11);
        },
        {row, r14});
    check_against_fd(
        "sum_all",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          (void)t;
          return ad::sum_all(v[0]);
        },
        {a34});
    check_against_fd(
        "mean_rows",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::mean_rows(v[0]), r14);
        },
        {a34});
    check_against_fd(
        "frobenius_sq",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          (void)t;
          return ad::frobenius_sq(v[0]);
        },
        {a34});
    check_against_fd(
        "mse",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          (void)t;
          return ad::mse(v[0], v[1]);
        },
        {a34, c34});
    check_against_fd(
        "concat_rows",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::concat_rows({v[0], v[1]}), r64);
        },
        {a34, c34});
    check_against_fd(
        "slice_cols",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::slice_cols(v[0], 1, 3), r33);
        },
        {a34});
    check_against_fd(
        "slice_rows",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          return pick(t, ad::slice_rows(v[0], 1, 2),
                      Matrix(r34.topRows(2)));
        },
        {a34});
    check_against_fd(
        "l2_norm",
        [&](ad::Tape& t, const std::vector<ad::Tensor>& v) {
          (void)t;
          return ad::l2_norm(v[0]);
        },
        {a34});
  }
}

TEST_CASE("pinned forward values") {
  ad::Tape t;
  SUBCASE("softmax of a uniform row is uniform") {
    auto x = t.leaf(Matrix::Zero(1, 3));
    auto y = ad::softmax_rows(x);
    for (int i = 0; i < 3; ++i)
      CHECK(y.value()(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("cosine of orthogonal vectors is zero") {
    Matrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 1;
    auto c = ad::cosine_similarity(t.leaf(a), t.leaf(b));
    CHECK(c.value()(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("mse averages over all elements") {
    Matrix p(1, 2), q(1, 2);
    p << 1, 2;
    q << 0, 0;
    auto m = ad::mse(t.leaf(p), t.leaf(q));
    CHECK(m.value()(0, 0) == doctest::Approx(2.5).epsilon(1e-15));
  }
}

TEST_CASE("parameters unreachable from the loss get zero gradients") {
  ad::Tape t;
  auto used = t.leaf(Matrix::Constant(2, 2, 1.5));
  auto unused = t.leaf(Matrix::Constant(3, 3, 2.0));
  auto loss = ad::frobenius_sq(used);
  t.backward(loss);
  CHECK(unused.grad().isZero(0.0));
  CHECK(used.grad()(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("gradients accumulate through shared subexpressions") {
  ad::Tape t;
  auto x = t.leaf(Matrix::Constant(1, 1, 3.0));
  auto y = ad::add(x, x);  // dy/dx = 2
  t.backward(ad::sum_all(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar losses and runs once") {
  ad::Tape t;
  auto x = t.leaf(Matrix::Constant(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), driftmeta::ShapeError);
  ad::Tape t2;
  auto x2 = t2.leaf(Matrix::Constant(1, 1, 1.0));
  auto l = ad::sum_all(x2);
  t2.backward(l);
  CHECK_THROWS_AS(t2.backward(l), driftmeta::Error);
}

TEST_CASE("shape mismatches name both shapes") {
  ad::Tape t;
  auto a = t.leaf(Matrix::Zero(3, 4));
  auto b = t.leaf(Matrix::Zero(5, 2));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const driftmeta::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("3x4") != std::string::npos);
    CHECK(msg.find("5x2") != std::string::npos);
  }
}

TEST_CASE("hinge and sqrt take subgradient zero at their kinks") {
  ad::Tape t;
  auto x = t.leaf(Matrix::Zero(1, 1));
  auto l = ad::sum_all(ad::relu(x));
  t.backward(l);
  CHECK(x.grad()(0, 0) == 0.0);

  ad::Tape t2;
  auto z = t2.leaf(Matrix::Zero(1, 1));
  auto l2 = ad::sum_all(ad::sqrt_elem(z));
  t2.backward(l2);
  CHECK(z.grad()(0, 0) == 0.0);
}

TEST_CASE("non-finite gradients abort") {
  ad::Tape t;
  auto x = t.leaf(Matrix::Constant(1, 1, 1e308));
  auto l = ad::frobenius_sq(x);  // value overflows to inf
  CHECK_THROWS_AS(t.backward(l), driftmeta::ValueError);
}

TEST_CASE("degenerate cosine inputs are rejected") {
  ad::Tape t;
  auto x = t.leaf(Matrix::Zero(2, 3));
  auto p = t.leaf(Matrix::Constant(2, 3, 1.0));
  CHECK_THROWS_AS(ad::cosine_rows(x, p), driftmeta::ValueError);
}

TEST_CASE("one Adam step from zero parameters") {
  // m_hat = g, v_hat = g^2 after the first step, so the update is
  // -lr * g / (|g| + eps): -0.001 for unit gradient at default settings.
  Matrix theta = Matrix::Zero(1, 1);
  Matrix g = Matrix::Constant(1, 1, 1.0);
  driftmeta::Adam adam(driftmeta::AdamConfig{0.001, 0.9, 0.999, 1e-8});
  adam.step({{"theta", &theta}}, {&g});
  CHECK(theta(0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("Adam against a finite-difference trace of three steps") {
  // Reference Adam computed with plain loops.
  Rng rng(7);
  Matrix theta = oracle::random_matrix(rng, 2, 3);
  Matrix ref = theta;
  double m[6] = {0}, v[6] = {0};
  driftmeta::Adam adam(driftmeta::AdamConfig{});
  for (int step = 1; step <= 3; ++step) {
    Matrix g = oracle::random_matrix(rng, 2, 3);
    adam.step({{"theta", &theta}}, {&g});
    int k = 0;
    for (Eigen::Index i = 0; i < 2; ++i) {
      for (Eigen::Index j = 0; j < 3; ++j, ++k) {
        m[k] = 0.9 * m[k] + 0.1 * g(i, j);
        v[k] = 0.999 * v[k] + 0.001 * g(i, j) * g(i, j);
        const double mh = m[k] / (1.0 - std::pow(0.9, step));
        const double vh = v[k] / (1.0 - std::pow(0.999, step));
        ref(i, j) -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
      }
    }
  }
  CHECK((theta - ref).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sgd step is a plain single gradient step") {
  Matrix theta = Matrix::Constant(1, 2, 1.0);
  Matrix g(1, 2);
  g << 0.5, -2.0;
  driftmeta::sgd_step({{"theta", &theta}}, {&g}, 0.1);
  CHECK(theta(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(theta(0, 1) == doctest::Approx(1.2).epsilon(1e-15));
  Matrix bad(1, 2);
  bad << std::numeric_limits<double>::quiet_NaN(), 0.0;
  CHECK_THROWS_AS(driftmeta::sgd_step({{"theta", &theta}}, {&bad}, 0.1),
                  driftmeta::ValueError);
}

TEST_CASE("identical graphs give bitwise-identical gradients") {
  auto run = [] {
    Rng rng(99);
    const Matrix a = oracle::random_matrix(rng, 4, 4);
    const Matrix b = oracle::random_matrix(rng, 4, 4);
    ad::Tape t;
    auto va = t.leaf(a), vb = t.leaf(b);
    auto loss = ad::mse(ad::tanh(ad::matmul(va, vb)), vb);
    t.backward(loss);
    return Matrix(va.grad());
  };
  const Matrix g1 = run(), g2 = run();
  CHECK((g1.array() == g2.array()).all());
}
