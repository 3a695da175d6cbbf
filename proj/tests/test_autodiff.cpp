#include "doctest.h"

#include <cmath>

#include "fsmix/autodiff.hpp"
#include "fsmix/ops.hpp"
#include "test_util.hpp"

using namespace fsmix;
using namespace fsmix::test;
namespace ad = fsmix::ad;

TEST_SUITE_BEGIN("autodiff");

namespace {

// Checks d(sum(f(x)))/dx against central differences.
void check_unary(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x0,
                 double tol = 1e-6) {
  ad::Var x(x0, true);
  ad::Var y = ad::sum_all(f(x));
  auto g = ad::grad(y, {x});
  Tensor fd = fd_gradient(
      [&](const Tensor& xt) {
        ad::NoGradGuard ng;
        ad::Var xv(xt, false);
        return ad::sum_all(f(xv)).scalar();
      },
      x0);
  CHECK(grad_rel_error(g[0].val(), fd) < tol);
}

}  // namespace

TEST_CASE("elementwise gradients match finite differences") {
  Rng rng(17);
  Tensor x0 = random_tensor({2, 3, 4, 5}, rng, 0.2, 1.5);  // positive for sqrt/div
  check_unary([](const ad::Var& x) { return ad::scale(x, 2.5); }, x0);
  check_unary([](const ad::Var& x) { return ad::vsqrt(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::square(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::vtanh(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::sigmoid(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::softplus(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::leaky_relu(x, 0.2); }, x0);
  check_unary([](const ad::Var& x) { return ad::div(ad::add_scalar(x, 1.0), x); }, x0);
}

TEST_CASE("structural op gradients match finite differences") {
  Rng rng(19);
  Tensor x0 = random_tensor({2, 3, 4, 4}, rng);
  check_unary([](const ad::Var& x) { return ad::avgpool2(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::upsample2(x); }, x0);
  check_unary([](const ad::Var& x) { return ad::square(ad::spatial_sum(x)); }, x0);
  check_unary([](const ad::Var& x) { return ad::square(ad::reshape(x, {6, 16})); }, x0);
  check_unary([](const ad::Var& x) {
    return ad::mul(x, ad::bcast_spatial(ad::spatial_mean(x), 4, 4));
  }, x0);
}

TEST_CASE("conv2d gradients w.r.t. input and weight match finite differences") {
  Rng rng(23);
  Tensor x0 = random_tensor({2, 3, 5, 5}, rng);
  Tensor w0 = random_tensor({4, 3, 3, 3}, rng);

  ad::Var x(x0, true), w(w0, true);
  ad::Var y = ad::sum_all(ad::square(ad::conv2d(x, w, 1)));
  auto g = ad::grad(y, {x, w});

  auto eval = [&](const Tensor& xt, const Tensor& wt) {
    ad::NoGradGuard ng;
    return ad::sum_all(ad::square(ad::conv2d(ad::Var(xt), ad::Var(wt), 1))).scalar();
  };
  Tensor fdx = fd_gradient([&](const Tensor& t) { return eval(t, w0); }, x0);
  Tensor fdw = fd_gradient([&](const Tensor& t) { return eval(x0, t); }, w0);
  CHECK(grad_rel_error(g[0].val(), fdx) < 1e-6);
  CHECK(grad_rel_error(g[1].val(), fdw) < 1e-6);
}

TEST_CASE("matmul chain gradients match finite differences") {
  Rng rng(29);
  Tensor a0 = random_tensor({3, 4}, rng);
  Tensor b0 = random_tensor({4, 2}, rng);
  ad::Var a(a0, true), b(b0, true);
  ad::Var y = ad::sum_all(ad::vtanh(ad::matmul(a, b)));
  auto g = ad::grad(y, {a, b});
  auto eval = [&](const Tensor& at, const Tensor& bt) {
    ad::NoGradGuard ng;
    return ad::sum_all(ad::vtanh(ad::matmul(ad::Var(at), ad::Var(bt)))).scalar();
  };
  CHECK(grad_rel_error(g[0].val(), fd_gradient([&](const Tensor& t) { return eval(t, b0); }, a0)) <
        1e-6);
  CHECK(grad_rel_error(g[1].val(), fd_gradient([&](const Tensor& t) { return eval(a0, t); }, b0)) <
        1e-6);
}

TEST_CASE("second-order: gradient of a gradient-norm penalty") {
  // p(x) = sum_i (d f/d x_i)^2 with f = sum(tanh(x)^2); compare dp/dx
  // against finite differences of the analytic first gradient.
  Rng rng(31);
  Tensor x0 = random_tensor({6}, rng, -1.2, 1.2);

  auto grad_value = [](const Tensor& xt) {
    ad::Var x(xt, true);
    ad::Var f = ad::sum_all(ad::square(ad::vtanh(x)));
    auto g = ad::grad(f, {x});
    return g[0].val();
  };

  // Analytic second-order path.
  ad::Var x(x0, true);
  ad::Var f = ad::sum_all(ad::square(ad::vtanh(x)));
  auto g1 = ad::grad(f, {x}, {}, /*create_graph=*/true);
  ad::Var penalty = ad::sum_all(ad::square(g1[0]));
  auto g2 = ad::grad(penalty, {x});

  // Oracle: FD over the analytic first gradient.
  Tensor fd(x0.shape());
  const double h = 1e-6;
  Tensor xp = x0;
  for (int64_t i = 0; i < x0.numel(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    Tensor gp = grad_value(xp);
    xp[i] = orig - h;
    Tensor gm = grad_value(xp);
    xp[i] = orig;
    double acc = 0.0;
    for (int64_t j = 0; j < gp.numel(); ++j)
      acc += (gp[j] * gp[j] - gm[j] * gm[j]) / (2.0 * h);
    fd[i] = acc;
  }
  CHECK(grad_rel_error(g2[0].val(), fd, 1e-6) < 1e-4);
}

TEST_CASE("second-order through conv2d") {
  Rng rng(37);
  Tensor x0 = random_tensor({1, 2, 4, 4}, rng);
  Tensor w0 = random_tensor({2, 2, 3, 3}, rng);

  auto penalty_of = [&](const Tensor& wt) {
    ad::Var x(x0, true);
    ad::Var w(wt, false);
    ad::Var f = ad::sum_all(ad::vtanh(ad::conv2d(x, w, 1)));
    auto gx = ad::grad(f, {x}, {}, /*create_graph=*/true);
    return ad::sum_all(ad::square(gx[0]));
  };

  // d penalty / d w via the taped double-backward...
  ad::Var w(w0, true);
  ad::Var x(x0, true);
  ad::Var f = ad::sum_all(ad::vtanh(ad::conv2d(x, w, 1)));
  auto gx = ad::grad(f, {x}, {}, true);
  ad::Var penalty = ad::sum_all(ad::square(gx[0]));
  auto gw = ad::grad(penalty, {w});

  // ...checked against finite differences over w of the penalty value.
  Tensor fd = fd_gradient([&](const Tensor& wt) { return penalty_of(wt).scalar(); }, w0, 1e-5);
  CHECK(grad_rel_error(gw[0].val(), fd, 1e-6) < 1e-4);
}

TEST_CASE("no-grad mode detaches") {
  Tensor x0 = Tensor::full({3}, 2.0);
  ad::Var x(x0, true);
  ad::NoGradGuard ng;
  ad::Var y = ad::square(x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad accumulates over shared subexpressions") {
  // y = x*x + x  =>  dy/dx = 2x + 1
  Tensor x0({2}, {3.0, -1.5});
  ad::Var x(x0, true);
  ad::Var y = ad::sum_all(ad::add(ad::mul(x, x), x));
  auto g = ad::grad(y, {x});
  CHECK(g[0].val()[0] == doctest::Approx(7.0));
  CHECK(g[0].val()[1] == doctest::Approx(-2.0));
}

TEST_CASE("inputs untouched by the output get zero gradients") {
  ad::Var x(Tensor::full({2}, 1.0), true);
  ad::Var z(Tensor::full({3}, 1.0), true);
  ad::Var y = ad::sum_all(ad::square(x));
  auto g = ad::grad(y, {x, z});
  CHECK(g[1].val().numel() == 3);
  CHECK(g[1].val()[0] == 0.0);
}

TEST_SUITE_END();
