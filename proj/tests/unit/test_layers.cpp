#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "support/oracles.hpp"
#include "voxelprior/layers.hpp"

using namespace voxelprior;

namespace {

// Sum of grad_output-weighted outputs, so d(loss)/d(output) == probe.
double probe_loss(const Tensor& out, const Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
  return s;
}

}  // namespace

TEST_CASE("tensor rejects inconsistent shape and data") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5)), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), std::invalid_argument);
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS(t.reshaped({4, 2}));
}

TEST_CASE("conv2d hand cases") {
  Tensor x(Shape{1, 2, 2}, {1, 2, 3, 4});
  SUBCASE("1x1 identity kernel") {
    Tensor w(Shape{1, 1, 1, 1}, 1.0);
    Tensor b(Shape{1}, 0.0);
    CHECK(conv2d(x, w, b, Padding::same) == x);
  }
  SUBCASE("2x2 ones valid") {
    Tensor w(Shape{1, 1, 2, 2}, 1.0);
    Tensor b(Shape{1}, 0.0);
    Tensor y = conv2d(x, w, b, Padding::valid);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y[0] == 10.0);
  }
  SUBCASE("channel mismatch is rejected") {
    Tensor w(Shape{1, 2, 3, 3});
    Tensor b(Shape{1});
    CHECK_THROWS_WITH_AS(conv2d(x, w, b, Padding::same),
                         doctest::Contains("channels"), std::invalid_argument);
  }
}

TEST_CASE("conv2d matches direct loops") {
  std::mt19937_64 rng(11);
  for (auto padding : {Padding::same, Padding::valid}) {
    for (std::size_t k : {1u, 2u, 3u, 7u}) {
      Tensor x = oracle::random_tensor({2, 9, 8}, rng);
      Tensor w = oracle::random_tensor({3, 2, k, k}, rng);
      Tensor b = oracle::random_tensor({3}, rng);
      CHECK(conv2d(x, w, b, padding) == oracle::conv2d(x, w, b, padding));
    }
  }
}

TEST_CASE("conv3d hand cases and oracle") {
  Tensor ones(Shape{1, 2, 2, 2}, 1.0);
  Tensor w(Shape{1, 1, 2, 2, 2}, 1.0);
  Tensor b(Shape{1}, 0.0);
  CHECK(conv3d(ones, w, b, Padding::valid)[0] == 8.0);
  Tensor id(Shape{1, 1, 1, 1, 1}, 1.0);
  CHECK(conv3d(ones, id, b, Padding::same) == ones);

  std::mt19937_64 rng(12);
  for (std::size_t stride : {1u, 2u}) {
    for (auto padding : {Padding::same, Padding::valid}) {
      Tensor x = oracle::random_tensor({2, 5, 6, 7}, rng);
      Tensor k = oracle::random_tensor({3, 2, 3, 3, 3}, rng);
      Tensor bias = oracle::random_tensor({3}, rng);
      CHECK(conv3d(x, k, bias, padding, stride) ==
            oracle::conv3d(x, k, bias, padding, static_cast<long>(stride)));
    }
  }
}

TEST_CASE("maxpool2d forward, argmax routing and odd extents") {
  Tensor x(Shape{1, 2, 2}, {1, 2, 3, 4});
  CHECK(maxpool2d(x) == Tensor(Shape{1, 1, 1}, {4}));
  CHECK(maxpool2d_backward(x, Tensor(Shape{1, 1, 1}, 1.0)) ==
        Tensor(Shape{1, 2, 2}, {0, 0, 0, 1}));
  Tensor ties(Shape{1, 2, 2}, 5.0);
  CHECK(maxpool2d_backward(ties, Tensor(Shape{1, 1, 1}, 1.0)) ==
        Tensor(Shape{1, 2, 2}, {1, 0, 0, 0}));
  CHECK_THROWS_AS(maxpool2d(Tensor(Shape{1, 3, 2})), std::invalid_argument);

  std::mt19937_64 rng(13);
  Tensor r = oracle::random_tensor({4, 8, 8}, rng);
  CHECK(maxpool2d(r) == oracle::maxpool2d(r));
}

TEST_CASE("dense hand cases") {
  Tensor x(Shape{2}, {1, 1});
  Tensor w(Shape{2, 2}, {1, 2, 3, 4});
  Tensor b(Shape{2}, 0.0);
  CHECK(dense(x, w, b) == Tensor(Shape{2}, {3, 7}));
  Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  CHECK(dense(Tensor(Shape{2}, {5, -2}), eye, b) == Tensor(Shape{2}, {5, -2}));
  CHECK_THROWS_AS(dense(Tensor(Shape{3}), w, b), std::invalid_argument);

  std::mt19937_64 rng(14);
  Tensor rx = oracle::random_tensor({16}, rng);
  Tensor rw = oracle::random_tensor({8, 16}, rng);
  Tensor rb = oracle::random_tensor({8}, rng);
  CHECK(dense(rx, rw, rb) == oracle::dense(rx, rw, rb));
}

TEST_CASE("activations") {
  Tensor x(Shape{3}, {-1.0, 0.0, 2.0});
  CHECK(activate(x, Activation::sigmoid())[1] == 0.5);
  CHECK(activate(x, Activation::leaky_relu(0.01))[0] == doctest::Approx(-0.01));
  CHECK(activate(Tensor(Shape{1}, -5.0), Activation::relu())[0] == 0.0);
  CHECK_THROWS(Activation::leaky_relu(1.0));

  Tensor g(Shape{3}, 1.0);
  Tensor leaky = activate_backward(x, activate(x, Activation::leaky_relu(0.3)), g,
                                   Activation::leaky_relu(0.3));
  CHECK(leaky[1] == 0.3);
  CHECK(leaky[2] == 1.0);

  Tensor extreme(Shape{2}, {-1e6, 1e6});
  Tensor s = activate(extreme, Activation::sigmoid());
  CHECK(s[0] > 0.0);
  CHECK(s[1] < 1.0);
}

TEST_CASE("bce loss values") {
  Tensor half(Shape{1}, 0.5);
  CHECK(bce_loss(half, Tensor(Shape{1}, 1.0)) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(half, half) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(bce_loss(half, Tensor(Shape{2})), std::invalid_argument);

  std::mt19937_64 rng(15);
  Tensor p = oracle::random_tensor({4, 4, 4}, rng, 0.01, 0.99);
  Tensor t = oracle::random_tensor({4, 4, 4}, rng, 0.0, 1.0);
  CHECK(bce_loss(p, t) == oracle::bce(p, t));
  Tensor saturated(Shape{2}, {0.0, 1.0});
  CHECK(std::isfinite(bce_loss(saturated, Tensor(Shape{2}, {1.0, 0.0}))));
}

TEST_CASE("numeric_gradient analytic cases") {
  auto sig = [](const Tensor& v) {
    return activate(v, Activation::sigmoid())[0];
  };
  CHECK(numeric_gradient(sig, Tensor(Shape{1}, 0.0))[0] ==
        doctest::Approx(0.25).epsilon(1e-6));
  auto squares = [](const Tensor& v) {
    double s = 0;
    for (double e : v.values()) s += e * e;
    return s;
  };
  Tensor g = numeric_gradient(squares, Tensor(Shape{2}, {1, 2}));
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(4.0));
}

TEST_CASE("layer backward passes match finite differences") {
  std::mt19937_64 rng(16);
  constexpr double tol = 1e-4;

  SUBCASE("conv2d") {
    for (auto padding : {Padding::same, Padding::valid}) {
      Tensor x = oracle::random_tensor({2, 6, 5}, rng);
      Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
      Tensor b = oracle::random_tensor({3}, rng);
      Tensor probe = oracle::random_tensor(conv2d(x, w, b, padding).shape(), rng);
      LayerGrad g = conv2d_backward(x, w, probe, padding);
      CHECK(max_relative_error(g.input_grad, numeric_gradient([&](const Tensor& v) {
              return probe_loss(conv2d(v, w, b, padding), probe);
            }, x)) < tol);
      CHECK(max_relative_error(g.weight_grad, numeric_gradient([&](const Tensor& v) {
              return probe_loss(conv2d(x, v, b, padding), probe);
            }, w)) < tol);
      CHECK(max_relative_error(g.bias_grad, numeric_gradient([&](const Tensor& v) {
              return probe_loss(conv2d(x, w, v, padding), probe);
            }, b)) < tol);
    }
  }

  SUBCASE("conv3d") {
    for (std::size_t stride : {1u, 2u}) {
      Tensor x = oracle::random_tensor({2, 4, 5, 4}, rng);
      Tensor w = oracle::random_tensor({2, 2, 3, 3, 3}, rng);
      Tensor b = oracle::random_tensor({2}, rng);
      Tensor probe =
          oracle::random_tensor(conv3d(x, w, b, Padding::same, stride).shape(), rng);
      LayerGrad g = conv3d_backward(x, w, probe, Padding::same, stride);
      CHECK(max_relative_error(g.input_grad, numeric_gradient([&](const Tensor& v) {
              return probe_loss(conv3d(v, w, b, Padding::same, stride), probe);
            }, x)) < tol);
      CHECK(max_relative_error(g.weight_grad, numeric_gradient([&](const Tensor& v) {
              return probe_loss(conv3d(x, v, b, Padding::same, stride), probe);
            }, w)) < tol);
      CHECK(max_relative_error(g.bias_grad, numeric_gradient([&](const Tensor& v) {
              return probe_loss(conv3d(x, w, v, Padding::same, stride), probe);
            }, b)) < tol);
    }
  }

  SUBCASE("maxpool, dense, upsample, activations, bce") {
    Tensor x = oracle::random_tensor({2, 4, 6}, rng);
    Tensor probe = oracle::random_tensor({2, 2, 3}, rng);
    CHECK(max_relative_error(maxpool2d_backward(x, probe),
                             numeric_gradient([&](const Tensor& v) {
                               return probe_loss(maxpool2d(v), probe);
                             }, x)) < tol);

    Tensor dx = oracle::random_tensor({7}, rng);
    Tensor dw = oracle::random_tensor({5, 7}, rng);
    Tensor db = oracle::random_tensor({5}, rng);
    Tensor dprobe = oracle::random_tensor({5}, rng);
    LayerGrad dg = dense_backward(dx, dw, dprobe);
    CHECK(max_relative_error(dg.input_grad, numeric_gradient([&](const Tensor& v) {
            return probe_loss(dense(v, dw, db), dprobe);
          }, dx)) < tol);
    CHECK(max_relative_error(dg.weight_grad, numeric_gradient([&](const Tensor& v) {
            return probe_loss(dense(dx, v, db), dprobe);
          }, dw)) < tol);

    Tensor ux = oracle::random_tensor({2, 2, 3, 2}, rng);
    Tensor uprobe = oracle::random_tensor({2, 4, 6, 4}, rng);
    CHECK(max_relative_error(upsample3d_backward(uprobe),
                             numeric_gradient([&](const Tensor& v) {
                               return probe_loss(upsample3d(v), uprobe);
                             }, ux)) < tol);

    Tensor ax = oracle::random_tensor({9}, rng, -3.0, 3.0);
    Tensor aprobe = oracle::random_tensor({9}, rng);
    for (Activation act : {Activation::relu(), Activation::leaky_relu(0.3),
                           Activation::sigmoid()}) {
      Tensor out = activate(ax, act);
      CHECK(max_relative_error(activate_backward(ax, out, aprobe, act),
                               numeric_gradient([&](const Tensor& v) {
                                 return probe_loss(activate(v, act), aprobe);
                               }, ax)) < tol);
    }

    Tensor p = oracle::random_tensor({3, 3}, rng, 0.05, 0.95);
    Tensor t = oracle::random_tensor({3, 3}, rng, 0.0, 1.0);
    CHECK(max_relative_error(bce_loss_backward(p, t),
                             numeric_gradient([&](const Tensor& v) {
                               return bce_loss(v, t);
                             }, p)) < tol);
  }
}
