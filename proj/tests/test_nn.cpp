#include <doctest.h>

#include "saae/error.hpp"
#include "saae/nn.hpp"
#include "support.hpp"

using namespace saae;
using namespace saae::nn;

namespace {

Maps random_maps(std::mt19937_64& rng, int batch, int sensors, int len, int channels) {
  std::normal_distribution<double> g(0.0, 1.0);
  Maps m{batch, sensors, len, Matrix(static_cast<Eigen::Index>(batch) * sensors * len, channels)};
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = g(rng);
  return m;
}

Matrix random_like(std::mt19937_64& rng, const Matrix& shape) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix r(shape.rows(), shape.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = g(rng);
  return r;
}

// Checks parameter and input gradients of a layer under the scalar loss
// sum(forward(x) .* probe).
template <class Forward, class Backward>
void check_layer(std::mt19937_64& rng, Maps x, std::vector<NamedParam> params, Forward forward,
                 Backward backward) {
  const Maps y = forward(x);
  const Matrix probe = random_like(rng, y.data);
  for (auto& p : params) p.param->zero_grad();
  const Maps gx = backward(Maps{y.batch, y.sensors, y.len, probe});
  auto loss = [&] { return forward(x).data.cwiseProduct(probe).sum(); };
  for (auto& p : params) {
    const Matrix analytic = p.param->grad;
    const auto r = test::check_param(*p.param, analytic, loss, 12, rng);
    INFO(p.name << " worst " << r.worst);
    CHECK(r.failed == 0);
  }
  Param input;
  input.value = x.data;
  auto loss_x = [&] {
    Maps xi = x;
    xi.data = input.value;
    return forward(xi).data.cwiseProduct(probe).sum();
  };
  const auto r = test::check_param(input, gx.data, loss_x, 12, rng);
  INFO("input worst " << r.worst);
  CHECK(r.failed == 0);
}

}  // namespace

TEST_CASE("conv1d matches a direct valid convolution") {
  std::mt19937_64 rng(1);
  Conv1d conv(2, 3, 3);
  Rng init(4);
  conv.init(init, 1.0);
  std::vector<NamedParam> ps;
  conv.collect("c", ps);
  ps[1].param->value = random_like(rng, ps[1].param->value);
  const Matrix& w = ps[0].param->value;
  const Matrix& b = ps[1].param->value;
  const Maps x = random_maps(rng, 2, 2, 7, 2);
  const Maps y = conv.forward(x);
  REQUIRE(y.len == 5);
  for (int bb = 0; bb < 2; ++bb)
    for (int s = 0; s < 2; ++s)
      for (int t = 0; t < 5; ++t)
        for (int oc = 0; oc < 3; ++oc) {
          double acc = b(0, oc);
          for (int j = 0; j < 3; ++j)
            for (int ic = 0; ic < 2; ++ic) acc += x.data(x.row(bb, s, t + j), ic) * w(j * 2 + ic, oc);
          CHECK(y.data(y.row(bb, s, t), oc) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("transposed conv matches a direct full convolution") {
  std::mt19937_64 rng(2);
  ConvTranspose1d deconv(3, 2, 2);
  Rng init(5);
  deconv.init(init, 1.0);
  std::vector<NamedParam> ps;
  deconv.collect("d", ps);
  const Matrix& w = ps[0].param->value;
  const Maps x = random_maps(rng, 2, 3, 4, 3);
  const Maps y = deconv.forward(x);
  REQUIRE(y.len == 5);
  for (int bb = 0; bb < 2; ++bb)
    for (int s = 0; s < 3; ++s)
      for (int t = 0; t < 5; ++t)
        for (int oc = 0; oc < 2; ++oc) {
          double acc = 0.0;
          for (int j = 0; j < 2; ++j) {
            const int src = t - j;
            if (src < 0 || src >= 4) continue;
            for (int ic = 0; ic < 3; ++ic) acc += x.data(x.row(bb, s, src), ic) * w(ic, j * 2 + oc);
          }
          CHECK(y.data(y.row(bb, s, t), oc) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("layer gradients match central differences") {
  std::mt19937_64 rng(7);
  Rng init(9);

  SUBCASE("conv1d") {
    Conv1d conv(3, 4, 3);
    conv.init(init, std::sqrt(2.0));
    std::vector<NamedParam> ps;
    conv.collect("conv", ps);
    check_layer(rng, random_maps(rng, 2, 2, 6, 3), ps, [&](const Maps& x) { return conv.forward(x); },
                [&](const Maps& g) { return conv.backward(g); });
  }
  SUBCASE("transposed conv") {
    ConvTranspose1d deconv(3, 2, 3);
    deconv.init(init, 1.0);
    std::vector<NamedParam> ps;
    deconv.collect("deconv", ps);
    check_layer(rng, random_maps(rng, 2, 2, 4, 3), ps, [&](const Maps& x) { return deconv.forward(x); },
                [&](const Maps& g) { return deconv.backward(g); });
  }
  SUBCASE("batch norm in training mode") {
    BatchNorm bn(3);
    std::vector<NamedParam> ps;
    bn.collect("bn", ps);
    ps[0].param->value = Matrix::Constant(1, 3, 1.3);
    ps[1].param->value = Matrix::Constant(1, 3, -0.2);
    check_layer(rng, random_maps(rng, 3, 2, 4, 3), ps, [&](const Maps& x) { return bn.forward(x, true, false); },
                [&](const Maps& g) { return bn.backward(g); });
  }
  SUBCASE("batch norm in inference mode") {
    BatchNorm bn(2);
    std::vector<NamedParam> ps;
    bn.collect("bn", ps);
    bn.forward(random_maps(rng, 4, 1, 5, 2), true, true);
    check_layer(rng, random_maps(rng, 2, 2, 3, 2), ps, [&](const Maps& x) { return bn.forward(x, false, false); },
                [&](const Maps& g) { return bn.backward(g); });
  }
  SUBCASE("relu, maxpool and upsample") {
    Relu relu;
    MaxPool2 pool;
    Upsample2 up;
    check_layer(rng, random_maps(rng, 2, 2, 6, 2), {},
                [&](const Maps& x) { return up.forward(pool.forward(relu.forward(x))); },
                [&](const Maps& g) { return relu.backward(pool.backward(up.backward(g))); });
  }
  SUBCASE("dense") {
    Dense fc(5, 3);
    fc.init(init, 1.0);
    std::vector<NamedParam> ps;
    fc.collect("fc", ps);
    auto as_maps = [](const Matrix& m) { return Maps{static_cast<int>(m.rows()), 1, 1, m}; };
    check_layer(rng, random_maps(rng, 4, 1, 1, 5), ps, [&](const Maps& x) { return as_maps(fc.forward(x.data)); },
                [&](const Maps& g) { return as_maps(fc.backward(g.data)); });
  }
}

TEST_CASE("batch norm running statistics use momentum 0.9 and biased variance") {
  BatchNorm bn(1);
  std::vector<NamedBuffer> bufs;
  bn.collect_buffers("bn", bufs);
  Maps x{1, 1, 4, Matrix(4, 1)};
  x.data << 1, 2, 3, 4;
  bn.forward(x, true, true);
  CHECK((*bufs[0].buffer)(0, 0) == doctest::Approx(0.1 * 2.5));
  CHECK((*bufs[1].buffer)(0, 0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.25));
  const Maps y = bn.forward(x, true, false);
  CHECK(y.data.mean() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.data(0, 0) == doctest::Approx(-1.5 / std::sqrt(1.25 + BatchNorm::kEps)));
}

TEST_CASE("max pool resolves ties to the earlier step") {
  MaxPool2 pool;
  Maps x{1, 1, 4, Matrix(4, 1)};
  x.data << 2, 2, 1, 3;
  const Maps y = pool.forward(x);
  CHECK(y.data(0, 0) == 2.0);
  CHECK(y.data(1, 0) == 3.0);
  const Maps g = pool.backward(Maps{1, 1, 2, Matrix::Ones(2, 1)});
  CHECK(g.data(0, 0) == 1.0);
  CHECK(g.data(1, 0) == 0.0);
  CHECK(g.data(3, 0) == 1.0);
}

TEST_CASE("flatten and unflatten are inverse") {
  std::mt19937_64 rng(3);
  const Maps m = random_maps(rng, 3, 2, 4, 5);
  const Matrix flat = flatten(m);
  CHECK(flat.rows() == 3);
  CHECK(flat.cols() == 40);
  CHECK(flat(1, 0) == m.data(m.row(1, 0, 0), 0));
  CHECK(flat(1, 1) == m.data(m.row(1, 1, 0), 0));
  CHECK(unflatten(flat, 5, 4, 2).data == m.data);
}

TEST_CASE("softmax rows form a simplex even for large logits") {
  Matrix l(2, 3);
  l << 1000, 1001, 999, -5, 0, 5;
  const Matrix p = softmax_rows(l);
  CHECK(p.allFinite());
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p(0, 1) > p(0, 0));
}

TEST_CASE("adam applies the bias-corrected update") {
  Param p(1, 2);
  p.value << 1.0, -1.0;
  Adam opt({&p}, {0.1, 0.9, 0.999, 1e-8});
  p.grad << 2.0, -0.5;
  opt.step();
  // First step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.value(0, 1) == doctest::Approx(-1.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  p.grad << 1.0, 0.0;
  opt.step();
  const double m = 0.9 * 0.2 + 0.1 * 1.0, v = 0.999 * 0.004 + 0.001 * 1.0;
  const double expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * (m / 0.19) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(p.value(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(opt.steps() == 2);
}

TEST_CASE("fan-in scaled initialization") {
  Param p(400, 300);
  Rng rng(1);
  init_normal(p, 400, 2.0, rng);
  const double mean = p.value.mean();
  const double var = (p.value.array() - mean).square().mean();
  CHECK(std::fabs(mean) < 0.01);
  CHECK(var == doctest::Approx(4.0 / 400).epsilon(0.03));
}
