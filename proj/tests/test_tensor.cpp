#include "doctest.h"
#include "gradcheck.hpp"

#include "dimnas/ops.hpp"
#include "dimnas/rng.hpp"

#include <vector>

using namespace dimnas;
using dimnas::testing::grad_check;

namespace {

template <typename S>
Tensor<S> random_tensor(Shape shape, Rng& rng) {
  std::vector<S> v(static_cast<std::size_t>(shape.numel()));
  for (auto& x : v) x = static_cast<S>(rng.normal());
  return Tensor<S>::from(std::move(shape), v);
}

Tensor<double> projection(const Tensor<double>& y, Rng& rng) {
  Eigen::ArrayXd w(y.numel());
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
  return dot(y, w);
}

// Nested-loop cross-correlation with zero "same" padding, rank 1 only.
std::vector<double> direct_conv1d(const std::vector<double>& x, const std::vector<double>& k) {
  const int n = static_cast<int>(x.size()), r = static_cast<int>(k.size()) / 2;
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = -r; j <= r; ++j)
      if (i + j >= 0 && i + j < n) out[i] += k[j + r] * x[i + j];
  return out;
}

}  // namespace

TEST_CASE("shape accessors and numel") {
  Shape s{2, 3, 4, 5};
  CHECK(s.spatial_rank() == 2);
  CHECK(s.numel() == 120);
  CHECK(s.height() == 4);
  CHECK(Shape{1, 1, 7}.height() == 1);
  CHECK_THROWS_AS(Shape({2, 3}), ShapeError);
  CHECK_THROWS_AS(Shape({1, 1, 2, 2, 2}), ShapeError);
  CHECK_THROWS_AS(Shape({1, 0, 4}), ShapeError);
}

TEST_CASE("1x1 identity kernel reproduces the input") {
  Rng rng(1);
  auto x = random_tensor<float>({1, 1, 8}, rng);
  auto p = ConvParams<float>::zeros(1, 1, 1, 1);
  p.kernel.mutable_value()[0] = 1.0f;
  auto y = conv(x, p);
  CHECK((y.value() == x.value()).all());
}

TEST_CASE("conv is cross-correlation with same padding") {
  auto x = Tensor<float>::from({1, 1, 5}, std::vector<float>{0, 0, 1, 0, 0});
  auto p = ConvParams<float>::zeros(1, 1, 1, 3);
  p.kernel.mutable_value() << 1, 2, 3;
  auto y = conv(x, p);
  std::vector<float> got(y.value().begin(), y.value().end());
  CHECK(got == std::vector<float>{0, 3, 2, 1, 0});

  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> xs(9), ks(5);
    for (auto& v : xs) v = rng.normal();
    for (auto& v : ks) v = rng.normal();
    auto pd = ConvParams<double>::zeros(1, 1, 1, 5);
    for (int i = 0; i < 5; ++i) pd.kernel.mutable_value()[i] = ks[i];
    auto yd = conv(Tensor<double>::from({1, 1, 9}, xs), pd);
    const auto want = direct_conv1d(xs, ks);
    for (int i = 0; i < 9; ++i) CHECK(yd.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("strided conv output shape") {
  Rng rng(3);
  auto x = random_tensor<float>({2, 3, 16, 16}, rng);
  auto p = ConvParams<float>::zeros(2, 3, 4, 3, 2);
  CHECK(conv(x, p).shape() == Shape{2, 4, 8, 8});
  auto odd = random_tensor<float>({1, 3, 7}, rng);
  CHECK(conv(odd, ConvParams<float>::zeros(1, 3, 2, 3, 2)).shape() == Shape{1, 2, 4});
}

TEST_CASE("conv rejects bad shapes and kernels") {
  Rng rng(4);
  auto x = random_tensor<float>({1, 2, 8}, rng);
  CHECK_THROWS_AS(conv(x, ConvParams<float>::zeros(1, 3, 4, 3)), ShapeError);
  CHECK_THROWS_AS(conv(x, ConvParams<float>::zeros(2, 2, 4, 3)), ShapeError);
  CHECK_THROWS(ConvParams<float>::zeros(1, 2, 2, 7));
  CHECK_THROWS(downsample(x, ConvParams<float>::zeros(1, 2, 2, 3, 1)));
}

TEST_CASE("rank-1 conv equals rank-2 conv on a single-row image with a centred kernel") {
  Rng rng(5);
  for (Index k : {1, 3, 5}) {
    auto x1 = random_tensor<double>({2, 3, 12}, rng);
    auto p1 = ConvParams<double>::zeros(1, 3, 2, k);
    for (auto& v : p1.kernel.mutable_value()) v = rng.normal();
    for (auto& v : p1.bias.mutable_value()) v = rng.normal();

    auto x2 = Tensor<double>::from({2, 3, 1, 12}, std::span<const double>(x1.value().data(), x1.numel()));
    auto p2 = ConvParams<double>::zeros(2, 3, 2, k);
    p2.bias.mutable_value() = p1.bias.value();
    for (Index o = 0; o < 2; ++o)
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < k; ++j)
          p2.kernel.mutable_value()[((o * 3 + i) * k + k / 2) * k + j] = p1.kernel.value()[(o * 3 + i) * k + j];
    const auto y1 = conv(x1, p1);
    const auto y2 = conv(x2, p2);
    REQUIRE(y1.numel() == y2.numel());
    CHECK(((y1.value() - y2.value()).abs() < 1e-12).all());
  }
}

TEST_CASE("pooling examples") {
  auto x = Tensor<float>::from({1, 1, 4}, std::vector<float>{1, 5, 2, 0});
  auto m = pool(x, PoolKind::Max);
  CHECK(std::vector<float>(m.value().begin(), m.value().end()) == std::vector<float>{5, 5, 5, 2});

  auto c = Tensor<float>::full({2, 3, 5, 7}, 0.375f);
  auto a = pool(c, PoolKind::Avg);
  CHECK(a.shape() == c.shape());
  CHECK(((a.value() - 0.375f).abs() < 1e-6f).all());
}

TEST_CASE("max-pool gradient goes to the strict maximum") {
  auto x = Tensor<double>::from({1, 1, 5}, std::vector<double>{0, 1, 9, 1, 0});
  x.set_requires_grad(true);
  auto y = pool(x, PoolKind::Max);
  backward(sum(y));
  // Windows centred at 1, 2, 3 pick index 2; the edge windows {0,1} and {3,4} pick 1 and 3.
  const std::vector<double> got(x.grad().begin(), x.grad().end());
  CHECK(got == std::vector<double>{0, 1, 3, 1, 0});
}

TEST_CASE("add, relu, upsample, softmax basics") {
  Rng rng(6);
  auto a = random_tensor<float>({2, 2, 6}, rng);
  auto b = random_tensor<float>({2, 2, 6}, rng);
  CHECK((add(a, Tensor<float>::zeros(a.shape())).value() == a.value()).all());
  CHECK((add(a, b).value() == add(b, a).value()).all());
  CHECK_THROWS_AS(add(a, random_tensor<float>({2, 2, 4}, rng)), ShapeError);

  auto ad = random_tensor<double>({1, 2, 3}, rng);
  ad.set_requires_grad(true);
  backward(sum(add(ad, random_tensor<double>({1, 2, 3}, rng))));
  CHECK((ad.grad() == 1.0).all());

  auto r = relu(Tensor<float>::from({1, 1, 2}, std::vector<float>{-1, 2}));
  CHECK(r.value()[0] == 0.0f);
  CHECK(r.value()[1] == 2.0f);

  auto u = upsample(Tensor<float>::from({1, 1, 4}, std::vector<float>{1, 2, 3, 4}));
  CHECK(u.shape() == Shape{1, 1, 8});
  CHECK(std::vector<float>(u.value().begin(), u.value().end()) == std::vector<float>{1, 1, 2, 2, 3, 3, 4, 4});
  CHECK(upsample(random_tensor<float>({1, 2, 3, 5}, rng)).shape() == Shape{1, 2, 6, 10});

  auto s = softmax_channels(random_tensor<float>({3, 4, 5, 6}, rng));
  for (Index n = 0; n < 3; ++n)
    for (Index p = 0; p < 30; ++p) {
      double total = 0;
      for (Index c = 0; c < 4; ++c) total += s.value()[(n * 4 + c) * 30 + p];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("batch norm uses batch statistics in training and running statistics in eval") {
  Rng rng(7);
  auto x = random_tensor<float>({4, 2, 8}, rng);
  auto p = NormParams<float>::identity(2);
  auto y = batch_norm(x, p, true);
  for (Index c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (Index n = 0; n < 4; ++n)
      for (Index i = 0; i < 8; ++i) m += y.value()[(n * 2 + c) * 8 + i];
    m /= 32;
    for (Index n = 0; n < 4; ++n)
      for (Index i = 0; i < 8; ++i) v += std::pow(y.value()[(n * 2 + c) * 8 + i] - m, 2);
    CHECK(m == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(v / 32 == doctest::Approx(1.0).epsilon(1e-3));
  }
  CHECK((p.running_mean != 0.0f).any());
  const Eigen::ArrayXf saved_mean = p.running_mean;
  auto e1 = batch_norm(x, p, false);
  auto e2 = batch_norm(x, p, false);
  CHECK((e1.value() == e2.value()).all());
  CHECK((p.running_mean == saved_mean).all());
}

TEST_CASE("backward basics") {
  auto x = Tensor<double>::from({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  x.set_requires_grad(true);
  auto loss = sum(x);
  backward(loss);
  CHECK((x.grad() == 1.0).all());
  CHECK_THROWS_AS(backward(loss), std::logic_error);
  CHECK_THROWS(backward(x));  // not a scalar
}

TEST_CASE("unreached parameters keep zero gradient") {
  Rng rng(8);
  auto x = random_tensor<double>({1, 1, 6}, rng);
  auto used = ConvParams<double>::zeros(1, 1, 1, 3);
  auto unused = ConvParams<double>::zeros(1, 1, 1, 3);
  for (auto* p : {&used, &unused}) {
    for (auto& v : p->kernel.mutable_value()) v = rng.normal();
    p->kernel.set_requires_grad(true);
    p->bias.set_requires_grad(true);
  }
  backward(sum(conv(x, used)));
  CHECK(used.kernel.touched());
  CHECK_FALSE(unused.kernel.touched());
  CHECK((unused.kernel.grad() == 0.0).all());
}

TEST_CASE("forward is deterministic") {
  Rng rng(9);
  auto x = random_tensor<float>({2, 3, 8, 8}, rng);
  auto p = ConvParams<float>::zeros(2, 3, 5, 5);
  for (auto& v : p.kernel.mutable_value()) v = static_cast<float>(rng.normal());
  CHECK((conv(x, p).value() == conv(x, p).value()).all());
}

TEST_CASE("finite differences: conv, downsample, pools, norm, relu, upsample, softmax") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const int rank = trial % 2 + 1;
    const Index k = std::array<Index, 3>{1, 3, 5}[trial % 3];
    const Index cin = 1 + trial % 2, cout = 2;
    const Shape xs = rank == 1 ? Shape{2, cin, 5} : Shape{1, cin, 4, 4};
    auto x = random_tensor<double>(xs, rng);
    auto p = ConvParams<double>::zeros(rank, cin, cout, k);
    for (auto& v : p.kernel.mutable_value()) v = rng.normal();
    for (auto& v : p.bias.mutable_value()) v = rng.normal();
    auto proj = [&](const Tensor<double>& y) {
      Rng r(100 + trial);
      return projection(y, r);
    };
    CAPTURE(trial);
    CHECK(grad_check([&] { return proj(conv(x, p)); }, {x, p.kernel, p.bias}).ok());

    auto d = ConvParams<double>::zeros(rank, cin, cout, 3, 2);
    for (auto& v : d.kernel.mutable_value()) v = rng.normal();
    CHECK(grad_check([&] { return proj(downsample(x, d)); }, {x, d.kernel, d.bias}).ok());
    CHECK(grad_check([&] { return proj(pool(x, PoolKind::Max)); }, {x}).ok());
    CHECK(grad_check([&] { return proj(pool(x, PoolKind::Avg)); }, {x}).ok());
    CHECK(grad_check([&] { return proj(relu(x)); }, {x}).ok());
    CHECK(grad_check([&] { return proj(upsample(x)); }, {x}).ok());
    CHECK(grad_check([&] { return proj(softmax_channels(x)); }, {x}).ok());

    auto norm = NormParams<double>::identity(cin);
    for (auto& v : norm.gamma.mutable_value()) v = 1.0 + 0.5 * rng.normal();
    for (auto& v : norm.beta.mutable_value()) v = rng.normal();
    CHECK(grad_check([&] { return proj(batch_norm(x, norm, true)); }, {x, norm.gamma, norm.beta}).ok());
    CHECK(grad_check([&] { return proj(batch_norm(x, norm, false)); }, {x, norm.gamma, norm.beta}).ok());
  }
}
