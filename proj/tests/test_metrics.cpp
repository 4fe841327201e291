#include "doctest.h"
#include "gradcheck.hpp"

#include "dimnas/datagen.hpp"
#include "dimnas/metrics.hpp"
#include "dimnas/rng.hpp"

#include <cmath>
#include <set>

using namespace dimnas;
using dimnas::testing::grad_check;

namespace {

// Dice from explicit index sets.
double set_dice(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& g, int k) {
  std::set<std::size_t> P, G, both;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == k) P.insert(i);
    if (g[i] == k) G.insert(i);
    if (p[i] == k && g[i] == k) both.insert(i);
  }
  if (P.empty() && G.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(P.size() + G.size());
}

std::vector<std::uint8_t> random_labels(Rng& rng, std::size_t n, int classes) {
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(classes)));
  return v;
}

// Logits whose softmax is `probs` exactly (up to rounding): log p.
Tensor<double> logits_for(const std::vector<std::vector<double>>& probs) {
  const Index n = static_cast<Index>(probs.size()), c = static_cast<Index>(probs[0].size());
  std::vector<double> v(static_cast<std::size_t>(n * c));
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < c; ++k) v[k * n + i] = std::log(probs[i][k]);
  return Tensor<double>::from({1, c, n}, v);
}

}  // namespace

TEST_CASE("hard dice examples") {
  const std::vector<std::uint8_t> pred{1, 1, 0}, truth{1, 0, 0};
  const auto r = hard_dice(pred, truth, 2);
  CHECK(r.per_class[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1] == doctest::Approx(2.0 / 3.0));
  CHECK(hard_dice(truth, truth).mean == 1.0);
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{0, 0, 1, 1};
  CHECK(hard_dice(a, b, 2).mean == 0.0);
  const std::vector<std::uint8_t> shorter{1, 1};
  CHECK_THROWS(hard_dice(pred, shorter));
}

TEST_CASE("hard dice equals the set-cardinality oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const auto p = random_labels(rng, n, 4), g = random_labels(rng, n, 4);
    const auto r = hard_dice(p, g);
    double mean = 0;
    for (int k = 0; k < 4; ++k) {
      CHECK(r.per_class[k] == set_dice(p, g, k));
      mean += set_dice(p, g, k);
    }
    CHECK(r.mean == doctest::Approx(mean / 4).epsilon(1e-15));
    const auto s = hard_dice(g, p);
    CHECK(s.per_class == r.per_class);
    CHECK(r.mean >= 0.0);
    CHECK(r.mean <= 1.0);
    CHECK((r.mean == 1.0) == (p == g));
  }
}

TEST_CASE("background can be excluded") {
  const std::vector<std::uint8_t> p{0, 1, 2, 3}, g{0, 1, 2, 2};
  DiceOptions opts;
  opts.include_background = false;
  const auto with = hard_dice(p, g);
  const auto without = hard_dice(p, g, 4, opts);
  CHECK(with.mean == doctest::Approx((1 + 1 + 2.0 / 3 + 0) / 4));
  CHECK(without.mean == doctest::Approx((1 + 2.0 / 3 + 0) / 3));
}

TEST_CASE("soft dice on uniform probabilities matches the formula") {
  // N = 8 positions, every class appears twice.
  const std::vector<std::uint8_t> labels{0, 0, 1, 1, 2, 2, 3, 3};
  const auto loss = soft_dice_loss(Tensor<double>::zeros({1, 4, 8}), labels);
  const double eps = 1e-5;
  const double per_class = (2 * 0.25 * 2 + eps) / (0.25 * 8 + 2 + eps);
  CHECK(per_class == doctest::Approx(0.25).epsilon(1e-5));
  CHECK(loss.item() == doctest::Approx(1.0 - per_class).epsilon(1e-12));
}

TEST_CASE("perfect predictions give near-zero loss") {
  const std::vector<std::uint8_t> labels{0, 1, 2, 3, 3, 2};
  std::vector<double> logits(24, -40.0);
  for (std::size_t i = 0; i < labels.size(); ++i) logits[labels[i] * 6 + i] = 40.0;
  CHECK(soft_dice_loss(Tensor<double>::from({1, 4, 6}, logits), labels).item() <= 1e-4);
  CHECK_THROWS(soft_dice_loss(Tensor<double>::zeros({1, 4, 5}), labels));
}

TEST_CASE("soft dice decreases as mass moves to the true class") {
  const std::vector<std::uint8_t> labels{2};
  double previous = 2.0;
  for (int step = 0; step <= 50; ++step) {
    const double q = 0.01 + 0.98 * step / 50.0;
    const double rest = (1 - q) / 3;
    const auto loss = soft_dice_loss(logits_for({{rest, rest, q, rest}}), labels).item();
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("soft dice gradient matches finite differences") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const bool two_d = trial % 2;
    const Shape shape = two_d ? Shape{2, 4, 3, 3} : Shape{3, 4, 5};
    std::vector<double> v(static_cast<std::size_t>(shape.numel()));
    for (auto& x : v) x = 2 * rng.normal();
    auto scores = Tensor<double>::from(shape, v);
    const auto labels = random_labels(rng, static_cast<std::size_t>(shape.numel() / 4), 4);
    CAPTURE(trial);
    CHECK(grad_check([&] { return soft_dice_loss(scores, labels); }, {scores}).ok());
  }
}

TEST_CASE("aggregate reports the mean and population std of per-volume means") {
  DiceReport a, b, c;
  a.per_class = {1, 1, 1, 1};
  a.mean = 1.0;
  b.per_class = {0.5, 0.5, 0.5, 0.5};
  b.mean = 0.5;
  c.per_class = {0.9, 0.7, 0.8, 0.6};
  c.mean = 0.75;
  const std::vector<DiceReport> all{a, b, c};
  const auto r = aggregate(all);
  CHECK(r.volumes == 3);
  CHECK(r.mean == doctest::Approx(0.75));
  CHECK(r.std_over_volumes == doctest::Approx(std::sqrt((0.0625 + 0.0625 + 0.0) / 3)));
  CHECK(r.per_class[1] == doctest::Approx((1 + 0.5 + 0.7) / 3));
  CHECK_THROWS(aggregate(std::span<const DiceReport>{}));
}

TEST_CASE("evaluate on volumes") {
  GeneratorConfig cfg;
  cfg.rank = 2;
  cfg.depth = 16;
  cfg.width = 16;
  cfg.split = {1, 1, 1, 3};
  const auto data = generate(cfg);
  auto w = SupernetWeights<float>::init({2, 3, 4, 4, 1}, BlockKind::ResNet, 1);
  const BlockDesign design = ResNetBlock{};
  const auto r1 = evaluate(w, design, data.test);
  const auto r2 = evaluate(w, design, data.test);
  CHECK(r1.mean == r2.mean);
  CHECK(r1.volumes == 3);
  double avg = 0;
  for (double m : r1.per_volume_mean) avg += m;
  CHECK(r1.mean == doctest::Approx(avg / 3));
  CHECK_THROWS(evaluate(w, design, std::span<const Volume>{}));
  auto w1 = SupernetWeights<float>::init({}, BlockKind::ResNet, 1);
  CHECK_THROWS(evaluate(w1, design, data.test));

  // A head that outputs the label itself scores perfectly: drive the logits from a
  // bias equal to a one-hot of the single class present.
  Volume flat = data.test[0];
  std::fill(flat.labels.begin(), flat.labels.end(), 2);
  w.head.kernel.mutable_value().setZero();
  w.head.bias.mutable_value() << 0, 0, 5, 0;
  const std::vector<Volume> one{flat};
  const auto perfect = evaluate(w, design, one);
  CHECK(perfect.mean == 1.0);
  CHECK(perfect.std_over_volumes == 0.0);
}
