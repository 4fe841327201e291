#include "doctest.h"

#include "dimnas/controller.hpp"

#include <array>
#include <cmath>
#include <filesystem>

using namespace dimnas;

namespace {

// Random values everywhere, so that no gradient block is trivially zero.
template <typename S>
void scramble(Controller<S>& c, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  c.params().for_each([&](const std::string&, S* data, Index size) {
    for (Index k = 0; k < size; ++k) data[k] = static_cast<S>(scale * rng.normal());
  });
}

double finite_difference_check(Controller<double>& c, const std::vector<int>& actions, double logp_w, double ent_w) {
  auto grads = ControllerParams<double>::zeros_like(c.params());
  c.accumulate_gradient(actions, logp_w, ent_w, grads);
  std::vector<double> analytic;
  grads.for_each([&](const std::string&, const double* d, Index n) { analytic.insert(analytic.end(), d, d + n); });

  auto objective = [&] {
    const auto s = c.score(actions);
    return logp_w * s.log_prob + ent_w * s.entropy;
  };
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t i = 0;
  c.params().for_each([&](const std::string&, double* d, Index n) {
    for (Index k = 0; k < n; ++k, ++i) {
      const double saved = d[k];
      d[k] = saved + h;
      const double up = objective();
      d[k] = saved - h;
      const double down = objective();
      d[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double bound = 1e-3 * std::max(std::abs(numeric), std::abs(analytic[i])) + 1e-7;
      worst = std::max(worst, std::abs(numeric - analytic[i]) / bound);
    }
  });
  return worst;
}

}  // namespace

TEST_CASE("decision schedule and action mapping") {
  const auto schedule = decision_schedule();
  REQUIRE(schedule.size() == 8);
  const std::array<int, 8> arity{1, 5, 1, 5, 2, 5, 2, 5};
  for (std::size_t i = 0; i < 8; ++i) CHECK(schedule[i].arity == arity[i]);
  CHECK(schedule[4].kind == Decision::Kind::Input);
  CHECK(schedule[5].cell == 2);
  CHECK(schedule[5].subcell == 1);
  for (const auto& g : enumerate()) CHECK(genome_from_actions(actions_from_genome(g)) == g);
  const std::vector<int> bad{0, 0, 0, 0, 2, 0, 0, 0};
  CHECK_THROWS(genome_from_actions(bad));
}

TEST_CASE("fresh controller samples ops uniformly") {
  Controller<float> c({}, 1);
  Rng rng(2);
  std::array<std::array<int, 5>, 4> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto a = c.sample(rng);
    for (int slot = 0; slot < 4; ++slot) ++counts[slot][a.actions[2 * slot + 1]];
  }
  for (const auto& slot : counts)
    for (int k : slot) CHECK(std::abs(k / double(n) - 0.2) < 0.02);
  const auto s = c.score(c.sample(rng).actions);
  CHECK(s.log_prob == doctest::Approx(-4 * std::log(5.0) - 2 * std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("masking holds on 100000 samples of a trained-looking policy") {
  Controller<float> c({}, 3);
  scramble(c, 4, 1.0);
  Rng rng(5);
  std::array<int, 2> cell2{};
  for (int i = 0; i < 100000; ++i) {
    const auto a = c.sample(rng);
    REQUIRE(a.genome.cells[0].subcells[0].input_sel == 0);
    REQUIRE(a.genome.cells[0].subcells[1].input_sel == 0);
    const int s1 = a.genome.cells[1].subcells[0].input_sel, s2 = a.genome.cells[1].subcells[1].input_sel;
    REQUIRE((s1 == 0 || s1 == 1));
    REQUIRE((s2 == 0 || s2 == 1));
    ++cell2[s1];
    REQUIRE(a.log_prob <= 0.0);
  }
  CHECK(cell2[0] > 0);
  CHECK(cell2[1] > 0);
}

TEST_CASE("sampled log-prob matches a rescoring pass") {
  Controller<float> c({}, 6);
  scramble(c, 7);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto a = c.sample(rng);
    CHECK(is_valid(a.genome));
    const auto s = c.score(a.actions);
    double sum = 0.0;
    for (std::size_t t = 0; t < a.actions.size(); ++t) sum += std::log(s.probabilities[t][a.actions[t]]);
    CHECK(std::abs(a.log_prob - s.log_prob) < 1e-5);
    CHECK(std::abs(sum - s.log_prob) < 1e-5);
    CHECK(std::abs(a.entropy - s.entropy) < 1e-5);
  }
}

TEST_CASE("controller gradients match finite differences") {
  ControllerConfig small;
  small.hidden = 8;
  Controller<double> c(small, 9);
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    scramble(c, 100 + trial);
    const auto a = c.sample(rng);
    CAPTURE(trial);
    CHECK(finite_difference_check(c, a.actions, 1.0, 0.0) <= 1.0);
    CHECK(finite_difference_check(c, a.actions, 0.7, 0.3) <= 1.0);
  }
}

TEST_CASE("argmax genome is valid, stable and matches the most probable actions") {
  Controller<float> c({}, 11);
  scramble(c, 12, 1.0);
  const auto g = c.argmax_genome();
  CHECK(is_valid(g));
  CHECK(c.argmax_genome() == g);
  const auto actions = actions_from_genome(g);
  const auto s = c.score(actions);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const auto& p = s.probabilities[t];
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == actions[t]);
  }
}

TEST_CASE("zero advantage with no entropy term leaves parameters unchanged") {
  ControllerConfig cfg;
  cfg.entropy_weight = 0.0;
  Controller<float> c(cfg, 13);
  scramble(c, 14);
  Rng rng(15);
  const auto a = c.sample(rng);
  c.set_baseline(0.6);
  std::vector<float> before;
  c.params().for_each([&](const std::string&, const float* d, Index n) { before.insert(before.end(), d, d + n); });
  const std::pair<SampledArch, double> item{a, 0.6};
  c.reinforce_step(std::span(&item, 1));
  std::vector<float> after;
  c.params().for_each([&](const std::string&, const float* d, Index n) { after.insert(after.end(), d, d + n); });
  CHECK(before == after);
}

TEST_CASE("baseline is an EMA updated after use") {
  Controller<float> c({}, 16);
  Rng rng(17);
  c.set_baseline(0.2);
  std::pair<SampledArch, double> item{c.sample(rng), 0.8};
  const auto stats = c.reinforce_step(std::span(&item, 1));
  CHECK(c.baseline() == doctest::Approx(0.95 * 0.2 + 0.05 * 0.8));
  CHECK(stats.baseline == doctest::Approx(c.baseline()));
  CHECK(stats.mean_reward == doctest::Approx(0.8));
  CHECK_THROWS(c.reinforce_step({}));
}

TEST_CASE("two-arm bandit concentrates within 200 steps") {
  // The cell 2 subcell 1 input selector has exactly two legal actions.
  Controller<float> c({}, 18);
  Rng rng(19);
  for (int step = 0; step < 200; ++step) {
    std::pair<SampledArch, double> item{c.sample(rng), 0.0};
    item.second = item.first.genome.cells[1].subcells[0].input_sel == 1 ? 1.0 : 0.0;
    c.reinforce_step(std::span(&item, 1));
  }
  const auto p = c.score(actions_from_genome(c.argmax_genome())).probabilities[4][1];
  CHECK(p > 0.9);
}

TEST_CASE("uniform policy samples valid genomes with the right log-prob") {
  UniformPolicy u;
  Rng rng(20);
  for (int i = 0; i < 100; ++i) {
    const auto a = u.sample(rng);
    CHECK(is_valid(a.genome));
    CHECK(a.log_prob == doctest::Approx(-4 * std::log(5.0) - 2 * std::log(2.0)));
  }
}

TEST_CASE("controller save and load round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "dimnas_ctl";
  std::filesystem::remove_all(dir);
  Controller<float> c({}, 21);
  scramble(c, 22);
  c.set_baseline(0.37);
  save_controller(dir, c, 21);
  const auto d = load_controller(dir);
  CHECK(d.baseline() == c.baseline());
  CHECK(d.argmax_genome() == c.argmax_genome());
  Rng r1(23), r2(23);
  for (int i = 0; i < 20; ++i) CHECK(c.sample(r1).actions == d.sample(r2).actions);
  std::filesystem::remove_all(dir);
}
