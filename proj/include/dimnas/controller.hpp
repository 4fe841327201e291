#pragma once

#include "dimnas/optim.hpp"
#include "dimnas/rng.hpp"
#include "dimnas/search_space.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dimnas {

/// One categorical step of the genome decision sequence.
struct Decision {
  enum class Kind { Input, Op };
  Kind kind;
  int cell;     // 1-based
  int subcell;  // 1-based
  int arity;    // legal choices at this step
};

/// Cell 1 subcell 1 (input, op), cell 1 subcell 2, cell 2 subcell 1, cell 2 subcell 2.
std::vector<Decision> decision_schedule(const SearchSpaceSpec& spec = {});
Genome genome_from_actions(std::span<const int> actions, const SearchSpaceSpec& spec = {});
std::vector<int> actions_from_genome(const Genome& genome, const SearchSpaceSpec& spec = {});

struct SampledArch {
  Genome genome;
  std::vector<int> actions;
  double log_prob = 0.0;
  double entropy = 0.0;
};

struct ControllerConfig {
  int hidden = 64;
  double temperature = 1.0;
  double entropy_weight = 1e-4;
  double baseline_decay = 0.95;
  double learning_rate = 3.5e-4;
  double grad_clip = 5.0;
  double init_range = 0.1;
};

template <typename Scalar>
struct ControllerParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  // LSTM cell, gates stacked as (input, forget, output, candidate).
  Matrix w_input;
  Matrix w_hidden;
  Vector gate_bias;
  Vector start;  // input at the first decision
  Matrix op_embedding;                    // 5 x H
  std::vector<Matrix> input_embedding;    // per cell: c x H
  Matrix op_projection;                   // 5 x H
  Vector op_bias;
  std::vector<Matrix> input_projection;   // per cell: c x H
  std::vector<Vector> input_bias;

  static ControllerParams zeros_like(const ControllerParams& other);
  /// Visits every block as (name, data, size) in a fixed order.
  void for_each(const std::function<void(const std::string&, Scalar*, Index)>& fn);
  void for_each(const std::function<void(const std::string&, const Scalar*, Index)>& fn) const;
  Scalar squared_norm() const;
};

/// Autoregressive LSTM policy over genome decisions, trained with REINFORCE.
template <typename Scalar>
class Controller {
 public:
  struct StepStats {
    double mean_reward = 0.0;
    double baseline = 0.0;  // after the update
    double entropy = 0.0;
    double grad_norm = 0.0;
  };

  struct Score {
    double log_prob = 0.0;
    double entropy = 0.0;
    std::vector<std::vector<double>> probabilities;  // per decision
  };

  explicit Controller(ControllerConfig config = {}, std::uint64_t seed = 0, SearchSpaceSpec space = {});

  SampledArch sample(Rng& rng) const;
  /// Most probable action at every step; deterministic.
  Genome argmax_genome() const;
  /// Log-probability and entropy of a fixed action sequence under the current policy.
  Score score(std::span<const int> actions) const;

  /// Adds d/dparams [logp_weight * log_prob + entropy_weight * entropy] for a fixed trajectory.
  void accumulate_gradient(std::span<const int> actions, Scalar logp_weight, Scalar entropy_weight,
                           ControllerParams<Scalar>& grads) const;

  /// Ascent on mean over batch of (reward - baseline) * log_prob + entropy_weight * entropy,
  /// with global-norm clipping; the baseline moves by EMA afterwards.
  StepStats reinforce_step(std::span<const std::pair<SampledArch, double>> batch);

  double baseline() const { return baseline_; }
  void set_baseline(double b) { baseline_ = b; }
  const ControllerConfig& config() const { return config_; }
  const SearchSpaceSpec& space() const { return space_; }
  ControllerParams<Scalar>& params() { return params_; }
  const ControllerParams<Scalar>& params() const { return params_; }

 private:
  struct Rollout;
  Rollout run(std::span<const int> forced, Rng* rng, bool greedy) const;

  ControllerConfig config_;
  SearchSpaceSpec space_;
  std::vector<Decision> schedule_;
  ControllerParams<Scalar> params_;
  Adam<Scalar> optimizer_;
  double baseline_ = 0.0;
};

/// Uniform policy with the same sampling interface; the random-search control.
class UniformPolicy {
 public:
  explicit UniformPolicy(SearchSpaceSpec space = {}) : space_(space), schedule_(decision_schedule(space)) {}
  SampledArch sample(Rng& rng) const;

 private:
  SearchSpaceSpec space_;
  std::vector<Decision> schedule_;
};

void save_controller(const std::filesystem::path& dir, const Controller<float>& controller, std::uint64_t seed);
Controller<float> load_controller(const std::filesystem::path& dir);

extern template struct ControllerParams<float>;
extern template struct ControllerParams<double>;
extern template class Controller<float>;
extern template class Controller<double>;

}  // namespace dimnas
