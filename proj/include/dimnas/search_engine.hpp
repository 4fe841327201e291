#pragma once

#include "dimnas/controller.hpp"
#include "dimnas/datagen.hpp"
#include "dimnas/metrics.hpp"
#include "dimnas/supernet.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dimnas {

/// Non-finite loss or reward; carries a JSON dump of the state at failure.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, nlohmann::json state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const nlohmann::json& state() const { return state_; }

 private:
  nlohmann::json state_;
};

struct SearchSchedule {
  int epochs = 200;
  /// Supernet steps per epoch; 0 means one pass over the training split.
  int supernet_steps_per_epoch = 0;
  int controller_steps_per_epoch = 30;
  int n_derive_samples = 20;
  /// 0 picks the rank default: 32 A-scans or 4 B-scans.
  std::size_t batch_size = 0;
  /// 0 picks the rank default: 16 A-scans or 2 B-scans.
  std::size_t reward_batch = 0;
  std::uint64_t seed = 1;
  double supernet_lr = 1e-3;
  ControllerConfig controller;

  /// Small fixed schedule that finishes in minutes on one CPU core.
  static SearchSchedule desk();
  void validate() const;
  std::size_t batch_for(int rank) const { return batch_size ? batch_size : (rank == 1 ? 32 : 4); }
  std::size_t reward_batch_for(int rank) const { return reward_batch ? reward_batch : (rank == 1 ? 16 : 2); }
};

void to_json(nlohmann::json& j, const SearchSchedule& s);
void from_json(const nlohmann::json& j, SearchSchedule& s);

struct Candidate {
  Genome genome;
  double val_dice = 0.0;
};

struct SearchResult {
  int rank = 1;
  std::string policy;  // "controller" or "uniform"
  Genome best_genome;
  std::vector<Candidate> candidates;  // in sampling order
  double wall_clock_seconds = 0.0;
  std::vector<double> reward_curve;  // mean reward per epoch
  std::vector<double> loss_curve;    // mean supernet loss per epoch
  SupernetSpec spec;
  SearchSchedule schedule;
};

void to_json(nlohmann::json& j, const SearchResult& r);
void from_json(const nlohmann::json& j, SearchResult& r);

/// Index of the first maximum.
std::size_t select_best(std::span<const double> scores);

enum class SamplingPolicy { Controller, Uniform };

/// Interleaved supernet / controller training followed by derivation.
/// Exposes the phases separately so their contracts can be checked.
class SearchEngine {
 public:
  SearchEngine(const Dataset& data, SupernetSpec spec, SearchSchedule schedule,
               SamplingPolicy policy = SamplingPolicy::Controller);

  /// One pass of weight updates, a fresh genome per batch. Returns the mean loss.
  double train_supernet_epoch();
  /// REINFORCE steps on reward-set dice with frozen supernet weights. Returns the mean reward.
  double train_controller_epoch();
  /// Samples n_derive_samples genomes and scores each on the validation split with shared weights.
  std::vector<Candidate> derive();

  SearchResult run();

  SupernetWeights<float>& weights() { return weights_; }
  Controller<float>& controller() { return controller_; }
  const SearchSchedule& schedule() const { return schedule_; }

 private:
  SampledArch sample_arch();
  std::vector<std::size_t> next_train_batch();

  const Dataset& data_;
  SupernetSpec spec_;
  SearchSchedule schedule_;
  SamplingPolicy policy_;
  SupernetWeights<float> weights_;
  Adam<float> optimizer_;
  Controller<float> controller_;
  UniformPolicy uniform_;
  Rng sampling_rng_;
  Rng order_rng_;
  Rng reward_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
};

SearchResult search(const Dataset& data, const SupernetSpec& spec, const SearchSchedule& schedule);
/// Same protocol with uniform sampling in place of the learned policy.
SearchResult random_search_baseline(const Dataset& data, const SupernetSpec& spec, const SearchSchedule& schedule);

struct RetrainConfig {
  int epochs = 200;
  /// 0 means one pass over the training split per epoch.
  int steps_per_epoch = 0;
  std::size_t batch_size = 0;
  double lr = 1e-3;
  std::uint64_t seed = 1;

  static RetrainConfig desk();
};

void to_json(nlohmann::json& j, const RetrainConfig& c);
void from_json(const nlohmann::json& j, RetrainConfig& c);

struct RetrainResult {
  SupernetWeights<float> weights;
  DiceReport test;
  std::vector<double> loss_curve;
  double wall_clock_seconds = 0.0;
};

/// Fresh initialization seeded only by `config.seed`, training split only, test-split report.
RetrainResult retrain(const Dataset& data, const SupernetSpec& spec, const BlockDesign& design,
                      const RetrainConfig& config);

/// Rank-1 genome applied unchanged to a rank-2 network and retrained from scratch.
RetrainResult transfer_and_retrain(const Dataset& data2d, const Genome& genome, const SupernetSpec& spec,
                                   const RetrainConfig& config);

}  // namespace dimnas
