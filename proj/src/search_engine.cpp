#include "dimnas/search_engine.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace dimnas {

using nlohmann::json;

SearchSchedule SearchSchedule::desk() {
  SearchSchedule s;
  s.epochs = 20;
  s.supernet_steps_per_epoch = 15;
  s.controller_steps_per_epoch = 30;
  s.n_derive_samples = 20;
  return s;
}

void SearchSchedule::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (n_derive_samples < 1) throw std::invalid_argument("n_derive_samples must be >= 1");
  if (supernet_steps_per_epoch < 0 || controller_steps_per_epoch < 0) {
    throw std::invalid_argument("step counts must be non-negative");
  }
  if (!(supernet_lr > 0.0)) throw std::invalid_argument("supernet_lr must be positive");
}

void to_json(json& j, const SearchSchedule& s) {
  j = json{{"epochs", s.epochs},
           {"supernet_steps_per_epoch", s.supernet_steps_per_epoch},
           {"controller_steps_per_epoch", s.controller_steps_per_epoch},
           {"n_derive_samples", s.n_derive_samples},
           {"batch_size", s.batch_size},
           {"reward_batch", s.reward_batch},
           {"seed", s.seed},
           {"supernet_lr", s.supernet_lr},
           {"controller",
            {{"hidden", s.controller.hidden},
             {"temperature", s.controller.temperature},
             {"entropy_weight", s.controller.entropy_weight},
             {"baseline_decay", s.controller.baseline_decay},
             {"learning_rate", s.controller.learning_rate},
             {"grad_clip", s.controller.grad_clip},
             {"init_range", s.controller.init_range}}}};
}

void from_json(const json& j, SearchSchedule& s) {
  s.epochs = j.at("epochs");
  s.supernet_steps_per_epoch = j.at("supernet_steps_per_epoch");
  s.controller_steps_per_epoch = j.at("controller_steps_per_epoch");
  s.n_derive_samples = j.at("n_derive_samples");
  s.batch_size = j.at("batch_size");
  s.reward_batch = j.at("reward_batch");
  s.seed = j.at("seed");
  s.supernet_lr = j.at("supernet_lr");
  const auto& c = j.at("controller");
  s.controller.hidden = c.at("hidden");
  s.controller.temperature = c.at("temperature");
  s.controller.entropy_weight = c.at("entropy_weight");
  s.controller.baseline_decay = c.at("baseline_decay");
  s.controller.learning_rate = c.at("learning_rate");
  s.controller.grad_clip = c.at("grad_clip");
  s.controller.init_range = c.at("init_range");
}

void to_json(json& j, const SearchResult& r) {
  json candidates = json::array();
  for (const auto& c : r.candidates) candidates.push_back({{"genome", json::parse(encode(c.genome))}, {"val_dice", c.val_dice}});
  j = json{{"kind", "search_result"},
           {"rank", r.rank},
           {"policy", r.policy},
           {"best_genome", json::parse(encode(r.best_genome))},
           {"candidates", std::move(candidates)},
           {"wall_clock_seconds", r.wall_clock_seconds},
           {"reward_curve", r.reward_curve},
           {"loss_curve", r.loss_curve},
           {"spec", r.spec},
           {"schedule", r.schedule},
           {"seeds",
            {{"base", r.schedule.seed},
             {"supernet_init", derive_seed(r.schedule.seed, "supernet-init")},
             {"controller_init", derive_seed(r.schedule.seed, "controller-init")},
             {"controller_sampling", derive_seed(r.schedule.seed, "controller-sampling")},
             {"data_order", derive_seed(r.schedule.seed, "data-order")},
             {"reward_batches", derive_seed(r.schedule.seed, "reward-batches")}}},
           {"rng", std::string(Rng::kAlgorithm)}};
}

void from_json(const json& j, SearchResult& r) {
  r.rank = j.at("rank");
  r.policy = j.at("policy");
  r.best_genome = decode(j.at("best_genome").dump());
  r.candidates.clear();
  for (const auto& c : j.at("candidates")) r.candidates.push_back({decode(c.at("genome").dump()), c.at("val_dice")});
  r.wall_clock_seconds = j.at("wall_clock_seconds");
  r.reward_curve = j.at("reward_curve").get<std::vector<double>>();
  r.loss_curve = j.value("loss_curve", std::vector<double>{});
  r.spec = j.at("spec").get<SupernetSpec>();
  r.schedule = j.at("schedule").get<SearchSchedule>();
}

std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("select_best: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

namespace {

void require_finite(double value, const char* what, json state) {
  if (!std::isfinite(value)) {
    state["value"] = std::isnan(value) ? "nan" : "inf";
    throw DivergenceError(std::string("non-finite ") + what, std::move(state));
  }
}

double batch_mean_dice(const Tensor<float>& scores, const std::vector<std::uint8_t>& labels, std::size_t volumes,
                       int n_classes) {
  const auto predicted = argmax_channels(scores);
  const std::size_t per = predicted.size() / volumes;
  double total = 0.0;
  for (std::size_t k = 0; k < volumes; ++k) {
    total += hard_dice(std::span(predicted).subspan(k * per, per), std::span(labels).subspan(k * per, per), n_classes)
                 .mean;
  }
  return total / static_cast<double>(volumes);
}

void check_data(const Dataset& data, const SupernetSpec& spec) {
  spec.validate();
  if (data.rank != spec.rank) {
    throw std::invalid_argument("rank-" + std::to_string(data.rank) + " data for a rank-" + std::to_string(spec.rank) +
                                " network");
  }
  if (data.train.empty() || data.val.empty()) throw std::invalid_argument("train and val splits must be non-empty");
}

}  // namespace

SearchEngine::SearchEngine(const Dataset& data, SupernetSpec spec, SearchSchedule schedule, SamplingPolicy policy)
    : data_(data),
      spec_(spec),
      schedule_(schedule),
      policy_(policy),
      weights_(SupernetWeights<float>::init(spec, BlockKind::Searchable, derive_seed(schedule.seed, "supernet-init"))),
      optimizer_(Adam<float>::Options{schedule.supernet_lr}),
      controller_(schedule.controller, derive_seed(schedule.seed, "controller-init")),
      sampling_rng_(derive_seed(schedule.seed, "controller-sampling")),
      order_rng_(derive_seed(schedule.seed, "data-order")),
      reward_rng_(derive_seed(schedule.seed, "reward-batches")) {
  check_data(data, spec);
  schedule_.validate();
  if (policy_ == SamplingPolicy::Controller && schedule_.controller_steps_per_epoch > 0 && data.reward.empty()) {
    throw std::invalid_argument("controller training needs a reward split");
  }
  order_.resize(data_.train.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  order_rng_.shuffle(order_.begin(), order_.end());
}

SampledArch SearchEngine::sample_arch() {
  return policy_ == SamplingPolicy::Controller ? controller_.sample(sampling_rng_) : uniform_.sample(sampling_rng_);
}

std::vector<std::size_t> SearchEngine::next_train_batch() {
  const std::size_t batch = std::min(schedule_.batch_for(spec_.rank), order_.size());
  if (cursor_ + batch > order_.size()) {
    order_rng_.shuffle(order_.begin(), order_.end());
    cursor_ = 0;
  }
  std::vector<std::size_t> indices(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch));
  cursor_ += batch;
  return indices;
}

double SearchEngine::train_supernet_epoch() {
  const std::size_t batch = schedule_.batch_for(spec_.rank);
  const int steps = schedule_.supernet_steps_per_epoch > 0
                        ? schedule_.supernet_steps_per_epoch
                        : static_cast<int>(std::max<std::size_t>(1, data_.train.size() / batch));
  double total = 0.0;
  for (int step = 0; step < steps; ++step) {
    const auto indices = next_train_batch();
    const auto b = make_batch(data_.train, indices);
    const auto arch = sample_arch();
    weights_.zero_grad();
    const auto loss = soft_dice_loss(forward(weights_, arch.genome, b.input, true), b.labels);
    require_finite(loss.item(), "supernet loss",
                   {{"phase", "supernet"}, {"epoch", epoch_}, {"step", step}, {"genome", json::parse(encode(arch.genome))}});
    backward(loss);
    const auto params = weights_.parameters();
    optimizer_.step(tensor_slots<float>(params));
    total += loss.item();
  }
  return total / steps;
}

double SearchEngine::train_controller_epoch() {
  if (policy_ != SamplingPolicy::Controller) return 0.0;
  const int steps = schedule_.controller_steps_per_epoch;
  if (steps == 0) return 0.0;
  const std::size_t k = std::min(schedule_.reward_batch_for(spec_.rank), data_.reward.size());
  std::vector<std::size_t> pool(data_.reward.size());
  double total = 0.0;
  NoGradGuard no_grad;
  for (int step = 0; step < steps; ++step) {
    auto arch = controller_.sample(sampling_rng_);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k entries become the minibatch.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + reward_rng_.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    const std::vector<std::size_t> indices(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    const auto b = make_batch(data_.reward, indices);
    const auto scores = forward(weights_, arch.genome, b.input, false);
    const double reward = batch_mean_dice(scores, b.labels, k, static_cast<int>(spec_.n_classes));
    require_finite(reward, "controller reward",
                   {{"phase", "controller"}, {"epoch", epoch_}, {"step", step}, {"genome", json::parse(encode(arch.genome))}});
    const std::pair<SampledArch, double> item{std::move(arch), reward};
    controller_.reinforce_step(std::span(&item, 1));
    total += reward;
  }
  return total / steps;
}

std::vector<Candidate> SearchEngine::derive() {
  std::vector<Candidate> candidates;
  for (int i = 0; i < schedule_.n_derive_samples; ++i) {
    auto arch = sample_arch();
    const double dice = evaluate(weights_, arch.genome, data_.val).mean;
    candidates.push_back({std::move(arch.genome), dice});
  }
  return candidates;
}

SearchResult SearchEngine::run() {
  const auto start = std::chrono::steady_clock::now();
  SearchResult result;
  result.rank = spec_.rank;
  result.policy = policy_ == SamplingPolicy::Controller ? "controller" : "uniform";
  result.spec = spec_;
  result.schedule = schedule_;
  for (epoch_ = 0; epoch_ < schedule_.epochs; ++epoch_) {
    result.loss_curve.push_back(train_supernet_epoch());
    if (policy_ == SamplingPolicy::Controller) result.reward_curve.push_back(train_controller_epoch());
  }
  result.candidates = derive();
  std::vector<double> scores;
  for (const auto& c : result.candidates) scores.push_back(c.val_dice);
  result.best_genome = result.candidates[select_best(scores)].genome;
  result.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

SearchResult search(const Dataset& data, const SupernetSpec& spec, const SearchSchedule& schedule) {
  return SearchEngine(data, spec, schedule, SamplingPolicy::Controller).run();
}

SearchResult random_search_baseline(const Dataset& data, const SupernetSpec& spec, const SearchSchedule& schedule) {
  return SearchEngine(data, spec, schedule, SamplingPolicy::Uniform).run();
}

RetrainConfig RetrainConfig::desk() {
  RetrainConfig c;
  c.epochs = 20;
  return c;
}

void to_json(json& j, const RetrainConfig& c) {
  j = json{{"epochs", c.epochs}, {"steps_per_epoch", c.steps_per_epoch}, {"batch_size", c.batch_size},
           {"lr", c.lr},         {"seed", c.seed},
           {"init_seed", derive_seed(c.seed, "retrain-init")}};
}

void from_json(const json& j, RetrainConfig& c) {
  c.epochs = j.at("epochs");
  c.steps_per_epoch = j.at("steps_per_epoch");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.seed = j.at("seed");
}

RetrainResult retrain(const Dataset& data, const SupernetSpec& spec, const BlockDesign& design,
                      const RetrainConfig& config) {
  check_data(data, spec);
  if (config.epochs < 1) throw std::invalid_argument("retrain needs at least one epoch");
  if (const auto* g = std::get_if<Genome>(&design)) {
    const auto violations = validate(*g);
    if (!violations.empty()) throw std::invalid_argument("invalid genome: " + violations.front());
  }
  if (data.test.empty()) throw std::invalid_argument("retrain needs a test split");
  const auto start = std::chrono::steady_clock::now();
  RetrainResult result{SupernetWeights<float>::init(spec, block_kind_for(design), derive_seed(config.seed, "retrain-init")),
                       {}, {}, 0.0};
  Adam<float> optimizer({config.lr});
  Rng order_rng(derive_seed(config.seed, "retrain-order"));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::min(config.batch_size ? config.batch_size : (spec.rank == 1 ? 32 : 4), order.size());
  const int steps = config.steps_per_epoch > 0 ? config.steps_per_epoch
                                               : static_cast<int>(std::max<std::size_t>(1, order.size() / batch));
  std::size_t cursor = order.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (int step = 0; step < steps; ++step) {
      if (cursor + batch > order.size()) {
        order_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                             order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
      cursor += batch;
      const auto b = make_batch(data.train, indices);
      result.weights.zero_grad();
      const auto loss = soft_dice_loss(forward_design(result.weights, design, b.input, true), b.labels);
      require_finite(loss.item(), "retrain loss", {{"phase", "retrain"}, {"epoch", epoch}, {"step", step}});
      backward(loss);
      const auto params = result.weights.parameters();
      optimizer.step(tensor_slots<float>(params));
      total += loss.item();
    }
    result.loss_curve.push_back(total / steps);
  }
  result.test = evaluate(result.weights, design, data.test);
  result.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RetrainResult transfer_and_retrain(const Dataset& data2d, const Genome& genome, const SupernetSpec& spec,
                                   const RetrainConfig& config) {
  if (data2d.rank != 2) throw std::invalid_argument("transfer target data must be rank 2");
  const auto transferred = extend_to_2d(genome, spec);
  return retrain(data2d, transferred.spec, transferred.genome, config);
}

}  // namespace dimnas
