#include "dimnas/controller.hpp"

#include "dimnas/dten.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>

namespace dimnas {

using nlohmann::json;

std::vector<Decision> decision_schedule(const SearchSpaceSpec& spec) {
  std::vector<Decision> schedule;
  for (int c = 1; c <= spec.n_cells; ++c) {
    for (int s = 1; s <= spec.n_subcells; ++s) {
      schedule.push_back({Decision::Kind::Input, c, s, c});
      schedule.push_back({Decision::Kind::Op, c, s, kOpCount});
    }
  }
  return schedule;
}

Genome genome_from_actions(std::span<const int> actions, const SearchSpaceSpec& spec) {
  const auto schedule = decision_schedule(spec);
  if (actions.size() != schedule.size()) throw std::invalid_argument("action count does not match the decision schedule");
  Genome g;
  g.cells.resize(static_cast<std::size_t>(spec.n_cells));
  for (auto& cell : g.cells) cell.subcells.resize(static_cast<std::size_t>(spec.n_subcells));
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    const auto& d = schedule[t];
    if (actions[t] < 0 || actions[t] >= d.arity) throw std::invalid_argument("action out of range at step " + std::to_string(t));
    auto& gene = g.cells[static_cast<std::size_t>(d.cell - 1)].subcells[static_cast<std::size_t>(d.subcell - 1)];
    if (d.kind == Decision::Kind::Input) {
      gene.input_sel = actions[t];
    } else {
      gene.op = static_cast<OpKind>(actions[t]);
    }
  }
  return g;
}

std::vector<int> actions_from_genome(const Genome& genome, const SearchSpaceSpec& spec) {
  const auto violations = validate(genome, spec);
  if (!violations.empty()) throw std::invalid_argument("invalid genome: " + violations.front());
  std::vector<int> actions;
  for (const auto& d : decision_schedule(spec)) {
    const auto& gene = genome.cells[static_cast<std::size_t>(d.cell - 1)].subcells[static_cast<std::size_t>(d.subcell - 1)];
    actions.push_back(d.kind == Decision::Kind::Input ? gene.input_sel : static_cast<int>(gene.op));
  }
  return actions;
}

namespace {

int draw(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cumulative += probs[k];
    if (u < cumulative) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace

template <typename Scalar>
ControllerParams<Scalar> ControllerParams<Scalar>::zeros_like(const ControllerParams& other) {
  ControllerParams z = other;
  z.for_each([](const std::string&, Scalar* data, Index n) { std::fill(data, data + n, Scalar(0)); });
  return z;
}

template <typename Scalar>
void ControllerParams<Scalar>::for_each(const std::function<void(const std::string&, Scalar*, Index)>& fn) {
  fn("w_input", w_input.data(), w_input.size());
  fn("w_hidden", w_hidden.data(), w_hidden.size());
  fn("gate_bias", gate_bias.data(), gate_bias.size());
  fn("start", start.data(), start.size());
  fn("op_embedding", op_embedding.data(), op_embedding.size());
  for (std::size_t c = 0; c < input_embedding.size(); ++c) {
    fn("input_embedding" + std::to_string(c + 1), input_embedding[c].data(), input_embedding[c].size());
  }
  fn("op_projection", op_projection.data(), op_projection.size());
  fn("op_bias", op_bias.data(), op_bias.size());
  for (std::size_t c = 0; c < input_projection.size(); ++c) {
    fn("input_projection" + std::to_string(c + 1), input_projection[c].data(), input_projection[c].size());
    fn("input_bias" + std::to_string(c + 1), input_bias[c].data(), input_bias[c].size());
  }
}

template <typename Scalar>
void ControllerParams<Scalar>::for_each(const std::function<void(const std::string&, const Scalar*, Index)>& fn) const {
  const_cast<ControllerParams*>(this)->for_each(
      [&](const std::string& name, Scalar* data, Index n) { fn(name, data, n); });
}

template <typename Scalar>
Scalar ControllerParams<Scalar>::squared_norm() const {
  Scalar total = 0;
  for_each([&](const std::string&, const Scalar* data, Index n) {
    for (Index i = 0; i < n; ++i) total += data[i] * data[i];
  });
  return total;
}

template <typename Scalar>
struct Controller<Scalar>::Rollout {
  using Vector = typename ControllerParams<Scalar>::Vector;
  std::vector<int> actions;
  std::vector<Vector> x, h_prev, c_prev, in_gate, forget_gate, out_gate, candidate, cell, tanh_cell, hidden, probs;
  std::vector<double> step_entropy;
  double log_prob = 0.0;
  double entropy = 0.0;
};

template <typename Scalar>
Controller<Scalar>::Controller(ControllerConfig config, std::uint64_t seed, SearchSpaceSpec space)
    : config_(config),
      space_(space),
      schedule_(decision_schedule(space)),
      optimizer_(typename Adam<Scalar>::Options{config.learning_rate}) {
  if (!(config_.temperature > 0.0)) throw std::invalid_argument("controller temperature must be positive");
  if (config_.hidden < 1) throw std::invalid_argument("controller hidden size must be positive");
  const Index h = config_.hidden;
  using Matrix = typename ControllerParams<Scalar>::Matrix;
  using Vector = typename ControllerParams<Scalar>::Vector;
  auto& p = params_;
  p.w_input = Matrix(4 * h, h);
  p.w_hidden = Matrix(4 * h, h);
  p.gate_bias = Vector(4 * h);
  p.start = Vector(h);
  p.op_embedding = Matrix(kOpCount, h);
  for (int c = 1; c <= space_.n_cells; ++c) {
    p.input_embedding.push_back(Matrix(c, h));
    p.input_projection.push_back(Matrix::Zero(c, h));
    p.input_bias.push_back(Vector::Zero(c));
  }
  p.op_projection = Matrix::Zero(kOpCount, h);
  p.op_bias = Vector::Zero(kOpCount);

  // Output projections start at zero so the fresh policy is exactly uniform.
  Rng rng(seed);
  const double r = config_.init_range;
  auto fill = [&](Scalar* data, Index n) {
    for (Index i = 0; i < n; ++i) data[i] = static_cast<Scalar>(rng.uniform(-r, r));
  };
  fill(p.w_input.data(), p.w_input.size());
  fill(p.w_hidden.data(), p.w_hidden.size());
  fill(p.gate_bias.data(), p.gate_bias.size());
  fill(p.start.data(), p.start.size());
  fill(p.op_embedding.data(), p.op_embedding.size());
  for (auto& e : p.input_embedding) fill(e.data(), e.size());
}

template <typename Scalar>
typename Controller<Scalar>::Rollout Controller<Scalar>::run(std::span<const int> forced, Rng* rng, bool greedy) const {
  using Vector = typename ControllerParams<Scalar>::Vector;
  const Index hsize = config_.hidden;
  const auto& p = params_;
  const auto temperature = static_cast<Scalar>(config_.temperature);
  if (!forced.empty() && forced.size() != schedule_.size()) {
    throw std::invalid_argument("trajectory has " + std::to_string(forced.size()) + " actions, expected " +
                                std::to_string(schedule_.size()));
  }

  Rollout r;
  Vector h = Vector::Zero(hsize), c = Vector::Zero(hsize);
  Vector x = p.start;
  for (std::size_t t = 0; t < schedule_.size(); ++t) {
    const auto& d = schedule_[t];
    Vector gates = p.w_input * x + p.w_hidden * h + p.gate_bias;
    Vector i = gates.segment(0, hsize).unaryExpr([](Scalar v) { return sigmoid(v); });
    Vector f = gates.segment(hsize, hsize).unaryExpr([](Scalar v) { return sigmoid(v); });
    Vector o = gates.segment(2 * hsize, hsize).unaryExpr([](Scalar v) { return sigmoid(v); });
    Vector u = gates.segment(3 * hsize, hsize).array().tanh().matrix();
    Vector c_new = (f.array() * c.array() + i.array() * u.array()).matrix();
    Vector tc = c_new.array().tanh().matrix();
    Vector h_new = (o.array() * tc.array()).matrix();

    Vector logits = d.kind == Decision::Kind::Op
                        ? Vector(p.op_projection * h_new + p.op_bias)
                        : Vector(p.input_projection[static_cast<std::size_t>(d.cell - 1)] * h_new +
                                 p.input_bias[static_cast<std::size_t>(d.cell - 1)]);
    logits /= temperature;
    const Scalar top = logits.maxCoeff();
    Vector probs = (logits.array() - top).exp().matrix();
    probs /= probs.sum();

    std::vector<double> pd(static_cast<std::size_t>(probs.size()));
    for (Index k = 0; k < probs.size(); ++k) pd[static_cast<std::size_t>(k)] = static_cast<double>(probs(k));
    int action;
    if (!forced.empty()) {
      action = forced[t];
      if (action < 0 || action >= d.arity) throw std::invalid_argument("action out of range at step " + std::to_string(t));
    } else if (greedy) {
      Index best = 0;
      probs.maxCoeff(&best);
      action = static_cast<int>(best);
    } else {
      action = draw(pd, *rng);
    }
    double step_entropy = 0.0;
    for (double q : pd) {
      if (q > 0.0) step_entropy -= q * std::log(q);
    }
    r.log_prob += std::log(pd[static_cast<std::size_t>(action)]);
    r.entropy += step_entropy;
    r.step_entropy.push_back(step_entropy);
    r.actions.push_back(action);
    r.x.push_back(x);
    r.h_prev.push_back(h);
    r.c_prev.push_back(c);
    r.in_gate.push_back(i);
    r.forget_gate.push_back(f);
    r.out_gate.push_back(o);
    r.candidate.push_back(u);
    r.cell.push_back(c_new);
    r.tanh_cell.push_back(tc);
    r.hidden.push_back(h_new);
    r.probs.push_back(probs);

    x = d.kind == Decision::Kind::Op
            ? Vector(p.op_embedding.row(action).transpose())
            : Vector(p.input_embedding[static_cast<std::size_t>(d.cell - 1)].row(action).transpose());
    h = h_new;
    c = c_new;
  }
  return r;
}

template <typename Scalar>
SampledArch Controller<Scalar>::sample(Rng& rng) const {
  auto r = run({}, &rng, false);
  return {genome_from_actions(r.actions, space_), r.actions, r.log_prob, r.entropy};
}

template <typename Scalar>
Genome Controller<Scalar>::argmax_genome() const {
  return genome_from_actions(run({}, nullptr, true).actions, space_);
}

template <typename Scalar>
typename Controller<Scalar>::Score Controller<Scalar>::score(std::span<const int> actions) const {
  auto r = run(actions, nullptr, false);
  Score s{r.log_prob, r.entropy, {}};
  for (const auto& p : r.probs) {
    std::vector<double> row;
    for (Index k = 0; k < p.size(); ++k) row.push_back(static_cast<double>(p(k)));
    s.probabilities.push_back(std::move(row));
  }
  return s;
}

template <typename Scalar>
void Controller<Scalar>::accumulate_gradient(std::span<const int> actions, Scalar logp_weight, Scalar entropy_weight,
                                             ControllerParams<Scalar>& g) const {
  using Vector = typename ControllerParams<Scalar>::Vector;
  const auto r = run(actions, nullptr, false);
  const Index hsize = config_.hidden;
  const auto& p = params_;
  const auto temperature = static_cast<Scalar>(config_.temperature);

  Vector dh_next = Vector::Zero(hsize), dc_next = Vector::Zero(hsize);
  for (std::size_t t = schedule_.size(); t-- > 0;) {
    const auto& d = schedule_[t];
    const auto& probs = r.probs[t];
    const int a = r.actions[t];
    const auto step_entropy = static_cast<Scalar>(r.step_entropy[t]);

    // d/dz of logp_weight * log p[a] + entropy_weight * H, z = logits / T.
    Vector dz = -logp_weight * probs;
    dz(a) += logp_weight;
    for (Index k = 0; k < probs.size(); ++k) {
      if (probs(k) > Scalar(0)) dz(k) -= entropy_weight * probs(k) * (std::log(probs(k)) + step_entropy);
    }
    const Vector dlogits = dz / temperature;

    Vector dh = dh_next;
    if (d.kind == Decision::Kind::Op) {
      g.op_projection.noalias() += dlogits * r.hidden[t].transpose();
      g.op_bias += dlogits;
      dh.noalias() += p.op_projection.transpose() * dlogits;
    } else {
      const auto cell = static_cast<std::size_t>(d.cell - 1);
      g.input_projection[cell].noalias() += dlogits * r.hidden[t].transpose();
      g.input_bias[cell] += dlogits;
      dh.noalias() += p.input_projection[cell].transpose() * dlogits;
    }

    const auto& i = r.in_gate[t];
    const auto& f = r.forget_gate[t];
    const auto& o = r.out_gate[t];
    const auto& u = r.candidate[t];
    const auto& tc = r.tanh_cell[t];
    const Vector d_out = (dh.array() * tc.array()).matrix();
    const Vector dc = (dh.array() * o.array() * (Scalar(1) - tc.array().square()) + dc_next.array()).matrix();
    Vector dgates(4 * hsize);
    dgates.segment(0, hsize) = (dc.array() * u.array() * i.array() * (Scalar(1) - i.array())).matrix();
    dgates.segment(hsize, hsize) = (dc.array() * r.c_prev[t].array() * f.array() * (Scalar(1) - f.array())).matrix();
    dgates.segment(2 * hsize, hsize) = (d_out.array() * o.array() * (Scalar(1) - o.array())).matrix();
    dgates.segment(3 * hsize, hsize) = (dc.array() * i.array() * (Scalar(1) - u.array().square())).matrix();
    dc_next = (dc.array() * f.array()).matrix();

    g.w_input.noalias() += dgates * r.x[t].transpose();
    g.w_hidden.noalias() += dgates * r.h_prev[t].transpose();
    g.gate_bias += dgates;
    const Vector dx = p.w_input.transpose() * dgates;
    dh_next = p.w_hidden.transpose() * dgates;

    if (t == 0) {
      g.start += dx;
    } else {
      const auto& prev = schedule_[t - 1];
      const int prev_action = r.actions[t - 1];
      if (prev.kind == Decision::Kind::Op) {
        g.op_embedding.row(prev_action) += dx.transpose();
      } else {
        g.input_embedding[static_cast<std::size_t>(prev.cell - 1)].row(prev_action) += dx.transpose();
      }
    }
  }
}

template <typename Scalar>
typename Controller<Scalar>::StepStats Controller<Scalar>::reinforce_step(
    std::span<const std::pair<SampledArch, double>> batch) {
  if (batch.empty()) throw std::invalid_argument("reinforce_step: empty batch");
  auto grads = ControllerParams<Scalar>::zeros_like(params_);
  const auto n = static_cast<Scalar>(batch.size());
  StepStats stats;
  for (const auto& [arch, reward] : batch) {
    if (!std::isfinite(reward)) throw std::invalid_argument("reinforce_step: non-finite reward");
    const auto advantage = static_cast<Scalar>(reward - baseline_);
    accumulate_gradient(arch.actions, advantage / n, static_cast<Scalar>(config_.entropy_weight) / n, grads);
    stats.mean_reward += reward / static_cast<double>(batch.size());
    stats.entropy += arch.entropy / static_cast<double>(batch.size());
  }

  const double norm = std::sqrt(static_cast<double>(grads.squared_norm()));
  stats.grad_norm = norm;
  // Ascent: hand the optimizer the negated (and clipped) gradient.
  const double factor = -(norm > config_.grad_clip && norm > 0.0 ? config_.grad_clip / norm : 1.0);
  grads.for_each([&](const std::string&, Scalar* data, Index size) {
    for (Index k = 0; k < size; ++k) data[k] *= static_cast<Scalar>(factor);
  });
  std::vector<ParamSlot<Scalar>> slots;
  params_.for_each([&](const std::string&, Scalar* data, Index size) { slots.push_back({data, nullptr, size, true}); });
  std::size_t k = 0;
  grads.for_each([&](const std::string&, const Scalar* data, Index) { slots[k++].grad = data; });
  optimizer_.step(slots);

  for (const auto& [arch, reward] : batch) {
    baseline_ = config_.baseline_decay * baseline_ + (1.0 - config_.baseline_decay) * reward;
  }
  if (!std::isfinite(baseline_)) throw std::runtime_error("controller baseline became non-finite");
  stats.baseline = baseline_;
  return stats;
}

SampledArch UniformPolicy::sample(Rng& rng) const {
  SampledArch arch;
  for (const auto& d : schedule_) {
    const auto a = static_cast<int>(rng.below(static_cast<std::uint64_t>(d.arity)));
    arch.actions.push_back(a);
    arch.log_prob -= std::log(static_cast<double>(d.arity));
    arch.entropy += std::log(static_cast<double>(d.arity));
  }
  arch.genome = genome_from_actions(arch.actions, space_);
  return arch;
}

void save_controller(const std::filesystem::path& dir, const Controller<float>& controller, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json blocks = json::array();
  controller.params().for_each([&](const std::string& name, const float* data, Index size) {
    const std::string file = name + ".dten";
    const std::vector<std::uint32_t> shape{static_cast<std::uint32_t>(size)};
    write_dten(dir / file, shape, std::span<const float>(data, static_cast<std::size_t>(size)));
    blocks.push_back({{"name", name}, {"file", file}});
  });
  const auto& c = controller.config();
  json manifest{{"format", "dimnas-controller"},
                {"version", 1},
                {"config",
                 {{"hidden", c.hidden},
                  {"temperature", c.temperature},
                  {"entropy_weight", c.entropy_weight},
                  {"baseline_decay", c.baseline_decay},
                  {"learning_rate", c.learning_rate},
                  {"grad_clip", c.grad_clip},
                  {"init_range", c.init_range}}},
                {"baseline", controller.baseline()},
                {"seed", seed},
                {"rng", std::string(Rng::kAlgorithm)},
                {"blocks", std::move(blocks)}};
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << manifest.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
}

Controller<float> load_controller(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("corrupt controller manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "dimnas-controller") throw FormatError("not a controller checkpoint");
  const auto& jc = manifest.at("config");
  ControllerConfig config;
  config.hidden = jc.at("hidden");
  config.temperature = jc.at("temperature");
  config.entropy_weight = jc.at("entropy_weight");
  config.baseline_decay = jc.at("baseline_decay");
  config.learning_rate = jc.at("learning_rate");
  config.grad_clip = jc.at("grad_clip");
  config.init_range = jc.at("init_range");
  Controller<float> controller(config, 0);
  std::map<std::string, std::string> files;
  for (const auto& b : manifest.at("blocks")) files[b.at("name")] = b.at("file");
  controller.params().for_each([&](const std::string& name, float* data, Index size) {
    auto it = files.find(name);
    if (it == files.end()) throw FormatError("controller checkpoint lacks " + name);
    auto array = read_dten(dir / it->second);
    if (static_cast<Index>(array.data.size()) != size) throw FormatError("controller block size mismatch: " + name);
    std::copy(array.data.begin(), array.data.end(), data);
  });
  controller.set_baseline(manifest.at("baseline").get<double>());
  return controller;
}

template struct ControllerParams<float>;
template struct ControllerParams<double>;
template class Controller<float>;
template class Controller<double>;

}  // namespace dimnas
