#include "dimnas/metrics.hpp"

#include <cmath>
#include <numeric>

namespace dimnas {

using nlohmann::json;

void to_json(json& j, const DiceReport& r) {
  j = json{{"per_class", r.per_class},
           {"mean", r.mean},
           {"std", r.std_over_volumes},
           {"volumes", r.volumes},
           {"per_volume_mean", r.per_volume_mean}};
}

void from_json(const json& j, DiceReport& r) {
  r.per_class = j.at("per_class").get<std::vector<double>>();
  r.mean = j.at("mean").get<double>();
  r.std_over_volumes = j.at("std").get<double>();
  r.volumes = j.at("volumes").get<std::size_t>();
  r.per_volume_mean = j.value("per_volume_mean", std::vector<double>{});
}

template <typename Scalar>
Tensor<Scalar> soft_dice_loss(const Tensor<Scalar>& scores, std::span<const std::uint8_t> labels,
                              const DiceOptions& options) {
  using Array = typename Tensor<Scalar>::Array;
  const Shape& s = scores.shape();
  const Index batch = s.batch(), classes = s.channels(), plane = s.spatial_size();
  if (static_cast<Index>(labels.size()) != batch * plane) {
    throw ShapeError("soft_dice_loss: " + std::to_string(labels.size()) + " labels for scores " + s.str());
  }
  for (auto l : labels) {
    if (l >= classes) throw ShapeError("soft_dice_loss: label " + std::to_string(l) + " >= class count");
  }

  auto probs = std::make_shared<Array>(s.numel());
  const Scalar* in = scores.value().data();
  for (Index n = 0; n < batch; ++n) {
    for (Index i = 0; i < plane; ++i) {
      const Index base = n * classes * plane + i;
      Scalar top = in[base];
      for (Index c = 1; c < classes; ++c) top = std::max(top, in[base + c * plane]);
      Scalar norm = 0;
      for (Index c = 0; c < classes; ++c) norm += ((*probs)(base + c * plane) = std::exp(in[base + c * plane] - top));
      for (Index c = 0; c < classes; ++c) (*probs)(base + c * plane) /= norm;
    }
  }

  const Index first = options.include_background ? 0 : 1;
  const auto eps = static_cast<Scalar>(options.epsilon);
  const auto counted = static_cast<Scalar>(classes - first);
  Array inter = Array::Zero(classes), psum = Array::Zero(classes), gsum = Array::Zero(classes);
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < classes; ++c) {
      for (Index i = 0; i < plane; ++i) {
        const Scalar p = (*probs)((n * classes + c) * plane + i);
        psum(c) += p;
        if (labels[static_cast<std::size_t>(n * plane + i)] == c) {
          inter(c) += p;
          gsum(c) += 1;
        }
      }
    }
  }
  Array num = 2 * inter + eps;
  Array den = psum + gsum + eps;
  Scalar dice_sum = 0;
  for (Index c = first; c < classes; ++c) dice_sum += num(c) / den(c);
  Array out(1);
  out(0) = Scalar(1) - dice_sum / counted;

  auto label_copy = std::make_shared<std::vector<std::uint8_t>>(labels.begin(), labels.end());
  return Tensor<Scalar>::make_result(
      Shape{1, 1, 1}, std::move(out), {scores},
      [probs, label_copy, num, den, batch, classes, plane, first, counted](const auto& grad, auto& grads) {
        if (!grads[0]) return;
        auto& dx = *grads[0];
        const auto& p = *probs;
        const Scalar upstream = grad(0);
        Array dp(classes);
        for (Index n = 0; n < batch; ++n) {
          for (Index i = 0; i < plane; ++i) {
            const Index base = n * classes * plane + i;
            const auto label = (*label_copy)[static_cast<std::size_t>(n * plane + i)];
            Scalar inner = 0;
            for (Index c = 0; c < classes; ++c) {
              dp(c) = 0;
              if (c >= first) {
                const Scalar g = label == c ? Scalar(1) : Scalar(0);
                dp(c) = -upstream / counted * (2 * g * den(c) - num(c)) / (den(c) * den(c));
              }
              inner += p(base + c * plane) * dp(c);
            }
            for (Index c = 0; c < classes; ++c) dx(base + c * plane) += p(base + c * plane) * (dp(c) - inner);
          }
        }
      });
}

DiceReport hard_dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth, int n_classes,
                     const DiceOptions& options) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("hard_dice: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  std::vector<std::size_t> both(static_cast<std::size_t>(n_classes), 0), pred_count(both), true_count(both);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] >= n_classes || truth[i] >= n_classes) throw ShapeError("hard_dice: class id out of range");
    ++pred_count[predicted[i]];
    ++true_count[truth[i]];
    if (predicted[i] == truth[i]) ++both[truth[i]];
  }
  DiceReport r;
  r.volumes = 1;
  const int first = options.include_background ? 0 : 1;
  double total = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const auto k = static_cast<std::size_t>(c);
    const std::size_t denom = pred_count[k] + true_count[k];
    const double d = denom == 0 ? 1.0 : 2.0 * static_cast<double>(both[k]) / static_cast<double>(denom);
    r.per_class.push_back(d);
    if (c >= first) total += d;
  }
  r.mean = total / static_cast<double>(n_classes - first);
  r.per_volume_mean = {r.mean};
  return r;
}

DiceReport aggregate(std::span<const DiceReport> per_volume) {
  if (per_volume.empty()) throw std::invalid_argument("cannot aggregate an empty set of dice reports");
  DiceReport r;
  r.per_class.assign(per_volume.front().per_class.size(), 0.0);
  for (const auto& v : per_volume) {
    for (std::size_t c = 0; c < r.per_class.size(); ++c) r.per_class[c] += v.per_class.at(c);
    r.per_volume_mean.push_back(v.mean);
  }
  const auto n = static_cast<double>(per_volume.size());
  for (auto& c : r.per_class) c /= n;
  r.mean = std::accumulate(r.per_volume_mean.begin(), r.per_volume_mean.end(), 0.0) / n;
  double sq = 0.0;
  for (double m : r.per_volume_mean) sq += (m - r.mean) * (m - r.mean);
  r.std_over_volumes = std::sqrt(sq / n);
  r.volumes = per_volume.size();
  return r;
}

DiceReport evaluate(SupernetWeights<float>& weights, const BlockDesign& design, std::span<const Volume> volumes,
                    const DiceOptions& options) {
  if (volumes.empty()) throw std::invalid_argument("evaluate: no volumes");
  if (volumes.front().rank() != weights.spec.rank) {
    throw ShapeError("evaluate: rank-" + std::to_string(volumes.front().rank()) + " volumes for a rank-" +
                     std::to_string(weights.spec.rank) + " model");
  }
  NoGradGuard no_grad;
  const std::size_t chunk = weights.spec.rank == 1 ? 64 : 4;
  std::vector<DiceReport> reports;
  reports.reserve(volumes.size());
  for (std::size_t start = 0; start < volumes.size(); start += chunk) {
    std::vector<std::size_t> indices;
    for (std::size_t i = start; i < std::min(volumes.size(), start + chunk); ++i) indices.push_back(i);
    const auto batch = make_batch(volumes, indices);
    const auto scores = forward_design(weights, design, batch.input, false);
    const auto predicted = argmax_channels(scores);
    const std::size_t per = predicted.size() / indices.size();
    for (std::size_t k = 0; k < indices.size(); ++k) {
      reports.push_back(hard_dice(std::span(predicted).subspan(k * per, per),
                                  std::span(batch.labels).subspan(k * per, per),
                                  static_cast<int>(weights.spec.n_classes), options));
    }
  }
  return aggregate(reports);
}

template Tensor<float> soft_dice_loss(const Tensor<float>&, std::span<const std::uint8_t>, const DiceOptions&);
template Tensor<double> soft_dice_loss(const Tensor<double>&, std::span<const std::uint8_t>, const DiceOptions&);

}  // namespace dimnas
