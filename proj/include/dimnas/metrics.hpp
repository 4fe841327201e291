#pragma once

#include "dimnas/datagen.hpp"
#include "dimnas/search_space.hpp"
#include "dimnas/supernet.hpp"

#include <json.hpp>

#include <span>
#include <vector>

namespace dimnas {

struct DiceOptions {
  /// Background (class 0) counts towards the class mean.
  bool include_background = true;
  double epsilon = 1e-5;
};

/// Mean over volumes of per-class dice, with the spread of per-volume means.
struct DiceReport {
  std::vector<double> per_class;
  double mean = 0.0;
  double std_over_volumes = 0.0;
  std::size_t volumes = 0;
  std::vector<double> per_volume_mean;
};

void to_json(nlohmann::json& j, const DiceReport& report);
void from_json(const nlohmann::json& j, DiceReport& report);

/// 1 - mean_k (2 sum p_k g_k + eps) / (sum p_k + sum g_k + eps), with p the channel
/// softmax of `scores`; sums run over batch and space jointly.
template <typename Scalar>
Tensor<Scalar> soft_dice_loss(const Tensor<Scalar>& scores, std::span<const std::uint8_t> labels,
                              const DiceOptions& options = {});

/// Per-class 2|P & G| / (|P| + |G|); a class absent from both scores 1.
DiceReport hard_dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                     int n_classes = kLayerClasses, const DiceOptions& options = {});

/// Averages per-volume reports: mean of per-volume means, population std.
DiceReport aggregate(std::span<const DiceReport> per_volume);

/// Argmax segmentation of every volume with frozen weights (inference mode).
DiceReport evaluate(SupernetWeights<float>& weights, const BlockDesign& design, std::span<const Volume> volumes,
                    const DiceOptions& options = {});

extern template Tensor<float> soft_dice_loss(const Tensor<float>&, std::span<const std::uint8_t>, const DiceOptions&);
extern template Tensor<double> soft_dice_loss(const Tensor<double>&, std::span<const std::uint8_t>, const DiceOptions&);

}  // namespace dimnas
