#pragma once

#include "dimnas/ops.hpp"
#include "dimnas/search_space.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dimnas {

/// Fixed U-Net skeleton around the searchable module positions.
struct SupernetSpec {
  int rank = 1;
  int n_stages = 3;
  Index base_channels = 16;
  Index n_classes = 4;
  Index in_channels = 1;

  Index channels_at(int stage) const { return base_channels << stage; }
  /// Spatial sizes must be multiples of this.
  Index size_multiple() const { return Index{1} << n_stages; }
  /// Encoder stages, the bottleneck and decoder stages.
  int module_positions() const { return 2 * n_stages + 1; }
  void validate() const;
  bool operator==(const SupernetSpec&) const = default;
};

void to_json(nlohmann::json& j, const SupernetSpec& spec);
void from_json(const nlohmann::json& j, SupernetSpec& spec);

enum class BlockKind { Searchable, ResNet };

std::string_view block_kind_name(BlockKind kind);
BlockKind block_kind_from_name(std::string_view name);

/// conv -> norm -> relu
template <typename Scalar>
struct ConvUnit {
  ConvParams<Scalar> conv;
  NormParams<Scalar> norm;
};

template <typename Scalar>
struct ModuleWeights {
  Index channels = 0;
  /// Searchable blocks: per cell, per subcell, the {conv3, conv5} candidates.
  std::vector<std::vector<std::array<ConvUnit<Scalar>, 2>>> candidates;
  /// Residual blocks: the two conv stages.
  std::vector<ConvUnit<Scalar>> resnet;
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

/// All parameters of one supernet. Each module position owns its candidates;
/// genomes only choose which of them a forward pass touches.
template <typename Scalar>
struct SupernetWeights {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  SupernetSpec spec;
  BlockKind kind = BlockKind::Searchable;
  ConvUnit<Scalar> stem;
  std::vector<ModuleWeights<Scalar>> encoder;
  ModuleWeights<Scalar> bottleneck;
  std::vector<ModuleWeights<Scalar>> decoder;  // decoder[s] runs at the resolution of encoder[s]
  std::vector<ConvUnit<Scalar>> down;
  std::vector<ConvParams<Scalar>> up;
  ConvParams<Scalar> head;

  /// He fan-in normal kernels, zero biases and betas, unit gammas. The output head starts
  /// at zero, so every run begins from a uniform softmax.
  static SupernetWeights init(const SupernetSpec& spec, BlockKind kind, std::uint64_t seed);

  /// Trainable tensors in a fixed order with stable dotted names.
  std::vector<NamedTensor<Scalar>> parameters() const;
  /// Running statistics, by name.
  void for_each_buffer(const std::function<void(const std::string&, Array&)>& fn);
  void zero_grad();
};

template <typename Scalar>
Index param_count(const SupernetWeights<Scalar>& weights);

/// Per-position class scores, same spatial size as `x`, n_classes channels.
/// The genome selects one path; other candidates are not evaluated.
template <typename Scalar>
Tensor<Scalar> forward(SupernetWeights<Scalar>& weights, const Genome& genome, const Tensor<Scalar>& x,
                       bool training);

/// Separate encoder and decoder block designs (bottleneck uses the encoder genome).
template <typename Scalar>
Tensor<Scalar> forward(SupernetWeights<Scalar>& weights, const Genome& encoder, const Genome& decoder,
                       const Tensor<Scalar>& x, bool training);

template <typename Scalar>
Tensor<Scalar> forward_baseline(SupernetWeights<Scalar>& weights, const Tensor<Scalar>& x, bool training);

template <typename Scalar>
Tensor<Scalar> forward_design(SupernetWeights<Scalar>& weights, const BlockDesign& design,
                              const Tensor<Scalar>& x, bool training);

BlockKind block_kind_for(const BlockDesign& design);

struct TransferredDesign {
  Genome genome;
  SupernetSpec spec;
};

/// Genomes are rank-free: k-sized kernels become k x k. Weights are not carried over.
TransferredDesign extend_to_2d(const Genome& genome, const SupernetSpec& spec);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  SupernetWeights<float> weights;
  nlohmann::json manifest;
};

/// Directory of one DTEN file per tensor plus manifest.json; `extra` is stored verbatim.
void save_checkpoint(const std::filesystem::path& dir, const SupernetWeights<float>& weights,
                     const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace dimnas
