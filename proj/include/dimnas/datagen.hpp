#pragma once

#include "dimnas/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dimnas {

inline constexpr int kLayerClasses = 4;

/// Layer boundary depths per column (one column for an A-scan).
struct Boundaries {
  std::vector<Index> ilm;
  std::vector<Index> rpedc;
  std::vector<Index> bm;

  Index columns() const { return static_cast<Index>(ilm.size()); }
};

/// Half-open class rule along depth: 0 above ILM, 1 in [ILM, RPEDC), 2 in
/// [RPEDC, BM), 3 from BM down. Throws unless 0 <= ilm < rpedc < bm < depth.
std::vector<std::uint8_t> labels_from_boundaries(Index ilm, Index rpedc, Index bm, Index depth);

/// Row-major (depth, width) labels for all columns.
std::vector<std::uint8_t> labels_from_boundaries(const Boundaries& b, Index depth);

/// Intensity (1,1,depth) or (1,1,depth,width) with per-element class ids.
struct Volume {
  Tensor<float> intensity;
  std::vector<std::uint8_t> labels;
  Boundaries boundaries;
  std::uint64_t seed = 0;

  int rank() const { return intensity.shape().spatial_rank(); }
  Index depth() const { return intensity.shape()[2]; }
  Index width() const { return rank() == 2 ? intensity.shape()[3] : 1; }
};

struct SplitSpec {
  Index n_train = 60;
  Index n_reward = 24;
  Index n_val = 2;
  Index n_test = 24;

  static SplitSpec full() { return {150, 56, 2, 60}; }
  void validate() const;
  bool operator==(const SplitSpec&) const = default;
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  int rank = 1;
  Index depth = 64;
  Index width = 64;
  SplitSpec split;
  double noise_sigma = 0.1;
  double drusen_prob = 0.3;
  /// Required divisor of depth and width (2^n_stages of the intended network).
  Index size_multiple = 8;
};

/// Four disjoint splits of the same rank. A rank-1 dataset holds every A-scan
/// of the B-scans a rank-2 dataset with the same seed would contain.
struct Dataset {
  int rank = 1;
  std::vector<Volume> train;
  std::vector<Volume> reward;
  std::vector<Volume> val;
  std::vector<Volume> test;

  const std::vector<Volume>& split(std::string_view name) const;
};

/// Class means 0.1 / 0.7 / 0.45 / 0.25 (background, retina, RPEDC, below BM).
inline constexpr float kClassMeans[kLayerClasses] = {0.1f, 0.7f, 0.45f, 0.25f};

/// One synthetic B-scan; boundaries are smooth low-order cosine mixtures with
/// an optional drusen-like RPEDC elevation.
Volume generate_bscan(std::uint64_t seed, Index depth, Index width, double noise_sigma, double drusen_prob);

Dataset generate(const GeneratorConfig& config);

/// Columns of a B-scan as A-scan volumes, in order.
std::vector<Volume> extract_ascans(const Volume& bscan);

/// Training batch of stacked volumes: (B, 1, spatial...) and concatenated labels.
struct Batch {
  Tensor<float> input;
  std::vector<std::uint8_t> labels;
};

Batch make_batch(std::span<const Volume> volumes, std::span<const std::size_t> indices);

/// Layout: dataset.json plus <split>/<NNNN>/{intensity.dten, labels.dten, meta.json}.
/// Rank-1 volume directories stack a source B-scan's A-scans as (width, 1, depth).
void write_dataset(const std::filesystem::path& dir, const Dataset& data, const GeneratorConfig& config);
Dataset read_dataset(const std::filesystem::path& dir);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dimnas
