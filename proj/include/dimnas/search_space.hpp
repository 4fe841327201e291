#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dimnas {

/// Candidate operations; the integer ids are stable and used for ordering.
enum class OpKind : std::uint8_t { Conv3 = 0, Conv5 = 1, AvgPool3 = 2, MaxPool3 = 3, Identity = 4 };

inline constexpr int kOpCount = 5;
inline constexpr std::array<OpKind, kOpCount> kAllOps = {OpKind::Conv3, OpKind::Conv5, OpKind::AvgPool3,
                                                         OpKind::MaxPool3, OpKind::Identity};

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);
inline bool is_conv(OpKind op) { return op == OpKind::Conv3 || op == OpKind::Conv5; }
inline int conv_kernel_size(OpKind op) { return op == OpKind::Conv5 ? 5 : 3; }

/// input_sel 0 is the module input; i >= 1 is the output of cell i.
struct SubcellGene {
  int input_sel = 0;
  OpKind op = OpKind::Conv3;
  bool operator==(const SubcellGene&) const = default;
};

struct CellGene {
  std::vector<SubcellGene> subcells;
  bool operator==(const CellGene&) const = default;
};

/// Rank-free description of one searchable module block.
struct Genome {
  std::vector<CellGene> cells;
  bool operator==(const Genome&) const = default;
};

struct SearchSpaceSpec {
  int n_cells = 2;
  int n_subcells = 2;

  /// Product over cells c (1-based) of (c legal inputs x 5 ops) ^ n_subcells.
  std::uint64_t cardinality() const;
  /// Number of sequential categorical decisions (input, op per subcell).
  int decision_count() const { return 2 * n_cells * n_subcells; }
};

/// Every invariant violation; empty iff valid.
std::vector<std::string> validate(const Genome& genome, const SearchSpaceSpec& spec = {});
inline bool is_valid(const Genome& genome, const SearchSpaceSpec& spec = {}) {
  return validate(genome, spec).empty();
}

/// All genomes, lexicographic in (cell, subcell, input_sel, op id).
std::vector<Genome> enumerate(const SearchSpaceSpec& spec = {});

/// Cells whose output reaches the module output (the last cell) through the DAG.
std::vector<bool> live_cells(const Genome& genome);

class GenomeParseError : public std::runtime_error {
 public:
  GenomeParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Canonical JSON: {"cells":[{"subcells":[{"input":0,"op":"conv3"},...]},...]}
std::string encode(const Genome& genome);
/// Parses and validates; errors name the byte offset or JSON path at fault.
Genome decode(std::string_view text, const SearchSpaceSpec& spec = {});

/// The hand-designed residual block: conv3-norm-relu twice, plus the input.
struct ResNetBlock {
  int conv_stages = 2;
  int kernel_size = 3;
  bool operator==(const ResNetBlock&) const = default;
};

using BlockDesign = std::variant<Genome, ResNetBlock>;

/// "baseline_resnet", "enas_block_a" or "enas_block_b".
BlockDesign preset(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace dimnas
