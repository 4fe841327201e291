#include "dimnas/search_space.hpp"

#include <json.hpp>

namespace dimnas {

using nlohmann::json;

namespace {
constexpr std::array<std::string_view, kOpCount> kOpNames = {"conv3", "conv5", "avgpool3", "maxpool3",
                                                             "identity"};
}

std::string_view op_name(OpKind op) { return kOpNames.at(static_cast<std::size_t>(op)); }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

std::uint64_t SearchSpaceSpec::cardinality() const {
  std::uint64_t total = 1;
  for (int c = 1; c <= n_cells; ++c) {
    const std::uint64_t per_subcell = static_cast<std::uint64_t>(c) * kOpCount;
    for (int s = 0; s < n_subcells; ++s) total *= per_subcell;
  }
  return total;
}

std::vector<std::string> validate(const Genome& genome, const SearchSpaceSpec& spec) {
  std::vector<std::string> violations;
  if (static_cast<int>(genome.cells.size()) != spec.n_cells) {
    violations.push_back("expected " + std::to_string(spec.n_cells) + " cells, got " +
                         std::to_string(genome.cells.size()));
  }
  for (std::size_t ci = 0; ci < genome.cells.size(); ++ci) {
    const int cell = static_cast<int>(ci) + 1;
    const auto& subcells = genome.cells[ci].subcells;
    if (static_cast<int>(subcells.size()) != spec.n_subcells) {
      violations.push_back("cell " + std::to_string(cell) + ": expected " + std::to_string(spec.n_subcells) +
                           " subcells, got " + std::to_string(subcells.size()));
    }
    for (std::size_t si = 0; si < subcells.size(); ++si) {
      const auto& gene = subcells[si];
      const std::string where = "cell " + std::to_string(cell) + " subcell " + std::to_string(si + 1);
      if (gene.input_sel < 0) {
        violations.push_back(where + ": negative input selector " + std::to_string(gene.input_sel));
      } else if (gene.input_sel >= cell) {
        violations.push_back("cell " + std::to_string(cell) + " cannot reference cell " +
                             std::to_string(gene.input_sel) + " (" + where + ")");
      }
      if (static_cast<int>(gene.op) >= kOpCount) {
        violations.push_back(where + ": unknown op id " + std::to_string(static_cast<int>(gene.op)));
      }
    }
  }
  return violations;
}

std::vector<Genome> enumerate(const SearchSpaceSpec& spec) {
  // Odometer over the decision sequence, last decision fastest.
  std::vector<int> arity;
  for (int c = 1; c <= spec.n_cells; ++c) {
    for (int s = 0; s < spec.n_subcells; ++s) {
      arity.push_back(c);
      arity.push_back(kOpCount);
    }
  }
  std::vector<Genome> all;
  all.reserve(spec.cardinality());
  std::vector<int> digits(arity.size(), 0);
  while (true) {
    Genome g;
    std::size_t d = 0;
    for (int c = 0; c < spec.n_cells; ++c) {
      CellGene cell;
      for (int s = 0; s < spec.n_subcells; ++s, d += 2) {
        cell.subcells.push_back({digits[d], static_cast<OpKind>(digits[d + 1])});
      }
      g.cells.push_back(std::move(cell));
    }
    all.push_back(std::move(g));
    std::size_t i = digits.size();
    while (i > 0 && ++digits[i - 1] == arity[i - 1]) digits[--i] = 0;
    if (i == 0) break;
  }
  return all;
}

std::vector<bool> live_cells(const Genome& genome) {
  std::vector<bool> live(genome.cells.size(), false);
  if (live.empty()) return live;
  live.back() = true;
  for (std::size_t c = genome.cells.size(); c-- > 0;) {
    if (!live[c]) continue;
    for (const auto& gene : genome.cells[c].subcells) {
      if (gene.input_sel >= 1) live[static_cast<std::size_t>(gene.input_sel - 1)] = true;
    }
  }
  return live;
}

std::string encode(const Genome& genome) {
  json cells = json::array();
  for (const auto& cell : genome.cells) {
    json subcells = json::array();
    for (const auto& gene : cell.subcells) {
      subcells.push_back({{"input", gene.input_sel}, {"op", std::string(op_name(gene.op))}});
    }
    cells.push_back({{"subcells", std::move(subcells)}});
  }
  return json{{"cells", std::move(cells)}}.dump();
}

Genome decode(std::string_view text, const SearchSpaceSpec& spec) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GenomeParseError("byte " + std::to_string(e.byte), "malformed JSON");
  }
  auto require = [](bool ok, const std::string& where, const std::string& what) {
    if (!ok) throw GenomeParseError(where, what);
  };
  require(doc.is_object() && doc.contains("cells") && doc["cells"].is_array(), "$",
          "expected an object with a \"cells\" array");
  Genome genome;
  const auto& cells = doc["cells"];
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const std::string cell_path = "$.cells[" + std::to_string(ci) + "]";
    const auto& cell = cells[ci];
    require(cell.is_object() && cell.contains("subcells") && cell["subcells"].is_array(), cell_path,
            "expected an object with a \"subcells\" array");
    CellGene cell_gene;
    const auto& subcells = cell["subcells"];
    for (std::size_t si = 0; si < subcells.size(); ++si) {
      const std::string path = cell_path + ".subcells[" + std::to_string(si) + "]";
      const auto& sub = subcells[si];
      require(sub.is_object(), path, "expected an object");
      require(sub.contains("input") && sub["input"].is_number_integer(), path + ".input",
              "expected an integer");
      require(sub.contains("op") && sub["op"].is_string(), path + ".op", "expected a string");
      const int input = sub["input"].get<int>();
      require(input >= 0 && input <= static_cast<int>(ci), path + ".input",
              "input selector " + std::to_string(input) + " out of range for cell " + std::to_string(ci + 1));
      const auto name = sub["op"].get<std::string>();
      const auto op = op_from_name(name);
      require(op.has_value(), path + ".op", "unknown op \"" + name + "\"");
      cell_gene.subcells.push_back({input, *op});
    }
    genome.cells.push_back(std::move(cell_gene));
  }
  const auto violations = validate(genome, spec);
  if (!violations.empty()) throw GenomeParseError("$", violations.front());
  return genome;
}

BlockDesign preset(std::string_view name) {
  auto gene = [](int input, OpKind op) { return SubcellGene{input, op}; };
  if (name == "baseline_resnet") return ResNetBlock{};
  // The two learned blocks are stand-ins: the source figure is not legible in
  // text form, so these are plausible members of the search space and carry
  // no claim of matching the published wiring.
  if (name == "enas_block_a") {
    return Genome{{CellGene{{gene(0, OpKind::Conv3), gene(0, OpKind::Conv5)}},
                   CellGene{{gene(1, OpKind::Conv3), gene(0, OpKind::Identity)}}}};
  }
  if (name == "enas_block_b") {
    return Genome{{CellGene{{gene(0, OpKind::Conv5), gene(0, OpKind::MaxPool3)}},
                   CellGene{{gene(1, OpKind::Conv3), gene(1, OpKind::AvgPool3)}}}};
  }
  throw std::invalid_argument("unknown preset \"" + std::string(name) + "\"");
}

std::vector<std::string> preset_names() { return {"baseline_resnet", "enas_block_a", "enas_block_b"}; }

}  // namespace dimnas
