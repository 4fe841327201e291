#include "doctest.h"

#include "dimnas/search_space.hpp"

#include <set>

using namespace dimnas;

namespace {

Genome uniform_genome(int input, OpKind op) {
  Genome g;
  g.cells.assign(2, CellGene{{SubcellGene{input, op}, SubcellGene{input, op}}});
  return g;
}

bool contains(const std::vector<std::string>& messages, const std::string& needle) {
  for (const auto& m : messages)
    if (m.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("op names round-trip") {
  for (auto op : kAllOps) CHECK(op_from_name(op_name(op)) == op);
  CHECK_FALSE(op_from_name("conv7").has_value());
}

TEST_CASE("validate reports violations") {
  CHECK(validate(uniform_genome(0, OpKind::Identity)).empty());

  auto self_ref = uniform_genome(0, OpKind::Conv3);
  self_ref.cells[0].subcells[0].input_sel = 1;
  CHECK(contains(validate(self_ref), "cell 1 cannot reference cell 1"));

  auto three = uniform_genome(0, OpKind::Conv3);
  three.cells.push_back(three.cells[0]);
  CHECK(contains(validate(three), "expected 2 cells"));

  auto one_sub = uniform_genome(0, OpKind::Conv3);
  one_sub.cells[1].subcells.pop_back();
  CHECK_FALSE(validate(one_sub).empty());

  auto bad_op = uniform_genome(0, OpKind::Conv3);
  bad_op.cells[1].subcells[1].op = static_cast<OpKind>(9);
  CHECK_FALSE(validate(bad_op).empty());

  auto negative = uniform_genome(0, OpKind::Conv3);
  negative.cells[1].subcells[0].input_sel = -1;
  CHECK_FALSE(validate(negative).empty());

  // Several faults are all listed.
  auto many = uniform_genome(0, OpKind::Conv3);
  many.cells[0].subcells[0].input_sel = 1;
  many.cells[1].subcells[1].input_sel = 2;
  CHECK(validate(many).size() == 2);
}

TEST_CASE("enumeration matches a nested-loop oracle") {
  std::vector<Genome> oracle;
  for (int a = 0; a < 1; ++a)
    for (int oa = 0; oa < 5; ++oa)
      for (int b = 0; b < 1; ++b)
        for (int ob = 0; ob < 5; ++ob)
          for (int c = 0; c < 2; ++c)
            for (int oc = 0; oc < 5; ++oc)
              for (int d = 0; d < 2; ++d)
                for (int od = 0; od < 5; ++od) {
                  Genome g;
                  g.cells = {CellGene{{{a, OpKind(oa)}, {b, OpKind(ob)}}}, CellGene{{{c, OpKind(oc)}, {d, OpKind(od)}}}};
                  oracle.push_back(g);
                }
  const auto all = enumerate();
  CHECK(SearchSpaceSpec{}.cardinality() == 2500);
  REQUIRE(all.size() == 2500);
  CHECK(all == oracle);
  CHECK(all.front() == uniform_genome(0, OpKind::Conv3));

  std::set<std::string> distinct;
  for (const auto& g : all) {
    CHECK(is_valid(g));
    const auto text = encode(g);
    distinct.insert(text);
    CHECK(decode(text) == g);
    CHECK(encode(decode(text)) == text);
  }
  CHECK(distinct.size() == 2500);
}

TEST_CASE("cardinality of other space sizes") {
  SearchSpaceSpec three{3, 2};
  CHECK(three.cardinality() == 25ull * 100 * 225);
  CHECK(enumerate(SearchSpaceSpec{1, 1}).size() == 5);
  CHECK(enumerate(SearchSpaceSpec{3, 1}).size() == 5 * 10 * 15);
}

TEST_CASE("decode diagnostics") {
  const auto good = encode(uniform_genome(0, OpKind::Conv3));
  auto with_op = [&](const std::string& from, const std::string& to) {
    auto s = good;
    s.replace(s.rfind(from), from.size(), to);
    return s;
  };
  try {
    decode(with_op("conv3", "conv7"));
    FAIL("conv7 accepted");
  } catch (const GenomeParseError& e) {
    CHECK(e.where() == "$.cells[1].subcells[1].op");
  }
  try {
    decode(with_op("\"input\":0", "\"input\":5"));
    FAIL("out-of-range input accepted");
  } catch (const GenomeParseError& e) {
    CHECK(e.where() == "$.cells[1].subcells[1].input");
  }
  try {
    decode(good.substr(0, 20));
    FAIL("truncated text accepted");
  } catch (const GenomeParseError& e) {
    CHECK(e.where().rfind("byte ", 0) == 0);
  }
  CHECK_THROWS_AS(decode("{}"), GenomeParseError);
  CHECK_THROWS_AS(decode("[1,2]"), GenomeParseError);
  // Whitespace and key order do not matter on input.
  CHECK(decode(" { \"cells\" : " + good.substr(9)) == uniform_genome(0, OpKind::Conv3));
}

TEST_CASE("live cells follow the DAG from the last cell") {
  auto g = uniform_genome(0, OpKind::Conv3);
  CHECK(live_cells(g) == std::vector<bool>{false, true});
  g.cells[1].subcells[1].input_sel = 1;
  CHECK(live_cells(g) == std::vector<bool>{true, true});
}

TEST_CASE("presets") {
  const auto base = preset("baseline_resnet");
  REQUIRE(std::holds_alternative<ResNetBlock>(base));
  CHECK(std::get<ResNetBlock>(base).conv_stages == 2);
  CHECK(std::get<ResNetBlock>(base).kernel_size == 3);
  for (const char* name : {"enas_block_a", "enas_block_b"}) {
    const auto d = preset(name);
    REQUIRE(std::holds_alternative<Genome>(d));
    CHECK(is_valid(std::get<Genome>(d)));
  }
  CHECK_THROWS(preset("nonexistent"));
  CHECK(preset_names().size() == 3);
}
