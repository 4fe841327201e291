// dimnas: generate data, search, retrain, evaluate and tabulate from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.

#include "dimnas/datagen.hpp"
#include "dimnas/metrics.hpp"
#include "dimnas/search_engine.hpp"
#include "dimnas/search_space.hpp"
#include "dimnas/supernet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dimnas;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Everything about a dataset except its rank, so 1D and 2D sets built from the same
// B-scans compare equal.
json data_identity(const fs::path& dir) {
  auto j = read_json_file(dir / "dataset.json");
  j.erase("rank");
  j.erase("format");
  j.erase("version");
  return j;
}

Dataset load_data(const fs::path& dir, std::optional<int> rank) {
  auto data = read_dataset(dir);
  if (rank && *rank != data.rank) {
    throw DataError("--rank " + std::to_string(*rank) + " does not match the rank-" + std::to_string(data.rank) +
                    " dataset in " + dir.string());
  }
  return data;
}

// Written when a command starts and again when it ends.
class RunManifest {
 public:
  RunManifest(fs::path path, std::string command, std::vector<std::string> argv)
      : path_(std::move(path)),
        body_{{"command", std::move(command)},
              {"argv", std::move(argv)},
              {"tool_version", kToolVersion},
              {"rng", std::string(Rng::kAlgorithm)},
              {"started", utc_now()},
              {"finished", nullptr},
              {"status", "running"},
              {"config", json::object()},
              {"seeds", json::object()},
              {"outputs", json::array()}} {}

  json& config() { return body_["config"]; }
  json& seeds() { return body_["seeds"]; }
  void output(const fs::path& p) { body_["outputs"].push_back(p.string()); }
  const fs::path& path() const { return path_; }

  void begin() { write(); }
  void finish(int code, const std::string& error = {}) {
    body_["finished"] = utc_now();
    body_["status"] = code == kOk ? "ok" : "failed";
    body_["exit_code"] = code;
    if (!error.empty()) body_["error"] = error;
    write();
  }

 private:
  void write() { write_atomic(path_, body_.dump(2) + "\n"); }

  fs::path path_;
  json body_;
};

std::string design_label(const BlockDesign& design, int rank, const json& search) {
  if (std::holds_alternative<ResNetBlock>(design)) return "ResNet U-Net " + std::to_string(rank) + "D";
  if (search.is_object()) {
    const int from = search.at("rank");
    return from == rank ? "ENAS " + std::to_string(rank) + "D" : "ENAS " + std::to_string(from) + "D->" + std::to_string(rank) + "D";
  }
  return "genome " + std::to_string(rank) + "D";
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = 1;
  int rank = 1;
  Index depth = 64;
  Index width = 64;
  std::string splits = "desk";
  double noise = 0.1;
  double drusen = 0.3;
  std::string out;
  bool force = false;
};

SplitSpec parse_splits(const std::string& text) {
  if (text == "desk") return {};
  if (text == "full") return SplitSpec::full();
  SplitSpec s;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  if (!(in >> s.n_train >> c1 >> s.n_reward >> c2 >> s.n_val >> c3 >> s.n_test) || c1 != ',' || c2 != ',' || c3 != ',' ||
      !in.eof()) {
    throw UsageError("--splits expects desk, full or TRAIN,REWARD,VAL,TEST; got '" + text + "'");
  }
  return s;
}

int cmd_gen_data(const GenDataArgs& a, RunManifest& m) {
  const fs::path out(a.out);
  const std::vector<std::string> owned{"dataset.json", "train", "reward", "val", "test", "run_manifest.json"};
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!a.force) throw UsageError(out.string() + " exists and is not empty; pass --force to overwrite");
    for (const auto& name : owned) fs::remove_all(out / name);
  }
  GeneratorConfig cfg;
  cfg.seed = a.seed;
  cfg.rank = a.rank;
  cfg.depth = a.depth;
  cfg.width = a.width;
  cfg.split = parse_splits(a.splits);
  cfg.noise_sigma = a.noise;
  cfg.drusen_prob = a.drusen;
  m.config() = {{"seed", cfg.seed},         {"rank", cfg.rank},
                {"depth", cfg.depth},       {"width", cfg.width},
                {"splits", {cfg.split.n_train, cfg.split.n_reward, cfg.split.n_val, cfg.split.n_test}},
                {"noise_sigma", cfg.noise_sigma}, {"drusen_prob", cfg.drusen_prob}};
  m.seeds() = {{"data", cfg.seed}};
  m.output(out);
  m.begin();
  const auto data = generate(cfg);
  write_dataset(out, data, cfg);
  std::cout << "wrote " << data.train.size() << "/" << data.reward.size() << "/" << data.val.size() << "/"
            << data.test.size() << " rank-" << data.rank << " volumes to " << out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  std::string data;
  int rank = 1;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string policy = "controller";
  std::string out;
  std::string report;
};

int cmd_search(const SearchArgs& a, RunManifest& m) {
  SearchSchedule schedule = a.preset == "desk" ? SearchSchedule::desk() : SearchSchedule{};
  if (a.epochs) schedule.epochs = *a.epochs;
  if (a.seed) schedule.seed = *a.seed;
  try {
    schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  SupernetSpec spec;
  spec.rank = a.rank;
  m.config() = {{"data", a.data}, {"spec", spec}, {"schedule", schedule}, {"policy", a.policy}, {"preset", a.preset}};
  m.seeds() = {{"base", schedule.seed},
               {"supernet_init", derive_seed(schedule.seed, "supernet-init")},
               {"controller_init", derive_seed(schedule.seed, "controller-init")},
               {"controller_sampling", derive_seed(schedule.seed, "controller-sampling")},
               {"data_order", derive_seed(schedule.seed, "data-order")},
               {"reward_batches", derive_seed(schedule.seed, "reward-batches")}};
  m.output(a.out);
  m.output(a.report);
  m.begin();

  const auto data = load_data(a.data, a.rank);
  if (data.reward.empty() || data.val.empty()) throw DataError("search needs non-empty reward and val splits");
  const auto result = a.policy == "uniform" ? random_search_baseline(data, spec, schedule) : search(data, spec, schedule);
  json report = result;
  report["data_dir"] = a.data;
  report["data"] = data_identity(a.data);
  report["tool_version"] = kToolVersion;
  write_atomic(a.out, encode(result.best_genome) + "\n");
  write_atomic(a.report, report.dump(2) + "\n");
  std::cout << "best genome " << encode(result.best_genome) << "\n"
            << "search wall-clock " << result.wall_clock_seconds << " s\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string genome;
  std::string preset;
  std::optional<int> rank;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps_per_epoch;
  std::optional<double> lr;
  std::string out;
  std::string search_report;
  std::string label;
};

int cmd_train(const TrainArgs& a, RunManifest& m) {
  if (a.genome.empty() == a.preset.empty()) throw UsageError("give exactly one of --genome or --preset");
  BlockDesign design;
  json design_json;
  if (!a.genome.empty()) {
    std::ifstream in(a.genome);
    if (!in) throw DataError("cannot read genome file " + a.genome);
    std::stringstream text;
    text << in.rdbuf();
    try {
      design = decode(text.str());
    } catch (const GenomeParseError& e) {
      throw DataError(a.genome + ": " + e.what());
    }
    design_json = {{"type", "genome"}, {"genome", json::parse(encode(std::get<Genome>(design)))}, {"source", a.genome}};
  } else {
    try {
      design = preset(a.preset);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    design_json = std::holds_alternative<Genome>(design)
                      ? json{{"type", "genome"}, {"genome", json::parse(encode(std::get<Genome>(design)))},
                             {"preset", a.preset}}
                      : json{{"type", "resnet"}, {"preset", a.preset}};
  }

  RetrainConfig cfg = RetrainConfig::desk();
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps_per_epoch) cfg.steps_per_epoch = *a.steps_per_epoch;
  if (a.lr) cfg.lr = *a.lr;

  json search = nullptr;
  if (!a.search_report.empty()) {
    const auto r = read_json_file(a.search_report);
    search = {{"report", a.search_report},
              {"rank", r.at("rank")},
              {"policy", r.at("policy")},
              {"wall_clock_seconds", r.at("wall_clock_seconds")},
              {"schedule", r.at("schedule")}};
  }

  const fs::path out(a.out);
  m.config() = {{"data", a.data}, {"design", design_json}, {"retrain", cfg}, {"search", search}};
  m.seeds() = {{"base", cfg.seed}, {"retrain_init", derive_seed(cfg.seed, "retrain-init")},
               {"retrain_order", derive_seed(cfg.seed, "retrain-order")}};
  m.output(out);
  m.begin();

  const auto data = load_data(a.data, a.rank);
  SupernetSpec spec;
  spec.rank = data.rank;
  const auto result = retrain(data, spec, design, cfg);
  const std::string label = a.label.empty() ? design_label(design, spec.rank, search) : a.label;
  save_checkpoint(out, result.weights,
                  {{"model", label},
                   {"design", design_json},
                   {"retrain", cfg},
                   {"search", search},
                   {"data_dir", a.data},
                   {"data", data_identity(a.data)},
                   {"test", result.test},
                   {"loss_curve", result.loss_curve},
                   {"train_seconds", result.wall_clock_seconds}});
  std::cout << label << ": test dice " << result.test.mean << " +- " << result.test.std_over_volumes << " ("
            << result.wall_clock_seconds << " s)\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string out;
};

BlockDesign design_from_json(const json& j) {
  if (j.at("type") == "resnet") return ResNetBlock{};
  return decode(j.at("genome").dump());
}

int cmd_eval(const EvalArgs& a, RunManifest& m) {
  m.config() = {{"data", a.data}, {"ckpt", a.ckpt}, {"split", a.split}};
  m.output(a.out);
  m.begin();
  Checkpoint ckpt = [&] {
    try {
      return load_checkpoint(a.ckpt);
    } catch (const CheckpointError& e) {
      throw DataError(e.what());
    }
  }();
  const auto data = read_dataset(a.data);
  if (data.rank != ckpt.weights.spec.rank) {
    throw DataError("checkpoint is rank " + std::to_string(ckpt.weights.spec.rank) + " but " + a.data + " holds rank-" +
                    std::to_string(data.rank) + " data");
  }
  const auto& extra = ckpt.manifest.at("extra");
  const auto design = design_from_json(extra.at("design"));
  const auto& volumes = data.split(a.split);
  if (volumes.empty()) throw DataError("split '" + a.split + "' is empty");
  const auto report = evaluate(ckpt.weights, design, volumes);
  const json out{{"kind", "eval_report"},
                 {"model", extra.value("model", std::string("model"))},
                 {"rank", data.rank},
                 {"split", a.split},
                 {"dice", report},
                 {"design", extra.at("design")},
                 {"retrain", extra.value("retrain", json(nullptr))},
                 {"search", extra.value("search", json(nullptr))},
                 {"train_seconds", extra.value("train_seconds", json(nullptr))},
                 {"data_dir", a.data},
                 {"data", data_identity(a.data)},
                 {"ckpt", a.ckpt},
                 {"tool_version", kToolVersion}};
  write_atomic(a.out, out.dump(2) + "\n");
  std::cout << out.at("model").get<std::string>() << " " << a.split << " dice " << report.mean << " +- "
            << report.std_over_volumes << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string curves;
  bool allow_mixed = false;
};

std::string csv_number(const json& v) {
  if (v.is_null()) return "";
  std::ostringstream s;
  s.precision(10);
  s << v.get<double>();
  return s.str();
}

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

int cmd_report(const ReportArgs& a, RunManifest& m) {
  if (a.inputs.empty()) throw UsageError("report needs at least one input");
  const fs::path table(a.out);
  const fs::path curves = a.curves.empty() ? table.parent_path() / "curves.csv" : fs::path(a.curves);
  m.config() = {{"inputs", a.inputs}, {"allow_mixed", a.allow_mixed}};
  m.output(table);
  m.output(curves);
  m.begin();

  struct Row {
    std::string source, model, kind;
    int rank = 0;
    json mean, std, seconds, search_rank;
  };
  std::vector<Row> rows;
  std::vector<std::string> problems;
  std::optional<json> data_ref, schedule_ref, retrain_ref;
  auto agree = [&](std::optional<json>& ref, const json& value, const std::string& what, const std::string& src) {
    if (value.is_null()) return;
    if (!ref) {
      ref = value;
    } else if (*ref != value) {
      problems.push_back(src + ": " + what + " differs from the first input");
    }
  };

  std::ostringstream curve_csv;
  curve_csv << "source,model,epoch,reward,loss\n";
  for (const auto& input : a.inputs) {
    const auto j = read_json_file(input);
    const std::string kind = j.value("kind", std::string());
    Row row;
    row.source = input;
    row.kind = kind;
    agree(data_ref, j.value("data", json(nullptr)), "dataset", input);
    if (kind == "search_result") {
      row.rank = j.at("rank");
      row.model = "search " + std::to_string(row.rank) + "D " + j.at("policy").get<std::string>();
      double best = 0.0;
      for (const auto& c : j.at("candidates")) best = std::max(best, c.at("val_dice").get<double>());
      row.mean = best;
      row.std = nullptr;
      row.seconds = j.at("wall_clock_seconds");
      row.search_rank = row.rank;
      agree(schedule_ref, j.at("schedule"), "search schedule", input);
      const auto& reward = j.at("reward_curve");
      const auto& loss = j.value("loss_curve", json::array());
      const std::size_t n = std::max(reward.size(), loss.size());
      for (std::size_t e = 0; e < n; ++e) {
        curve_csv << csv_text(input) << "," << csv_text(row.model) << "," << e + 1 << ","
                  << (e < reward.size() ? csv_number(reward[e]) : "") << ","
                  << (e < loss.size() ? csv_number(loss[e]) : "") << "\n";
      }
    } else if (kind == "eval_report") {
      row.rank = j.at("rank");
      row.model = j.at("model");
      row.mean = j.at("dice").at("mean");
      row.std = j.at("dice").at("std");
      const auto& s = j.at("search");
      row.seconds = s.is_object() ? s.at("wall_clock_seconds") : json(nullptr);
      row.search_rank = s.is_object() ? s.at("rank") : json(nullptr);
      agree(retrain_ref, j.value("retrain", json(nullptr)), "retrain config", input);
      if (s.is_object()) agree(schedule_ref, s.at("schedule"), "search schedule", input);
    } else {
      throw DataError(input + ": not a search result or eval report");
    }
    rows.push_back(std::move(row));
  }
  if (!problems.empty()) {
    std::string msg = "incompatible inputs:";
    for (const auto& p : problems) msg += "\n  " + p;
    if (!a.allow_mixed) throw DataError(msg);
    std::cerr << "warning: " << msg << "\n";
  }

  // t_low / t_high against the slowest search at the highest rank present.
  int top_rank = 0;
  for (const auto& r : rows)
    if (!r.seconds.is_null()) top_rank = std::max(top_rank, r.search_rank.get<int>());
  double t_high = 0.0;
  for (const auto& r : rows)
    if (!r.seconds.is_null() && r.search_rank.get<int>() == top_rank) t_high = std::max(t_high, r.seconds.get<double>());

  std::ostringstream csv;
  csv << "model,kind,rank,mean_dice,std_dice,search_seconds,search_time_ratio,source\n";
  for (const auto& r : rows) {
    const json ratio = (!r.seconds.is_null() && t_high > 0.0) ? json(r.seconds.get<double>() / t_high) : json(nullptr);
    csv << csv_text(r.model) << "," << (r.kind == "search_result" ? "search" : "eval") << "," << r.rank << ","
        << csv_number(r.mean) << "," << csv_number(r.std) << "," << csv_number(r.seconds) << "," << csv_number(ratio)
        << "," << csv_text(r.source) << "\n";
  }
  write_atomic(table, csv.str());
  write_atomic(curves, curve_csv.str());
  std::cout << csv.str();
  return kOk;
}

fs::path manifest_beside(const std::string& output) {
  const fs::path p(output);
  return p.parent_path() / (p.filename().string() + ".manifest.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dimension-polymorphic architecture search for layer segmentation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic layered dataset");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--rank", gen.rank, "1 for A-scans, 2 for B-scans")->check(CLI::IsMember({1, 2}))->capture_default_str();
  gen_cmd->add_option("--depth", gen.depth, "Pixels per A-scan")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "A-scans per B-scan")->capture_default_str();
  gen_cmd->add_option("--splits", gen.splits, "desk, full, or TRAIN,REWARD,VAL,TEST")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Gaussian noise sigma")->capture_default_str();
  gen_cmd->add_option("--drusen", gen.drusen, "Probability of a drusen bump per B-scan")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite an existing dataset");

  SearchArgs srch;
  auto* search_cmd = app.add_subcommand("search", "Search a block genome with a shared-weight supernet");
  search_cmd->add_option("--data", srch.data, "Dataset directory")->required();
  search_cmd->add_option("--rank", srch.rank, "Spatial rank of the search")->check(CLI::IsMember({1, 2}))->capture_default_str();
  search_cmd->add_option("--epochs", srch.epochs, "Override the epoch count");
  search_cmd->add_option("--seed", srch.seed, "Override the search seed");
  search_cmd->add_option("--preset", srch.preset, "Schedule preset")->check(CLI::IsMember({"desk"}));
  search_cmd->add_option("--policy", srch.policy, "Sampling policy")->check(CLI::IsMember({"controller", "uniform"}))->capture_default_str();
  search_cmd->add_option("--out", srch.out, "Best genome JSON")->required();
  search_cmd->add_option("--report", srch.report, "Search result JSON")->required();

  TrainArgs trn;
  auto* train_cmd = app.add_subcommand("train", "Retrain a block design from scratch");
  train_cmd->add_option("--data", trn.data, "Dataset directory")->required();
  auto* genome_opt = train_cmd->add_option("--genome", trn.genome, "Genome JSON file");
  auto* preset_opt = train_cmd->add_option("--preset", trn.preset, "Block preset")->check(CLI::IsMember(preset_names()));
  genome_opt->excludes(preset_opt);
  train_cmd->add_option("--rank", trn.rank, "Expected dataset rank")->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--epochs", trn.epochs, "Training epochs (default 20)");
  train_cmd->add_option("--seed", trn.seed, "Retrain seed");
  train_cmd->add_option("--steps-per-epoch", trn.steps_per_epoch, "Batches per epoch (0 = one pass)");
  train_cmd->add_option("--lr", trn.lr, "Adam learning rate");
  train_cmd->add_option("--search-report", trn.search_report, "Search result the genome came from");
  train_cmd->add_option("--label", trn.label, "Model name used in reports");
  train_cmd->add_option("--out", trn.out, "Checkpoint directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--split", ev.split, "Split to score")->check(CLI::IsMember({"train", "reward", "val", "test"}))->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Dice report JSON")->required();

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Tabulate search results and eval reports");
  report_cmd->add_option("--inputs", rep.inputs, "Search result or eval report JSON files")->required();
  report_cmd->add_option("--out", rep.out, "Table CSV")->required();
  report_cmd->add_option("--curves", rep.curves, "Curve CSV (default: curves.csv beside the table)");
  report_cmd->add_flag("--allow-mixed", rep.allow_mixed, "Warn instead of failing on incompatible inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const std::vector<std::string> args(argv, argv + argc);
  std::optional<RunManifest> manifest;
  try {
    if (gen_cmd->parsed()) {
      manifest.emplace(fs::path(gen.out) / "run_manifest.json", "gen-data", args);
      const int c = cmd_gen_data(gen, *manifest);
      manifest->finish(c);
      return c;
    }
    if (search_cmd->parsed()) {
      manifest.emplace(manifest_beside(srch.report), "search", args);
      const int c = cmd_search(srch, *manifest);
      manifest->finish(c);
      return c;
    }
    if (train_cmd->parsed()) {
      manifest.emplace(manifest_beside(trn.out), "train", args);
      const int c = cmd_train(trn, *manifest);
      manifest->finish(c);
      return c;
    }
    if (eval_cmd->parsed()) {
      manifest.emplace(manifest_beside(ev.out), "eval", args);
      const int c = cmd_eval(ev, *manifest);
      manifest->finish(c);
      return c;
    }
    if (report_cmd->parsed()) {
      manifest.emplace(manifest_beside(rep.out), "report", args);
      const int c = cmd_report(rep, *manifest);
      manifest->finish(c);
      return c;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (manifest) manifest->finish(kUsage, e.what());
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n" << e.state().dump(2) << "\n";
    if (manifest) manifest->finish(kDivergence, std::string(e.what()) + " " + e.state().dump());
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      if (manifest) manifest->finish(kData, e.what());
    } catch (const std::exception&) {
    }
    return kData;
  }
  return kUsage;
}
