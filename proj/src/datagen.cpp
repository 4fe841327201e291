#include "dimnas/datagen.hpp"

#include "dimnas/dten.hpp"
#include "dimnas/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace dimnas {

using nlohmann::json;

std::vector<std::uint8_t> labels_from_boundaries(Index ilm, Index rpedc, Index bm, Index depth) {
  if (!(0 <= ilm && ilm < rpedc && rpedc < bm && bm < depth)) {
    throw std::invalid_argument("boundaries must satisfy 0 <= ilm < rpedc < bm < depth, got ilm=" +
                                std::to_string(ilm) + " rpedc=" + std::to_string(rpedc) +
                                " bm=" + std::to_string(bm) + " depth=" + std::to_string(depth));
  }
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(depth));
  for (Index d = 0; d < depth; ++d) {
    labels[static_cast<std::size_t>(d)] = d < ilm ? 0 : d < rpedc ? 1 : d < bm ? 2 : 3;
  }
  return labels;
}

std::vector<std::uint8_t> labels_from_boundaries(const Boundaries& b, Index depth) {
  const Index width = b.columns();
  if (static_cast<Index>(b.rpedc.size()) != width || static_cast<Index>(b.bm.size()) != width) {
    throw std::invalid_argument("boundary arrays differ in length");
  }
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(depth * width));
  for (Index w = 0; w < width; ++w) {
    const auto column = labels_from_boundaries(b.ilm[static_cast<std::size_t>(w)], b.rpedc[static_cast<std::size_t>(w)],
                                               b.bm[static_cast<std::size_t>(w)], depth);
    for (Index d = 0; d < depth; ++d) labels[static_cast<std::size_t>(d * width + w)] = column[static_cast<std::size_t>(d)];
  }
  return labels;
}

void SplitSpec::validate() const {
  if (n_train < 1 || n_reward < 1 || n_val < 1 || n_test < 1) {
    throw std::invalid_argument("every split needs at least one volume");
  }
}

const std::vector<Volume>& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "reward") return reward;
  if (name == "val") return val;
  if (name == "test") return test;
  throw std::invalid_argument("unknown split \"" + std::string(name) + "\"");
}

namespace {

struct CosineCurve {
  double offset = 0;
  double amplitude[3] = {0, 0, 0};
  double phase[3] = {0, 0, 0};

  double at(double x, double width) const {
    double v = offset;
    for (int m = 0; m < 3; ++m) v += amplitude[m] * std::cos(2.0 * std::numbers::pi * (m + 1) * x / width + phase[m]);
    return v;
  }
};

CosineCurve random_curve(Rng& rng, double offset, double amplitude) {
  CosineCurve c;
  c.offset = offset;
  for (int m = 0; m < 3; ++m) {
    c.amplitude[m] = rng.uniform(-amplitude, amplitude) / (m + 1);
    c.phase[m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return c;
}

constexpr const char* kSplitNames[] = {"train", "reward", "val", "test"};

}  // namespace

Volume generate_bscan(std::uint64_t seed, Index depth, Index width, double noise_sigma, double drusen_prob) {
  if (depth < 8 || width < 1) throw std::invalid_argument("B-scan must be at least 8 deep and 1 wide");
  Rng rng(seed);
  const double d = static_cast<double>(depth);
  const double w = static_cast<double>(width);
  const auto ilm = random_curve(rng, rng.uniform(0.12, 0.25) * d, 0.04 * d);
  const auto retina = random_curve(rng, rng.uniform(0.28, 0.40) * d, 0.03 * d);
  const auto rpe = random_curve(rng, rng.uniform(0.06, 0.10) * d, 0.01 * d);
  const bool drusen = rng.uniform() < drusen_prob;
  const double drusen_center = rng.uniform(0.2, 0.8) * w;
  const double drusen_width = rng.uniform(0.05, 0.12) * w;
  const double drusen_height = rng.uniform(0.04, 0.08) * d;

  Boundaries b;
  for (Index x = 0; x < width; ++x) {
    const double xc = static_cast<double>(x);
    const double top = ilm.at(xc, w);
    const double rpe_floor = top + retina.at(xc, w);
    const double bm = rpe_floor + std::max(rpe.at(xc, w), 2.0);
    double rpedc = rpe_floor;
    if (drusen) {
      const double z = (xc - drusen_center) / drusen_width;
      rpedc -= drusen_height * std::exp(-0.5 * z * z);
    }
    const Index i = std::clamp<Index>(std::lround(top), 1, depth - 4);
    const Index r = std::clamp<Index>(std::lround(rpedc), i + 2, depth - 3);
    const Index m = std::clamp<Index>(std::lround(bm), r + 1, depth - 2);
    b.ilm.push_back(i);
    b.rpedc.push_back(r);
    b.bm.push_back(m);
  }

  Volume v;
  v.labels = labels_from_boundaries(b, depth);
  Eigen::ArrayXf values(depth * width);
  for (Index k = 0; k < depth * width; ++k) {
    values(k) = kClassMeans[v.labels[static_cast<std::size_t>(k)]] + static_cast<float>(noise_sigma * rng.normal());
  }
  v.intensity = Tensor<float>(Shape{1, 1, depth, width}, std::move(values));
  v.boundaries = std::move(b);
  v.seed = seed;
  return v;
}

std::vector<Volume> extract_ascans(const Volume& bscan) {
  if (bscan.rank() != 2) throw std::invalid_argument("extract_ascans needs a rank-2 volume");
  const Index depth = bscan.depth(), width = bscan.width();
  std::vector<Volume> columns;
  columns.reserve(static_cast<std::size_t>(width));
  for (Index w = 0; w < width; ++w) {
    Volume a;
    Eigen::ArrayXf values(depth);
    a.labels.resize(static_cast<std::size_t>(depth));
    for (Index d = 0; d < depth; ++d) {
      values(d) = bscan.intensity.value()(d * width + w);
      a.labels[static_cast<std::size_t>(d)] = bscan.labels[static_cast<std::size_t>(d * width + w)];
    }
    a.intensity = Tensor<float>(Shape{1, 1, depth}, std::move(values));
    if (bscan.boundaries.columns() == width) {
      const auto k = static_cast<std::size_t>(w);
      a.boundaries = {{bscan.boundaries.ilm[k]}, {bscan.boundaries.rpedc[k]}, {bscan.boundaries.bm[k]}};
    }
    a.seed = bscan.seed;
    columns.push_back(std::move(a));
  }
  return columns;
}

Dataset generate(const GeneratorConfig& config) {
  config.split.validate();
  if (config.rank != 1 && config.rank != 2) throw std::invalid_argument("rank must be 1 or 2");
  if (config.size_multiple < 1 || config.depth % config.size_multiple != 0 ||
      (config.rank == 2 && config.width % config.size_multiple != 0)) {
    throw std::invalid_argument("depth (and width for rank 2) must be divisible by " +
                                std::to_string(config.size_multiple));
  }
  if (config.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
  Dataset data;
  data.rank = config.rank;
  const Index counts[] = {config.split.n_train, config.split.n_reward, config.split.n_val, config.split.n_test};
  std::vector<Volume>* targets[] = {&data.train, &data.reward, &data.val, &data.test};
  for (int s = 0; s < 4; ++s) {
    for (Index i = 0; i < counts[s]; ++i) {
      const auto seed = derive_seed(config.seed, std::string(kSplitNames[s]) + "/" + std::to_string(i));
      auto bscan = generate_bscan(seed, config.depth, config.width, config.noise_sigma, config.drusen_prob);
      if (config.rank == 2) {
        targets[s]->push_back(std::move(bscan));
      } else {
        for (auto& a : extract_ascans(bscan)) targets[s]->push_back(std::move(a));
      }
    }
  }
  return data;
}

Batch make_batch(std::span<const Volume> volumes, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const Shape& first = volumes[indices[0]].intensity.shape();
  auto dims = first.dims();
  dims[0] = static_cast<Index>(indices.size());
  Eigen::ArrayXf values(Shape(dims).numel());
  Batch batch;
  const Index per = first.numel();
  Index at = 0;
  for (auto i : indices) {
    const auto& v = volumes[i];
    if (v.intensity.shape() != first) throw ShapeError("batch volumes differ in shape");
    values.segment(at, per) = v.intensity.value();
    at += per;
    batch.labels.insert(batch.labels.end(), v.labels.begin(), v.labels.end());
  }
  batch.input = Tensor<float>(Shape(dims), std::move(values));
  return batch;
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json boundaries_json(const Boundaries& b) { return json{{"ilm", b.ilm}, {"rpedc", b.rpedc}, {"bm", b.bm}}; }

// One directory per B-scan; rank-1 groups hold that B-scan's A-scans.
void write_volume_dir(const std::filesystem::path& dir, std::span<const Volume> group) {
  std::filesystem::create_directories(dir);
  const Volume& head = group.front();
  std::vector<float> intensity, labels;
  Boundaries b;
  for (const auto& v : group) {
    intensity.insert(intensity.end(), v.intensity.value().data(), v.intensity.value().data() + v.intensity.numel());
    labels.insert(labels.end(), v.labels.begin(), v.labels.end());
    b.ilm.insert(b.ilm.end(), v.boundaries.ilm.begin(), v.boundaries.ilm.end());
    b.rpedc.insert(b.rpedc.end(), v.boundaries.rpedc.begin(), v.boundaries.rpedc.end());
    b.bm.insert(b.bm.end(), v.boundaries.bm.begin(), v.boundaries.bm.end());
  }
  std::vector<std::uint32_t> shape;
  if (head.rank() == 2) {
    for (Index d : head.intensity.shape().dims()) shape.push_back(static_cast<std::uint32_t>(d));
  } else {
    shape = {static_cast<std::uint32_t>(group.size()), 1, static_cast<std::uint32_t>(head.depth())};
  }
  write_dten(dir / "intensity.dten", shape, intensity);
  write_dten(dir / "labels.dten", shape, labels);
  write_json(dir / "meta.json", {{"seed", head.seed},
                                 {"rank", head.rank()},
                                 {"depth", head.depth()},
                                 {"width", head.rank() == 2 ? head.width() : static_cast<Index>(group.size())},
                                 {"boundaries", boundaries_json(b)}});
}

std::vector<Volume> read_volume_dir(const std::filesystem::path& dir, int rank) {
  const auto intensity = read_dten(dir / "intensity.dten");
  const auto labels = read_dten(dir / "labels.dten");
  if (intensity.shape != labels.shape) throw DataError(dir.string() + ": intensity and labels differ in shape");
  if (intensity.shape.size() != static_cast<std::size_t>(rank + 2)) {
    throw DataError(dir.string() + ": expected a rank-" + std::to_string(rank) + " volume");
  }
  std::vector<std::uint8_t> classes(labels.data.size());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const float c = labels.data[i];
    if (!(c >= 0.0f && c < static_cast<float>(kLayerClasses)) || c != std::floor(c)) {
      throw DataError(dir.string() + ": label value out of range");
    }
    classes[i] = static_cast<std::uint8_t>(c);
  }
  Boundaries b;
  std::uint64_t seed = 0;
  if (std::filesystem::exists(dir / "meta.json")) {
    const auto meta = read_json(dir / "meta.json");
    seed = meta.value("seed", std::uint64_t{0});
    if (meta.contains("boundaries")) {
      b.ilm = meta["boundaries"].at("ilm").get<std::vector<Index>>();
      b.rpedc = meta["boundaries"].at("rpedc").get<std::vector<Index>>();
      b.bm = meta["boundaries"].at("bm").get<std::vector<Index>>();
    }
  }
  std::vector<Volume> out;
  if (rank == 2) {
    if (intensity.shape[0] != 1 || intensity.shape[1] != 1) throw DataError(dir.string() + ": expected (1,1,D,W)");
    Volume v;
    v.intensity = Tensor<float>::from(Shape{1, 1, intensity.shape[2], intensity.shape[3]}, intensity.data);
    v.labels = std::move(classes);
    v.boundaries = std::move(b);
    v.seed = seed;
    out.push_back(std::move(v));
    return out;
  }
  if (intensity.shape[1] != 1) throw DataError(dir.string() + ": expected (N,1,D)");
  const Index n = intensity.shape[0], depth = intensity.shape[2];
  for (Index k = 0; k < n; ++k) {
    Volume v;
    v.intensity = Tensor<float>::from(
        Shape{1, 1, depth}, std::span<const float>(intensity.data).subspan(static_cast<std::size_t>(k * depth),
                                                                          static_cast<std::size_t>(depth)));
    v.labels.assign(classes.begin() + k * depth, classes.begin() + (k + 1) * depth);
    if (b.columns() == n) {
      const auto i = static_cast<std::size_t>(k);
      v.boundaries = {{b.ilm[i]}, {b.rpedc[i]}, {b.bm[i]}};
    }
    v.seed = seed;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& data, const GeneratorConfig& config) {
  std::filesystem::create_directories(dir);
  const std::vector<Volume>* splits[] = {&data.train, &data.reward, &data.val, &data.test};
  json counts;
  for (int s = 0; s < 4; ++s) {
    const auto& volumes = *splits[s];
    Index group_index = 0;
    for (std::size_t i = 0; i < volumes.size();) {
      // Rank-1 volumes are grouped back into their source B-scan.
      std::size_t j = i + 1;
      if (data.rank == 1) {
        while (j < volumes.size() && volumes[j].seed == volumes[i].seed) ++j;
      }
      char name[32];
      std::snprintf(name, sizeof name, "%04lld", static_cast<long long>(group_index++));
      write_volume_dir(dir / kSplitNames[s] / name, std::span<const Volume>(volumes).subspan(i, j - i));
      i = j;
    }
    counts[kSplitNames[s]] = group_index;
  }
  write_json(dir / "dataset.json", {{"format", "dimnas-dataset"},
                                    {"version", 1},
                                    {"rank", data.rank},
                                    {"depth", config.depth},
                                    {"width", config.width},
                                    {"seed", config.seed},
                                    {"noise_sigma", config.noise_sigma},
                                    {"drusen_prob", config.drusen_prob},
                                    {"rng", std::string(Rng::kAlgorithm)},
                                    {"splits", counts}});
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto header = read_json(dir / "dataset.json");
  Dataset data;
  data.rank = header.at("rank").get<int>();
  if (data.rank != 1 && data.rank != 2) throw DataError("dataset rank must be 1 or 2");
  std::vector<Volume>* targets[] = {&data.train, &data.reward, &data.val, &data.test};
  for (int s = 0; s < 4; ++s) {
    const auto split_dir = dir / kSplitNames[s];
    if (!std::filesystem::is_directory(split_dir)) throw DataError("missing split directory " + split_dir.string());
    std::vector<std::filesystem::path> entries;
    for (const auto& e : std::filesystem::directory_iterator(split_dir)) {
      if (e.is_directory()) entries.push_back(e.path());
    }
    std::sort(entries.begin(), entries.end());
    if (entries.empty()) throw DataError("split " + std::string(kSplitNames[s]) + " is empty");
    for (const auto& e : entries) {
      for (auto& v : read_volume_dir(e, data.rank)) targets[s]->push_back(std::move(v));
    }
  }
  return data;
}

}  // namespace dimnas
