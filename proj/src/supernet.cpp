#include "dimnas/supernet.hpp"

#include "dimnas/dten.hpp"
#include "dimnas/rng.hpp"

#include <cmath>
#include <fstream>

namespace dimnas {

using nlohmann::json;

void SupernetSpec::validate() const {
  if (rank != 1 && rank != 2) throw std::invalid_argument("supernet rank must be 1 or 2");
  if (n_stages < 1 || n_stages > 8) throw std::invalid_argument("n_stages must be in [1, 8]");
  if (base_channels < 1) throw std::invalid_argument("base_channels must be positive");
  if (n_classes < 2 || n_classes > 255) throw std::invalid_argument("n_classes must be in [2, 255]");
  if (in_channels < 1) throw std::invalid_argument("in_channels must be positive");
}

void to_json(json& j, const SupernetSpec& spec) {
  j = json{{"rank", spec.rank},
           {"n_stages", spec.n_stages},
           {"base_channels", spec.base_channels},
           {"n_classes", spec.n_classes},
           {"in_channels", spec.in_channels}};
}

void from_json(const json& j, SupernetSpec& spec) {
  spec.rank = j.at("rank").get<int>();
  spec.n_stages = j.at("n_stages").get<int>();
  spec.base_channels = j.at("base_channels").get<Index>();
  spec.n_classes = j.at("n_classes").get<Index>();
  spec.in_channels = j.value("in_channels", Index{1});
  spec.validate();
}

std::string_view block_kind_name(BlockKind kind) {
  return kind == BlockKind::Searchable ? "searchable" : "resnet";
}

BlockKind block_kind_from_name(std::string_view name) {
  if (name == "searchable") return BlockKind::Searchable;
  if (name == "resnet") return BlockKind::ResNet;
  throw std::invalid_argument("unknown block kind \"" + std::string(name) + "\"");
}

namespace {

template <typename Scalar>
ConvParams<Scalar> he_conv(Rng& rng, int rank, Index in, Index out, Index k, Index stride = 1) {
  auto p = ConvParams<Scalar>::zeros(rank, in, out, k, stride);
  const double fan_in = static_cast<double>(in) * std::pow(static_cast<double>(k), rank);
  const double stddev = std::sqrt(2.0 / fan_in);
  auto& w = p.kernel.mutable_value();
  for (Index i = 0; i < w.size(); ++i) w(i) = static_cast<Scalar>(rng.normal(0.0, stddev));
  return p;
}

template <typename Scalar>
ConvUnit<Scalar> he_unit(Rng& rng, int rank, Index in, Index out, Index k, Index stride = 1) {
  return {he_conv<Scalar>(rng, rank, in, out, k, stride), NormParams<Scalar>::identity(out)};
}

template <typename Scalar>
ModuleWeights<Scalar> make_module(Rng& rng, int rank, Index channels, BlockKind kind) {
  ModuleWeights<Scalar> m;
  m.channels = channels;
  const SearchSpaceSpec space;
  if (kind == BlockKind::Searchable) {
    m.candidates.resize(static_cast<std::size_t>(space.n_cells));
    for (auto& cell : m.candidates) {
      for (int s = 0; s < space.n_subcells; ++s) {
        cell.push_back({he_unit<Scalar>(rng, rank, channels, channels, 3),
                        he_unit<Scalar>(rng, rank, channels, channels, 5)});
      }
    }
  } else {
    for (int s = 0; s < ResNetBlock{}.conv_stages; ++s) {
      m.resnet.push_back(he_unit<Scalar>(rng, rank, channels, channels, ResNetBlock{}.kernel_size));
    }
  }
  return m;
}

template <typename Scalar>
void push_conv(std::vector<NamedTensor<Scalar>>& out, const std::string& prefix, const ConvParams<Scalar>& p) {
  out.push_back({prefix + ".kernel", p.kernel});
  out.push_back({prefix + ".bias", p.bias});
}

template <typename Scalar>
void push_unit(std::vector<NamedTensor<Scalar>>& out, const std::string& prefix, const ConvUnit<Scalar>& u) {
  push_conv(out, prefix + ".conv", u.conv);
  out.push_back({prefix + ".norm.gamma", u.norm.gamma});
  out.push_back({prefix + ".norm.beta", u.norm.beta});
}

template <typename Fn>
void for_each_module_unit(const std::string& prefix, auto& module, Fn&& fn) {
  for (std::size_t c = 0; c < module.candidates.size(); ++c) {
    for (std::size_t s = 0; s < module.candidates[c].size(); ++s) {
      const std::string base = prefix + ".cell" + std::to_string(c + 1) + ".sub" + std::to_string(s + 1);
      fn(base + ".conv3", module.candidates[c][s][0]);
      fn(base + ".conv5", module.candidates[c][s][1]);
    }
  }
  for (std::size_t s = 0; s < module.resnet.size(); ++s) {
    fn(prefix + ".res" + std::to_string(s + 1), module.resnet[s]);
  }
}

template <typename Weights, typename Fn>
void for_each_unit(Weights& w, Fn&& fn) {
  fn(std::string("stem"), w.stem);
  for (std::size_t s = 0; s < w.encoder.size(); ++s) {
    for_each_module_unit("enc" + std::to_string(s), w.encoder[s], fn);
    fn("down" + std::to_string(s), w.down[s]);
  }
  for_each_module_unit("bottleneck", w.bottleneck, fn);
  for (std::size_t s = w.decoder.size(); s-- > 0;) {
    for_each_module_unit("dec" + std::to_string(s), w.decoder[s], fn);
  }
}

template <typename Scalar>
Tensor<Scalar> unit_forward(ConvUnit<Scalar>& unit, const Tensor<Scalar>& x, bool training) {
  return relu(batch_norm(conv(x, unit.conv), unit.norm, training));
}

template <typename Scalar>
Tensor<Scalar> subcell_forward(std::array<ConvUnit<Scalar>, 2>& candidates, OpKind op, const Tensor<Scalar>& x,
                               bool training) {
  switch (op) {
    case OpKind::Conv3: return unit_forward(candidates[0], x, training);
    case OpKind::Conv5: return unit_forward(candidates[1], x, training);
    case OpKind::AvgPool3: return pool(x, PoolKind::Avg, 3);
    case OpKind::MaxPool3: return pool(x, PoolKind::Max, 3);
    case OpKind::Identity: return x;
  }
  throw std::logic_error("unreachable op kind");
}

template <typename Scalar>
Tensor<Scalar> module_forward(ModuleWeights<Scalar>& m, const Genome& genome, const Tensor<Scalar>& x,
                              bool training) {
  const auto live = live_cells(genome);
  std::vector<Tensor<Scalar>> outputs{x};
  for (std::size_t c = 0; c < genome.cells.size(); ++c) {
    if (!live[c]) {
      outputs.emplace_back();
      continue;
    }
    Tensor<Scalar> acc;
    for (std::size_t s = 0; s < genome.cells[c].subcells.size(); ++s) {
      const auto& gene = genome.cells[c].subcells[s];
      auto y = subcell_forward(m.candidates[c][s], gene.op, outputs[static_cast<std::size_t>(gene.input_sel)],
                               training);
      acc = acc.defined() ? add(acc, y) : y;
    }
    outputs.push_back(acc);
  }
  return outputs.back();
}

template <typename Scalar>
Tensor<Scalar> resnet_forward(ModuleWeights<Scalar>& m, const Tensor<Scalar>& x, bool training) {
  Tensor<Scalar> h = x;
  for (auto& unit : m.resnet) h = unit_forward(unit, h, training);
  return add(h, x);
}

template <typename Scalar>
void check_input(const SupernetWeights<Scalar>& w, const Tensor<Scalar>& x) {
  const Shape& s = x.shape();
  if (s.spatial_rank() != w.spec.rank) {
    throw ShapeError("supernet expects rank-" + std::to_string(w.spec.rank) + " input, got " + s.str());
  }
  if (s.channels() != w.spec.in_channels) {
    throw ShapeError("supernet expects " + std::to_string(w.spec.in_channels) + " input channel(s), got " + s.str());
  }
  const Index m = w.spec.size_multiple();
  if (s.width() % m != 0 || s.height() % (w.spec.rank == 2 ? m : 1) != 0) {
    throw ShapeError("spatial size " + s.str() + " is not divisible by 2^" + std::to_string(w.spec.n_stages));
  }
}

template <typename Scalar, typename Block>
Tensor<Scalar> unet_forward(SupernetWeights<Scalar>& w, const Tensor<Scalar>& x, bool training, Block&& encoder_block,
                            Block&& decoder_block) {
  check_input(w, x);
  Tensor<Scalar> h = unit_forward(w.stem, x, training);
  std::vector<Tensor<Scalar>> skips;
  for (std::size_t s = 0; s < w.encoder.size(); ++s) {
    h = encoder_block(w.encoder[s], h);
    skips.push_back(h);
    h = relu(batch_norm(downsample(h, w.down[s].conv), w.down[s].norm, training));
  }
  h = encoder_block(w.bottleneck, h);
  for (std::size_t s = w.decoder.size(); s-- > 0;) {
    h = add(conv(upsample(h), w.up[s]), skips[s]);
    h = decoder_block(w.decoder[s], h);
  }
  return conv(h, w.head);
}

}  // namespace

template <typename Scalar>
SupernetWeights<Scalar> SupernetWeights<Scalar>::init(const SupernetSpec& spec, BlockKind kind, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SupernetWeights w;
  w.spec = spec;
  w.kind = kind;
  const int r = spec.rank;
  w.stem = he_unit<Scalar>(rng, r, spec.in_channels, spec.channels_at(0), 3);
  for (int s = 0; s < spec.n_stages; ++s) {
    w.encoder.push_back(make_module<Scalar>(rng, r, spec.channels_at(s), kind));
    w.down.push_back(he_unit<Scalar>(rng, r, spec.channels_at(s), spec.channels_at(s + 1), 3, 2));
  }
  w.bottleneck = make_module<Scalar>(rng, r, spec.channels_at(spec.n_stages), kind);
  w.decoder.resize(static_cast<std::size_t>(spec.n_stages));
  w.up.resize(static_cast<std::size_t>(spec.n_stages));
  for (int s = spec.n_stages - 1; s >= 0; --s) {
    w.up[static_cast<std::size_t>(s)] = he_conv<Scalar>(rng, r, spec.channels_at(s + 1), spec.channels_at(s), 1);
    w.decoder[static_cast<std::size_t>(s)] = make_module<Scalar>(rng, r, spec.channels_at(s), kind);
  }
  // A zero head keeps soft dice off its early plateau where a class is never predicted.
  w.head = ConvParams<Scalar>::zeros(r, spec.channels_at(0), spec.n_classes, 1);
  return w;
}

template <typename Scalar>
std::vector<NamedTensor<Scalar>> SupernetWeights<Scalar>::parameters() const {
  std::vector<NamedTensor<Scalar>> out;
  for_each_unit(*this, [&](const std::string& name, const ConvUnit<Scalar>& u) { push_unit(out, name, u); });
  for (std::size_t s = up.size(); s-- > 0;) push_conv(out, "up" + std::to_string(s), up[s]);
  push_conv(out, "head", head);
  return out;
}

template <typename Scalar>
void SupernetWeights<Scalar>::for_each_buffer(const std::function<void(const std::string&, Array&)>& fn) {
  for_each_unit(*this, [&](const std::string& name, ConvUnit<Scalar>& u) {
    fn(name + ".norm.running_mean", u.norm.running_mean);
    fn(name + ".norm.running_var", u.norm.running_var);
  });
}

template <typename Scalar>
void SupernetWeights<Scalar>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename Scalar>
Index param_count(const SupernetWeights<Scalar>& weights) {
  Index total = 0;
  for (const auto& p : weights.parameters()) total += p.tensor.numel();
  return total;
}

template <typename Scalar>
Tensor<Scalar> forward(SupernetWeights<Scalar>& weights, const Genome& encoder, const Genome& decoder,
                       const Tensor<Scalar>& x, bool training) {
  if (weights.kind != BlockKind::Searchable) throw std::invalid_argument("genome forward needs searchable weights");
  for (const Genome* g : {&encoder, &decoder}) {
    const auto violations = validate(*g);
    if (!violations.empty()) throw std::invalid_argument("invalid genome: " + violations.front());
  }
  using Fn = std::function<Tensor<Scalar>(ModuleWeights<Scalar>&, const Tensor<Scalar>&)>;
  Fn enc = [&](ModuleWeights<Scalar>& m, const Tensor<Scalar>& h) { return module_forward(m, encoder, h, training); };
  Fn dec = [&](ModuleWeights<Scalar>& m, const Tensor<Scalar>& h) { return module_forward(m, decoder, h, training); };
  return unet_forward(weights, x, training, std::move(enc), std::move(dec));
}

template <typename Scalar>
Tensor<Scalar> forward(SupernetWeights<Scalar>& weights, const Genome& genome, const Tensor<Scalar>& x,
                       bool training) {
  return forward(weights, genome, genome, x, training);
}

template <typename Scalar>
Tensor<Scalar> forward_baseline(SupernetWeights<Scalar>& weights, const Tensor<Scalar>& x, bool training) {
  if (weights.kind != BlockKind::ResNet) throw std::invalid_argument("baseline forward needs resnet weights");
  using Fn = std::function<Tensor<Scalar>(ModuleWeights<Scalar>&, const Tensor<Scalar>&)>;
  Fn block = [&](ModuleWeights<Scalar>& m, const Tensor<Scalar>& h) { return resnet_forward(m, h, training); };
  Fn same = block;
  return unet_forward(weights, x, training, std::move(block), std::move(same));
}

template <typename Scalar>
Tensor<Scalar> forward_design(SupernetWeights<Scalar>& weights, const BlockDesign& design, const Tensor<Scalar>& x,
                              bool training) {
  if (const auto* genome = std::get_if<Genome>(&design)) return forward(weights, *genome, x, training);
  return forward_baseline(weights, x, training);
}

BlockKind block_kind_for(const BlockDesign& design) {
  return std::holds_alternative<Genome>(design) ? BlockKind::Searchable : BlockKind::ResNet;
}

TransferredDesign extend_to_2d(const Genome& genome, const SupernetSpec& spec) {
  const auto violations = validate(genome);
  if (!violations.empty()) throw std::invalid_argument("invalid genome: " + violations.front());
  SupernetSpec out = spec;
  out.rank = 2;
  return {genome, out};
}

void save_checkpoint(const std::filesystem::path& dir, const SupernetWeights<float>& weights, const json& extra) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json params = json::array();
  for (const auto& p : weights.parameters()) {
    const std::string file = p.name + ".dten";
    save_tensor(dir / file, p.tensor);
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape().dims()}, {"file", file}});
  }
  json buffers = json::array();
  auto copy = weights;
  copy.for_each_buffer([&](const std::string& name, Eigen::ArrayXf& values) {
    const std::string file = name + ".dten";
    const std::vector<std::uint32_t> shape{1, static_cast<std::uint32_t>(values.size()), 1};
    write_dten(dir / file, shape, std::span<const float>(values.data(), static_cast<std::size_t>(values.size())));
    buffers.push_back({{"name", name}, {"file", file}});
  });
  json manifest{{"format", "dimnas-checkpoint"},
                {"version", 1},
                {"spec", weights.spec},
                {"block", std::string(block_kind_name(weights.kind))},
                {"params", std::move(params)},
                {"buffers", std::move(buffers)},
                {"extra", extra}};
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, dir / "manifest.json");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
    if (manifest.at("format") != "dimnas-checkpoint") throw CheckpointError("not a dimnas checkpoint");
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  SupernetSpec spec;
  BlockKind kind;
  try {
    spec = manifest.at("spec").get<SupernetSpec>();
    kind = block_kind_from_name(manifest.at("block").get<std::string>());
  } catch (const std::exception& e) {
    throw CheckpointError("bad checkpoint header: " + std::string(e.what()));
  }
  auto weights = SupernetWeights<float>::init(spec, kind, 0);

  std::map<std::string, std::string> files;
  for (const auto& entry : manifest.at("params")) files[entry.at("name")] = entry.at("file");
  for (auto& p : weights.parameters()) {
    auto it = files.find(p.name);
    if (it == files.end()) throw CheckpointError("checkpoint lacks parameter " + p.name);
    Tensor<float> loaded;
    try {
      loaded = load_tensor(dir / it->second);
    } catch (const std::exception& e) {
      throw CheckpointError(e.what());
    }
    if (loaded.shape() != p.tensor.shape()) {
      throw CheckpointError("parameter " + p.name + " has shape " + loaded.shape().str() + ", spec needs " +
                            p.tensor.shape().str());
    }
    p.tensor.mutable_value() = loaded.value();
  }
  std::map<std::string, std::string> buffer_files;
  for (const auto& entry : manifest.at("buffers")) buffer_files[entry.at("name")] = entry.at("file");
  weights.for_each_buffer([&](const std::string& name, Eigen::ArrayXf& values) {
    auto it = buffer_files.find(name);
    if (it == buffer_files.end()) throw CheckpointError("checkpoint lacks buffer " + name);
    auto array = read_dten(dir / it->second);
    if (static_cast<Index>(array.data.size()) != values.size()) throw CheckpointError("buffer size mismatch: " + name);
    values = Eigen::Map<Eigen::ArrayXf>(array.data.data(), values.size());
  });
  return {std::move(weights), std::move(manifest)};
}

#define DIMNAS_INSTANTIATE_SUPERNET(S)                                                                   \
  template struct SupernetWeights<S>;                                                                    \
  template Index param_count(const SupernetWeights<S>&);                                                 \
  template Tensor<S> forward(SupernetWeights<S>&, const Genome&, const Tensor<S>&, bool);                \
  template Tensor<S> forward(SupernetWeights<S>&, const Genome&, const Genome&, const Tensor<S>&, bool); \
  template Tensor<S> forward_baseline(SupernetWeights<S>&, const Tensor<S>&, bool);                      \
  template Tensor<S> forward_design(SupernetWeights<S>&, const BlockDesign&, const Tensor<S>&, bool);

DIMNAS_INSTANTIATE_SUPERNET(float)
DIMNAS_INSTANTIATE_SUPERNET(double)

}  // namespace dimnas
