#include "gal/model.hpp"

#include <cmath>

#include "gal/attention.hpp"
#include "gal/baselines.hpp"
#include "gal/binary_io.hpp"

namespace gal {

namespace {

constexpr std::uint8_t kCheckpointVersion = 1;

std::uint16_t narrow16(Index v, const char* what) {
  if (v < 0 || v > 0xFFFF) throw ParameterError(std::string("checkpoint: ") + what + " does not fit in u16");
  return static_cast<std::uint16_t>(v);
}

void write_config(ByteWriter& w, const ModelConfig& c) {
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u8(static_cast<std::uint8_t>(c.task));
  w.u16(narrow16(c.height, "height"));
  w.u16(narrow16(c.width, "width"));
  w.u16(narrow16(c.key_dim, "key_dim"));
  w.u16(narrow16(c.value_dim, "value_dim"));
  w.f64(c.temperature);
  w.u16(narrow16(c.heads, "heads"));
  w.u8(static_cast<std::uint8_t>(c.query_mode));
  w.u8(c.readout_features ? 1 : 0);
  w.u16(narrow16(c.targets, "targets"));
  w.u16(narrow16(c.condition_dim, "condition_dim"));
  w.u16(narrow16(c.trunk_width, "trunk_width"));
  w.u16(narrow16(c.readout_hidden, "readout_hidden"));
  w.u16(narrow16(c.condition_hidden, "condition_hidden"));
  w.u16(narrow16(c.latent_dim, "latent_dim"));
  w.u16(narrow16(c.recon_extent, "recon_extent"));
  w.u16(narrow16(c.decoder_hidden, "decoder_hidden"));
  w.u64(c.init_seed);
}

ModelConfig read_config(ByteReader& r) {
  ModelConfig c;
  const std::size_t kind_at = r.offset();
  const unsigned kind = r.u8();
  if (kind > static_cast<unsigned>(ModelKind::PlainFCN)) r.fail_at("unknown model kind " + std::to_string(kind), kind_at);
  c.kind = static_cast<ModelKind>(kind);
  const std::size_t task_at = r.offset();
  const unsigned task = r.u8();
  if (task > 3) r.fail_at("unknown task id " + std::to_string(task), task_at);
  c.task = static_cast<Task>(task);
  c.height = r.u16();
  c.width = r.u16();
  c.key_dim = r.u16();
  c.value_dim = r.u16();
  c.temperature = r.f64();
  c.heads = r.u16();
  const std::size_t mode_at = r.offset();
  const unsigned mode = r.u8();
  if (mode > 2) r.fail_at("unknown query mode " + std::to_string(mode), mode_at);
  c.query_mode = static_cast<QueryMode>(mode);
  const std::size_t flag_at = r.offset();
  const unsigned features = r.u8();
  if (features > 1) r.fail_at("readout feature flag must be 0 or 1", flag_at);
  c.readout_features = features == 1;
  c.targets = r.u16();
  c.condition_dim = r.u16();
  c.trunk_width = r.u16();
  c.readout_hidden = r.u16();
  c.condition_hidden = r.u16();
  c.latent_dim = r.u16();
  c.recon_extent = r.u16();
  c.decoder_hidden = r.u16();
  c.init_seed = r.u64();
  try {
    c.validate();
  } catch (const std::exception& e) {
    r.fail(std::string("invalid model configuration: ") + e.what());
  }
  return c;
}

template <typename Scalar>
void write_values(ByteWriter& w, const VectorX<Scalar>& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if constexpr (sizeof(Scalar) == 4) {
      w.f32(v[i]);
    } else {
      w.f64(v[i]);
    }
  }
}

template <typename Scalar>
VectorX<Scalar> read_values(ByteReader& r, Index n, unsigned width) {
  VectorX<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v[i] = width == 4 ? static_cast<Scalar>(r.f32()) : static_cast<Scalar>(r.f64());
  return v;
}

}  // namespace

std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Ours:
      return "ours";
    case ModelKind::KeyPointMin:
      return "keypoint-min";
    case ModelKind::KeyPoint16:
      return "keypoint-16";
    case ModelKind::DeepSpatialAE:
      return "dsae";
    case ModelKind::ConvAE:
      return "convae";
    case ModelKind::PlainFCN:
      return "fcn";
  }
  return "?";
}

ModelKind parse_model(std::string_view name) {
  for (ModelKind k : kAllModelKinds) {
    if (model_name(k) == name) return k;
  }
  throw ParameterError("unknown model '" + std::string(name) +
                       "' (expected ours|keypoint-min|keypoint-16|dsae|convae|fcn)");
}

std::string_view query_mode_name(QueryMode mode) {
  switch (mode) {
    case QueryMode::Base:
      return "base";
    case QueryMode::Conditioned:
      return "conditioned";
    case QueryMode::Combined:
      return "combined";
  }
  return "?";
}

QueryMode parse_query_mode(std::string_view name) {
  for (QueryMode m : {QueryMode::Base, QueryMode::Conditioned, QueryMode::Combined}) {
    if (query_mode_name(m) == name) return m;
  }
  throw ParameterError("unknown query mode '" + std::string(name) + "'");
}

ModelConfig ModelConfig::for_task(ModelKind kind, Task task, const Canvas& canvas, std::uint64_t init_seed) {
  const TaskConfig tc = TaskConfig::of(task);
  ModelConfig c;
  c.kind = kind;
  c.task = task;
  c.height = canvas.height;
  c.width = canvas.width;
  c.targets = tc.targets;
  c.condition_dim = tc.condition_dim();
  c.init_seed = init_seed;
  c.recon_extent = std::min<Index>(32, std::min(canvas.height, canvas.width));
  switch (kind) {
    case ModelKind::Ours:
      c.heads = tc.targets;
      c.query_mode = tc.condition_kind == ConditionKind::None ? QueryMode::Base : QueryMode::Conditioned;
      break;
    case ModelKind::KeyPoint16:
    case ModelKind::DeepSpatialAE:
      c.heads = 16;
      break;
    default:
      c.heads = tc.targets;
      break;
  }
  return c;
}

void ModelConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ParameterError("model config: temperature must be > 0");
  if (heads < 1) throw ParameterError("model config: heads must be >= 1");
  if (targets < 1) throw ParameterError("model config: targets must be >= 1");
  if (height < 1 || width < 1) throw ParameterError("model config: image extents must be positive");
  if (key_dim < 1 || value_dim < 1 || trunk_width < 1 || readout_hidden < 1 || condition_hidden < 1 ||
      latent_dim < 1 || recon_extent < 1 || decoder_hidden < 1) {
    throw ParameterError("model config: layer widths must be positive");
  }
  if (recon_extent > std::min(height, width)) throw ParameterError("model config: recon_extent exceeds image extent");
  if (condition_dim < 0) throw ParameterError("model config: condition_dim must be >= 0");
  if (kind == ModelKind::Ours && query_mode != QueryMode::Base && condition_dim == 0) {
    throw ParameterError("model config: conditioned queries need condition_dim > 0");
  }
  if (TaskConfig::of(task).condition_dim() != condition_dim) {
    throw ParameterError("model config: condition_dim does not match task");
  }
  if (TaskConfig::of(task).targets != targets) throw ParameterError("model config: targets does not match task");
  if (kind == ModelKind::Ours && heads != targets) throw ParameterError("model config: attention heads must equal targets");
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Model<Scalar>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
}

template <typename Scalar>
Index Model<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename Scalar>
void Model<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename Scalar>
std::vector<Point> Model<Scalar>::to_points(const Vector& coords) {
  std::vector<Point> out;
  for (Index i = 0; i + 1 < coords.size(); i += 2) {
    out.emplace_back(static_cast<double>(coords[i]), static_cast<double>(coords[i + 1]));
  }
  return out;
}

template <typename Scalar>
std::vector<Point> Model<Scalar>::predict(const SceneSample& sample) const {
  Graph<Scalar> g(false);
  // A forward-only graph copies parameters and never writes to the model.
  auto& self = const_cast<Model&>(*this);
  const Tensor<Scalar> image = sample.image.template cast<Scalar>();
  const Vector condition = sample.condition.template cast<Scalar>();
  return to_points(self.forward(g, image, condition).coords_cm.value());
}

template <typename Scalar>
std::size_t Model<Scalar>::add_param(std::string name, Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, fan_in)));
  return add_param(std::move(name), std::move(shape), -bound, bound, rng);
}

template <typename Scalar>
std::size_t Model<Scalar>::add_param(std::string name, Shape shape, double lo, double hi, Rng& rng) {
  Tensor<Scalar> t = Tensor<Scalar>::parameter(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data[i] = static_cast<Scalar>(rng.uniform(lo, hi));
  params_.push_back(std::move(t));
  names_.push_back(std::move(name));
  return params_.size() - 1;
}

template <typename Scalar>
ConvLayer Model<Scalar>::add_conv(const std::string& name, Index in, Index out, Index kernel, Index stride,
                                  Index padding, Rng& rng, double kernel_gain) {
  const Index fan_in = in * kernel * kernel;
  const double bound = kernel_gain / std::sqrt(static_cast<double>(std::max<Index>(1, fan_in)));
  ConvLayer layer;
  layer.kernel = add_param(name + ".kernel", {out, in, kernel, kernel}, -bound, bound, rng);
  layer.bias = add_param(name + ".bias", {out}, fan_in, rng);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

template <typename Scalar>
DenseLayer Model<Scalar>::add_dense(const std::string& name, Index in, Index out, Rng& rng) {
  DenseLayer layer;
  layer.weights = add_param(name + ".weights", {out, in}, in, rng);
  layer.bias = add_param(name + ".bias", {out}, in, rng);
  return layer;
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::input_image(Graph<Scalar>& g, const Tensor<Scalar>& image) const {
  const Shape expected{3, config_.height, config_.width};
  if (image.shape != expected) {
    throw DimensionError("model input " + to_string(image.shape) + " does not match configured " + to_string(expected));
  }
  return g.constant(image);
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::input_condition(Graph<Scalar>& g, const Vector& condition) const {
  if (config_.condition_dim == 0) {
    if (condition.size() != 0) throw DimensionError("model takes no condition but got one of width " + std::to_string(condition.size()));
    return {};
  }
  if (condition.size() == 0) throw ContractError("model '" + std::string(model_name(config_.kind)) + "' requires a condition");
  if (condition.size() != config_.condition_dim) {
    throw DimensionError("condition width " + std::to_string(condition.size()) + " does not match configured " +
                         std::to_string(config_.condition_dim));
  }
  return g.constant({static_cast<Index>(condition.size())}, condition);
}

template <typename Scalar>
std::unique_ptr<Model<Scalar>> make_model(const ModelConfig& config) {
  switch (config.kind) {
    case ModelKind::Ours:
      return std::make_unique<AttentionModel<Scalar>>(config);
    case ModelKind::KeyPointMin:
    case ModelKind::KeyPoint16:
    case ModelKind::DeepSpatialAE:
      return std::make_unique<KeyPointModel<Scalar>>(config);
    case ModelKind::ConvAE:
      return std::make_unique<ConvAEModel<Scalar>>(config);
    case ModelKind::PlainFCN:
      return std::make_unique<PlainFCNModel<Scalar>>(config);
  }
  throw ContractError("make_model: unknown kind");
}

// ---------------------------------------------------------------------------
// Checkpoint layout: "GAMC", u8 version, u8 scalar width (4 = f32, 8 = f64),
// model config block, u32 tensor count, per tensor (u8 rank, u32 extents, values),
// u8 trainer-state flag, [u32 epochs_done, u64 step, first moments, second moments].

template <typename Scalar>
std::vector<std::uint8_t> encode_checkpoint(const Model<Scalar>& model, const TrainerState<Scalar>* trainer) {
  ByteWriter w;
  w.magic("GAMC");
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(sizeof(Scalar)));
  write_config(w, model.config());
  const auto& params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u8(static_cast<std::uint8_t>(p.rank()));
    for (Index e : p.shape) w.u32(static_cast<std::uint32_t>(e));
    write_values<Scalar>(w, p.data);
  }
  w.u8(trainer != nullptr ? 1 : 0);
  if (trainer != nullptr) {
    if (trainer->first_moment.size() != params.size() || trainer->second_moment.size() != params.size()) {
      throw ContractError("checkpoint: trainer state does not match parameter list");
    }
    w.u32(trainer->epochs_done);
    w.u64(trainer->step);
    for (const auto& m : trainer->first_moment) write_values<Scalar>(w, m);
    for (const auto& v : trainer->second_moment) write_values<Scalar>(w, v);
  }
  return w.take();
}

template <typename Scalar>
Checkpoint<Scalar> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "GAMC");
  r.expect_magic("GAMC");
  const std::size_t version_at = r.offset();
  const unsigned version = r.u8();
  if (version != kCheckpointVersion) throw VersionError("GAMC", version, version_at);
  const std::size_t width_at = r.offset();
  const unsigned width = r.u8();
  if (width != 4 && width != 8) r.fail_at("unsupported scalar width " + std::to_string(width), width_at);
  const ModelConfig config = read_config(r);

  Checkpoint<Scalar> ck;
  ck.model = make_model<Scalar>(config);
  auto& params = ck.model->parameters();
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    r.fail_at("tensor count " + std::to_string(count) + " does not match architecture (" +
                  std::to_string(params.size()) + ")",
              count_at);
  }
  for (auto& p : params) {
    const std::size_t shape_at = r.offset();
    const unsigned rank = r.u8();
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    if (shape != p.shape) {
      r.fail_at("tensor shape " + to_string(shape) + " does not match architecture " + to_string(p.shape), shape_at);
    }
    p.data = read_values<Scalar>(r, p.size(), width);
  }
  const unsigned has_trainer = r.u8();
  if (has_trainer > 1) r.fail("bad trainer-state flag");
  if (has_trainer == 1) {
    TrainerState<Scalar> st;
    st.epochs_done = r.u32();
    st.step = r.u64();
    for (const auto& p : params) st.first_moment.push_back(read_values<Scalar>(r, p.size(), width));
    for (const auto& p : params) st.second_moment.push_back(read_values<Scalar>(r, p.size(), width));
    ck.trainer = std::move(st);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return ck;
}

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path, const TrainerState<Scalar>* trainer) {
  write_file_atomic(path, encode_checkpoint(model, trainer));
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<Scalar>(read_file(path));
}

ModelConfig peek_checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, "GAMC");
  r.expect_magic("GAMC");
  const std::size_t version_at = r.offset();
  const unsigned version = r.u8();
  if (version != kCheckpointVersion) throw VersionError("GAMC", version, version_at);
  r.u8();
  return read_config(r);
}

#define GAL_INSTANTIATE_MODEL(S)                                                                        \
  template class Model<S>;                                                                              \
  template std::unique_ptr<Model<S>> make_model<S>(const ModelConfig&);                                 \
  template std::vector<std::uint8_t> encode_checkpoint<S>(const Model<S>&, const TrainerState<S>*);     \
  template Checkpoint<S> decode_checkpoint<S>(std::span<const std::uint8_t>);                           \
  template void save_checkpoint<S>(const Model<S>&, const std::filesystem::path&, const TrainerState<S>*); \
  template Checkpoint<S> load_checkpoint<S>(const std::filesystem::path&);

GAL_INSTANTIATE_MODEL(float)
GAL_INSTANTIATE_MODEL(double)

}  // namespace gal
