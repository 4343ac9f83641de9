#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gal/graph.hpp"
#include "gal/ops.hpp"
#include "gal/random.hpp"
#include "gal/scene.hpp"

namespace gal {

/// Anything that maps a scene to per-target workspace coordinates in cm.
class CoordinatePredictor {
 public:
  virtual ~CoordinatePredictor() = default;
  virtual TaskConfig task() const = 0;
  /// One point per task target, in the task's target order.
  virtual std::vector<Point> predict(const SceneSample& sample) const = 0;
};

enum class ModelKind : std::uint8_t {
  Ours = 0,
  KeyPointMin = 1,
  KeyPoint16 = 2,
  DeepSpatialAE = 3,
  ConvAE = 4,
  PlainFCN = 5,
};
inline constexpr ModelKind kAllModelKinds[] = {ModelKind::Ours,          ModelKind::KeyPointMin,
                                               ModelKind::KeyPoint16,    ModelKind::DeepSpatialAE,
                                               ModelKind::ConvAE,        ModelKind::PlainFCN};

std::string_view model_name(ModelKind kind);
ModelKind parse_model(std::string_view name);

enum class QueryMode : std::uint8_t { Base = 0, Conditioned = 1, Combined = 2 };
std::string_view query_mode_name(QueryMode mode);
QueryMode parse_query_mode(std::string_view name);

/// Architecture hyperparameters shared by all six models. Fields a model does
/// not use are ignored by it (and still serialized).
struct ModelConfig {
  ModelKind kind = ModelKind::Ours;
  Task task = Task::SingleObject;
  Index height = 64;
  Index width = 64;
  Index key_dim = 8;
  Index value_dim = 8;
  double temperature = 0.1;
  /// Attention heads for Ours; spatial-softmax channels for the keypoint models.
  int heads = 1;
  QueryMode query_mode = QueryMode::Base;
  /// Whether the attention readout also sees a_feat (it always sees a_coord).
  bool readout_features = false;
  int targets = 1;
  int condition_dim = 0;
  Index trunk_width = 16;
  Index readout_hidden = 32;
  Index condition_hidden = 16;
  Index latent_dim = 32;
  Index recon_extent = 32;
  Index decoder_hidden = 64;
  std::uint64_t init_seed = 0;

  /// Defaults for `kind` trained on `task` at the given canvas: heads equal to
  /// the target count (16 for KeyPoint16/DSAE), Base queries for unconditioned
  /// tasks and Conditioned queries otherwise.
  static ModelConfig for_task(ModelKind kind, Task task, const Canvas& canvas = {}, std::uint64_t init_seed = 0);

  void validate() const;
  TaskConfig task_config() const { return TaskConfig::of(task); }
  Canvas canvas() const { return {height, width}; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Scalar>
struct ModelOutput {
  Var<Scalar> coords_cm;  // [targets * 2], (x, y) per target
  std::optional<Var<Scalar>> reconstruction_loss;
};

struct ConvLayer {
  std::size_t kernel = 0;
  std::size_t bias = 0;
  Index stride = 1;
  Index padding = 1;
};

struct DenseLayer {
  std::size_t weights = 0;
  std::size_t bias = 0;
};

template <typename Scalar>
class Model : public CoordinatePredictor {
 public:
  using Vector = VectorX<Scalar>;

  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  TaskConfig task() const override { return config_.task_config(); }

  /// Records the forward pass on `g`. On a gradient-recording graph the
  /// parameters enter as leaves and receive gradients on backward.
  virtual ModelOutput<Scalar> forward(Graph<Scalar>& g, const Tensor<Scalar>& image, const Vector& condition) = 0;

  std::vector<Point> predict(const SceneSample& sample) const override;

  std::vector<Tensor<Scalar>>& parameters() { return params_; }
  const std::vector<Tensor<Scalar>>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  Index parameter_count() const;
  void zero_grad();

  /// Converts predictions [targets*2] into points.
  static std::vector<Point> to_points(const Vector& coords);

 protected:
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weight and bias.
  std::size_t add_param(std::string name, Shape shape, Index fan_in, Rng& rng);
  std::size_t add_param(std::string name, Shape shape, double lo, double hi, Rng& rng);
  /// `kernel_gain` scales the kernel bound; kReluGain gives He-uniform, sqrt(6 / fan_in).
  ConvLayer add_conv(const std::string& name, Index in, Index out, Index kernel, Index stride, Index padding, Rng& rng,
                     double kernel_gain = 1.0);
  static constexpr double kReluGain = 2.449489742783178;
  DenseLayer add_dense(const std::string& name, Index in, Index out, Rng& rng);

  Var<Scalar> param(Graph<Scalar>& g, std::size_t index) { return g.leaf(params_[index]); }
  Var<Scalar> apply(Graph<Scalar>& g, const ConvLayer& layer, const Var<Scalar>& x) {
    return conv2d(x, param(g, layer.kernel), param(g, layer.bias), layer.stride, layer.padding);
  }
  Var<Scalar> apply(Graph<Scalar>& g, const DenseLayer& layer, const Var<Scalar>& x) {
    return dense(x, param(g, layer.weights), param(g, layer.bias));
  }
  /// Image tensor validated against the configured extents.
  Var<Scalar> input_image(Graph<Scalar>& g, const Tensor<Scalar>& image) const;
  /// Condition vector validated against the configured width (may be empty).
  Var<Scalar> input_condition(Graph<Scalar>& g, const Vector& condition) const;
  /// Final prediction layer output is in workspace half-extents; scale to cm.
  static Var<Scalar> to_cm(const Var<Scalar>& normalized) { return scale(normalized, Scalar(kHalfExtentCm)); }

  ModelConfig config_;

 private:
  std::vector<Tensor<Scalar>> params_;
  std::vector<std::string> names_;
};

template <typename Scalar>
std::unique_ptr<Model<Scalar>> make_model(const ModelConfig& config);

/// Adam moments and progress, persisted alongside parameters so that a run
/// can resume exactly.
template <typename Scalar>
struct TrainerState {
  std::uint32_t epochs_done = 0;
  std::uint64_t step = 0;
  std::vector<VectorX<Scalar>> first_moment;
  std::vector<VectorX<Scalar>> second_moment;

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

template <typename Scalar>
struct Checkpoint {
  std::unique_ptr<Model<Scalar>> model;
  std::optional<TrainerState<Scalar>> trainer;
};

template <typename Scalar>
std::vector<std::uint8_t> encode_checkpoint(const Model<Scalar>& model, const TrainerState<Scalar>* trainer = nullptr);
template <typename Scalar>
Checkpoint<Scalar> decode_checkpoint(std::span<const std::uint8_t> bytes);
template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path,
                     const TrainerState<Scalar>* trainer = nullptr);
template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Reads only the configuration block of a checkpoint.
ModelConfig peek_checkpoint_config(const std::filesystem::path& path);

}  // namespace gal
