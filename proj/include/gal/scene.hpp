#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gal/random.hpp"
#include "gal/tensor.hpp"

namespace gal {

/// Tabletop workspace: 60 x 60 cm, origin at the center, x to the right
/// (image columns) and y downward (image rows). Mapped onto the full canvas.
inline constexpr double kWorkspaceCm = 60.0;
inline constexpr double kHalfExtentCm = kWorkspaceCm / 2.0;
inline constexpr double kObjectWidthCm = 10.0;
/// Object centers stay this far from the workspace border.
inline constexpr double kPlacementLimitCm = kHalfExtentCm - kObjectWidthCm / 2.0;
inline constexpr double kMinSeparationCm = 1.2 * kObjectWidthCm;
inline constexpr int kMaxPlacementAttempts = 10000;

using Point = Eigen::Vector2d;

enum class ObjectKind : std::uint8_t { TypeA = 0, TypeB = 1, TypeC = 2 };
inline constexpr int kNumKinds = 3;

enum class Task : std::uint8_t { SingleObject = 0, MultipleObject = 1, SelectedType = 2, SelectedPosition = 3 };
enum class ConditionKind : std::uint8_t { None = 0, ObjectType = 1, LeftRight = 2 };

/// One row of the task table: how many objects are shown, how many are
/// predicted, and what (if anything) selects the target.
struct TaskConfig {
  Task task = Task::SingleObject;
  int presented = 1;
  int targets = 1;
  ConditionKind condition_kind = ConditionKind::None;

  static TaskConfig of(Task task);
  /// One-hot width: 3 for ObjectType, 2 for LeftRight, 0 otherwise.
  int condition_dim() const;
  /// Number of distinct condition values (1 when unconditioned).
  int condition_count() const { return condition_kind == ConditionKind::None ? 1 : condition_dim(); }

  friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

std::string_view task_name(Task task);
/// Accepts the CLI spellings (single, multiple, type, position).
Task parse_task(std::string_view name);

struct ObjectSpec {
  ObjectKind kind = ObjectKind::TypeA;
  Point position = Point::Zero();
  double width_cm = kObjectWidthCm;

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct Canvas {
  Index height = 64;
  Index width = 64;

  friend bool operator==(const Canvas&, const Canvas&) = default;
};

struct SceneSample {
  Tensor<float> image;  // [3,H,W] in [0,1]
  std::vector<ObjectSpec> objects;
  Eigen::VectorXf condition;  // empty when the task has no condition
  std::vector<Point> targets;

  friend bool operator==(const SceneSample& a, const SceneSample& b) {
    return a.image == b.image && a.objects == b.objects && a.condition == b.condition && a.targets == b.targets;
  }
};

struct Dataset {
  TaskConfig task;
  std::uint64_t seed = 0;
  Canvas canvas;
  std::vector<SceneSample> samples;

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Which family of per-sample random streams a dataset draws from. Training
/// and evaluation scenes never share a stream, whatever the numeric seed.
enum class SceneStream : std::uint64_t { Train = 0x5452414953ULL, Eval = 0x4556414CULL };

/// Workspace cm -> continuous pixel coordinates (column, row).
Point project_to_pixels(const Point& cm, const Canvas& canvas);
/// Continuous pixel coordinates -> workspace cm.
Point pixels_to_workspace(const Point& px, const Canvas& canvas);

/// Radius of the disc enclosing an object. Shrinks linearly from 1.1x at
/// the center to 0.9x at the placement corners, standing in for perspective.
double apparent_radius_cm(const ObjectSpec& spec);

/// RGB fill color for each kind.
Eigen::Vector3f kind_color(ObjectKind kind);

/// Rasterizes objects over the checkerboard background. TypeA is a circle,
/// TypeB a square, TypeC a triangle; each fits inside its enclosing disc.
Tensor<float> render_scene(std::span<const ObjectSpec> specs, const Canvas& canvas = {});

/// Pixel mask of one object (pixels whose centers fall inside its shape).
std::vector<std::pair<Index, Index>> object_footprint(const ObjectSpec& spec, const Canvas& canvas);

/// Rejection-samples separated positions for `kinds` over the placement region.
/// Throws GenerationError after kMaxPlacementAttempts draws in total.
std::vector<ObjectSpec> place_objects(std::span<const ObjectKind> kinds, Rng& rng);

Dataset generate_dataset(const TaskConfig& task, std::size_t size, std::uint64_t seed, const Canvas& canvas = {},
                         SceneStream stream = SceneStream::Train);

/// Builds a sample for `objects` with the target selected by `condition_index`
/// (ignored for unconditioned tasks).
SceneSample make_sample(const TaskConfig& task, std::vector<ObjectSpec> objects, int condition_index,
                        const Canvas& canvas);

/// Every condition variant of a scene (a single element for unconditioned tasks).
std::vector<SceneSample> condition_variants(const TaskConfig& task, const SceneSample& sample, const Canvas& canvas);

/// Occupied fraction of a grid x grid partition of the placement region,
/// counting every object center in the dataset.
double coverage_fraction(const Dataset& dataset, int grid = 10);

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace gal
