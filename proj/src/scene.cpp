#include "gal/scene.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gal/binary_io.hpp"
#include "gal/random.hpp"

namespace gal {

namespace {

constexpr std::uint8_t kDatasetVersion = 1;

// Farthest a center can sit from the workspace origin.
const double kMaxCenterDistance = kPlacementLimitCm * std::sqrt(2.0);

double round_to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

bool inside_shape(const ObjectSpec& spec, const Point& p) {
  const double r = apparent_radius_cm(spec);
  const Point d = p - spec.position;
  switch (spec.kind) {
    case ObjectKind::TypeA:
      return d.squaredNorm() <= r * r;
    case ObjectKind::TypeB: {
      const double half = r / std::sqrt(2.0);
      return std::abs(d.x()) <= half && std::abs(d.y()) <= half;
    }
    case ObjectKind::TypeC: {
      // Equilateral triangle inscribed in the disc, apex toward -y, centroid at the center.
      // Each edge lies at distance r/2 from the centroid along its outward normal.
      static const Point normals[3] = {{0.0, 1.0},
                                       {std::cos(-M_PI / 6.0), std::sin(-M_PI / 6.0)},
                                       {-std::cos(-M_PI / 6.0), std::sin(-M_PI / 6.0)}};
      for (const auto& n : normals) {
        if (n.dot(d) > r / 2.0) return false;
      }
      return true;
    }
  }
  return false;
}

void check_in_bounds(const ObjectSpec& spec) {
  const double limit = kHalfExtentCm - spec.width_cm / 2.0;
  if (!(std::abs(spec.position.x()) <= limit && std::abs(spec.position.y()) <= limit)) {
    throw GenerationError("object at (" + std::to_string(spec.position.x()) + ", " +
                          std::to_string(spec.position.y()) + ") cm lies outside the placement region");
  }
}

const ObjectSpec& find_kind(const std::vector<ObjectSpec>& objects, ObjectKind kind) {
  auto it = std::find_if(objects.begin(), objects.end(), [kind](const ObjectSpec& o) { return o.kind == kind; });
  if (it == objects.end()) throw ContractError("scene lacks an object of the requested kind");
  return *it;
}

bool separated(const std::vector<ObjectSpec>& placed, const Point& p) {
  return std::all_of(placed.begin(), placed.end(), [&](const ObjectSpec& o) {
    return (o.position - p).norm() >= kMinSeparationCm;
  });
}

class Placer {
 public:
  explicit Placer(Rng& rng) : rng_(rng) {}

  Point draw(const std::vector<ObjectSpec>& placed, double xlo, double xhi) {
    while (true) {
      if (++attempts_ > kMaxPlacementAttempts) {
        throw GenerationError("cannot place objects: exceeded " + std::to_string(kMaxPlacementAttempts) +
                              " rejection-sampling attempts");
      }
      const Point p(round_to_f32(rng_.uniform(xlo, xhi)),
                    round_to_f32(rng_.uniform(-kPlacementLimitCm, kPlacementLimitCm)));
      if (separated(placed, p)) return p;
    }
  }

 private:
  Rng& rng_;
  int attempts_ = 0;
};

}  // namespace

TaskConfig TaskConfig::of(Task task) {
  switch (task) {
    case Task::SingleObject:
      return {Task::SingleObject, 1, 1, ConditionKind::None};
    case Task::MultipleObject:
      return {Task::MultipleObject, 3, 3, ConditionKind::None};
    case Task::SelectedType:
      return {Task::SelectedType, 3, 1, ConditionKind::ObjectType};
    case Task::SelectedPosition:
      return {Task::SelectedPosition, 2, 1, ConditionKind::LeftRight};
  }
  throw ContractError("unknown task");
}

int TaskConfig::condition_dim() const {
  switch (condition_kind) {
    case ConditionKind::None:
      return 0;
    case ConditionKind::ObjectType:
      return kNumKinds;
    case ConditionKind::LeftRight:
      return 2;
  }
  return 0;
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::SingleObject:
      return "single";
    case Task::MultipleObject:
      return "multiple";
    case Task::SelectedType:
      return "type";
    case Task::SelectedPosition:
      return "position";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  for (Task t : {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition}) {
    if (task_name(t) == name) return t;
  }
  throw ParameterError("unknown task '" + std::string(name) + "' (expected single|multiple|type|position)");
}

Point project_to_pixels(const Point& cm, const Canvas& canvas) {
  return {(cm.x() / kWorkspaceCm + 0.5) * static_cast<double>(canvas.width - 1),
          (cm.y() / kWorkspaceCm + 0.5) * static_cast<double>(canvas.height - 1)};
}

Point pixels_to_workspace(const Point& px, const Canvas& canvas) {
  const double w = canvas.width > 1 ? static_cast<double>(canvas.width - 1) : 1.0;
  const double h = canvas.height > 1 ? static_cast<double>(canvas.height - 1) : 1.0;
  return {(px.x() / w - 0.5) * kWorkspaceCm, (px.y() / h - 0.5) * kWorkspaceCm};
}

double apparent_radius_cm(const ObjectSpec& spec) {
  const double d = std::min(1.0, spec.position.norm() / kMaxCenterDistance);
  return spec.width_cm / 2.0 * (1.1 - 0.2 * d);
}

Eigen::Vector3f kind_color(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::TypeA:
      return {0.85f, 0.15f, 0.15f};
    case ObjectKind::TypeB:
      return {0.15f, 0.65f, 0.20f};
    case ObjectKind::TypeC:
      return {0.15f, 0.30f, 0.85f};
  }
  return {0.f, 0.f, 0.f};
}

std::vector<std::pair<Index, Index>> object_footprint(const ObjectSpec& spec, const Canvas& canvas) {
  std::vector<std::pair<Index, Index>> pixels;
  const Point c = project_to_pixels(spec.position, canvas);
  const double scale = static_cast<double>(std::max(canvas.width, canvas.height) - 1) / kWorkspaceCm;
  const double reach = apparent_radius_cm(spec) * scale + 1.0;
  const Index v0 = std::max<Index>(0, static_cast<Index>(std::floor(c.y() - reach)));
  const Index v1 = std::min<Index>(canvas.height - 1, static_cast<Index>(std::ceil(c.y() + reach)));
  const Index u0 = std::max<Index>(0, static_cast<Index>(std::floor(c.x() - reach)));
  const Index u1 = std::min<Index>(canvas.width - 1, static_cast<Index>(std::ceil(c.x() + reach)));
  for (Index v = v0; v <= v1; ++v) {
    for (Index u = u0; u <= u1; ++u) {
      const Point cm = pixels_to_workspace(Point(static_cast<double>(u), static_cast<double>(v)), canvas);
      if (inside_shape(spec, cm)) pixels.emplace_back(v, u);
    }
  }
  return pixels;
}

Tensor<float> render_scene(std::span<const ObjectSpec> specs, const Canvas& canvas) {
  if (canvas.height < 1 || canvas.width < 1) throw DimensionError("render_scene: empty canvas");
  Tensor<float> image({3, canvas.height, canvas.width});
  const Index cell = std::max<Index>(1, std::max(canvas.height, canvas.width) / 8);
  for (Index v = 0; v < canvas.height; ++v) {
    for (Index u = 0; u < canvas.width; ++u) {
      const float shade = ((v / cell + u / cell) % 2 == 0) ? 0.92f : 0.84f;
      for (Index c = 0; c < 3; ++c) image.at(c, v, u) = shade;
    }
  }
  for (const auto& spec : specs) {
    check_in_bounds(spec);
    const Eigen::Vector3f color = kind_color(spec.kind);
    for (auto [v, u] : object_footprint(spec, canvas)) {
      for (Index c = 0; c < 3; ++c) image.at(c, v, u) = color[c];
    }
  }
  return image;
}

SceneSample make_sample(const TaskConfig& task, std::vector<ObjectSpec> objects, int condition_index,
                        const Canvas& canvas) {
  SceneSample s;
  s.image = render_scene(objects, canvas);
  s.objects = std::move(objects);
  auto variants = condition_variants(task, s, canvas);
  const int idx = task.condition_kind == ConditionKind::None ? 0 : condition_index;
  if (idx < 0 || idx >= static_cast<int>(variants.size())) throw ContractError("make_sample: condition index out of range");
  return std::move(variants[static_cast<std::size_t>(idx)]);
}

std::vector<SceneSample> condition_variants(const TaskConfig& task, const SceneSample& sample, const Canvas&) {
  if (static_cast<int>(sample.objects.size()) != task.presented) {
    throw ContractError("scene has " + std::to_string(sample.objects.size()) + " objects, task expects " +
                        std::to_string(task.presented));
  }
  std::vector<SceneSample> out;
  auto base = [&] {
    SceneSample s;
    s.image = sample.image;
    s.objects = sample.objects;
    return s;
  };
  switch (task.condition_kind) {
    case ConditionKind::None: {
      SceneSample s = base();
      if (task.task == Task::MultipleObject) {
        for (int k = 0; k < kNumKinds; ++k) s.targets.push_back(find_kind(s.objects, static_cast<ObjectKind>(k)).position);
      } else {
        s.targets.push_back(s.objects.front().position);
      }
      out.push_back(std::move(s));
      break;
    }
    case ConditionKind::ObjectType:
      for (int k = 0; k < kNumKinds; ++k) {
        SceneSample s = base();
        s.condition = Eigen::VectorXf::Unit(kNumKinds, k);
        s.targets.push_back(find_kind(s.objects, static_cast<ObjectKind>(k)).position);
        out.push_back(std::move(s));
      }
      break;
    case ConditionKind::LeftRight:
      for (int side = 0; side < 2; ++side) {
        SceneSample s = base();
        s.condition = Eigen::VectorXf::Unit(2, side);
        auto it = std::find_if(s.objects.begin(), s.objects.end(), [side](const ObjectSpec& o) {
          return side == 0 ? o.position.x() < 0.0 : o.position.x() > 0.0;
        });
        if (it == s.objects.end()) throw ContractError("scene lacks an object on the requested side");
        s.targets.push_back(it->position);
        out.push_back(std::move(s));
      }
      break;
  }
  return out;
}

std::vector<ObjectSpec> place_objects(std::span<const ObjectKind> kinds, Rng& rng) {
  Placer placer(rng);
  std::vector<ObjectSpec> objects;
  for (ObjectKind kind : kinds) objects.push_back({kind, placer.draw(objects, -kPlacementLimitCm, kPlacementLimitCm)});
  return objects;
}

Dataset generate_dataset(const TaskConfig& task, std::size_t size, std::uint64_t seed, const Canvas& canvas,
                         SceneStream stream) {
  if (size < 1) throw ParameterError("generate_dataset: size must be at least 1");
  if (size > UINT32_MAX) throw ParameterError("generate_dataset: size exceeds u32");
  if (task != TaskConfig::of(task.task)) throw ParameterError("generate_dataset: task config does not match its task row");
  Dataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.canvas = canvas;
  ds.samples.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(stream), i);
    Placer placer(rng);
    std::vector<ObjectSpec> objects;
    int condition_index = 0;
    switch (task.task) {
      case Task::SingleObject: {
        const ObjectKind kind[] = {static_cast<ObjectKind>(rng.below(kNumKinds))};
        objects = place_objects(kind, rng);
        break;
      }
      case Task::MultipleObject:
      case Task::SelectedType: {
        const ObjectKind kinds[] = {ObjectKind::TypeA, ObjectKind::TypeB, ObjectKind::TypeC};
        objects = place_objects(kinds, rng);
        condition_index = static_cast<int>(i % kNumKinds);
        break;
      }
      case Task::SelectedPosition: {
        const auto kind = static_cast<ObjectKind>(rng.below(kNumKinds));
        // Left object strictly x < 0, right object strictly x > 0.
        Point left = placer.draw(objects, -kPlacementLimitCm, 0.0);
        while (left.x() >= 0.0) left = placer.draw(objects, -kPlacementLimitCm, 0.0);
        objects.push_back({kind, left});
        Point right = placer.draw(objects, 0.0, kPlacementLimitCm);
        while (right.x() <= 0.0) right = placer.draw(objects, 0.0, kPlacementLimitCm);
        objects.push_back({kind, right});
        condition_index = static_cast<int>(i % 2);
        break;
      }
    }
    ds.samples.push_back(make_sample(task, std::move(objects), condition_index, canvas));
  }
  return ds;
}

double coverage_fraction(const Dataset& dataset, int grid) {
  if (grid < 1) throw ParameterError("coverage_fraction: grid must be positive");
  std::set<std::pair<int, int>> occupied;
  const double cell = 2.0 * kPlacementLimitCm / grid;
  for (const auto& s : dataset.samples) {
    for (const auto& o : s.objects) {
      const int gx = std::clamp(static_cast<int>((o.position.x() + kPlacementLimitCm) / cell), 0, grid - 1);
      const int gy = std::clamp(static_cast<int>((o.position.y() + kPlacementLimitCm) / cell), 0, grid - 1);
      occupied.emplace(gx, gy);
    }
  }
  return static_cast<double>(occupied.size()) / static_cast<double>(grid * grid);
}

// Layout: "GALD", u8 version, u8 task, u32 size, u64 seed, u16 H, u16 W, then per sample:
// H*W*3 f32 (pixel-interleaved RGB), u8 object count, per object (u8 kind, f32 x, f32 y),
// u8 condition length + f32s, u8 target count + (f32 x, f32 y) pairs.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.magic("GALD");
  w.u8(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(ds.task.task));
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.u64(ds.seed);
  w.u16(static_cast<std::uint16_t>(ds.canvas.height));
  w.u16(static_cast<std::uint16_t>(ds.canvas.width));
  for (const auto& s : ds.samples) {
    for (Index v = 0; v < ds.canvas.height; ++v) {
      for (Index u = 0; u < ds.canvas.width; ++u) {
        for (Index c = 0; c < 3; ++c) w.f32(s.image.at(c, v, u));
      }
    }
    w.u8(static_cast<std::uint8_t>(s.objects.size()));
    for (const auto& o : s.objects) {
      w.u8(static_cast<std::uint8_t>(o.kind));
      w.f32(static_cast<float>(o.position.x()));
      w.f32(static_cast<float>(o.position.y()));
    }
    w.u8(static_cast<std::uint8_t>(s.condition.size()));
    for (Index i = 0; i < s.condition.size(); ++i) w.f32(s.condition[i]);
    w.u8(static_cast<std::uint8_t>(s.targets.size()));
    for (const auto& t : s.targets) {
      w.f32(static_cast<float>(t.x()));
      w.f32(static_cast<float>(t.y()));
    }
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "GALD");
  r.expect_magic("GALD");
  const std::size_t version_at = r.offset();
  const unsigned version = r.u8();
  if (version != kDatasetVersion) throw VersionError("GALD", version, version_at);
  Dataset ds;
  const std::size_t task_at = r.offset();
  const unsigned task = r.u8();
  if (task > 3) r.fail_at("unknown task id " + std::to_string(task), task_at);
  ds.task = TaskConfig::of(static_cast<Task>(task));
  const std::uint32_t size = r.u32();
  ds.seed = r.u64();
  ds.canvas.height = r.u16();
  ds.canvas.width = r.u16();
  if (ds.canvas.height == 0 || ds.canvas.width == 0) r.fail("zero canvas extent");
  const std::size_t image_bytes = static_cast<std::size_t>(ds.canvas.height * ds.canvas.width * 3) * 4;
  // Each sample needs at least its image plus three count bytes.
  if (static_cast<std::uint64_t>(size) * (image_bytes + 3) > r.remaining()) {
    r.fail("truncated: header declares " + std::to_string(size) + " samples");
  }
  ds.samples.reserve(size);
  for (std::uint32_t i = 0; i < size; ++i) {
    SceneSample s;
    s.image = Tensor<float>({3, ds.canvas.height, ds.canvas.width});
    for (Index v = 0; v < ds.canvas.height; ++v) {
      for (Index u = 0; u < ds.canvas.width; ++u) {
        for (Index c = 0; c < 3; ++c) s.image.at(c, v, u) = r.f32();
      }
    }
    const unsigned n_obj = r.u8();
    for (unsigned k = 0; k < n_obj; ++k) {
      const std::size_t kind_at = r.offset();
      const unsigned kind = r.u8();
      if (kind >= kNumKinds) r.fail_at("unknown object kind " + std::to_string(kind), kind_at);
      ObjectSpec o;
      o.kind = static_cast<ObjectKind>(kind);
      const double x = r.f32();
      const double y = r.f32();
      o.position = Point(x, y);
      s.objects.push_back(o);
    }
    const unsigned n_cond = r.u8();
    s.condition.resize(n_cond);
    for (unsigned k = 0; k < n_cond; ++k) s.condition[k] = r.f32();
    const unsigned n_tgt = r.u8();
    for (unsigned k = 0; k < n_tgt; ++k) {
      const double x = r.f32();
      const double y = r.f32();
      s.targets.emplace_back(x, y);
    }
    ds.samples.push_back(std::move(s));
  }
  if (!r.at_end()) r.fail("trailing bytes after last sample");
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(dataset);
  write_file_atomic(path, bytes);
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace gal
