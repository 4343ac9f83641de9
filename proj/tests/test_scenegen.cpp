#include <gtest/gtest.h>

#include <array>
#include <filesystem>
#include <set>

#include "gal/binary_io.hpp"
#include "gal/errors.hpp"
#include "gal/scene.hpp"
#include "oracles.hpp"

namespace gal {
namespace {

const Task kTasks[] = {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition};

double expected_px(double cm, Index extent) { return (cm / kWorkspaceCm + 0.5) * static_cast<double>(extent - 1); }

TEST(TaskTable, RowsMatchTaskDefinitions) {
  const auto single = TaskConfig::of(Task::SingleObject);
  EXPECT_EQ(single.presented, 1);
  EXPECT_EQ(single.targets, 1);
  EXPECT_EQ(single.condition_kind, ConditionKind::None);
  const auto multiple = TaskConfig::of(Task::MultipleObject);
  EXPECT_EQ(multiple.presented, 3);
  EXPECT_EQ(multiple.targets, 3);
  EXPECT_EQ(multiple.condition_kind, ConditionKind::None);
  const auto type = TaskConfig::of(Task::SelectedType);
  EXPECT_EQ(type.presented, 3);
  EXPECT_EQ(type.targets, 1);
  EXPECT_EQ(type.condition_dim(), 3);
  const auto position = TaskConfig::of(Task::SelectedPosition);
  EXPECT_EQ(position.presented, 2);
  EXPECT_EQ(position.targets, 1);
  EXPECT_EQ(position.condition_dim(), 2);
}

TEST(TaskTable, NamesRoundTrip) {
  for (Task t : kTasks) EXPECT_EQ(parse_task(task_name(t)), t);
  EXPECT_THROW(parse_task("pick"), ParameterError);
}

TEST(Render, EmptySceneIsPureBackground) {
  const Canvas canvas{16, 16};
  const Tensor<float> img = render_scene({}, canvas);
  std::set<float> values(img.data.begin(), img.data.end());
  EXPECT_LE(values.size(), 2u);
  for (float v : values) EXPECT_TRUE(v == 0.92f || v == 0.84f) << v;
  // gray: all channels equal
  for (Index v = 0; v < 16; ++v) {
    for (Index u = 0; u < 16; ++u) {
      EXPECT_EQ(img.at(0, v, u), img.at(1, v, u));
      EXPECT_EQ(img.at(1, v, u), img.at(2, v, u));
    }
  }
}

TEST(Render, CenteredCircleCentroidAtCanvasCenter) {
  const Canvas canvas{64, 64};
  const ObjectSpec spec{ObjectKind::TypeA, Point(0.0, 0.0)};
  const auto [cu, cv] = test::color_centroid(render_scene(std::vector{spec}, canvas), kind_color(ObjectKind::TypeA));
  EXPECT_NEAR(cu, 31.5, 0.5);
  EXPECT_NEAR(cv, 31.5, 0.5);
}

TEST(Render, OffsetObjectsMatchAnalyticProjection) {
  const Canvas canvas{64, 64};
  for (ObjectKind kind : {ObjectKind::TypeA, ObjectKind::TypeB, ObjectKind::TypeC}) {
    for (const Point& p : {Point(25.0, 0.0), Point(-25.0, 10.0), Point(7.5, -18.0)}) {
      const ObjectSpec spec{kind, p};
      const auto [cu, cv] = test::color_centroid(render_scene(std::vector{spec}, canvas), kind_color(kind));
      EXPECT_NEAR(cu, expected_px(p.x(), canvas.width), 1.0) << static_cast<int>(kind);
      EXPECT_NEAR(cv, expected_px(p.y(), canvas.height), 1.0) << static_cast<int>(kind);
    }
  }
}

TEST(Render, KindsHaveDistinctColors) {
  EXPECT_NE(kind_color(ObjectKind::TypeA), kind_color(ObjectKind::TypeB));
  EXPECT_NE(kind_color(ObjectKind::TypeB), kind_color(ObjectKind::TypeC));
  EXPECT_NE(kind_color(ObjectKind::TypeA), kind_color(ObjectKind::TypeC));
}

TEST(Render, ShapesHaveDecreasingFootprint) {
  // Circle > square > triangle for the same enclosing disc.
  const Canvas canvas{64, 64};
  auto area = [&](ObjectKind k) { return object_footprint({k, Point(0, 0)}, canvas).size(); };
  EXPECT_GT(area(ObjectKind::TypeA), area(ObjectKind::TypeB));
  EXPECT_GT(area(ObjectKind::TypeB), area(ObjectKind::TypeC));
}

TEST(Render, ApparentSizeShrinksTowardCorners) {
  EXPECT_NEAR(apparent_radius_cm({ObjectKind::TypeA, Point(0, 0)}), 5.5, 1e-12);
  EXPECT_NEAR(apparent_radius_cm({ObjectKind::TypeA, Point(25, 25)}), 4.5, 1e-12);
}

TEST(Render, OutOfBoundsPositionRejected) {
  const ObjectSpec spec{ObjectKind::TypeA, Point(40.0, 0.0)};
  EXPECT_THROW(render_scene(std::vector{spec}), GenerationError);
}

TEST(Generate, DeterministicForSameSeed) {
  const auto a = generate_dataset(TaskConfig::of(Task::SingleObject), 4, 7);
  const auto b = generate_dataset(TaskConfig::of(Task::SingleObject), 4, 7);
  EXPECT_TRUE(a == b);
  const auto c = generate_dataset(TaskConfig::of(Task::SingleObject), 4, 8);
  EXPECT_FALSE(a == c);
}

TEST(Generate, EvalStreamDiffersFromTrainStream) {
  const auto train = generate_dataset(TaskConfig::of(Task::SingleObject), 4, 7);
  const auto eval = generate_dataset(TaskConfig::of(Task::SingleObject), 4, 7, {}, SceneStream::Eval);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NE(train.samples[i].objects, eval.samples[i].objects);
}

TEST(Generate, PrefixStableAcrossSizes) {
  const auto small = generate_dataset(TaskConfig::of(Task::MultipleObject), 4, 3);
  const auto large = generate_dataset(TaskConfig::of(Task::MultipleObject), 20, 3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(small.samples[i] == large.samples[i]);
}

TEST(Generate, ObjectCountsTargetsAndSeparation) {
  for (Task t : kTasks) {
    const auto task = TaskConfig::of(t);
    const auto ds = generate_dataset(task, 30, 11);
    ASSERT_EQ(ds.size(), 30u);
    for (const auto& s : ds.samples) {
      EXPECT_EQ(static_cast<int>(s.objects.size()), task.presented);
      EXPECT_EQ(static_cast<int>(s.targets.size()), task.targets);
      EXPECT_EQ(s.condition.size(), task.condition_dim());
      EXPECT_EQ(s.image.shape, (Shape{3, 64, 64}));
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        EXPECT_LE(s.objects[i].position.cwiseAbs().maxCoeff(), kPlacementLimitCm);
        for (std::size_t j = i + 1; j < s.objects.size(); ++j) {
          EXPECT_GE((s.objects[i].position - s.objects[j].position).norm(), kMinSeparationCm);
        }
      }
    }
  }
}

TEST(Generate, FootprintsNeverOverlap) {
  const Canvas canvas{64, 64};
  for (Task t : {Task::MultipleObject, Task::SelectedType, Task::SelectedPosition}) {
    const auto ds = generate_dataset(TaskConfig::of(t), 50, 5, canvas);
    for (const auto& s : ds.samples) {
      std::set<std::pair<Index, Index>> seen;
      for (const auto& o : s.objects) {
        for (const auto& px : object_footprint(o, canvas)) EXPECT_TRUE(seen.insert(px).second);
      }
    }
  }
}

// Every target is recoverable from the image alone via its color mask.
TEST(Generate, TargetsRecoverableFromColorCentroid) {
  const Canvas canvas{64, 64};
  for (Task t : kTasks) {
    const auto task = TaskConfig::of(t);
    const auto ds = generate_dataset(task, 25, 21, canvas);
    for (const auto& s : ds.samples) {
      for (const auto& target : s.targets) {
        const ObjectSpec* match = nullptr;
        for (const auto& o : s.objects) {
          if (o.position == target) match = &o;
        }
        ASSERT_NE(match, nullptr);
        // Same-kind pairs are told apart by a window around the expected spot;
        // the other object's pixels lie at least 12 - 5.5 cm away.
        const double eu = expected_px(target.x(), canvas.width), ev = expected_px(target.y(), canvas.height);
        const double window = 6.0 / kWorkspaceCm * static_cast<double>(canvas.width - 1);
        const auto [cu, cv] = t == Task::SelectedPosition
                                  ? test::color_centroid_near(s.image, kind_color(match->kind), eu, ev, window)
                                  : test::color_centroid(s.image, kind_color(match->kind));
        EXPECT_NEAR(cu, expected_px(target.x(), canvas.width), 1.0);
        EXPECT_NEAR(cv, expected_px(target.y(), canvas.height), 1.0);
      }
    }
  }
}

TEST(Generate, PositionTaskHasOppositeSignsAndSameKind) {
  const auto ds = generate_dataset(TaskConfig::of(Task::SelectedPosition), 40, 9);
  for (const auto& s : ds.samples) {
    ASSERT_EQ(s.objects.size(), 2u);
    EXPECT_LT(s.objects[0].position.x() * s.objects[1].position.x(), 0.0);
    EXPECT_EQ(s.objects[0].kind, s.objects[1].kind);
    const bool left = s.condition[0] == 1.0f;
    EXPECT_EQ(s.condition.sum(), 1.0f);
    EXPECT_EQ(left, s.targets[0].x() < 0.0);
  }
}

TEST(Generate, PositionConditionsBalanced) {
  for (std::size_t size : {4u, 20u, 100u}) {
    const auto ds = generate_dataset(TaskConfig::of(Task::SelectedPosition), size, 2);
    std::size_t left = 0;
    for (const auto& s : ds.samples) left += s.condition[0] == 1.0f ? 1 : 0;
    EXPECT_EQ(left * 2, size);
  }
}

TEST(Generate, TypeTaskCyclesTargets) {
  const auto ds = generate_dataset(TaskConfig::of(Task::SelectedType), 100, 4);
  std::array<int, 3> counts{};
  for (const auto& s : ds.samples) {
    Eigen::Index k = 0;
    s.condition.maxCoeff(&k);
    ++counts[static_cast<std::size_t>(k)];
    std::set<ObjectKind> kinds;
    for (const auto& o : s.objects) kinds.insert(o.kind);
    EXPECT_EQ(kinds.size(), 3u);
    for (const auto& o : s.objects) {
      if (static_cast<Eigen::Index>(o.kind) == k) {
        EXPECT_EQ(o.position, s.targets[0]);
      }
    }
  }
  for (int c : counts) {
    EXPECT_GE(c, 30);
    EXPECT_LE(c, 37);
  }
}

TEST(Generate, ConditionVariantsCoverEveryCondition) {
  const Canvas canvas{32, 32};
  const auto task = TaskConfig::of(Task::SelectedType);
  const auto ds = generate_dataset(task, 3, 5, canvas);
  for (const auto& s : ds.samples) {
    const auto variants = condition_variants(task, s, canvas);
    ASSERT_EQ(variants.size(), 3u);
    std::set<std::pair<double, double>> targets;
    for (const auto& v : variants) {
      EXPECT_EQ(v.image, s.image);
      targets.insert({v.targets[0].x(), v.targets[0].y()});
    }
    EXPECT_EQ(targets.size(), 3u);
  }
  const auto single = generate_dataset(TaskConfig::of(Task::SingleObject), 1, 5, canvas);
  EXPECT_EQ(condition_variants(single.task, single.samples[0], canvas).size(), 1u);
}

TEST(Generate, CoverageGrowsWithDatasetSize) {
  const auto single = TaskConfig::of(Task::SingleObject);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_GE(coverage_fraction(generate_dataset(single, 100, seed)), 0.55) << seed;
    EXPECT_LE(coverage_fraction(generate_dataset(single, 4, seed)), 0.08) << seed;
  }
}

TEST(Generate, ZeroSizeRejected) {
  EXPECT_THROW(generate_dataset(TaskConfig::of(Task::SingleObject), 0, 1), ParameterError);
}

TEST(Generate, ImpossiblePlacementReportsGenerationError) {
  // At 12 cm separation at most 25 centers fit in the 50 cm placement square.
  const std::vector<ObjectKind> crowd(40, ObjectKind::TypeA);
  Rng rng(1);
  EXPECT_THROW(place_objects(crowd, rng), GenerationError);
  Rng ok(1);
  EXPECT_EQ(place_objects(std::vector<ObjectKind>(3, ObjectKind::TypeB), ok).size(), 3u);
}

TEST(Generate, TaskConfigMustMatchItsRow) {
  TaskConfig odd = TaskConfig::of(Task::MultipleObject);
  odd.presented = 5;
  EXPECT_THROW(generate_dataset(odd, 1, 1), ParameterError);
}

// ---------------------------------------------------------------------------

class DatasetFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("gal_scenegen_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(DatasetFile, SaveLoadIsLossless) {
  for (Task t : kTasks) {
    const auto ds = generate_dataset(TaskConfig::of(t), 5, 17, Canvas{24, 20});
    const auto path = dir_ / "ds.gald";
    save_dataset(ds, path);
    const auto back = load_dataset(path);
    EXPECT_TRUE(back == ds);
    EXPECT_EQ(encode_dataset(back), encode_dataset(ds));
  }
}

TEST_F(DatasetFile, HeaderLayout) {
  const auto ds = generate_dataset(TaskConfig::of(Task::SelectedPosition), 2, 0x0102030405060708ULL, Canvas{8, 9});
  const auto bytes = encode_dataset(ds);
  ASSERT_GE(bytes.size(), 22u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GALD");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 3);                       // task enum
  EXPECT_EQ(bytes[6], 2);                       // size u32 LE
  EXPECT_EQ(bytes[10], 0x08);                   // seed u64 LE, low byte first
  EXPECT_EQ(bytes[17], 0x01);
  EXPECT_EQ(bytes[18] | (bytes[19] << 8), 8);   // H
  EXPECT_EQ(bytes[20] | (bytes[21] << 8), 9);   // W
  // per sample: 8*9*3 floats + 1 + 2*9 + 1 + 2*4 + 1 + 8
  EXPECT_EQ(bytes.size(), 22u + 2u * (8u * 9u * 3u * 4u + 1u + 18u + 1u + 8u + 1u + 8u));
}

TEST_F(DatasetFile, TruncationIsParseErrorWithOffset) {
  const auto bytes = encode_dataset(generate_dataset(TaskConfig::of(Task::SingleObject), 2, 1, Canvas{8, 8}));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    const std::span<const std::uint8_t> prefix(bytes.data(), cut);
    try {
      decode_dataset(prefix);
      FAIL() << "cut at " << cut;
    } catch (const ParseError& e) {
      EXPECT_LE(e.offset(), cut);
    }
  }
}

TEST_F(DatasetFile, UnknownVersionIsVersionError) {
  auto bytes = encode_dataset(generate_dataset(TaskConfig::of(Task::SingleObject), 1, 1, Canvas{8, 8}));
  bytes[4] = 9;
  EXPECT_THROW(decode_dataset(bytes), VersionError);
  const auto path = dir_ / "v9.gald";
  write_file_atomic(path, bytes);
  EXPECT_THROW(load_dataset(path), VersionError);
}

TEST_F(DatasetFile, BadMagicAndTrailingBytes) {
  auto bytes = encode_dataset(generate_dataset(TaskConfig::of(Task::SingleObject), 1, 1, Canvas{8, 8}));
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_dataset(extra), ParseError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_dataset(bytes), ParseError);
}

TEST_F(DatasetFile, MissingFileIsIoError) { EXPECT_THROW(load_dataset(dir_ / "nope.gald"), IoError); }

}  // namespace
}  // namespace gal
