#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gal/evaluation.hpp"

namespace gal {
namespace {

// Returns the true targets shifted by a fixed offset.
class OffsetPredictor : public CoordinatePredictor {
 public:
  OffsetPredictor(Task task, Point offset) : task_(TaskConfig::of(task)), offset_(std::move(offset)) {}
  TaskConfig task() const override { return task_; }
  std::vector<Point> predict(const SceneSample& sample) const override {
    std::vector<Point> out = sample.targets;
    for (auto& p : out) p += offset_;
    return out;
  }

 private:
  TaskConfig task_;
  Point offset_;
};

const Canvas kSmall{16, 16};

TEST(Evaluate, ExactPredictorScoresZero) {
  for (Task t : {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition}) {
    const OffsetPredictor exact(t, Point(0, 0));
    const auto r = evaluate(exact, TaskConfig::of(t), 10, 5, kSmall);
    EXPECT_EQ(r.mean_error_cm, 0.0) << task_name(t);
    EXPECT_EQ(r.success_fraction, 1.0);
  }
}

TEST(Evaluate, ConstantOffsetGivesItsNorm) {
  const OffsetPredictor shifted(Task::MultipleObject, Point(3, 4));
  const auto r = evaluate(shifted, TaskConfig::of(Task::MultipleObject), 12, 2, kSmall);
  EXPECT_NEAR(r.mean_error_cm, 5.0, 1e-12);
  EXPECT_EQ(r.success_fraction, 0.0);  // strict threshold
}

TEST(Evaluate, ConditionedTasksScoreEveryCondition) {
  const OffsetPredictor exact(Task::SelectedType, Point(0, 0));
  EXPECT_EQ(evaluate(exact, TaskConfig::of(Task::SelectedType), 7, 1, kSmall).per_sample_errors.size(), 21u);
  const OffsetPredictor pos(Task::SelectedPosition, Point(0, 0));
  EXPECT_EQ(evaluate(pos, TaskConfig::of(Task::SelectedPosition), 7, 1, kSmall).per_sample_errors.size(), 14u);
}

TEST(Evaluate, DeterministicForSeed) {
  const OffsetPredictor shifted(Task::SingleObject, Point(1, -2));
  const auto task = TaskConfig::of(Task::SingleObject);
  const auto a = evaluate(shifted, task, 20, 9, kSmall);
  const auto b = evaluate(shifted, task, 20, 9, kSmall);
  EXPECT_EQ(a.per_sample_errors, b.per_sample_errors);
  EXPECT_EQ(a.mean_error_cm, b.mean_error_cm);
}

TEST(Evaluate, TaskMismatchIsContractError) {
  const OffsetPredictor p(Task::SingleObject, Point(0, 0));
  EXPECT_THROW(evaluate(p, TaskConfig::of(Task::SelectedType), 3, 1, kSmall), ContractError);
  EXPECT_THROW(evaluate(p, TaskConfig::of(Task::SingleObject), 0, 1, kSmall), ParameterError);
}

TEST(Summarize, SuccessFractionCountsBelowThreshold) {
  EvalReport r;
  r.per_sample_errors = {0.0, 4.99, 5.0, 12.0};
  summarize(r);
  EXPECT_DOUBLE_EQ(r.mean_error_cm, (0.0 + 4.99 + 5.0 + 12.0) / 4.0);
  EXPECT_DOUBLE_EQ(r.success_fraction, 0.5);
  r.per_sample_errors.clear();
  summarize(r);
  EXPECT_EQ(r.mean_error_cm, 0.0);
}

EvalReport report(std::string id, Task t, std::size_t n, double err) {
  EvalReport r;
  r.model_id = std::move(id);
  r.task = t;
  r.dataset_size = n;
  r.mean_error_cm = err;
  return r;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

TEST(Table, EmptyHasHeaderOnly) {
  const std::string csv = table_csv({});
  const auto lines = split(csv, '\n');
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_TRUE(lines[1].empty());
  const auto cols = split(lines[0], ',');
  ASSERT_EQ(cols.size(), 14u);  // model + 4 tasks x 3 sizes + below_5cm
  EXPECT_EQ(cols[0], "model");
  EXPECT_EQ(cols[1], "single_4");
  EXPECT_EQ(cols.back(), "below_5cm");
}

TEST(Table, OneRowTwoDecimalsAndFlags) {
  const std::vector<EvalReport> reports{report("ours", Task::SingleObject, 20, 1.234),
                                        report("ours", Task::SelectedType, 100, 7.0)};
  const auto lines = split(table_csv(reports), '\n');
  ASSERT_EQ(lines.size(), 3u);
  const auto header = split(lines[0], ',');
  const auto row = split(lines[1], ',');
  ASSERT_EQ(row.size(), header.size());
  EXPECT_EQ(row[0], "ours");
  for (std::size_t i = 1; i + 1 < header.size(); ++i) {
    if (header[i] == "single_20") {
      EXPECT_EQ(row[i], "1.23");
    } else if (header[i] == "type_100") {
      EXPECT_EQ(row[i], "7.00");
    } else {
      EXPECT_TRUE(row[i].empty()) << header[i];
    }
  }
  EXPECT_EQ(row.back(), "single_20");
}

TEST(Table, FullGridHasSeventyTwoCells) {
  std::vector<EvalReport> reports;
  for (ModelKind k : kAllModelKinds) {
    for (Task t : {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition}) {
      for (std::size_t n : kTableSizes) reports.push_back(report(std::string(model_name(k)), t, n, 4.5));
    }
  }
  ASSERT_EQ(reports.size(), 72u);
  const auto lines = split(table_csv(reports), '\n');
  ASSERT_EQ(lines.size(), 8u);
  std::size_t filled = 0;
  for (std::size_t l = 1; l < 7; ++l) {
    const auto row = split(lines[l], ',');
    EXPECT_EQ(row[0], model_name(kAllModelKinds[l - 1]));
    for (std::size_t i = 1; i + 1 < row.size(); ++i) filled += row[i] == "4.50";
    EXPECT_EQ(split(row.back(), ';').size(), 12u);
  }
  EXPECT_EQ(filled, 72u);
}

TEST(Table, EmitWritesFile) {
  const auto path = std::filesystem::temp_directory_path() / "gal_table_test.csv";
  const std::vector<EvalReport> reports{report("fcn", Task::SelectedPosition, 4, 11.111)};
  emit_table(reports, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), table_csv(reports));
  std::filesystem::remove(path);
}

AttentionState one_hot_state(Index h, Index w, std::vector<std::pair<Index, Index>> peaks) {
  AttentionState st;
  for (const auto& [u, v] : peaks) {
    Tensor<double> m({h, w}, 0.0);
    m.data[v * w + u] = 1.0;
    st.heatmaps.push_back(m);
    st.coords.emplace_back(2.0 * static_cast<double>(u) / static_cast<double>(w - 1) - 1.0,
                           2.0 * static_cast<double>(v) / static_cast<double>(h - 1) - 1.0);
  }
  return st;
}

TEST(Overlay, MarkersAtAttentionPointsWithHeadColors) {
  const Tensor<float> image({3, 12, 12}, 0.5f);
  const AttentionState st = one_hot_state(12, 12, {{2, 3}, {9, 2}, {6, 10}});
  OverlayOptions opt;
  opt.blend_heatmap = false;
  const PpmImage img = decode_ppm(render_attention_overlay(image, st, opt));
  ASSERT_EQ(img.width, 12);
  ASSERT_EQ(img.height, 12);
  EXPECT_EQ(img.pixel(2, 3), marker_color(0));
  EXPECT_EQ(img.pixel(3, 3), marker_color(0));
  EXPECT_EQ(img.pixel(9, 2), marker_color(1));
  EXPECT_EQ(img.pixel(6, 10), marker_color(2));
  EXPECT_NE(marker_color(0), marker_color(1));
  EXPECT_NE(marker_color(1), marker_color(2));
  const std::array<std::uint8_t, 3> gray{128, 128, 128};
  EXPECT_EQ(img.pixel(0, 11), gray);
}

TEST(Overlay, HeatmapTintsOnlyAttendedPixel) {
  const Tensor<float> image({3, 8, 8}, 0.0f);
  AttentionState st = one_hot_state(8, 8, {{5, 5}});
  st.coords.clear();  // no markers
  const PpmImage img = decode_ppm(render_attention_overlay(image, st));
  const std::array<std::uint8_t, 3> tinted{153, 0, 0};  // 0.6 alpha red over black
  EXPECT_EQ(img.pixel(5, 5), tinted);
  const std::array<std::uint8_t, 3> black{0, 0, 0};
  EXPECT_EQ(img.pixel(4, 5), black);
}

TEST(Overlay, ScaleUpsamplesAndCentersMarker) {
  const Tensor<float> image({3, 6, 6}, 1.0f);
  const AttentionState st = one_hot_state(6, 6, {{5, 0}});
  OverlayOptions opt;
  opt.scale = 4;
  opt.blend_heatmap = false;
  const PpmImage img = decode_ppm(render_attention_overlay(image, st, opt));
  EXPECT_EQ(img.width, 24);
  const auto [x, y] = marker_pixel(st.coords[0], Canvas{6, 6}, 4);
  EXPECT_EQ(x, 22);
  EXPECT_EQ(y, 2);
  EXPECT_EQ(img.pixel(x, y), marker_color(0));
}

TEST(Overlay, BadInputsRejected) {
  const AttentionState st = one_hot_state(4, 4, {{1, 1}});
  EXPECT_THROW(render_attention_overlay(Tensor<float>({1, 4, 4}), st), DimensionError);
  EXPECT_THROW(render_attention_overlay(Tensor<float>({3, 5, 5}), st), DimensionError);
  OverlayOptions opt;
  opt.scale = 0;
  EXPECT_THROW(render_attention_overlay(Tensor<float>({3, 4, 4}), st, opt), ParameterError);
}

TEST(Ppm, DecodeRejectsMalformed) {
  const std::string good = "P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06";
  const std::vector<std::uint8_t> bytes(good.begin(), good.end());
  const PpmImage img = decode_ppm(bytes);
  EXPECT_EQ(img.pixel(1, 0), (std::array<std::uint8_t, 3>{4, 5, 6}));
  EXPECT_THROW(decode_ppm(std::span(bytes).first(bytes.size() - 1)), ParseError);
  const std::string p3 = "P3\n1 1\n255\n";
  EXPECT_THROW(decode_ppm(std::vector<std::uint8_t>(p3.begin(), p3.end())), ParseError);
}

}  // namespace
}  // namespace gal
