#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gal/attention.hpp"
#include "gal/model.hpp"
#include "gal/scene.hpp"

namespace gal {

/// Error threshold marking a localization as successful (half the object width).
inline constexpr double kSuccessThresholdCm = 5.0;

struct EvalReport {
  std::string model_id;
  Task task = Task::SingleObject;
  std::size_t dataset_size = 0;
  double mean_error_cm = 0.0;
  /// One entry per (scene, condition) pair; each is the mean distance over that pair's targets.
  std::vector<double> per_sample_errors;
  double success_fraction = 0.0;
};

/// Runs `predictor` on `n_scenes` freshly generated scenes from the evaluation
/// stream. Conditioned tasks are evaluated under every condition of every scene.
EvalReport evaluate(const CoordinatePredictor& predictor, const TaskConfig& task, std::size_t n_scenes,
                    std::uint64_t seed, const Canvas& canvas = {}, std::string model_id = {},
                    std::size_t dataset_size = 0);

/// Same, over an explicit scene list.
EvalReport evaluate_on(const CoordinatePredictor& predictor, const Dataset& scenes, std::string model_id = {},
                       std::size_t dataset_size = 0);

/// Fills mean and success fraction from per-sample errors.
void summarize(EvalReport& report);

/// Dataset sizes that always get a column in the results table.
inline constexpr std::size_t kTableSizes[] = {4, 20, 100};

/// CSV: one row per model id (first-appearance order), one column per
/// (task, dataset size) with the mean error to two decimals, and a final
/// `below_5cm` column listing the row's cells under the threshold.
std::string table_csv(std::span<const EvalReport> reports);
void emit_table(std::span<const EvalReport> reports, const std::filesystem::path& path);

/// Marker palette (RGB bytes) indexed by head.
std::array<std::uint8_t, 3> marker_color(std::size_t head);

struct OverlayOptions {
  bool blend_heatmap = true;
  double heatmap_alpha = 0.6;
  /// Integer upsampling factor of the written image.
  int scale = 1;
};

/// Pixel (column, row) in the written image where a head's marker is centered.
std::pair<Index, Index> marker_pixel(const Point& normalized_coord, const Canvas& canvas, int scale = 1);

/// Binary PPM (P6) of the image with optional heatmap blend and a plus-shaped
/// marker per head at a_coord.
std::vector<std::uint8_t> render_attention_overlay(const Tensor<float>& image, const AttentionState& state,
                                                   const OverlayOptions& options = {});
void render_attention_overlay(const Tensor<float>& image, const AttentionState& state,
                              const std::filesystem::path& out_path, const OverlayOptions& options = {});

struct PpmImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::array<std::uint8_t, 3> pixel(Index u, Index v) const {
    const auto i = static_cast<std::size_t>((v * width + u) * 3);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};
PpmImage decode_ppm(std::span<const std::uint8_t> bytes);

}  // namespace gal
