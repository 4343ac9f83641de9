#include "gal/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gal/binary_io.hpp"
#include "gal/training.hpp"

namespace gal {

EvalReport evaluate_on(const CoordinatePredictor& predictor, const Dataset& scenes, std::string model_id,
                       std::size_t dataset_size) {
  if (predictor.task() != scenes.task) {
    throw ContractError("evaluate: model is configured for task '" + std::string(task_name(predictor.task().task)) +
                        "' but scenes are for '" + std::string(task_name(scenes.task.task)) + "'");
  }
  EvalReport report;
  report.model_id = std::move(model_id);
  report.task = scenes.task.task;
  report.dataset_size = dataset_size;
  for (const auto& scene : scenes.samples) {
    for (const auto& variant : condition_variants(scenes.task, scene, scenes.canvas)) {
      const auto predicted = predictor.predict(variant);
      report.per_sample_errors.push_back(mean_distance_cm(predicted, variant.targets));
    }
  }
  summarize(report);
  return report;
}

EvalReport evaluate(const CoordinatePredictor& predictor, const TaskConfig& task, std::size_t n_scenes,
                    std::uint64_t seed, const Canvas& canvas, std::string model_id, std::size_t dataset_size) {
  if (n_scenes < 1) throw ParameterError("evaluate: n_scenes must be at least 1");
  if (predictor.task() != task) {
    throw ContractError("evaluate: model is configured for task '" + std::string(task_name(predictor.task().task)) +
                        "', asked to evaluate '" + std::string(task_name(task.task)) + "'");
  }
  const Dataset scenes = generate_dataset(task, n_scenes, seed, canvas, SceneStream::Eval);
  return evaluate_on(predictor, scenes, std::move(model_id), dataset_size);
}

void summarize(EvalReport& report) {
  const auto& e = report.per_sample_errors;
  if (e.empty()) {
    report.mean_error_cm = 0.0;
    report.success_fraction = 0.0;
    return;
  }
  double sum = 0.0;
  std::size_t hits = 0;
  for (double x : e) {
    sum += x;
    if (x < kSuccessThresholdCm) ++hits;
  }
  report.mean_error_cm = sum / static_cast<double>(e.size());
  report.success_fraction = static_cast<double>(hits) / static_cast<double>(e.size());
}

// ---------------------------------------------------------------------------

namespace {

std::string cell_name(Task task, std::size_t size) {
  return std::string(task_name(task)) + "_" + std::to_string(size);
}

std::string format_cell(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string table_csv(std::span<const EvalReport> reports) {
  std::vector<std::size_t> sizes(std::begin(kTableSizes), std::end(kTableSizes));
  for (const auto& r : reports) {
    if (std::find(sizes.begin(), sizes.end(), r.dataset_size) == sizes.end()) sizes.push_back(r.dataset_size);
  }
  std::sort(sizes.begin(), sizes.end());
  const Task tasks[] = {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition};

  std::vector<std::string> rows;
  std::map<std::string, std::map<std::string, double>> cells;
  for (const auto& r : reports) {
    if (cells.find(r.model_id) == cells.end()) rows.push_back(r.model_id);
    cells[r.model_id][cell_name(r.task, r.dataset_size)] = r.mean_error_cm;
  }

  std::ostringstream os;
  os << "model";
  for (Task t : tasks) {
    for (std::size_t s : sizes) os << ',' << cell_name(t, s);
  }
  os << ",below_5cm\n";
  for (const auto& id : rows) {
    const auto& row = cells[id];
    os << id;
    std::string flags;
    for (Task t : tasks) {
      for (std::size_t s : sizes) {
        os << ',';
        auto it = row.find(cell_name(t, s));
        if (it == row.end()) continue;
        os << format_cell(it->second);
        if (it->second < kSuccessThresholdCm) flags += (flags.empty() ? "" : ";") + it->first;
      }
    }
    os << ',' << flags << '\n';
  }
  return os.str();
}

void emit_table(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write table " + path.string());
  out << table_csv(reports);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

std::array<std::uint8_t, 3> marker_color(std::size_t head) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> palette{{{255, 255, 0},
                                                                       {255, 0, 255},
                                                                       {0, 255, 255},
                                                                       {255, 128, 0},
                                                                       {0, 0, 0},
                                                                       {128, 0, 255},
                                                                       {0, 128, 64},
                                                                       {255, 255, 255}}};
  return palette[head % palette.size()];
}

std::pair<Index, Index> marker_pixel(const Point& normalized_coord, const Canvas& canvas, int scale) {
  auto to_px = [scale](double a, Index extent) {
    const double px = (a + 1.0) / 2.0 * static_cast<double>(extent - 1);
    const Index base = std::clamp<Index>(static_cast<Index>(std::lround(px)), 0, extent - 1);
    return base * scale + scale / 2;
  };
  return {to_px(normalized_coord.x(), canvas.width), to_px(normalized_coord.y(), canvas.height)};
}

std::vector<std::uint8_t> render_attention_overlay(const Tensor<float>& image, const AttentionState& state,
                                                   const OverlayOptions& options) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("overlay: expected [3,H,W] image");
  if (options.scale < 1) throw ParameterError("overlay: scale must be >= 1");
  const Index h = image.dim(1), w = image.dim(2), s = options.scale;
  const Index oh = h * s, ow = w * s;

  Eigen::MatrixXd heat = Eigen::MatrixXd::Zero(h, w);
  if (options.blend_heatmap) {
    for (const auto& m : state.heatmaps) {
      if (m.shape != Shape{h, w}) throw DimensionError("overlay: heatmap shape does not match image");
      for (Index v = 0; v < h; ++v) {
        for (Index u = 0; u < w; ++u) heat(v, u) = std::max(heat(v, u), m.data[v * w + u]);
      }
    }
    const double peak = heat.maxCoeff();
    if (peak > 0.0) heat /= peak;
  }

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(oh * ow * 3));
  auto put = [&](Index x, Index y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= ow || y >= oh) return;
    const auto i = static_cast<std::size_t>((y * ow + x) * 3);
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  };
  for (Index v = 0; v < h; ++v) {
    for (Index u = 0; u < w; ++u) {
      const double a = options.heatmap_alpha * heat(v, u);
      std::array<std::uint8_t, 3> c{};
      for (Index ch = 0; ch < 3; ++ch) {
        const double base = std::clamp(static_cast<double>(image.at(ch, v, u)), 0.0, 1.0);
        const double tint = ch == 0 ? 1.0 : 0.0;
        c[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(std::lround(255.0 * ((1.0 - a) * base + a * tint)));
      }
      for (Index dy = 0; dy < s; ++dy) {
        for (Index dx = 0; dx < s; ++dx) put(u * s + dx, v * s + dy, c);
      }
    }
  }
  const Canvas canvas{h, w};
  const Index arm = std::max<Index>(1, s);
  for (std::size_t head = 0; head < state.coords.size(); ++head) {
    const auto [x, y] = marker_pixel(state.coords[head], canvas, static_cast<int>(s));
    const auto color = marker_color(head);
    for (Index d = -arm; d <= arm; ++d) {
      put(x + d, y, color);
      put(x, y + d, color);
    }
  }

  std::ostringstream header;
  header << "P6\n" << ow << ' ' << oh << "\n255\n";
  const std::string hs = header.str();
  std::vector<std::uint8_t> out(hs.begin(), hs.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

void render_attention_overlay(const Tensor<float>& image, const AttentionState& state,
                              const std::filesystem::path& out_path, const OverlayOptions& options) {
  const auto bytes = render_attention_overlay(image, state, options);
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write overlay " + out_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + out_path.string());
}

PpmImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw ParseError("PPM: truncated header", pos);
    return t;
  };
  if (token() != "P6") throw ParseError("PPM: expected P6 magic", 0);
  PpmImage img;
  try {
    img.width = std::stol(token());
    img.height = std::stol(token());
    if (token() != "255") throw ParseError("PPM: only maxval 255 is supported", pos);
  } catch (const std::invalid_argument&) {
    throw ParseError("PPM: malformed header", pos);
  }
  ++pos;  // single whitespace before raster
  const auto n = static_cast<std::size_t>(img.width * img.height * 3);
  if (bytes.size() < pos + n) throw ParseError("PPM: truncated raster", bytes.size());
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

}  // namespace gal
