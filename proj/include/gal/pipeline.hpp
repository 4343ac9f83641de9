#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gal/evaluation.hpp"
#include "gal/training.hpp"

namespace gal {

enum class Precision { F32, F64 };

/// Reads GAL_PRECISION (f32 or f64). Unset selects f64.
Precision precision_from_env();
std::string_view precision_name(Precision p);

/// Evaluation scenes are fixed per task so every model sees the same ones.
std::uint64_t eval_seed(Task task);

/// One (model, task, dataset size) cell of the results table.
struct CellSpec {
  ModelKind model = ModelKind::Ours;
  Task task = Task::SingleObject;
  std::size_t size = 20;
  std::uint64_t seed = 1;

  /// e.g. "ours_single_20_s1"
  std::string id() const;
};

struct CellOptions {
  Canvas canvas;
  std::size_t eval_scenes = 100;
  TrainConfig train;
  /// When non-empty: checkpoint, training log and eval report go here, named by CellSpec::id.
  std::filesystem::path artifact_dir;
};

struct CellResult {
  CellSpec spec;
  EvalReport report;
  TrainLog log;
  double seconds = 0.0;
};

/// Generates the training set, trains from a seeded init and evaluates on the
/// task's fixed evaluation scenes. Data, init and shuffle seeds all derive
/// from spec.seed. The trained model is handed to `keep` when given.
template <typename Scalar>
CellResult run_cell(const CellSpec& spec, const CellOptions& options,
                    const std::function<void(std::unique_ptr<Model<Scalar>>)>& keep = {});

/// Dispatches on precision.
CellResult run_cell(const CellSpec& spec, const CellOptions& options, Precision precision);

/// Every (model, task, size) of the results table, models outermost.
std::vector<CellSpec> table_grid(std::uint64_t seed);

}  // namespace gal
