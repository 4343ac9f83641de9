#include "gal/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

#include "gal/binary_io.hpp"

namespace gal {

namespace {
constexpr std::uint64_t kInitStream = 0x494E4954;
constexpr std::uint64_t kShuffleSeedStream = 0x53485546;
constexpr Task kTasks[] = {Task::SingleObject, Task::MultipleObject, Task::SelectedType, Task::SelectedPosition};
}  // namespace

Precision precision_from_env() {
  const char* v = std::getenv("GAL_PRECISION");
  if (v == nullptr || std::string_view(v).empty() || std::string_view(v) == "f64") return Precision::F64;
  if (std::string_view(v) == "f32") return Precision::F32;
  throw ParameterError("GAL_PRECISION must be f32 or f64, got '" + std::string(v) + "'");
}

std::string_view precision_name(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

std::uint64_t eval_seed(Task task) { return 9000 + static_cast<std::uint64_t>(task); }

std::string CellSpec::id() const {
  return std::string(model_name(model)) + "_" + std::string(task_name(task)) + "_" + std::to_string(size) + "_s" +
         std::to_string(seed);
}

template <typename Scalar>
CellResult run_cell(const CellSpec& spec, const CellOptions& options,
                    const std::function<void(std::unique_ptr<Model<Scalar>>)>& keep) {
  const auto start = std::chrono::steady_clock::now();
  const TaskConfig task = TaskConfig::of(spec.task);
  const Dataset data = generate_dataset(task, spec.size, spec.seed, options.canvas);
  const std::uint64_t init_seed = Rng::derive(spec.seed, kInitStream).next();
  auto model = make_model<Scalar>(ModelConfig::for_task(spec.model, spec.task, options.canvas, init_seed));

  TrainConfig cfg = options.train;
  cfg.seed = Rng::derive(spec.seed, kShuffleSeedStream).next();
  const std::string id = spec.id();
  if (!options.artifact_dir.empty()) {
    std::filesystem::create_directories(options.artifact_dir);
    cfg.checkpoint_path = options.artifact_dir / (id + ".gamc");
  }

  CellResult result;
  result.spec = spec;
  result.log = train(*model, data, cfg);
  result.report = evaluate(*model, task, options.eval_scenes, eval_seed(spec.task), options.canvas,
                           std::string(model_name(spec.model)), spec.size);
  if (!options.artifact_dir.empty()) {
    result.log.write_csv(options.artifact_dir / (id + ".log.csv"));
    std::ofstream out(options.artifact_dir / (id + ".errors.csv"));
    out << "sample,error_cm\n";
    for (std::size_t i = 0; i < result.report.per_sample_errors.size(); ++i) {
      out << i << ',' << result.report.per_sample_errors[i] << '\n';
    }
    if (!out) throw IoError("write failed for " + (options.artifact_dir / (id + ".errors.csv")).string());
  }
  if (keep) keep(std::move(model));
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

CellResult run_cell(const CellSpec& spec, const CellOptions& options, Precision precision) {
  return precision == Precision::F32 ? run_cell<float>(spec, options) : run_cell<double>(spec, options);
}

std::vector<CellSpec> table_grid(std::uint64_t seed) {
  std::vector<CellSpec> cells;
  for (ModelKind m : kAllModelKinds) {
    for (Task t : kTasks) {
      for (std::size_t n : kTableSizes) cells.push_back({m, t, n, seed});
    }
  }
  return cells;
}

template CellResult run_cell<float>(const CellSpec&, const CellOptions&,
                                    const std::function<void(std::unique_ptr<Model<float>>)>&);
template CellResult run_cell<double>(const CellSpec&, const CellOptions&,
                                     const std::function<void(std::unique_ptr<Model<double>>)>&);

}  // namespace gal
