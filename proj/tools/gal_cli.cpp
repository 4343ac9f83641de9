// gal: data generation, training, evaluation, visualization and verification
// for the goal-conditioned attention localizer and its baselines.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "gal/attention.hpp"
#include "gal/pipeline.hpp"
#include "gal/verification.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Thrown for bad values that CLI11 itself cannot catch (config file keys, enum names).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gal::IoError("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// Flags and config-file values. Every field is optional so that precedence
// (defaults < config < flags) can be resolved after parsing.
struct Options {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::string> task;
  std::optional<std::string> model;
  std::optional<std::size_t> size;
  std::optional<std::string> data;
  std::optional<std::string> model_ckpt;
  std::optional<std::size_t> n_scenes;
  std::optional<int> canvas;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::string> lr_schedule;
  std::optional<int> checkpoint_every;
  std::optional<std::string> resume;
  std::optional<std::string> stream;
  std::optional<int> scale;
  bool no_heatmap = false;
  bool table2_mini = false;
  std::vector<std::string> models;
  std::vector<std::string> tasks;
  std::vector<std::size_t> sizes;
};

// Resolved values for one run; also the manifest's config snapshot.
class Resolver {
 public:
  explicit Resolver(const Options& o) : flags_(o) {
    if (o.config) {
      std::ifstream in(*o.config);
      if (!in) throw gal::IoError("cannot read config " + *o.config);
      try {
        file_ = json::parse(in);
      } catch (const json::parse_error& e) {
        throw UsageError("config " + *o.config + ": " + e.what());
      }
      if (!file_.is_object()) throw UsageError("config " + *o.config + " must be a JSON object");
    }
  }

  template <typename T>
  T get(const std::string& key, const std::optional<T>& flag, T fallback) {
    T v = fallback;
    if (flag) {
      v = *flag;
    } else if (file_.contains(key)) {
      try {
        v = file_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw UsageError("config key '" + key + "': " + e.what());
      }
    }
    snapshot_[key] = v;
    return v;
  }

  template <typename T>
  std::optional<T> get_optional(const std::string& key, const std::optional<T>& flag) {
    if (flag) {
      snapshot_[key] = *flag;
      return flag;
    }
    if (!file_.contains(key)) return std::nullopt;
    return get<T>(key, flag, T{});
  }

  template <typename T>
  std::vector<T> get_list(const std::string& key, const std::vector<T>& flag, std::vector<T> fallback) {
    std::vector<T> v = flag.empty() ? fallback : flag;
    if (flag.empty() && file_.contains(key)) v = file_.at(key).get<std::vector<T>>();
    snapshot_[key] = v;
    return v;
  }

  /// A config file may be shared between subcommands, so only keys that no
  /// subcommand knows are rejected.
  void reject_unused() const {
    static const std::vector<std::string> known = {
        "seed",   "out",    "jobs",       "task",  "model", "size",       "data",           "model-ckpt",
        "n-scenes", "canvas", "epochs",   "batch-size", "lr", "lr-schedule", "checkpoint-every", "resume", "stream",
        "scale",  "models", "tasks",      "sizes"};
    for (const auto& [k, _] : file_.items()) {
      if (std::find(known.begin(), known.end(), k) == known.end()) throw UsageError("unknown config key '" + k + "'");
    }
  }

  const json& snapshot() const { return snapshot_; }
  const Options& flags() const { return flags_; }

 private:
  const Options& flags_;
  json file_ = json::object();
  json snapshot_ = json::object();
};

gal::Task task_arg(const std::string& s) {
  try {
    return gal::parse_task(s);
  } catch (const gal::ParameterError&) {
    throw UsageError("unknown task '" + s + "' (single|multiple|type|position)");
  }
}

gal::ModelKind model_arg(const std::string& s) {
  try {
    return gal::parse_model(s);
  } catch (const gal::ParameterError&) {
    throw UsageError("unknown model '" + s + "' (ours|keypoint-min|keypoint-16|dsae|convae|fcn)");
  }
}

gal::Canvas canvas_arg(int extent) {
  if (extent < 8) throw UsageError("--canvas must be at least 8");
  return {extent, extent};
}

class Manifest {
 public:
  Manifest(std::string command, std::string argv) {
    doc_["command"] = std::move(command);
    doc_["argv"] = std::move(argv);
    doc_["precision"] = gal::precision_name(gal::precision_from_env());
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }
  void config(const json& snapshot) { doc_["config"] = snapshot; }
  void seed(const std::string& name, std::uint64_t v) { doc_["seeds"][name] = v; }
  void input(const fs::path& p) { doc_["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}}); }
  void output(const fs::path& p) { doc_["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}}); }
  json& extra() { return doc_; }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    out << doc_.dump(2) << '\n';
    if (!out) throw gal::IoError("write failed for " + path.string());
  }

 private:
  json doc_;
};

fs::path manifest_for(const fs::path& artifact) { return fs::path(artifact.string() + ".manifest.json"); }

std::string joined_argv(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(Resolver& r, const std::string& argv) {
  const auto& f = r.flags();
  const gal::Task task = task_arg(r.get<std::string>("task", f.task, "single"));
  const auto size = r.get<std::size_t>("size", f.size, 20);
  const auto seed = r.get<std::uint64_t>("seed", f.seed, 1);
  const auto canvas = canvas_arg(r.get<int>("canvas", f.canvas, 64));
  const auto stream_name = r.get<std::string>("stream", f.stream, "train");
  const fs::path out = r.get<std::string>("out", f.out, "dataset.gald");
  r.reject_unused();
  if (stream_name != "train" && stream_name != "eval") throw UsageError("--stream must be train or eval");
  const auto stream = stream_name == "train" ? gal::SceneStream::Train : gal::SceneStream::Eval;

  const gal::Dataset ds = gal::generate_dataset(gal::TaskConfig::of(task), size, seed, canvas, stream);
  gal::save_dataset(ds, out);
  Manifest m("gen-data", argv);
  m.config(r.snapshot());
  m.seed("data", seed);
  m.output(out);
  m.extra()["coverage"] = gal::coverage_fraction(ds);
  m.write(manifest_for(out));
  std::cout << "wrote " << out.string() << ": " << ds.size() << " " << gal::task_name(task) << " samples, "
            << canvas.width << "x" << canvas.height << "\n";
  return kExitOk;
}

bool cosine_schedule(const std::string& v) {
  if (v != "cosine" && v != "constant") throw UsageError("lr-schedule must be cosine or constant, got '" + v + "'");
  return v == "cosine";
}

template <typename Scalar>
int cmd_train(Resolver& r, const std::string& argv) {
  const auto& f = r.flags();
  const auto kind = model_arg(r.get<std::string>("model", f.model, "ours"));
  const auto seed = r.get<std::uint64_t>("seed", f.seed, 1);
  const auto data_path = r.get_optional<std::string>("data", f.data);
  const auto task_flag = r.get_optional<std::string>("task", f.task);
  const auto size = r.get<std::size_t>("size", f.size, 20);
  const auto canvas_extent = r.get<int>("canvas", f.canvas, 64);
  const fs::path out = r.get<std::string>("out", f.out, "model.gamc");
  const auto resume = r.get_optional<std::string>("resume", f.resume);
  gal::TrainConfig cfg;
  cfg.epochs = r.get_optional<int>("epochs", f.epochs);
  cfg.batch_size = r.get<std::size_t>("batch-size", f.batch_size, cfg.batch_size);
  cfg.learning_rate = r.get<double>("lr", f.lr, cfg.learning_rate);
  cfg.cosine_decay = cosine_schedule(r.get<std::string>("lr-schedule", f.lr_schedule, "cosine"));
  cfg.checkpoint_every = r.get<int>("checkpoint-every", f.checkpoint_every, 0);
  r.reject_unused();
  cfg.seed = seed;
  cfg.checkpoint_path = out;

  Manifest m("train", argv);
  gal::Dataset ds;
  if (data_path) {
    ds = gal::load_dataset(*data_path);
    m.input(*data_path);
    if (task_flag && task_arg(*task_flag) != ds.task.task) {
      throw UsageError("--task " + *task_flag + " does not match the dataset (" +
                       std::string(gal::task_name(ds.task.task)) + ")");
    }
  } else {
    if (!task_flag) throw UsageError("train needs --data or --task");
    ds = gal::generate_dataset(gal::TaskConfig::of(task_arg(*task_flag)), size, seed, canvas_arg(canvas_extent));
    m.seed("data", seed);
  }

  std::unique_ptr<gal::Model<Scalar>> model;
  gal::TrainerState<Scalar> state;
  if (resume) {
    auto ck = gal::load_checkpoint<Scalar>(*resume);
    m.input(*resume);
    if (ck.model->config().kind != kind) throw UsageError("--resume checkpoint holds a different model kind");
    model = std::move(ck.model);
    state = ck.trainer ? std::move(*ck.trainer) : gal::fresh_trainer_state(model->parameters());
  } else {
    model = gal::make_model<Scalar>(gal::ModelConfig::for_task(kind, ds.task.task, ds.canvas, seed));
    state = gal::fresh_trainer_state(model->parameters());
  }
  m.config(r.snapshot());
  m.seed("init", model->config().init_seed);
  m.seed("shuffle", cfg.seed);

  const int epochs = cfg.epochs.value_or(cfg.resolved_epochs(ds.size()));
  const int report_every = std::max(1, epochs / 20);
  const auto log = gal::train(*model, ds, cfg, state, [&](const gal::EpochRecord& e) {
    if ((e.epoch + 1) % report_every == 0 || e.epoch + 1 == epochs) {
      std::cerr << "epoch " << e.epoch + 1 << "/" << epochs << " loss " << e.loss << " train_err_cm " << e.eval_cm << "\n";
    }
  });
  if (cfg.checkpoint_every == 0 && log.epochs.empty()) gal::save_checkpoint(*model, out, &state);
  const fs::path log_path = fs::path(out.string() + ".log.csv");
  log.write_csv(log_path);
  m.output(out);
  m.output(log_path);
  m.write(manifest_for(out));
  std::cout << "wrote " << out.string() << " (" << model->parameter_count() << " parameters, " << state.epochs_done
            << " epochs)\n";
  return kExitOk;
}

json report_json(const gal::EvalReport& rep) {
  return {{"model", rep.model_id},
          {"task", gal::task_name(rep.task)},
          {"dataset_size", rep.dataset_size},
          {"mean_error_cm", rep.mean_error_cm},
          {"success_fraction", rep.success_fraction},
          {"per_sample_errors", rep.per_sample_errors}};
}

template <typename Scalar>
int cmd_eval(Resolver& r, const std::string& argv) {
  const auto& f = r.flags();
  const auto ckpt = r.get_optional<std::string>("model-ckpt", f.model_ckpt);
  if (!ckpt) throw UsageError("eval needs --model-ckpt");
  const auto n = r.get<std::size_t>("n-scenes", f.n_scenes, 100);
  const auto seed_flag = r.get_optional<std::uint64_t>("seed", f.seed);
  const fs::path out = r.get<std::string>("out", f.out, "eval.json");
  r.reject_unused();

  const auto ck = gal::load_checkpoint<Scalar>(*ckpt);
  const auto& mc = ck.model->config();
  const std::uint64_t seed = seed_flag.value_or(gal::eval_seed(mc.task));
  const auto rep = gal::evaluate(*ck.model, mc.task_config(), n, seed, mc.canvas(), std::string(gal::model_name(mc.kind)));
  {
    std::ofstream o(out);
    o << report_json(rep).dump(2) << '\n';
    if (!o) throw gal::IoError("write failed for " + out.string());
  }
  Manifest m("eval", argv);
  m.config(r.snapshot());
  m.seed("eval", seed);
  m.input(*ckpt);
  m.output(out);
  m.write(manifest_for(out));
  std::cout << gal::model_name(mc.kind) << " " << gal::task_name(mc.task) << ": mean error " << std::fixed
            << std::setprecision(2) << rep.mean_error_cm << " cm over " << rep.per_sample_errors.size()
            << " samples, " << std::setprecision(1) << 100.0 * rep.success_fraction << "% below "
            << gal::kSuccessThresholdCm << " cm\n";
  return kExitOk;
}

template <typename Scalar>
int cmd_visualize(Resolver& r, const std::string& argv) {
  const auto& f = r.flags();
  const auto ckpt = r.get_optional<std::string>("model-ckpt", f.model_ckpt);
  if (!ckpt) throw UsageError("visualize needs --model-ckpt");
  const auto n = r.get<std::size_t>("n-scenes", f.n_scenes, 4);
  const auto seed_flag = r.get_optional<std::uint64_t>("seed", f.seed);
  const fs::path out = r.get<std::string>("out", f.out, "overlays");
  gal::OverlayOptions opt;
  opt.scale = r.get<int>("scale", f.scale, 4);
  opt.blend_heatmap = !f.no_heatmap;
  r.reject_unused();

  const auto ck = gal::load_checkpoint<Scalar>(*ckpt);
  const auto* model = dynamic_cast<const gal::AttentionModel<Scalar>*>(ck.model.get());
  if (model == nullptr) {
    throw gal::ContractError("visualize needs an attention model checkpoint, got " +
                             std::string(gal::model_name(ck.model->config().kind)));
  }
  const auto& mc = model->config();
  const std::uint64_t seed = seed_flag.value_or(gal::eval_seed(mc.task));
  const auto scenes = gal::generate_dataset(mc.task_config(), n, seed, mc.canvas(), gal::SceneStream::Eval);
  fs::create_directories(out);
  Manifest m("visualize", argv);
  m.config(r.snapshot());
  m.seed("eval", seed);
  m.input(*ckpt);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto variants = gal::condition_variants(scenes.task, scenes.samples[i], scenes.canvas);
    for (std::size_t c = 0; c < variants.size(); ++c) {
      const fs::path p = out / ("scene" + std::to_string(i) + (variants.size() > 1 ? "_cond" + std::to_string(c) : "") + ".ppm");
      gal::render_attention_overlay(variants[c].image, model->attention_state(variants[c]), p, opt);
      m.output(p);
      std::cout << p.string() << "\n";
    }
  }
  m.write(out / "manifest.json");
  return kExitOk;
}

int cmd_gradcheck(Resolver& r, const std::string& argv) {
  const auto seed = r.get<std::uint64_t>("seed", r.flags().seed, 1);
  const auto out = r.get_optional<std::string>("out", r.flags().out);
  r.reject_unused();
  bool ok = true;
  const auto entries = gal::run_gradcheck_suite(seed, [&](const gal::GradCheckEntry& e) {
    const bool pass = e.max_rel_error <= gal::kGradCheckTolerance;
    ok = ok && pass;
    std::printf("%-30s max_rel %.3e  %6zu elems  %3zu refined  %6.2fs  %s\n", e.name.c_str(), e.max_rel_error,
                e.elements, e.refined, e.seconds, pass ? "ok" : "FAIL");
    std::fflush(stdout);
  });
  if (out) {
    json doc = json::array();
    for (const auto& e : entries) doc.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}, {"elements", e.elements}, {"refined", e.refined}});
    std::ofstream o(*out);
    o << doc.dump(2) << '\n';
    Manifest m("gradcheck", argv);
    m.config(r.snapshot());
    m.seed("inputs", seed);
    m.output(*out);
    m.write(manifest_for(*out));
  }
  std::printf("gradcheck %s (tolerance %.0e)\n", ok ? "passed" : "FAILED", gal::kGradCheckTolerance);
  return ok ? kExitOk : kExitRuntime;
}

int cmd_reproduce(Resolver& r, const std::string& argv) {
  const auto& f = r.flags();
  const auto seed = r.get<std::uint64_t>("seed", f.seed, 1);
  const auto jobs = r.get<int>("jobs", f.jobs, 1);
  const fs::path out = r.get<std::string>("out", f.out, "reproduce");
  const auto n = r.get<std::size_t>("n-scenes", f.n_scenes, 100);
  const auto canvas = canvas_arg(r.get<int>("canvas", f.canvas, 64));
  gal::TrainConfig train;
  train.epochs = r.get_optional<int>("epochs", f.epochs);
  train.batch_size = r.get<std::size_t>("batch-size", f.batch_size, train.batch_size);
  train.learning_rate = r.get<double>("lr", f.lr, train.learning_rate);
  train.cosine_decay = cosine_schedule(r.get<std::string>("lr-schedule", f.lr_schedule, "cosine"));
  std::vector<std::string> all_models, all_tasks;
  for (auto k : gal::kAllModelKinds) all_models.emplace_back(gal::model_name(k));
  for (auto t : {gal::Task::SingleObject, gal::Task::MultipleObject, gal::Task::SelectedType, gal::Task::SelectedPosition}) {
    all_tasks.emplace_back(gal::task_name(t));
  }
  const auto models = r.get_list<std::string>("models", f.models, all_models);
  const auto tasks = r.get_list<std::string>("tasks", f.tasks, all_tasks);
  const auto sizes = r.get_list<std::size_t>("sizes", f.sizes, {std::begin(gal::kTableSizes), std::end(gal::kTableSizes)});
  r.reject_unused();
  if (!f.table2_mini && f.models.empty() && f.tasks.empty() && f.sizes.empty()) {
    throw UsageError("reproduce needs --table2-mini or a cell filter (--models/--tasks/--sizes)");
  }
  if (jobs < 1) throw UsageError("--jobs must be at least 1");

  std::vector<gal::CellSpec> cells;
  for (const auto& c : gal::table_grid(seed)) {
    const auto in = [](const auto& list, const auto& v) { return std::find(list.begin(), list.end(), v) != list.end(); };
    if (in(models, std::string(gal::model_name(c.model))) && in(tasks, std::string(gal::task_name(c.task))) &&
        in(sizes, c.size)) {
      cells.push_back(c);
    }
  }
  for (const auto& m : models) model_arg(m);
  for (const auto& t : tasks) task_arg(t);
  if (cells.empty()) throw UsageError("cell filter selects no cells");

  gal::CellOptions opt;
  opt.canvas = canvas;
  opt.eval_scenes = n;
  opt.train = train;
  opt.artifact_dir = out / "cells";
  const gal::Precision precision = gal::precision_from_env();

  // Workers pull cells in grid order; results land in grid order regardless of finish order.
  std::vector<gal::CellResult> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = gal::run_cell(cells[i], opt, precision);
        std::lock_guard lock(io);
        std::cerr << "[" << i + 1 << "/" << cells.size() << "] " << cells[i].id() << ": " << std::fixed
                  << std::setprecision(2) << results[i].report.mean_error_cm << " cm (" << std::setprecision(0)
                  << results[i].seconds << " s)\n";
      } catch (const std::exception& e) {
        std::lock_guard lock(io);
        errors[i] = e.what();
        std::cerr << "[" << i + 1 << "/" << cells.size() << "] " << cells[i].id() << ": " << e.what() << "\n";
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < std::min<int>(jobs, static_cast<int>(cells.size())); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<gal::EvalReport> reports;
  Manifest m("reproduce", argv);
  m.config(r.snapshot());
  m.seed("cells", seed);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) {
      m.extra()["failed_cells"][cells[i].id()] = errors[i];
      continue;
    }
    reports.push_back(results[i].report);
    const fs::path stem = opt.artifact_dir / cells[i].id();
    m.output(stem.string() + ".gamc");
    m.output(stem.string() + ".log.csv");
    m.output(stem.string() + ".errors.csv");
  }
  const fs::path table = out / "table.csv";
  gal::emit_table(reports, table);
  m.output(table);
  m.write(out / "manifest.json");
  std::cout << gal::table_csv(reports);
  return std::all_of(errors.begin(), errors.end(), [](const auto& e) { return e.empty(); }) ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------

void suggest_flag(const CLI::App& app, const std::vector<std::string>& extras) {
  const CLI::App* scope = &app;
  for (const auto* sub : app.get_subcommands()) scope = sub;
  for (const auto& arg : extras) {
    if (arg.rfind("--", 0) != 0) continue;
    std::string best;
    std::size_t best_d = 4;
    for (const auto* o : scope->get_options()) {
      for (const auto& name : o->get_lnames()) {
        const std::size_t d = edit_distance(arg.substr(2), name);
        if (d < best_d) best_d = d, best = name;
      }
    }
    if (!best.empty()) std::cerr << "did you mean --" << best << " instead of " << arg << "?\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  gal::tune_allocator();
  CLI::App app{"Goal-conditioned attention localizer: data, training, evaluation, visualization, verification."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Options o;

  auto common = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "Random seed (u64)");
    s->add_option("--config", o.config, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
    s->add_option("--out", o.out, "Output path");
    s->add_option("--jobs", o.jobs, "Worker threads");
  };
  auto training_flags = [&](CLI::App* s) {
    s->add_option("--canvas", o.canvas, "Canvas extent in pixels (square), default 64");
    s->add_option("--epochs", o.epochs, "Training epochs; default min(7500, 30000 / dataset size)");
    s->add_option("--batch-size", o.batch_size, "Minibatch size; 0 picks min(4, dataset size)");
    s->add_option("--lr", o.lr, "Adam learning rate, default 3e-3");
    s->add_option("--lr-schedule", o.lr_schedule, "cosine (anneal to zero, default) or constant")
        ->check(CLI::IsMember({"cosine", "constant"}));
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a scene dataset file");
  common(gen);
  gen->add_option("--task", o.task, "single|multiple|type|position");
  gen->add_option("--size", o.size, "Number of scenes, default 20");
  gen->add_option("--canvas", o.canvas, "Canvas extent in pixels (square), default 64");
  gen->add_option("--stream", o.stream, "Scene stream: train (default) or eval");

  auto* tr = app.add_subcommand("train", "Train a model; writes a checkpoint, log and manifest");
  common(tr);
  training_flags(tr);
  tr->add_option("--model", o.model, "ours|keypoint-min|keypoint-16|dsae|convae|fcn");
  tr->add_option("--task", o.task, "single|multiple|type|position (generates data when --data is absent)");
  tr->add_option("--data", o.data, "Dataset file from gen-data")->check(CLI::ExistingFile);
  tr->add_option("--size", o.size, "Scenes to generate without --data, default 20");
  tr->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint cadence in epochs (0: end only)");
  tr->add_option("--resume", o.resume, "Continue from a checkpoint with trainer state")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on fresh scenes");
  common(ev);
  ev->add_option("--model-ckpt", o.model_ckpt, "Checkpoint to evaluate")->check(CLI::ExistingFile);
  ev->add_option("--n-scenes", o.n_scenes, "Evaluation scenes, default 100");

  auto* vis = app.add_subcommand("visualize", "Write attention overlays (PPM) for an attention-model checkpoint");
  common(vis);
  vis->add_option("--model-ckpt", o.model_ckpt, "Checkpoint to visualize")->check(CLI::ExistingFile);
  vis->add_option("--n-scenes", o.n_scenes, "Scenes to render, default 4");
  vis->add_option("--scale", o.scale, "Integer upsampling, default 4");
  vis->add_flag("--no-heatmap", o.no_heatmap, "Draw markers only");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and all six models");
  common(gc);

  auto* rep = app.add_subcommand("reproduce", "Train and evaluate results-table cells; writes table.csv");
  common(rep);
  training_flags(rep);
  rep->add_flag("--table2-mini", o.table2_mini, "Run the full grid: 6 models x 4 tasks x sizes 4, 20, 100");
  rep->add_option("--models", o.models, "Restrict to these models")->delimiter(',');
  rep->add_option("--tasks", o.tasks, "Restrict to these tasks")->delimiter(',');
  rep->add_option("--sizes", o.sizes, "Restrict to these dataset sizes")->delimiter(',');
  rep->add_option("--n-scenes", o.n_scenes, "Evaluation scenes per cell, default 100");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ExtrasError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::vector<std::string> extras = app.remaining();
    for (const auto* sub : app.get_subcommands()) {
      for (const auto& x : sub->remaining()) extras.push_back(x);
    }
    suggest_flag(app, extras);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string cmdline = joined_argv(argc, argv);
  try {
    Resolver r(o);
    const bool f32 = gal::precision_from_env() == gal::Precision::F32;
    if (gen->parsed()) return cmd_gen_data(r, cmdline);
    if (tr->parsed()) return f32 ? cmd_train<float>(r, cmdline) : cmd_train<double>(r, cmdline);
    if (ev->parsed()) return f32 ? cmd_eval<float>(r, cmdline) : cmd_eval<double>(r, cmdline);
    if (vis->parsed()) return f32 ? cmd_visualize<float>(r, cmdline) : cmd_visualize<double>(r, cmdline);
    if (gc->parsed()) return cmd_gradcheck(r, cmdline);
    if (rep->parsed()) return cmd_reproduce(r, cmdline);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
