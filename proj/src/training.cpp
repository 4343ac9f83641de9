#include "gal/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gal {

namespace {
constexpr std::uint64_t kShuffleStream = 0x5348;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

void TrainConfig::validate() const {
  if (epochs && *epochs < 0) throw ParameterError("train config: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ParameterError("train config: learning rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ParameterError("train config: Adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ParameterError("train config: epsilon must be > 0");
  if (reconstruction_weight < 0.0) throw ParameterError("train config: reconstruction weight must be >= 0");
  if (checkpoint_every < 0) throw ParameterError("train config: checkpoint cadence must be >= 0");
}

std::size_t TrainConfig::resolved_batch_size(std::size_t dataset_size) const {
  const std::size_t b = batch_size != 0 ? batch_size : 4;
  return std::max<std::size_t>(1, std::min(b, dataset_size));
}

int TrainConfig::resolved_epochs(std::size_t dataset_size) const {
  if (epochs) return *epochs;
  const std::size_t n = std::max<std::size_t>(1, dataset_size);
  return static_cast<int>(std::min<std::size_t>(kMaxAutoEpochs, (kSamplePassBudget + n - 1) / n));
}

double TrainConfig::learning_rate_at(int epoch, int total_epochs) const {
  if (!cosine_decay || total_epochs <= 0) return learning_rate;
  const double progress = std::clamp(static_cast<double>(epoch) / total_epochs, 0.0, 1.0);
  return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string TrainLog::csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,loss,eval_cm,seconds\n";
  for (const auto& r : epochs) os << r.epoch << ',' << r.loss << ',' << r.eval_cm << ',' << r.seconds << '\n';
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << csv();
}

template <typename Scalar>
Var<Scalar> mse_loss(const Var<Scalar>& predicted_cm, const Var<Scalar>& target_cm) {
  detail::require_same(predicted_cm.shape(), target_cm.shape(), "mse_loss");
  const Var<Scalar> diff = scale(sub(predicted_cm, target_cm), Scalar(1.0 / kHalfExtentCm));
  return mean(mul(diff, diff));
}

double mse_loss(std::span<const Point> predicted_cm, std::span<const Point> target_cm) {
  if (predicted_cm.size() != target_cm.size() || predicted_cm.empty()) {
    throw DimensionError("mse_loss: point lists must be non-empty and of equal length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted_cm.size(); ++i) {
    acc += ((predicted_cm[i] - target_cm[i]) / kHalfExtentCm).squaredNorm();
  }
  return acc / (2.0 * static_cast<double>(predicted_cm.size()));
}

double mean_distance_cm(std::span<const Point> predicted_cm, std::span<const Point> target_cm) {
  if (predicted_cm.size() != target_cm.size() || predicted_cm.empty()) {
    throw DimensionError("prediction count " + std::to_string(predicted_cm.size()) + " does not match " +
                         std::to_string(target_cm.size()) + " targets");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted_cm.size(); ++i) acc += (predicted_cm[i] - target_cm[i]).norm();
  return acc / static_cast<double>(predicted_cm.size());
}

template <typename Scalar>
TrainerState<Scalar> fresh_trainer_state(const std::vector<Tensor<Scalar>>& params) {
  TrainerState<Scalar> s;
  for (const auto& p : params) {
    s.first_moment.push_back(VectorX<Scalar>::Zero(p.size()));
    s.second_moment.push_back(VectorX<Scalar>::Zero(p.size()));
  }
  return s;
}

template <typename Scalar>
void optimizer_step(std::vector<Tensor<Scalar>>& params, TrainerState<Scalar>& state, const TrainConfig& config) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("optimizer_step: state does not match parameter list");
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  const auto t = static_cast<double>(state.step);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(config.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(config.beta2, t));
  const auto lr = static_cast<Scalar>(config.learning_rate);
  const auto eps = static_cast<Scalar>(config.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (p.grad) {
      m = b1 * m + (Scalar(1) - b1) * *p.grad;
      v = b2 * v + (Scalar(1) - b2) * p.grad->cwiseProduct(*p.grad);
    } else {
      m *= b1;
      v *= b2;
    }
    p.data.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

template <typename Scalar>
TrainLog train(Model<Scalar>& model, const Dataset& dataset, const TrainConfig& config, TrainerState<Scalar>& state,
               const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.task != model.task()) {
    throw ContractError("train: dataset task '" + std::string(task_name(dataset.task.task)) +
                        "' does not match model task '" + std::string(task_name(model.task().task)) + "'");
  }
  if (dataset.size() == 0) throw ContractError("train: empty dataset");
  if (dataset.canvas != model.config().canvas()) throw DimensionError("train: dataset canvas does not match model");
  auto& params = model.parameters();
  if (state.first_moment.size() != params.size()) throw ContractError("train: trainer state does not match model");

  struct Prepared {
    Tensor<Scalar> image;
    VectorX<Scalar> condition;
    VectorX<Scalar> target;
    std::vector<Point> targets;
  };
  std::vector<Prepared> samples;
  for (const auto& s : dataset.samples) {
    Prepared p{s.image.template cast<Scalar>(), s.condition.template cast<Scalar>(),
               VectorX<Scalar>(2 * static_cast<Index>(s.targets.size())), s.targets};
    for (std::size_t k = 0; k < s.targets.size(); ++k) {
      p.target[2 * static_cast<Index>(k)] = static_cast<Scalar>(s.targets[k].x());
      p.target[2 * static_cast<Index>(k) + 1] = static_cast<Scalar>(s.targets[k].y());
    }
    samples.push_back(std::move(p));
  }

  const std::size_t n = samples.size();
  const std::size_t batch = config.resolved_batch_size(n);
  const int epochs = config.resolved_epochs(n);
  const auto recon_weight = static_cast<Scalar>(config.reconstruction_weight);
  TrainLog log;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = static_cast<int>(state.epochs_done); epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng::derive(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)).shuffle(order);

    TrainConfig step_config = config;
    step_config.learning_rate = config.learning_rate_at(epoch, epochs);
    double loss_sum = 0.0, error_sum = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t b1 = std::min(n, b0 + batch);
      const Scalar inv = Scalar(1) / static_cast<Scalar>(b1 - b0);
      model.zero_grad();
      for (std::size_t j = b0; j < b1; ++j) {
        const Prepared& s = samples[order[j]];
        Graph<Scalar> g;
        const ModelOutput<Scalar> out = model.forward(g, s.image, s.condition);
        const Var<Scalar> target = g.constant({s.target.size()}, s.target);
        Var<Scalar> loss = mse_loss(out.coords_cm, target);
        if (out.reconstruction_loss) loss = add(loss, scale(*out.reconstruction_loss, recon_weight));
        const double value = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(value)) {
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                    std::to_string(order[j]),
                                epoch);
        }
        loss_sum += value;
        error_sum += mean_distance_cm(Model<Scalar>::to_points(out.coords_cm.value()), s.targets);
        g.backward(scale(loss, inv));
      }
      optimizer_step(params, state, step_config);
    }
    state.epochs_done = static_cast<std::uint32_t>(epoch + 1);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.eval_cm = error_sum / static_cast<double>(n);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool last = epoch + 1 == epochs;
    if (!config.checkpoint_path.empty() &&
        (last || (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0))) {
      save_checkpoint(model, config.checkpoint_path, &state);
    }
  }
  model.zero_grad();
  return log;
}

#define GAL_INSTANTIATE_TRAINING(S)                                                                       \
  template Var<S> mse_loss<S>(const Var<S>&, const Var<S>&);                                              \
  template void optimizer_step<S>(std::vector<Tensor<S>>&, TrainerState<S>&, const TrainConfig&);         \
  template TrainerState<S> fresh_trainer_state<S>(const std::vector<Tensor<S>>&);                         \
  template TrainLog train<S>(Model<S>&, const Dataset&, const TrainConfig&, TrainerState<S>&, const EpochCallback&);

GAL_INSTANTIATE_TRAINING(float)
GAL_INSTANTIATE_TRAINING(double)

}  // namespace gal
