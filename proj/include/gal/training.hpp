#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gal/model.hpp"
#include "gal/scene.hpp"

namespace gal {

struct TrainConfig {
  /// Total epochs; a resumed run continues until this count is reached.
  /// Unset: kSamplePassBudget / dataset size, capped at kMaxAutoEpochs.
  std::optional<int> epochs;
  /// 0 selects min(4, dataset size).
  std::size_t batch_size = 0;
  double learning_rate = 3e-3;
  /// Anneal the learning rate to zero over the run with a half cosine.
  bool cosine_decay = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Weight of the autoencoder reconstruction term in the total loss.
  double reconstruction_weight = 0.1;
  /// Write a checkpoint every N epochs (0: only after the last epoch).
  int checkpoint_every = 0;
  /// No checkpoints are written when empty.
  std::filesystem::path checkpoint_path;

  static constexpr std::size_t kSamplePassBudget = 30000;
  static constexpr int kMaxAutoEpochs = 7500;

  void validate() const;
  std::size_t resolved_batch_size(std::size_t dataset_size) const;
  int resolved_epochs(std::size_t dataset_size) const;
  double learning_rate_at(int epoch, int total_epochs) const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  /// Mean per-sample error in cm of the epoch's forward passes over the training set.
  double eval_cm = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  /// CSV with header epoch,loss,eval_cm,seconds.
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Mean squared error over all heads and both axes, on coordinates divided by
/// the workspace half-extent (30 cm). Inputs are flat [2k] (x, y, x, y, ...) in cm.
template <typename Scalar>
Var<Scalar> mse_loss(const Var<Scalar>& predicted_cm, const Var<Scalar>& target_cm);

/// Same quantity for plain point lists.
double mse_loss(std::span<const Point> predicted_cm, std::span<const Point> target_cm);

/// Mean Euclidean distance over matched target pairs.
double mean_distance_cm(std::span<const Point> predicted_cm, std::span<const Point> target_cm);

/// One bias-corrected Adam update from each parameter's accumulated grad.
/// Parameters without a grad are treated as having a zero gradient.
template <typename Scalar>
void optimizer_step(std::vector<Tensor<Scalar>>& params, TrainerState<Scalar>& state, const TrainConfig& config);

template <typename Scalar>
TrainerState<Scalar> fresh_trainer_state(const std::vector<Tensor<Scalar>>& params);

/// Keeps freed tape buffers in the heap instead of returning them to the OS.
/// Every training step allocates and frees the same large blocks; with glibc
/// defaults each one is an mmap/munmap pair. No-op on other allocators.
void tune_allocator();

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains `model` on `dataset`. `state` carries Adam moments and the number of
/// completed epochs; pass a state loaded from a checkpoint to resume. Each
/// epoch's shuffle depends only on (config.seed, epoch), so a resumed run
/// retraces the uninterrupted one exactly.
/// A non-finite loss aborts with DivergenceError before the offending update
/// is applied; previously written checkpoints are left untouched.
template <typename Scalar>
TrainLog train(Model<Scalar>& model, const Dataset& dataset, const TrainConfig& config, TrainerState<Scalar>& state,
               const EpochCallback& on_epoch = {});

template <typename Scalar>
TrainLog train(Model<Scalar>& model, const Dataset& dataset, const TrainConfig& config,
               const EpochCallback& on_epoch = {}) {
  TrainerState<Scalar> state = fresh_trainer_state(model.parameters());
  return train(model, dataset, config, state, on_epoch);
}

}  // namespace gal
