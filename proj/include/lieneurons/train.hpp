#pragma once

// Losses, Adam/SGD, the training loop and its configuration file.

#include "lieneurons/datasets.hpp"
#include "lieneurons/metrics.hpp"
#include "lieneurons/models.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace lieneurons {

Tensor loss_mse(const Tensor& pred, const Tensor& target);
Tensor loss_cross_entropy(const Tensor& logits, std::span<const int> labels);

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  Task task = Task::Invariant;
  ModelSpec model;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::filesystem::path train_data;
  std::filesystem::path eval_data;    // optional; best checkpoint tracks its loss
  std::filesystem::path checkpoint;   // final checkpoint; "<stem>.best<ext>" holds the best
  std::filesystem::path history;      // per-epoch CSV, optional
  std::size_t eval_every = 1;         // epochs
  std::size_t eval_limit = 0;         // records of the eval set used per evaluation (0 = all)
  std::size_t equivariance_probe = 8; // samples in the per-epoch equivariance spot-check

  /// Throws ConfigError for non-positive sizes or rates.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& config, const std::filesystem::path& path);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  // Relative commutation (or invariance) error of the current weights on a few
  // training samples; unset for the MLP.
  std::optional<double> equivariance_check;
};

std::string history_csv(const std::vector<EpochRecord>& history);

struct TrainResult {
  ModelCheckpoint final_checkpoint;
  ModelCheckpoint best_checkpoint;
  std::vector<EpochRecord> history;
};

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const std::vector<NamedParameter>& params);
  /// Applies one update from the accumulated gradients.
  void step(std::vector<NamedParameter>& params);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in memory. Deterministic in config.seed: weights are drawn from
/// Rng(seed), the shuffle from an independent stream. Throws DivergenceError
/// on a non-finite loss and ConfigError when the data do not fit the model.
TrainResult fit(const TrainConfig& config, const Dataset& train, const Dataset* eval = nullptr,
                const EpochCallback& on_epoch = {});

/// Reads the configured datasets, trains, and writes the checkpoints and
/// history named in the config.
TrainResult train_model(const TrainConfig& config, const EpochCallback& on_epoch = {});

std::filesystem::path best_checkpoint_path(const std::filesystem::path& final_path);

/// Loss of a model on a dataset (MSE or mean cross-entropy), batched.
double dataset_loss(const Model& model, const Dataset& data, std::size_t limit = 0);

}  // namespace lieneurons
