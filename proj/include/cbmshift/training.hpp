#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cbmshift/cbm.hpp"
#include "cbmshift/data_model.hpp"

namespace cbmshift {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

/// First/second moment accumulators shaped like the parameters.
struct AdamWState {
  CbmParameters m;
  CbmParameters v;
  long steps = 0;

  static AdamWState init(const CbmDims& dims);
};

/// One decoupled-weight-decay Adam update, in place:
///   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
///   theta <- theta - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * theta )
void adamw_step(CbmParameters& params, const CbmParameters& grads, AdamWState& state,
                const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  CbmParameters params;
  std::vector<EpochStats> log;
};

/// Uniform [-sqrt(1/fan_in), +sqrt(1/fan_in)] weights, zero biases.
CbmParameters init_params(const CbmDims& dims, std::uint64_t seed);

/// Joint training on the train split per the standard recipe: seeded shuffle
/// each epoch, mean gradient per mini-batch, last partial batch kept.
/// Deterministic given (dataset, dims, configs, seed).
TrainResult train(const SplitDataset& dataset, const CbmDims& dims, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg);

/// Continues training on class labels alone (the concept term is dropped;
/// the target domain has no concept annotations). All parameters update.
CbmParameters fine_tune(const CbmParameters& params, std::span<const Sample> ood_samples,
                        const LossConfig& loss_cfg, const TrainConfig& train_cfg);

double split_accuracy(const CbmParameters& params, std::span<const Sample> samples);

void write_training_log_csv(std::span<const EpochStats> log, const std::filesystem::path& path);

}  // namespace cbmshift
