#include "cbmshift/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace cbmshift {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw InputError("learning_rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw InputError("beta1/beta2 must lie in [0, 1)");
  }
  if (batch_size < 1) throw InputError("batch_size must be at least 1");
  if (epochs < 0) throw InputError("epochs must be non-negative");
  if (weight_decay < 0.0) throw InputError("weight_decay must be non-negative");
  if (epsilon <= 0.0) throw InputError("epsilon must be positive");
}

AdamWState AdamWState::init(const CbmDims& dims) {
  return AdamWState{CbmParameters::zeros(dims), CbmParameters::zeros(dims), 0};
}

void adamw_step(CbmParameters& params, const CbmParameters& grads, AdamWState& state,
                const TrainConfig& cfg) {
  auto theta = params.arrays();
  auto g = grads.arrays();
  auto m = state.m.arrays();
  auto v = state.v.arrays();

  for (size_t a = 0; a < theta.size(); ++a) {
    if (g[a]->size() != theta[a]->size()) {
      throw InputError("gradient shape does not match parameter shape");
    }
  }
  state.steps += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));

  for (size_t a = 0; a < theta.size(); ++a) {
    auto& tv = *theta[a];
    const auto& gv = *g[a];
    auto& mv = *m[a];
    auto& vv = *v[a];
    for (size_t i = 0; i < tv.size(); ++i) {
      const double grad = gv[i];
      if (!std::isfinite(grad)) throw std::runtime_error("non-finite gradient in adamw_step");
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * grad;
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * grad * grad;
      const double m_hat = mv[i] / bc1;
      const double v_hat = vv[i] / bc2;
      tv[i] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                                    cfg.weight_decay * tv[i]);
      if (!std::isfinite(tv[i])) {
        throw std::runtime_error("non-finite parameter after adamw_step");
      }
    }
  }
}

CbmParameters init_params(const CbmDims& dims, std::uint64_t seed) {
  CbmParameters p = CbmParameters::zeros(dims);
  Rng rng(seed);
  const auto fill = [&rng](Matrix& w) {
    const double bound = std::sqrt(1.0 / static_cast<double>(w.rows));
    for (double& x : w.data) x = rng.uniform(-bound, bound);
  };
  fill(p.hidden_w);
  fill(p.concept_w);
  fill(p.class_w);
  return p;
}

double split_accuracy(const CbmParameters& params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  long correct = 0;
  for (const auto& sample : samples) {
    const ForwardTrace trace = forward(params, *sample.features);
    if (argmax_lowest(trace.class_probs) == sample.class_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

/// Runs seeded mini-batch AdamW over `samples`. When with_concepts is false
/// the concept loss is dropped (gradients come from the class term only).
void run_epochs(CbmParameters& params, std::span<const Sample> samples, bool with_concepts,
                const LossConfig& loss_cfg, const TrainConfig& cfg, std::uint64_t shuffle_seed,
                const std::vector<Sample>* val_samples, std::vector<EpochStats>* log) {
  const CbmDims dims = params.dims();
  AdamWState state = AdamWState::init(dims);
  Rng shuffle_rng(shuffle_seed);

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      CbmParameters batch_grad = CbmParameters::zeros(dims);
      // Accumulate in sample-index order within the batch.
      for (size_t pos = start; pos < end; ++pos) {
        const Sample& sample = samples[order[pos]];
        double sample_loss = 0.0;
        const CbmParameters grad =
            backward(params, *sample.features,
                     with_concepts ? &*sample.concept_labels : nullptr, sample.class_label,
                     loss_cfg, &sample_loss);
        loss_sum += sample_loss;
        auto acc = batch_grad.arrays();
        auto g = grad.arrays();
        for (size_t a = 0; a < acc.size(); ++a) {
          for (size_t i = 0; i < acc[a]->size(); ++i) (*acc[a])[i] += (*g[a])[i];
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* arr : batch_grad.arrays()) {
        for (double& x : *arr) x *= scale;
      }
      adamw_step(params, batch_grad, state, cfg);
    }

    if (log != nullptr) {
      EpochStats stats;
      stats.epoch = epoch + 1;
      stats.mean_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
      if (!std::isfinite(stats.mean_loss)) {
        throw std::runtime_error("non-finite training loss at epoch " +
                                 std::to_string(stats.epoch));
      }
      stats.val_accuracy =
          (val_samples != nullptr && !val_samples->empty())
              ? split_accuracy(params, *val_samples)
              : 0.0;
      log->push_back(stats);
    }
  }
}

}  // namespace

TrainResult train(const SplitDataset& dataset, const CbmDims& dims, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg) {
  train_cfg.validate();
  if (dataset.train.empty()) throw InputError("train split is empty");
  if (dataset.classes.size() != dims.num_classes ||
      dataset.concepts.size() != dims.num_concepts) {
    throw InputError("dataset vocabularies do not match the configured dimensions");
  }
  for (const auto& sample : dataset.train) {
    if (!sample.features) {
      throw InputError("training sample '" + sample.sample_id + "' has no features");
    }
    if (!sample.concept_labels) {
      throw InputError("training sample '" + sample.sample_id + "' has no concept labels");
    }
    if (static_cast<int>(sample.features->size()) != dims.feature_dim) {
      throw InputError("training sample '" + sample.sample_id + "' feature length mismatch");
    }
  }
  dataset.require_class_coverage();

  TrainResult result;
  result.params = init_params(dims, derive_seed(train_cfg.seed, SeedStream::param_init));
  run_epochs(result.params, dataset.train, /*with_concepts=*/true, loss_cfg, train_cfg,
             derive_seed(train_cfg.seed, SeedStream::train_shuffle), &dataset.val, &result.log);
  return result;
}

CbmParameters fine_tune(const CbmParameters& params, std::span<const Sample> ood_samples,
                        const LossConfig& loss_cfg, const TrainConfig& train_cfg) {
  train_cfg.validate();
  if (ood_samples.empty()) throw InputError("fine-tuning set is empty");
  const CbmDims dims = params.dims();
  for (const auto& sample : ood_samples) {
    if (!sample.features) {
      throw InputError("fine-tuning sample '" + sample.sample_id + "' has no features");
    }
    if (sample.class_label < 0 || sample.class_label >= dims.num_classes) {
      throw InputError("fine-tuning sample '" + sample.sample_id + "' class label out of range");
    }
  }

  LossConfig cfg = loss_cfg;
  cfg.concept_loss_weight = 0.0;  // image-level labels only

  CbmParameters tuned = params;
  run_epochs(tuned, ood_samples, /*with_concepts=*/false, cfg, train_cfg,
             derive_seed(train_cfg.seed, SeedStream::finetune_shuffle), nullptr, nullptr);
  return tuned;
}

void write_training_log_csv(std::span<const EpochStats> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write training log: " + path.string());
  out << "epoch,mean_loss,val_accuracy\n";
  char buffer[64];
  for (const auto& stats : log) {
    std::snprintf(buffer, sizeof(buffer), "%d,%.9f,%.9f", stats.epoch, stats.mean_loss,
                  stats.val_accuracy);
    out << buffer << "\n";
  }
}

}  // namespace cbmshift
