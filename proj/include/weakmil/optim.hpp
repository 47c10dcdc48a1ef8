#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "weakmil/common.hpp"
#include "weakmil/model.hpp"

namespace weakmil {

enum class OptimizerKind : int { Adagrad = 0, Adam = 1 };

OptimizerKind optimizer_from_string(const std::string& name);
const char* to_string(OptimizerKind kind);

// Mutable flat views over all parameter tensors of a model, in checkpoint
// order (per FC layer: weights then bias; then attention V, w).
struct TensorRef {
  double* data = nullptr;
  size_t size = 0;
};
std::vector<TensorRef> parameter_tensors(MilModel& model);
std::vector<TensorRef> gradient_tensors(GradientSet& grads);

struct AdagradState {
  double lr = 0.1;
  double eps = 1e-8;
  std::vector<Vec> accum;  // per tensor, same shapes, init 0

  void init_like(MilModel& model);
};

// G += g^2; theta -= lr * g / (sqrt(G) + eps), elementwise.
void adagrad_step(AdagradState& state, MilModel& model, GradientSet& grads);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long steps = 0;
  std::vector<Vec> m;
  std::vector<Vec> v;

  void init_like(MilModel& model);
};

// Standard bias-corrected update.
void adam_step(AdamState& state, MilModel& model, GradientSet& grads);

// ---- batch sampling ----

struct TrainPools {
  std::vector<const FeatureBag*> corrupted;
  std::vector<const FeatureBag*> normal;
};

// Draws n pairs. Pools at least as large as n are sampled without
// replacement (a partial shuffle), smaller pools with replacement. Pairing
// is by draw order; corrupted draws consume the rng before normal draws.
std::vector<BagPair> sample_batch(const TrainPools& pools, int n_pairs, SplitMix64& rng);

// ---- training loop ----

struct TrainConfig {
  MilModel::Kind model = MilModel::Kind::DeepMil;
  std::vector<int> hidden = {512, 32};
  int attention_dim = 16;  // L

  OptimizerKind optimizer = OptimizerKind::Adagrad;
  double lr = 0.1;       // Adagrad default; use 1e-3 for Adam
  double eps = 1e-8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;

  int batch_corrupted = 30;
  int batch_normal = 30;
  int epochs = 30;
  uint64_t seed = 0;
  double lambda = 1e-3;
  double dropout = 0.6;

  // Metric logged and used for model selection: "val_auc" or "val_recall".
  std::string selection_metric = "val_auc";
  double target_fpr = 0.001;  // for the logged validation recall

  // Fills optimizer-dependent defaults (Adam lr) when the caller left lr
  // untouched.
  static TrainConfig for_model(MilModel::Kind kind);
};

struct EvalBag {
  const FeatureBag* bag = nullptr;
  int label = 0;  // ground truth when available, else the weak label
};

struct TrainLogRow {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_auc = 0.0;
  double val_recall = 0.0;
  double wall_ms = 0.0;
};

// Everything needed to continue a run bit-exactly.
struct TrainState {
  MilModel model;
  OptimizerKind optimizer = OptimizerKind::Adagrad;
  AdagradState adagrad;
  AdamState adam;
  uint64_t rng_state = 0;
  int epochs_done = 0;
  MilModel best_model;
  double best_metric = 0.0;
  int best_epoch = -1;
};

struct TrainResult {
  MilModel best_model;
  int best_epoch = -1;
  double best_metric = 0.0;
  MilModel final_model;
  std::vector<TrainLogRow> log;
};

// Initializes parameters (Glorot-uniform from the config seed) and the
// optimizer state.
TrainState init_train_state(const TrainConfig& config, int in_dim);

// Runs n epochs of sample -> backward -> step, evaluating the selection
// metric on the validation bags after each epoch and keeping the argmax
// checkpoint. An epoch draws ceil(|corrupted|/batch) batches, enough to
// visit each corrupted bag about once in expectation. Throws NumericError
// if the loss become non-finite.
void run_epochs(const TrainConfig& config, const TrainPools& train,
                const std::vector<EvalBag>& validation, TrainState& state, int n_epochs,
                std::vector<TrainLogRow>& log);

// init_train_state + run_epochs(config.epochs). Zero epochs returns the
// initialization checkpoint unchanged.
TrainResult train(const TrainConfig& config, const TrainPools& train,
                  const std::vector<EvalBag>& validation);

// Training-state file ("WMTR"), used to pause/resume runs.
void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path);

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace weakmil
