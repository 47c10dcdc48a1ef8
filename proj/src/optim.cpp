#include "weakmil/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "weakmil/eval.hpp"

namespace weakmil {

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adagrad") return OptimizerKind::Adagrad;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("configuration error: unknown optimizer '" + name + "'");
}

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Adagrad ? "adagrad" : "adam";
}

std::vector<TensorRef> parameter_tensors(MilModel& model) {
  std::vector<TensorRef> refs;
  for (size_t l = 0; l < model.fc.weights.size(); ++l) {
    refs.push_back({model.fc.weights[l].a.data(), model.fc.weights[l].a.size()});
    refs.push_back({model.fc.biases[l].data(), model.fc.biases[l].size()});
  }
  if (model.attention) {
    refs.push_back({model.attention->V.a.data(), model.attention->V.a.size()});
    refs.push_back({model.attention->w.data(), model.attention->w.size()});
  }
  return refs;
}

std::vector<TensorRef> gradient_tensors(GradientSet& grads) {
  std::vector<TensorRef> refs;
  for (size_t l = 0; l < grads.w.size(); ++l) {
    refs.push_back({grads.w[l].a.data(), grads.w[l].a.size()});
    refs.push_back({grads.b[l].data(), grads.b[l].size()});
  }
  if (!grads.att_V.a.empty()) {
    refs.push_back({grads.att_V.a.data(), grads.att_V.a.size()});
    refs.push_back({grads.att_w.data(), grads.att_w.size()});
  }
  return refs;
}

static void check_aligned(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
                          const std::vector<Vec>& state) {
  if (params.size() != grads.size() || params.size() != state.size()) {
    throw DataError("shape error: optimizer state does not match the model");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size || params[i].size != state[i].size()) {
      throw DataError("shape error: optimizer tensor " + std::to_string(i) + " mismatch");
    }
  }
}

void AdagradState::init_like(MilModel& model) {
  accum.clear();
  for (const TensorRef& t : parameter_tensors(model)) accum.emplace_back(t.size, 0.0);
}

void adagrad_step(AdagradState& state, MilModel& model, GradientSet& grads) {
  auto params = parameter_tensors(model);
  auto gs = gradient_tensors(grads);
  check_aligned(params, gs, state.accum);
  for (size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i].data;
    const double* g = gs[i].data;
    Vec& acc = state.accum[i];
    for (size_t j = 0; j < params[i].size; ++j) {
      acc[j] += g[j] * g[j];
      theta[j] -= state.lr * g[j] / (std::sqrt(acc[j]) + state.eps);
    }
  }
}

void AdamState::init_like(MilModel& model) {
  m.clear();
  v.clear();
  steps = 0;
  for (const TensorRef& t : parameter_tensors(model)) {
    m.emplace_back(t.size, 0.0);
    v.emplace_back(t.size, 0.0);
  }
}

void adam_step(AdamState& state, MilModel& model, GradientSet& grads) {
  auto params = parameter_tensors(model);
  auto gs = gradient_tensors(grads);
  check_aligned(params, gs, state.m);
  check_aligned(params, gs, state.v);
  state.steps += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.steps));
  for (size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i].data;
    const double* g = gs[i].data;
    Vec& mi = state.m[i];
    Vec& vi = state.v[i];
    for (size_t j = 0; j < params[i].size; ++j) {
      mi[j] = state.beta1 * mi[j] + (1.0 - state.beta1) * g[j];
      vi[j] = state.beta2 * vi[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = mi[j] / c1;
      const double vhat = vi[j] / c2;
      theta[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---- batch sampling ----

namespace {

std::vector<const FeatureBag*> draw(const std::vector<const FeatureBag*>& pool, int n,
                                    SplitMix64& rng) {
  if (pool.empty()) {
    throw ConfigError("configuration error: cannot sample from an empty bag class");
  }
  std::vector<const FeatureBag*> out;
  out.reserve(static_cast<size_t>(n));
  if (pool.size() >= static_cast<size_t>(n)) {
    // Partial Fisher-Yates: uniform without replacement.
    std::vector<size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (int i = 0; i < n; ++i) {
      const size_t j = static_cast<size_t>(i) + rng.next_below(idx.size() - static_cast<size_t>(i));
      std::swap(idx[static_cast<size_t>(i)], idx[j]);
      out.push_back(pool[idx[static_cast<size_t>(i)]]);
    }
  } else {
    for (int i = 0; i < n; ++i) out.push_back(pool[rng.next_below(pool.size())]);
  }
  return out;
}

}  // namespace

std::vector<BagPair> sample_batch(const TrainPools& pools, int n_pairs, SplitMix64& rng) {
  if (n_pairs < 1) throw ConfigError("configuration error: batch size must be >= 1");
  const auto corrupted = draw(pools.corrupted, n_pairs, rng);
  const auto normal = draw(pools.normal, n_pairs, rng);
  std::vector<BagPair> pairs(static_cast<size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    pairs[static_cast<size_t>(i)] = {corrupted[static_cast<size_t>(i)], normal[static_cast<size_t>(i)]};
  }
  return pairs;
}

// ---- training loop ----

TrainConfig TrainConfig::for_model(MilModel::Kind kind) {
  TrainConfig cfg;
  cfg.model = kind;
  if (kind == MilModel::Kind::Attention) {
    cfg.optimizer = OptimizerKind::Adam;
    cfg.lr = 1e-3;
  }
  return cfg;
}

TrainState init_train_state(const TrainConfig& config, int in_dim) {
  if (in_dim < 1) throw ConfigError("configuration error: feature dimension must be >= 1");
  if (config.hidden.size() != 2) {
    throw ConfigError("configuration error: exactly two hidden widths are required");
  }
  if (config.lambda < 0.0) throw ConfigError("configuration error: lambda must be >= 0");
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    throw ConfigError("configuration error: dropout rate must lie in [0, 1)");
  }

  SplitMix64 rng(config.seed);
  TrainState state;
  std::vector<int> dims = {in_dim, config.hidden[0], config.hidden[1], 1};
  state.model.kind = config.model;
  state.model.fc = FcHead::glorot(dims, rng);
  if (config.model == MilModel::Kind::Attention) {
    state.model.attention = AttentionHead::glorot(config.attention_dim, config.hidden[1], rng);
  }
  state.optimizer = config.optimizer;
  if (config.optimizer == OptimizerKind::Adagrad) {
    state.adagrad.lr = config.lr;
    state.adagrad.eps = config.eps;
    state.adagrad.init_like(state.model);
  } else {
    state.adam.lr = config.lr;
    state.adam.eps = config.eps;
    state.adam.beta1 = config.adam_beta1;
    state.adam.beta2 = config.adam_beta2;
    state.adam.init_like(state.model);
  }
  state.rng_state = rng.state();
  state.best_model = state.model;
  state.best_metric = -std::numeric_limits<double>::infinity();
  state.best_epoch = -1;
  return state;
}

namespace {

struct ValMetrics {
  double auc = 0.0;
  double recall = 0.0;
};

ValMetrics validation_metrics(const MilModel& model, const std::vector<EvalBag>& validation,
                              double target_fpr) {
  Vec scores;
  std::vector<int> labels;
  Vec clean_scores;
  scores.reserve(validation.size());
  for (const EvalBag& vb : validation) {
    const double s = model_bag_score(model, *vb.bag);
    scores.push_back(s);
    labels.push_back(vb.label);
    if (vb.label == 0) clean_scores.push_back(s);
  }
  ValMetrics out;
  out.auc = roc_auc(scores, labels).auc;
  const ThresholdResult thr = tune_threshold(clean_scores, target_fpr, "bag");
  size_t pos = 0, hit = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
      if (scores[i] > thr.threshold) ++hit;
    }
  }
  out.recall = pos ? static_cast<double>(hit) / static_cast<double>(pos) : 0.0;
  return out;
}

}  // namespace

void run_epochs(const TrainConfig& config, const TrainPools& train,
                const std::vector<EvalBag>& validation, TrainState& state, int n_epochs,
                std::vector<TrainLogRow>& log) {
  if (train.corrupted.empty() || train.normal.empty()) {
    throw ConfigError("configuration error: training needs both corrupted and normal bags");
  }
  bool val_has_pos = false, val_has_neg = false;
  for (const EvalBag& vb : validation) {
    (vb.label == 1 ? val_has_pos : val_has_neg) = true;
  }
  if (!val_has_pos || !val_has_neg) {
    throw ConfigError("configuration error: validation needs both labels present");
  }
  if (config.batch_corrupted != config.batch_normal) {
    throw ConfigError("configuration error: corrupted and normal batch halves must match");
  }

  SplitMix64 rng(0);
  rng.set_state(state.rng_state);
  const int pairs_per_batch = config.batch_corrupted;
  const int batches_per_epoch = std::max<int>(
      1, static_cast<int>((train.corrupted.size() + pairs_per_batch - 1) /
                          static_cast<size_t>(pairs_per_batch)));
  const int h1 = config.hidden[0];
  const int h2 = config.hidden[1];

  for (int e = 0; e < n_epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const std::vector<BagPair> pairs = sample_batch(train, pairs_per_batch, rng);
      MaskSet masks;
      if (config.dropout > 0.0) {
        masks.reserve(pairs.size() * 2);
        for (const BagPair& pair : pairs) {
          BagMasks ma, mn;
          for (size_t s = 0; s < pair.corrupted->vectors.size(); ++s) {
            ma.push_back(sample_dropout_mask(rng, config.dropout, h1, h2));
          }
          for (size_t s = 0; s < pair.normal->vectors.size(); ++s) {
            mn.push_back(sample_dropout_mask(rng, config.dropout, h1, h2));
          }
          masks.push_back(std::move(ma));
          masks.push_back(std::move(mn));
        }
      }
      const MaskSet* mask_ptr = masks.empty() ? nullptr : &masks;

      BackwardResult res;
      if (config.model == MilModel::Kind::Attention) {
        std::vector<LabeledBag> bags;
        bags.reserve(pairs.size() * 2);
        for (const BagPair& pair : pairs) {
          bags.push_back({pair.corrupted, 1});
          bags.push_back({pair.normal, 0});
        }
        res = attention_backward(bags, state.model, config.lambda, mask_ptr);
      } else {
        res = backward(pairs, state.model.fc, config.lambda, mask_ptr);
      }
      if (!std::isfinite(res.loss)) {
        throw NumericError("numeric divergence: non-finite loss at epoch " +
                           std::to_string(state.epochs_done) + ", batch " + std::to_string(b));
      }
      if (state.optimizer == OptimizerKind::Adagrad) {
        adagrad_step(state.adagrad, state.model, res.grads);
      } else {
        adam_step(state.adam, state.model, res.grads);
      }
      loss_sum += res.loss;
    }

    const ValMetrics vm = validation_metrics(state.model, validation, config.target_fpr);
    const double metric = config.selection_metric == "val_recall" ? vm.recall : vm.auc;
    if (metric > state.best_metric) {
      state.best_metric = metric;
      state.best_model = state.model;
      state.best_epoch = state.epochs_done;
    }
    const auto t1 = std::chrono::steady_clock::now();
    TrainLogRow row;
    row.epoch = state.epochs_done;
    row.mean_loss = loss_sum / batches_per_epoch;
    row.val_auc = vm.auc;
    row.val_recall = vm.recall;
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log.push_back(row);

    state.epochs_done += 1;
    state.rng_state = rng.state();
  }
}

TrainResult train(const TrainConfig& config, const TrainPools& train_pools,
                  const std::vector<EvalBag>& validation) {
  if (train_pools.corrupted.empty() || train_pools.normal.empty()) {
    throw ConfigError("configuration error: training needs both corrupted and normal bags");
  }
  const int in_dim = static_cast<int>(train_pools.corrupted.front()->dim());
  TrainState state = init_train_state(config, in_dim);
  TrainResult result;
  if (config.epochs > 0) {
    run_epochs(config, train_pools, validation, state, config.epochs, result.log);
  }
  result.best_model = state.best_model;
  result.best_epoch = state.best_epoch;
  result.best_metric = state.best_metric;
  result.final_model = state.model;
  return result;
}

// ---- training-state file ----

static constexpr char kStateMagic[4] = {'W', 'M', 'T', 'R'};
static constexpr uint32_t kStateVersion = 1;

static void put_blob(std::string& out, const std::string& blob) {
  bin::put_u64(out, blob.size());
  out += blob;
}

static void put_tensors(std::string& out, const std::vector<Vec>& tensors) {
  bin::put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const Vec& t : tensors) {
    bin::put_u64(out, t.size());
    for (double v : t) bin::put_f64(out, v);
  }
}

void save_train_state(const std::string& path, const TrainState& state) {
  std::string out;
  out.append(kStateMagic, 4);
  bin::put_u32(out, kStateVersion);
  bin::put_u32(out, static_cast<uint32_t>(state.optimizer));
  put_blob(out, checkpoint_bytes(state.model));
  put_blob(out, checkpoint_bytes(state.best_model));
  bin::put_f64(out, state.best_metric);
  bin::put_u64(out, static_cast<uint64_t>(static_cast<int64_t>(state.best_epoch)));
  bin::put_u64(out, state.rng_state);
  bin::put_u32(out, static_cast<uint32_t>(state.epochs_done));
  if (state.optimizer == OptimizerKind::Adagrad) {
    bin::put_f64(out, state.adagrad.lr);
    bin::put_f64(out, state.adagrad.eps);
    put_tensors(out, state.adagrad.accum);
  } else {
    bin::put_f64(out, state.adam.lr);
    bin::put_f64(out, state.adam.beta1);
    bin::put_f64(out, state.adam.beta2);
    bin::put_f64(out, state.adam.eps);
    bin::put_u64(out, static_cast<uint64_t>(state.adam.steps));
    put_tensors(out, state.adam.m);
    put_tensors(out, state.adam.v);
  }
  write_file(path, out);
}

static std::string get_blob(bin::Reader& r) {
  const uint64_t n = r.u64();
  std::string blob(n, '\0');
  r.raw(blob.data(), n);
  return blob;
}

static std::vector<Vec> get_tensors(bin::Reader& r) {
  const uint32_t n = r.u32();
  std::vector<Vec> tensors(n);
  for (Vec& t : tensors) {
    t.resize(r.u64());
    for (double& v : t) v = r.f64();
  }
  return tensors;
}

TrainState load_train_state(const std::string& path) {
  const std::string bytes = read_file(path);
  bin::Reader r(bytes, "training state '" + path + "'");
  r.expect_header(kStateMagic, kStateVersion);
  TrainState state;
  state.optimizer = static_cast<OptimizerKind>(r.u32());
  state.model = checkpoint_from_bytes(get_blob(r));
  state.best_model = checkpoint_from_bytes(get_blob(r));
  state.best_metric = r.f64();
  state.best_epoch = static_cast<int>(static_cast<int64_t>(r.u64()));
  state.rng_state = r.u64();
  state.epochs_done = static_cast<int>(r.u32());
  if (state.optimizer == OptimizerKind::Adagrad) {
    state.adagrad.lr = r.f64();
    state.adagrad.eps = r.f64();
    state.adagrad.accum = get_tensors(r);
  } else {
    state.adam.lr = r.f64();
    state.adam.beta1 = r.f64();
    state.adam.beta2 = r.f64();
    state.adam.eps = r.f64();
    state.adam.steps = static_cast<long>(r.u64());
    state.adam.m = get_tensors(r);
    state.adam.v = get_tensors(r);
  }
  r.expect_exhausted();
  return state;
}

void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::string out = "epoch,mean_loss,val_auc,val_recall_at_fpr,wall_ms\n";
  for (const TrainLogRow& row : log) {
    out += std::to_string(row.epoch) + "," + fmt_g17(row.mean_loss) + "," + fmt_g17(row.val_auc) +
           "," + fmt_g17(row.val_recall) + "," + fmt_g17(row.wall_ms) + "\n";
  }
  write_file(path, out);
}

}  // namespace weakmil
