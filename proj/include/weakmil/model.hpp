#pragma once

#include <optional>
#include <string>
#include <vector>

#include "weakmil/common.hpp"
#include "weakmil/core.hpp"

namespace weakmil {

using Vec = std::vector<double>;

// Dense row-major matrix; small enough that no linear-algebra dependency is
// warranted.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

// The scoring head f: fully-connected layers with ReLU hidden activations
// and a logistic-sigmoid output. Default shape in_dim -> 512 -> 32 -> 1.
struct FcHead {
  std::vector<Mat> weights;  // per layer, out x in
  std::vector<Vec> biases;   // per layer

  int layer_count() const { return static_cast<int>(weights.size()); }
  int in_dim() const { return weights.empty() ? 0 : weights.front().cols; }
  std::vector<int> dims() const;
  size_t weight_entry_count() const;

  // All-zero parameters with the given dims, e.g. {in, 512, 32, 1}.
  static FcHead zeros(const std::vector<int>& dims);
  // Glorot-uniform weights, zero biases, drawn from rng in layer order.
  static FcHead glorot(const std::vector<int>& dims, SplitMix64& rng);
};

// Gated attention is not used; this is plain tanh attention over the last
// hidden representation (width M) with L attention units.
struct AttentionHead {
  Mat V;   // L x M
  Vec w;   // L

  int att_dim() const { return V.rows; }
  int input_dim() const { return V.cols; }

  static AttentionHead zeros(int att_dim, int input_dim);
  static AttentionHead glorot(int att_dim, int input_dim, SplitMix64& rng);
};

struct MilModel {
  enum class Kind : int { DeepMil = 0, Attention = 1 };

  Kind kind = Kind::DeepMil;
  FcHead fc;
  std::optional<AttentionHead> attention;

  int in_dim() const { return fc.in_dim(); }
};

MilModel::Kind model_kind_from_string(const std::string& name);
const char* to_string(MilModel::Kind kind);

// Inverted dropout over the two hidden activations: kept units are scaled
// by 1/(1-rate) at train time, inference applies no masking. An empty mask
// (or rate 0) is bit-identical to no dropout.
struct DropoutMask {
  double rate = 0.0;
  std::vector<uint8_t> keep1;
  std::vector<uint8_t> keep2;

  bool empty() const { return keep1.empty() && keep2.empty(); }
};

using BagMasks = std::vector<DropoutMask>;  // one mask per segment
using MaskSet = std::vector<BagMasks>;      // one entry per bag, caller-ordered

DropoutMask sample_dropout_mask(SplitMix64& rng, double rate, int h1, int h2);

// Forward pass of f. Score is in (0,1).
double fc_forward(const FcHead& head, const Vec& x, const DropoutMask* mask = nullptr);

// Scores every segment of a bag (inference path, no dropout).
Vec score_segments(const FcHead& head, const FeatureBag& bag);

// max(0, 1 - max(scores_a) + max(scores_n)); both bags must be non-empty.
double ranking_hinge_loss(const Vec& scores_a, const Vec& scores_n);

// Ties resolve to the lowest index, fixing where max-gradients route.
size_t argmax_lowest(const Vec& v);

struct BagPair {
  const FeatureBag* corrupted = nullptr;
  const FeatureBag* normal = nullptr;
};

// (1/z) sum of per-pair hinge losses + lambda * ||W||_F^2 over the FC weight
// matrices (biases excluded). Mask layout when given: masks[2j] is pair j's
// corrupted bag, masks[2j+1] its normal bag.
double batch_objective(const std::vector<BagPair>& pairs, const FcHead& head,
                       double lambda, const MaskSet* masks = nullptr);

struct GradientSet {
  std::vector<Mat> w;  // FC weight gradients
  std::vector<Vec> b;  // FC bias gradients
  Mat att_V;           // empty unless the model has an attention head
  Vec att_w;

  static GradientSet zeros_like(const MilModel& model);
};

struct BackwardResult {
  double loss = 0.0;
  GradientSet grads;
};

// Exact gradients of batch_objective. Subgradient conventions: an exactly
// zero hinge contributes nothing, each max routes only to its argmax
// segment (lowest index on ties), and ReLU' (0) = 0.
BackwardResult backward(const std::vector<BagPair>& pairs, const FcHead& head,
                        double lambda, const MaskSet* masks = nullptr);

// ---- attention pooling path ----

struct AttentionPoolResult {
  Vec pooled;   // z = sum_k a_k h_k
  Vec weights;  // a, strictly positive, sums to 1
};

// Log-sum-exp stabilized softmax (subtracts the max logit).
Vec softmax_stable(const Vec& logits);

AttentionPoolResult attention_pool(const std::vector<Vec>& instances,
                                   const AttentionHead& att);

// Binary cross-entropy with probability clamped to [1e-12, 1-1e-12].
double bce_loss(double p, int label);

// Pools the instance representations and classifies with the head's final
// layer: loss = BCE(sigma(W_last z + b_last), label).
double attention_bag_loss(const Vec& pooled, int label, const FcHead& head);

// Bag probability of the attention model: trunk -> pool -> final layer.
// Masks (when given) are per-segment, applied to both hidden activations.
double attention_bag_score(const MilModel& model, const FeatureBag& bag,
                           const BagMasks* masks = nullptr);

struct LabeledBag {
  const FeatureBag* bag = nullptr;
  int label = 0;
};

// Mean BCE over bags + lambda * ||W||_F^2 over all weight matrices
// (FC + attention, biases excluded). Mask layout: masks[i] = bag i.
double attention_batch_objective(const std::vector<LabeledBag>& bags, const MilModel& model,
                                 double lambda, const MaskSet* masks = nullptr);

BackwardResult attention_backward(const std::vector<LabeledBag>& bags, const MilModel& model,
                                  double lambda, const MaskSet* masks = nullptr);

// Bag-level score for evaluation: Deep MIL takes the max segment score,
// the attention model its pooled probability.
double model_bag_score(const MilModel& model, const FeatureBag& bag);

// ---- checkpoint I/O ----
//
// WMCK checkpoint:
//   magic "WMCK" | u32 version=1 | u32 model_kind | u32 n_layers |
//   per layer: u32 out_dim, u32 in_dim | [u32 att_dim, u32 att_input] |
//   per layer: weights row-major then bias, f64 little-endian |
//   [attention V row-major then w]

std::string checkpoint_bytes(const MilModel& model);
MilModel checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const std::string& path, const MilModel& model);
MilModel load_checkpoint(const std::string& path);

}  // namespace weakmil
