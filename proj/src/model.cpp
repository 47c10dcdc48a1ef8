#include "weakmil/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace weakmil {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_three_layers(const FcHead& head) {
  if (head.layer_count() != 3 || head.weights.back().rows != 1) {
    throw ConfigError("configuration error: the scoring head must have 3 layers ending in "
                      "a single output");
  }
}

// out = W x + b
void matvec(const Mat& W, const Vec& x, const Vec& b, Vec& out) {
  out.resize(static_cast<size_t>(W.rows));
  for (int r = 0; r < W.rows; ++r) {
    const double* row = W.a.data() + static_cast<size_t>(r) * W.cols;
    double acc = b[r];
    for (int c = 0; c < W.cols; ++c) acc += row[c] * x[c];
    out[static_cast<size_t>(r)] = acc;
  }
}

// out += W^T u
void matvec_transpose(const Mat& W, const Vec& u, Vec& out) {
  out.assign(static_cast<size_t>(W.cols), 0.0);
  for (int r = 0; r < W.rows; ++r) {
    const double* row = W.a.data() + static_cast<size_t>(r) * W.cols;
    const double ur = u[static_cast<size_t>(r)];
    if (ur == 0.0) continue;
    for (int c = 0; c < W.cols; ++c) out[c] += row[c] * ur;
  }
}

// G += u v^T
void add_outer(Mat& G, const Vec& u, const Vec& v) {
  for (int r = 0; r < G.rows; ++r) {
    double* row = G.a.data() + static_cast<size_t>(r) * G.cols;
    const double ur = u[static_cast<size_t>(r)];
    if (ur == 0.0) continue;
    for (int c = 0; c < G.cols; ++c) row[c] += ur * v[c];
  }
}

void apply_dropout(Vec& v, const std::vector<uint8_t>& keep, double rate) {
  if (keep.empty()) return;
  const double scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < v.size(); ++i) v[i] = keep[i] ? v[i] * scale : 0.0;
}

void apply_dropout_grad(Vec& g, const std::vector<uint8_t>& keep, double rate) {
  if (keep.empty()) return;
  const double scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < g.size(); ++i) g[i] = keep[i] ? g[i] * scale : 0.0;
}

struct SegmentCache {
  Vec a1, d1;  // first hidden pre-activation; post-ReLU post-dropout
  Vec a2, d2;  // second hidden
  double a3 = 0.0;
  double score = 0.0;
};

SegmentCache forward_cached(const FcHead& head, const Vec& x, const DropoutMask* mask) {
  SegmentCache c;
  matvec(head.weights[0], x, head.biases[0], c.a1);
  c.d1 = c.a1;
  for (double& v : c.d1) v = v > 0.0 ? v : 0.0;
  if (mask) apply_dropout(c.d1, mask->keep1, mask->rate);
  matvec(head.weights[1], c.d1, head.biases[1], c.a2);
  c.d2 = c.a2;
  for (double& v : c.d2) v = v > 0.0 ? v : 0.0;
  if (mask) apply_dropout(c.d2, mask->keep2, mask->rate);
  const double* w3 = head.weights[2].a.data();
  double acc = head.biases[2][0];
  for (int i = 0; i < head.weights[2].cols; ++i) acc += w3[i] * c.d2[static_cast<size_t>(i)];
  c.a3 = acc;
  c.score = sigmoid(acc);
  return c;
}

// Backpropagates d(loss)/d(score) through one cached segment forward.
void backprop_segment(const FcHead& head, const Vec& x, const SegmentCache& c,
                      const DropoutMask* mask, double dscore, GradientSet& grads) {
  const double du = dscore * c.score * (1.0 - c.score);
  Vec dd2(c.d2.size());
  const double* w3 = head.weights[2].a.data();
  for (size_t i = 0; i < dd2.size(); ++i) {
    grads.w[2].a[i] += du * c.d2[i];
    dd2[i] = du * w3[i];
  }
  grads.b[2][0] += du;

  if (mask) apply_dropout_grad(dd2, mask->keep2, mask->rate);
  for (size_t i = 0; i < dd2.size(); ++i) {
    if (!(c.a2[i] > 0.0)) dd2[i] = 0.0;  // ReLU'(0) = 0
  }
  add_outer(grads.w[1], dd2, c.d1);
  for (size_t i = 0; i < dd2.size(); ++i) grads.b[1][i] += dd2[i];

  Vec dd1;
  matvec_transpose(head.weights[1], dd2, dd1);
  if (mask) apply_dropout_grad(dd1, mask->keep1, mask->rate);
  for (size_t i = 0; i < dd1.size(); ++i) {
    if (!(c.a1[i] > 0.0)) dd1[i] = 0.0;
  }
  add_outer(grads.w[0], dd1, x);
  for (size_t i = 0; i < dd1.size(); ++i) grads.b[0][i] += dd1[i];
}

double weight_frobenius_sq(const FcHead& head) {
  double acc = 0.0;
  for (const Mat& W : head.weights) {
    for (double w : W.a) acc += w * w;
  }
  return acc;
}

void check_bag_dim(const FeatureBag& bag, int in_dim) {
  if (bag.vectors.empty()) {
    throw DataError("empty-input error: bag '" + bag.bag_id + "' has no segments");
  }
  if (static_cast<int>(bag.dim()) != in_dim) {
    throw DataError("shape error: bag '" + bag.bag_id + "' has dim " + std::to_string(bag.dim()) +
                    ", model expects " + std::to_string(in_dim));
  }
}

const DropoutMask* mask_at(const MaskSet* masks, size_t bag_idx, size_t seg_idx) {
  if (!masks) return nullptr;
  const BagMasks& bm = masks->at(bag_idx);
  const DropoutMask* m = &bm.at(seg_idx);
  return m->empty() ? nullptr : m;
}

}  // namespace

// ---- FcHead / AttentionHead ----

std::vector<int> FcHead::dims() const {
  std::vector<int> d;
  if (weights.empty()) return d;
  d.push_back(weights.front().cols);
  for (const Mat& W : weights) d.push_back(W.rows);
  return d;
}

size_t FcHead::weight_entry_count() const {
  size_t n = 0;
  for (const Mat& W : weights) n += W.a.size();
  return n;
}

FcHead FcHead::zeros(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ConfigError("configuration error: head needs at least 2 dims");
  FcHead head;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] < 1 || dims[l + 1] < 1) {
      throw ConfigError("configuration error: head dims must be positive");
    }
    head.weights.emplace_back(dims[l + 1], dims[l]);
    head.biases.emplace_back(static_cast<size_t>(dims[l + 1]), 0.0);
  }
  return head;
}

FcHead FcHead::glorot(const std::vector<int>& dims, SplitMix64& rng) {
  FcHead head = zeros(dims);
  for (Mat& W : head.weights) {
    const double a = std::sqrt(6.0 / (W.rows + W.cols));
    for (double& w : W.a) w = a * (2.0 * rng.next_double() - 1.0);
  }
  return head;
}

AttentionHead AttentionHead::zeros(int att_dim, int input_dim) {
  if (att_dim < 1 || input_dim < 1) {
    throw ConfigError("configuration error: attention dims must be positive");
  }
  AttentionHead att;
  att.V = Mat(att_dim, input_dim);
  att.w.assign(static_cast<size_t>(att_dim), 0.0);
  return att;
}

AttentionHead AttentionHead::glorot(int att_dim, int input_dim, SplitMix64& rng) {
  AttentionHead att = zeros(att_dim, input_dim);
  const double av = std::sqrt(6.0 / (att_dim + input_dim));
  for (double& v : att.V.a) v = av * (2.0 * rng.next_double() - 1.0);
  const double aw = std::sqrt(6.0 / (att_dim + 1));
  for (double& v : att.w) v = aw * (2.0 * rng.next_double() - 1.0);
  return att;
}

MilModel::Kind model_kind_from_string(const std::string& name) {
  if (name == "deep-mil") return MilModel::Kind::DeepMil;
  if (name == "attention") return MilModel::Kind::Attention;
  throw ConfigError("configuration error: unknown model kind '" + name + "'");
}

const char* to_string(MilModel::Kind kind) {
  return kind == MilModel::Kind::DeepMil ? "deep-mil" : "attention";
}

DropoutMask sample_dropout_mask(SplitMix64& rng, double rate, int h1, int h2) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("configuration error: dropout rate must lie in [0, 1)");
  }
  DropoutMask mask;
  mask.rate = rate;
  if (rate == 0.0) return mask;  // empty mask: bitwise identical to no dropout
  mask.keep1.resize(static_cast<size_t>(h1));
  mask.keep2.resize(static_cast<size_t>(h2));
  for (auto& k : mask.keep1) k = rng.next_double() >= rate ? 1 : 0;
  for (auto& k : mask.keep2) k = rng.next_double() >= rate ? 1 : 0;
  return mask;
}

// ---- forward / losses ----

double fc_forward(const FcHead& head, const Vec& x, const DropoutMask* mask) {
  check_three_layers(head);
  if (static_cast<int>(x.size()) != head.in_dim()) {
    throw DataError("shape error: input dim " + std::to_string(x.size()) + ", head expects " +
                    std::to_string(head.in_dim()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("numeric error: non-finite input to the head");
  }
  if (mask && mask->empty()) mask = nullptr;
  return forward_cached(head, x, mask).score;
}

Vec score_segments(const FcHead& head, const FeatureBag& bag) {
  check_three_layers(head);
  check_bag_dim(bag, head.in_dim());
  Vec scores;
  scores.reserve(bag.vectors.size());
  for (const FeatureVector& x : bag.vectors) scores.push_back(forward_cached(head, x, nullptr).score);
  return scores;
}

double ranking_hinge_loss(const Vec& scores_a, const Vec& scores_n) {
  if (scores_a.empty() || scores_n.empty()) {
    throw DataError("empty-input error: hinge loss needs non-empty score lists");
  }
  const double ma = *std::max_element(scores_a.begin(), scores_a.end());
  const double mn = *std::max_element(scores_n.begin(), scores_n.end());
  return std::max(0.0, 1.0 - ma + mn);
}

size_t argmax_lowest(const Vec& v) {
  if (v.empty()) throw DataError("empty-input error: argmax of empty list");
  return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double batch_objective(const std::vector<BagPair>& pairs, const FcHead& head, double lambda,
                       const MaskSet* masks) {
  check_three_layers(head);
  if (pairs.empty()) throw DataError("empty-input error: batch has no pairs");
  double hinge_sum = 0.0;
  for (size_t j = 0; j < pairs.size(); ++j) {
    const FeatureBag& a = *pairs[j].corrupted;
    const FeatureBag& nb = *pairs[j].normal;
    check_bag_dim(a, head.in_dim());
    check_bag_dim(nb, head.in_dim());
    Vec sa(a.vectors.size()), sn(nb.vectors.size());
    for (size_t s = 0; s < a.vectors.size(); ++s) {
      sa[s] = forward_cached(head, a.vectors[s], mask_at(masks, 2 * j, s)).score;
    }
    for (size_t s = 0; s < nb.vectors.size(); ++s) {
      sn[s] = forward_cached(head, nb.vectors[s], mask_at(masks, 2 * j + 1, s)).score;
    }
    hinge_sum += ranking_hinge_loss(sa, sn);
  }
  return hinge_sum / static_cast<double>(pairs.size()) + lambda * weight_frobenius_sq(head);
}

GradientSet GradientSet::zeros_like(const MilModel& model) {
  GradientSet g;
  for (const Mat& W : model.fc.weights) g.w.emplace_back(W.rows, W.cols);
  for (const Vec& b : model.fc.biases) g.b.emplace_back(b.size(), 0.0);
  if (model.attention) {
    g.att_V = Mat(model.attention->V.rows, model.attention->V.cols);
    g.att_w.assign(model.attention->w.size(), 0.0);
  }
  return g;
}

BackwardResult backward(const std::vector<BagPair>& pairs, const FcHead& head, double lambda,
                        const MaskSet* masks) {
  check_three_layers(head);
  if (pairs.empty()) throw DataError("empty-input error: batch has no pairs");

  MilModel shape;
  shape.fc = head;  // shapes only
  BackwardResult result;
  result.grads = GradientSet::zeros_like(shape);

  const double inv_z = 1.0 / static_cast<double>(pairs.size());
  double hinge_sum = 0.0;
  for (size_t j = 0; j < pairs.size(); ++j) {
    const FeatureBag& a = *pairs[j].corrupted;
    const FeatureBag& nb = *pairs[j].normal;
    check_bag_dim(a, head.in_dim());
    check_bag_dim(nb, head.in_dim());

    Vec sa(a.vectors.size()), sn(nb.vectors.size());
    for (size_t s = 0; s < a.vectors.size(); ++s) {
      sa[s] = forward_cached(head, a.vectors[s], mask_at(masks, 2 * j, s)).score;
    }
    for (size_t s = 0; s < nb.vectors.size(); ++s) {
      sn[s] = forward_cached(head, nb.vectors[s], mask_at(masks, 2 * j + 1, s)).score;
    }
    const size_t ia = argmax_lowest(sa);
    const size_t in = argmax_lowest(sn);
    const double hl = std::max(0.0, 1.0 - sa[ia] + sn[in]);
    hinge_sum += hl;
    if (hl > 0.0) {
      // Gradient routes only through the argmax segments.
      const DropoutMask* ma = mask_at(masks, 2 * j, ia);
      const DropoutMask* mn = mask_at(masks, 2 * j + 1, in);
      const SegmentCache ca = forward_cached(head, a.vectors[ia], ma);
      const SegmentCache cn = forward_cached(head, nb.vectors[in], mn);
      backprop_segment(head, a.vectors[ia], ca, ma, -inv_z, result.grads);
      backprop_segment(head, nb.vectors[in], cn, mn, +inv_z, result.grads);
    }
  }

  for (size_t l = 0; l < head.weights.size(); ++l) {
    for (size_t i = 0; i < head.weights[l].a.size(); ++i) {
      result.grads.w[l].a[i] += 2.0 * lambda * head.weights[l].a[i];
    }
  }
  result.loss = hinge_sum * inv_z + lambda * weight_frobenius_sq(head);
  return result;
}

// ---- attention path ----

Vec softmax_stable(const Vec& logits) {
  if (logits.empty()) throw DataError("empty-input error: softmax of empty list");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

AttentionPoolResult attention_pool(const std::vector<Vec>& instances, const AttentionHead& att) {
  if (instances.empty()) throw DataError("empty-input error: attention pool needs instances");
  const int m_dim = att.input_dim();
  Vec logits(instances.size());
  for (size_t k = 0; k < instances.size(); ++k) {
    if (static_cast<int>(instances[k].size()) != m_dim) {
      throw DataError("shape error: instance dim " + std::to_string(instances[k].size()) +
                      ", attention expects " + std::to_string(m_dim));
    }
    double logit = 0.0;
    for (int l = 0; l < att.att_dim(); ++l) {
      const double* row = att.V.a.data() + static_cast<size_t>(l) * m_dim;
      double pre = 0.0;
      for (int c = 0; c < m_dim; ++c) pre += row[c] * instances[k][c];
      logit += att.w[static_cast<size_t>(l)] * std::tanh(pre);
    }
    logits[k] = logit;
  }
  AttentionPoolResult result;
  result.weights = softmax_stable(logits);
  result.pooled.assign(static_cast<size_t>(m_dim), 0.0);
  for (size_t k = 0; k < instances.size(); ++k) {
    for (int c = 0; c < m_dim; ++c) result.pooled[c] += result.weights[k] * instances[k][c];
  }
  return result;
}

double bce_loss(double p, int label) {
  const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return label ? -std::log(q) : -std::log(1.0 - q);
}

double attention_bag_loss(const Vec& pooled, int label, const FcHead& head) {
  check_three_layers(head);
  const Mat& W = head.weights.back();
  if (static_cast<int>(pooled.size()) != W.cols) {
    throw DataError("shape error: pooled dim " + std::to_string(pooled.size()) +
                    ", classifier expects " + std::to_string(W.cols));
  }
  double u = head.biases.back()[0];
  for (int c = 0; c < W.cols; ++c) u += W.a[static_cast<size_t>(c)] * pooled[c];
  return bce_loss(sigmoid(u), label);
}

namespace {

struct AttentionBagCache {
  std::vector<SegmentCache> segments;
  std::vector<Vec> tanh_pre;  // tanh(V h_k) per segment
  Vec weights;
  Vec pooled;
  double u = 0.0;
  double p = 0.0;
};

AttentionBagCache attention_forward(const MilModel& model, const FeatureBag& bag,
                                    const BagMasks* masks) {
  const FcHead& head = model.fc;
  const AttentionHead& att = *model.attention;
  const int m_dim = att.input_dim();
  AttentionBagCache cache;
  cache.segments.reserve(bag.vectors.size());
  cache.tanh_pre.reserve(bag.vectors.size());
  Vec logits(bag.vectors.size());
  for (size_t k = 0; k < bag.vectors.size(); ++k) {
    const DropoutMask* m = nullptr;
    if (masks) {
      m = &masks->at(k);
      if (m->empty()) m = nullptr;
    }
    SegmentCache sc = forward_cached(head, bag.vectors[k], m);
    Vec t(static_cast<size_t>(att.att_dim()));
    double logit = 0.0;
    for (int l = 0; l < att.att_dim(); ++l) {
      const double* row = att.V.a.data() + static_cast<size_t>(l) * m_dim;
      double pre = 0.0;
      for (int c = 0; c < m_dim; ++c) pre += row[c] * sc.d2[static_cast<size_t>(c)];
      t[static_cast<size_t>(l)] = std::tanh(pre);
      logit += att.w[static_cast<size_t>(l)] * t[static_cast<size_t>(l)];
    }
    logits[k] = logit;
    cache.tanh_pre.push_back(std::move(t));
    cache.segments.push_back(std::move(sc));
  }
  cache.weights = softmax_stable(logits);
  cache.pooled.assign(static_cast<size_t>(m_dim), 0.0);
  for (size_t k = 0; k < bag.vectors.size(); ++k) {
    for (int c = 0; c < m_dim; ++c) {
      cache.pooled[static_cast<size_t>(c)] += cache.weights[k] * cache.segments[k].d2[static_cast<size_t>(c)];
    }
  }
  const Mat& W3 = head.weights.back();
  double u = head.biases.back()[0];
  for (int c = 0; c < m_dim; ++c) u += W3.a[static_cast<size_t>(c)] * cache.pooled[static_cast<size_t>(c)];
  cache.u = u;
  cache.p = sigmoid(u);
  return cache;
}

void check_attention_model(const MilModel& model) {
  check_three_layers(model.fc);
  if (model.kind != MilModel::Kind::Attention || !model.attention) {
    throw ConfigError("configuration error: model has no attention head");
  }
  if (model.attention->input_dim() != model.fc.weights.back().cols) {
    throw ConfigError("configuration error: attention input dim must match the last hidden "
                      "layer width");
  }
}

}  // namespace

double attention_bag_score(const MilModel& model, const FeatureBag& bag, const BagMasks* masks) {
  check_attention_model(model);
  check_bag_dim(bag, model.fc.in_dim());
  return attention_forward(model, bag, masks).p;
}

double attention_batch_objective(const std::vector<LabeledBag>& bags, const MilModel& model,
                                 double lambda, const MaskSet* masks) {
  check_attention_model(model);
  if (bags.empty()) throw DataError("empty-input error: batch has no bags");
  double loss = 0.0;
  for (size_t i = 0; i < bags.size(); ++i) {
    check_bag_dim(*bags[i].bag, model.fc.in_dim());
    const BagMasks* bm = masks ? &masks->at(i) : nullptr;
    loss += bce_loss(attention_forward(model, *bags[i].bag, bm).p, bags[i].label);
  }
  loss /= static_cast<double>(bags.size());
  double reg = weight_frobenius_sq(model.fc);
  for (double v : model.attention->V.a) reg += v * v;
  for (double v : model.attention->w) reg += v * v;
  return loss + lambda * reg;
}

BackwardResult attention_backward(const std::vector<LabeledBag>& bags, const MilModel& model,
                                  double lambda, const MaskSet* masks) {
  check_attention_model(model);
  if (bags.empty()) throw DataError("empty-input error: batch has no bags");
  const FcHead& head = model.fc;
  const AttentionHead& att = *model.attention;
  const int m_dim = att.input_dim();

  BackwardResult result;
  result.grads = GradientSet::zeros_like(model);
  const double inv_n = 1.0 / static_cast<double>(bags.size());
  double loss_sum = 0.0;

  for (size_t i = 0; i < bags.size(); ++i) {
    check_bag_dim(*bags[i].bag, head.in_dim());
    const FeatureBag& bag = *bags[i].bag;
    const BagMasks* bm = masks ? &masks->at(i) : nullptr;
    AttentionBagCache cache = attention_forward(model, bag, bm);
    loss_sum += bce_loss(cache.p, bags[i].label);

    // d(loss)/du is zero while the probability sits in the clamp region.
    double du = 0.0;
    if (cache.p > 1e-12 && cache.p < 1.0 - 1e-12) {
      du = (cache.p - static_cast<double>(bags[i].label)) * inv_n;
    }

    // classifier (the head's final layer over the pooled vector)
    const Mat& W3 = head.weights.back();
    Vec dz(static_cast<size_t>(m_dim));
    for (int c = 0; c < m_dim; ++c) {
      result.grads.w[2].a[static_cast<size_t>(c)] += du * cache.pooled[static_cast<size_t>(c)];
      dz[static_cast<size_t>(c)] = du * W3.a[static_cast<size_t>(c)];
    }
    result.grads.b[2][0] += du;

    // z = sum_k a_k h_k
    const size_t K = bag.vectors.size();
    Vec da(K), dh_pool;
    double s_mix = 0.0;
    for (size_t k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int c = 0; c < m_dim; ++c) acc += dz[static_cast<size_t>(c)] * cache.segments[k].d2[static_cast<size_t>(c)];
      da[k] = acc;
      s_mix += cache.weights[k] * acc;
    }

    for (size_t k = 0; k < K; ++k) {
      const double dlogit = cache.weights[k] * (da[k] - s_mix);
      // attention parameters
      Vec dpre(static_cast<size_t>(att.att_dim()));
      for (int l = 0; l < att.att_dim(); ++l) {
        const double t = cache.tanh_pre[k][static_cast<size_t>(l)];
        result.grads.att_w[static_cast<size_t>(l)] += dlogit * t;
        dpre[static_cast<size_t>(l)] = dlogit * att.w[static_cast<size_t>(l)] * (1.0 - t * t);
      }
      // dh_k = a_k dz + V^T dpre
      Vec dh(static_cast<size_t>(m_dim), 0.0);
      for (int c = 0; c < m_dim; ++c) dh[static_cast<size_t>(c)] = cache.weights[k] * dz[static_cast<size_t>(c)];
      for (int l = 0; l < att.att_dim(); ++l) {
        const double* row = att.V.a.data() + static_cast<size_t>(l) * m_dim;
        const double dl = dpre[static_cast<size_t>(l)];
        if (dl == 0.0) continue;
        for (int c = 0; c < m_dim; ++c) {
          result.grads.att_V.a[static_cast<size_t>(l) * m_dim + c] += dl * cache.segments[k].d2[static_cast<size_t>(c)];
          dh[static_cast<size_t>(c)] += row[c] * dl;
        }
      }

      // trunk (layers 1 and 2)
      const DropoutMask* m = nullptr;
      if (bm) {
        m = &bm->at(k);
        if (m->empty()) m = nullptr;
      }
      const SegmentCache& sc = cache.segments[k];
      Vec dd2 = dh;
      if (m) apply_dropout_grad(dd2, m->keep2, m->rate);
      for (size_t q = 0; q < dd2.size(); ++q) {
        if (!(sc.a2[q] > 0.0)) dd2[q] = 0.0;
      }
      add_outer(result.grads.w[1], dd2, sc.d1);
      for (size_t q = 0; q < dd2.size(); ++q) result.grads.b[1][q] += dd2[q];
      Vec dd1;
      matvec_transpose(head.weights[1], dd2, dd1);
      if (m) apply_dropout_grad(dd1, m->keep1, m->rate);
      for (size_t q = 0; q < dd1.size(); ++q) {
        if (!(sc.a1[q] > 0.0)) dd1[q] = 0.0;
      }
      add_outer(result.grads.w[0], dd1, bag.vectors[k]);
      for (size_t q = 0; q < dd1.size(); ++q) result.grads.b[0][q] += dd1[q];
    }
  }

  for (size_t l = 0; l < head.weights.size(); ++l) {
    for (size_t i = 0; i < head.weights[l].a.size(); ++i) {
      result.grads.w[l].a[i] += 2.0 * lambda * head.weights[l].a[i];
    }
  }
  for (size_t i = 0; i < att.V.a.size(); ++i) {
    result.grads.att_V.a[i] += 2.0 * lambda * att.V.a[i];
  }
  for (size_t i = 0; i < att.w.size(); ++i) {
    result.grads.att_w[i] += 2.0 * lambda * att.w[i];
  }

  double reg = weight_frobenius_sq(head);
  for (double v : att.V.a) reg += v * v;
  for (double v : att.w) reg += v * v;
  result.loss = loss_sum * inv_n + lambda * reg;
  return result;
}

double model_bag_score(const MilModel& model, const FeatureBag& bag) {
  if (model.kind == MilModel::Kind::Attention) return attention_bag_score(model, bag);
  const Vec scores = score_segments(model.fc, bag);
  return *std::max_element(scores.begin(), scores.end());
}

// ---- checkpoint I/O ----

static constexpr char kCheckpointMagic[4] = {'W', 'M', 'C', 'K'};
static constexpr uint32_t kCheckpointVersion = 1;

std::string checkpoint_bytes(const MilModel& model) {
  if ((model.kind == MilModel::Kind::Attention) != model.attention.has_value()) {
    throw ConfigError("configuration error: model kind and attention head are inconsistent");
  }
  std::string out;
  out.append(kCheckpointMagic, 4);
  bin::put_u32(out, kCheckpointVersion);
  bin::put_u32(out, static_cast<uint32_t>(model.kind));
  bin::put_u32(out, static_cast<uint32_t>(model.fc.weights.size()));
  for (const Mat& W : model.fc.weights) {
    bin::put_u32(out, static_cast<uint32_t>(W.rows));
    bin::put_u32(out, static_cast<uint32_t>(W.cols));
  }
  if (model.attention) {
    bin::put_u32(out, static_cast<uint32_t>(model.attention->V.rows));
    bin::put_u32(out, static_cast<uint32_t>(model.attention->V.cols));
  }
  for (size_t l = 0; l < model.fc.weights.size(); ++l) {
    for (double v : model.fc.weights[l].a) bin::put_f64(out, v);
    for (double v : model.fc.biases[l]) bin::put_f64(out, v);
  }
  if (model.attention) {
    for (double v : model.attention->V.a) bin::put_f64(out, v);
    for (double v : model.attention->w) bin::put_f64(out, v);
  }
  return out;
}

MilModel checkpoint_from_bytes(const std::string& bytes) {
  bin::Reader r(bytes, "checkpoint");
  r.expect_header(kCheckpointMagic, kCheckpointVersion);
  const uint32_t kind = r.u32();
  if (kind > 1) throw DataError("format error: checkpoint has unknown model kind");
  const uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 16) {
    throw DataError("format error: checkpoint layer count is implausible");
  }
  MilModel model;
  model.kind = static_cast<MilModel::Kind>(kind);
  std::vector<std::pair<uint32_t, uint32_t>> shapes;
  uint32_t prev_out = 0;
  for (uint32_t l = 0; l < n_layers; ++l) {
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) throw DataError("format error: zero layer dimension");
    if (l > 0 && cols != prev_out) {
      throw DataError("format error: checkpoint layer dims do not chain");
    }
    prev_out = rows;
    shapes.emplace_back(rows, cols);
  }
  uint32_t att_rows = 0, att_cols = 0;
  if (model.kind == MilModel::Kind::Attention) {
    att_rows = r.u32();
    att_cols = r.u32();
    if (att_rows == 0 || att_cols != shapes[n_layers - 1].second) {
      throw DataError("format error: attention dims do not match the classifier input");
    }
  }
  for (auto [rows, cols] : shapes) {
    Mat W(static_cast<int>(rows), static_cast<int>(cols));
    for (double& v : W.a) v = r.f64();
    Vec b(rows);
    for (double& v : b) v = r.f64();
    model.fc.weights.push_back(std::move(W));
    model.fc.biases.push_back(std::move(b));
  }
  if (model.kind == MilModel::Kind::Attention) {
    AttentionHead att = AttentionHead::zeros(static_cast<int>(att_rows), static_cast<int>(att_cols));
    for (double& v : att.V.a) v = r.f64();
    for (double& v : att.w) v = r.f64();
    model.attention = std::move(att);
  }
  r.expect_exhausted();
  return model;
}

void save_checkpoint(const std::string& path, const MilModel& model) {
  write_file(path, checkpoint_bytes(model));
}

MilModel load_checkpoint(const std::string& path) {
  try {
    return checkpoint_from_bytes(read_file(path));
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " (file '" + path + "')");
  }
}

}  // namespace weakmil
