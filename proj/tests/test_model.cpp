#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "weakmil/model.hpp"

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace weakmil;
using testing::TempDir;

namespace {

using gradcheck::draw_attention_case;
using gradcheck::draw_deep_case;
using gradcheck::flat_grads;
using gradcheck::max_fd_error;
using RandomCase = gradcheck::DeepCase;
using RandomAttentionCase = gradcheck::AttentionCase;

FeatureBag bag_from(const std::vector<Vec>& vectors, const std::string& id) {
  FeatureBag bag;
  bag.bag_id = id;
  bag.vectors = vectors;
  return bag;
}

}  // namespace

TEST_CASE("fc_forward of the all-zero head is exactly 0.5") {
  const FcHead head = FcHead::zeros({8, 512, 32, 1});
  const Vec x(8, 0.7);
  CHECK(fc_forward(head, x) == 0.5);
}

TEST_CASE("fc_forward increases strictly with the final bias") {
  SplitMix64 rng(1);
  FcHead head = FcHead::glorot({6, 4, 3, 1}, rng);
  Vec x(6);
  for (double& v : x) v = rng.next_double();
  double prev = -1.0;
  for (double b3 : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    head.biases[2][0] = b3;
    const double s = fc_forward(head, x);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("fc_forward matches the naive dense oracle to 1e-12") {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    FcHead head = FcHead::glorot({8, 4, 3, 1}, rng);
    for (Vec& b : head.biases) {
      for (double& v : b) v = rng.next_double() - 0.5;
    }
    Vec x(8);
    for (double& v : x) v = 2.0 * rng.next_double() - 1.0;
    CHECK(std::fabs(fc_forward(head, x) - oracle::fc_forward(head, x).score) <= 1e-12);
  }
}

TEST_CASE("fc_forward rejects bad input") {
  const FcHead head = FcHead::zeros({4, 3, 2, 1});
  CHECK_THROWS_AS(fc_forward(head, Vec(5, 0.0)), DataError);
  Vec bad(4, 0.0);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fc_forward(head, bad), NumericError);
}

TEST_CASE("ranking hinge loss worked examples hold exactly") {
  CHECK(ranking_hinge_loss({1.0}, {0.0}) == 0.0);
  CHECK(ranking_hinge_loss({0.5, 0.1}, {0.5}) == 1.0);
  CHECK(ranking_hinge_loss({0.3}, {0.8, 0.2}) == 1.5);
  CHECK_THROWS_AS(ranking_hinge_loss({}, {0.5}), DataError);
  CHECK_THROWS_AS(ranking_hinge_loss({0.5}, {}), DataError);
}

TEST_CASE("hinge loss of (0,1)-scores lies in [0,2]") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Vec a(1 + rng.next_below(6)), n(1 + rng.next_below(6));
    for (double& v : a) v = rng.next_double();
    for (double& v : n) v = rng.next_double();
    const double hl = ranking_hinge_loss(a, n);
    CHECK(hl >= 0.0);
    CHECK(hl <= 2.0);
  }
}

TEST_CASE("equal max scores give hinge loss within one ulp of 1") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const double s = rng.next_double();
    CHECK(std::fabs(ranking_hinge_loss({s}, {s}) - 1.0) <= 1e-15);
  }
}

TEST_CASE("argmax_lowest breaks ties toward the lowest index and survives "
          "strictly increasing transforms") {
  CHECK(argmax_lowest({0.2, 0.7, 0.7, 0.1}) == 1);
  SplitMix64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Vec v(2 + rng.next_below(8));
    for (double& x : v) x = rng.next_below(5) * 0.125;  // deliberate ties
    Vec w = v;
    for (double& x : w) x = 3.0 * x + 0.25;  // strictly increasing map
    CHECK(argmax_lowest(v) == argmax_lowest(w));
  }
}

// Saturating heads make hinge terms exact; sigmoid reaches 0.0 only once
// exp overflows, and 1.0 once exp(-x) drops below half an ulp.
TEST_CASE("batch objective: perfectly separated pairs give exactly 0") {
  FcHead head = FcHead::zeros({1, 1, 1, 1});
  head.weights[0].a[0] = 786.0;
  head.weights[1].a[0] = 1.0;
  head.weights[2].a[0] = 1.0;
  head.biases[2][0] = -746.0;
  const FeatureBag a = bag_from({{1.0}}, "a");
  const FeatureBag n = bag_from({{0.0}}, "n");
  CHECK(fc_forward(head, {1.0}) == 1.0);
  CHECK(fc_forward(head, {0.0}) == 0.0);
  const std::vector<BagPair> pairs = {{&a, &n}, {&a, &n}};
  CHECK(batch_objective(pairs, head, 0.0) == 0.0);
}

TEST_CASE("batch objective: a single pair with hinge 1.5 gives exactly 1.5") {
  FcHead head = FcHead::zeros({1, 1, 1, 1});
  head.weights[0].a[0] = 746.0;
  head.weights[1].a[0] = 1.0;
  head.weights[2].a[0] = -1.0;
  const FeatureBag a = bag_from({{1.0}}, "a");  // sigma(-746) = 0
  const FeatureBag n = bag_from({{0.0}}, "n");  // sigma(0) = 0.5
  const std::vector<BagPair> pairs = {{&a, &n}};
  CHECK(batch_objective(pairs, head, 0.0) == 1.5);
}

TEST_CASE("batch objective: lambda=1 and 100 weights of 0.1 add 1.0") {
  FcHead head = FcHead::zeros({8, 8, 4, 1});  // 64 + 32 + 4 = 100 weight entries
  REQUIRE(head.weight_entry_count() == 100);
  for (Mat& W : head.weights) {
    for (double& w : W.a) w = 0.1;
  }
  head.biases[2][0] = -747.0;
  const FeatureBag a = bag_from({Vec(8, 8000.0)}, "a");  // saturates to 1.0
  const FeatureBag n = bag_from({Vec(8, 0.0)}, "n");     // saturates to 0.0
  const std::vector<BagPair> pairs = {{&a, &n}};
  CHECK(batch_objective(pairs, head, 0.0) == 0.0);  // hinge inactive
  CHECK(std::fabs(batch_objective(pairs, head, 1.0) - 1.0) <= 1e-12);
}

TEST_CASE("backward: inactive hinge with lambda=0 gives exactly zero gradients") {
  FcHead head = FcHead::zeros({1, 1, 1, 1});
  head.weights[0].a[0] = 786.0;
  head.weights[1].a[0] = 1.0;
  head.weights[2].a[0] = 1.0;
  head.biases[2][0] = -746.0;
  const FeatureBag a = bag_from({{1.0}}, "a");
  const FeatureBag n = bag_from({{0.0}}, "n");
  const BackwardResult res = backward({{&a, &n}}, head, 0.0);
  CHECK(res.loss == 0.0);
  for (double g : flat_grads(res.grads)) CHECK(g == 0.0);
}

TEST_CASE("backward: zero hinge with lambda>0 leaves exactly 2*lambda*w") {
  FcHead head = FcHead::zeros({8, 8, 4, 1});
  for (Mat& W : head.weights) {
    for (double& w : W.a) w = 0.1;
  }
  head.biases[2][0] = -747.0;
  const FeatureBag a = bag_from({Vec(8, 8000.0)}, "a");
  const FeatureBag n = bag_from({Vec(8, 0.0)}, "n");
  const double lambda = 0.25;
  const BackwardResult res = backward({{&a, &n}}, head, lambda);
  for (size_t l = 0; l < 3; ++l) {
    for (size_t i = 0; i < res.grads.w[l].a.size(); ++i) {
      CHECK(res.grads.w[l].a[i] == 2.0 * lambda * 0.1);
    }
    for (double g : res.grads.b[l]) CHECK(g == 0.0);
  }
}

TEST_CASE("backward routes tied maxima to the lowest segment index") {
  SplitMix64 rng(6);
  FcHead head = FcHead::glorot({5, 4, 3, 1}, rng);
  Vec x(5), y(5);
  for (double& v : x) v = rng.next_double();
  for (double& v : y) v = -rng.next_double();
  const FeatureBag dup = bag_from({x, x, x}, "dup");  // identical segments tie
  const FeatureBag solo = bag_from({x}, "solo");
  const FeatureBag n = bag_from({y}, "n");
  const BackwardResult with_ties = backward({{&dup, &n}}, head, 1e-3);
  const BackwardResult without = backward({{&solo, &n}}, head, 1e-3);
  CHECK(with_ties.loss == without.loss);
  const auto g1 = flat_grads(with_ties.grads);
  const auto g2 = flat_grads(without.grads);
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("deep MIL gradients match central finite differences") {
  SplitMix64 rng(42);
  const double lambdas[] = {0.0, 1e-3, 0.01};
  for (int trial = 0; trial < 30; ++trial) {
    RandomCase rc = draw_deep_case(rng, false);
    const std::vector<BagPair> pairs = {{&rc.a, &rc.n}};
    const double lambda = lambdas[trial % 3];
    const BackwardResult res = backward(pairs, rc.model.fc, lambda);
    CHECK(std::fabs(res.loss - batch_objective(pairs, rc.model.fc, lambda)) <= 1e-12);
    const auto analytic = flat_grads(res.grads);
    auto objective = [&]() { return batch_objective(pairs, rc.model.fc, lambda); };
    CHECK(max_fd_error(rc.model, objective, analytic) <= 1e-4);
  }
}

TEST_CASE("deep MIL gradients match finite differences through a frozen dropout mask") {
  SplitMix64 rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    RandomCase rc = draw_deep_case(rng, true);
    const std::vector<BagPair> pairs = {{&rc.a, &rc.n}};
    const double lambda = 1e-3;
    const BackwardResult res = backward(pairs, rc.model.fc, lambda, &rc.masks);
    const auto analytic = flat_grads(res.grads);
    auto objective = [&]() { return batch_objective(pairs, rc.model.fc, lambda, &rc.masks); };
    CHECK(max_fd_error(rc.model, objective, analytic) <= 1e-4);
  }
}

TEST_CASE("dropout rate 0 is bit-identical to no dropout") {
  SplitMix64 rng(7);
  FcHead head = FcHead::glorot({6, 5, 4, 1}, rng);
  Vec x(6);
  for (double& v : x) v = rng.next_double();
  DropoutMask zero = sample_dropout_mask(rng, 0.0, 5, 4);
  CHECK(zero.empty());
  CHECK(fc_forward(head, x, &zero) == fc_forward(head, x));
}

TEST_CASE("inverted dropout scales kept units by 1/(1-rate)") {
  SplitMix64 rng(8);
  FcHead head = FcHead::glorot({6, 5, 4, 1}, rng);
  Vec x(6);
  for (double& v : x) v = rng.next_double();
  DropoutMask mask;
  mask.rate = 0.6;
  mask.keep1.assign(5, 1);
  mask.keep2.assign(4, 1);
  mask.keep1[2] = 0;
  const double got = fc_forward(head, x, &mask);
  const double want = oracle::fc_forward(head, x, &mask).score;
  CHECK(std::fabs(got - want) <= 1e-15);
}

TEST_CASE("softmax is stable and shift-invariant") {
  const Vec logits = {1000.0, 1000.5, 999.0};
  const Vec a = softmax_stable(logits);
  double sum = 0.0;
  for (double v : a) {
    CHECK(v > 0.0);
    CHECK(std::isfinite(v));
    sum += v;
  }
  CHECK(std::fabs(sum - 1.0) <= 1e-12);
  Vec shifted = logits;
  for (double& v : shifted) v -= 1000.0;
  const Vec b = softmax_stable(shifted);
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-12);
}

TEST_CASE("attention pooling: singleton bag gets weight exactly 1") {
  SplitMix64 rng(9);
  const AttentionHead att = AttentionHead::glorot(4, 7, rng);
  Vec h(7);
  for (double& v : h) v = rng.next_double();
  const auto result = attention_pool({h}, att);
  REQUIRE(result.weights.size() == 1);
  CHECK(result.weights[0] == 1.0);
  for (size_t i = 0; i < h.size(); ++i) CHECK(result.pooled[i] == h[i]);
}

TEST_CASE("attention pooling: identical instances share weight 1/K") {
  SplitMix64 rng(10);
  const AttentionHead att = AttentionHead::glorot(3, 5, rng);
  Vec h(5);
  for (double& v : h) v = rng.next_double();
  for (int k = 2; k <= 6; ++k) {
    const auto result = attention_pool(std::vector<Vec>(static_cast<size_t>(k), h), att);
    for (double a : result.weights) CHECK(std::fabs(a - 1.0 / k) <= 1e-12);
  }
}

TEST_CASE("attention pooling matches the two-pass oracle on random cases") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int m_dim = 1 + static_cast<int>(rng.next_below(16));
    const int att_dim = 1 + static_cast<int>(rng.next_below(8));
    const int k = 1 + static_cast<int>(rng.next_below(8));
    const AttentionHead att = AttentionHead::glorot(att_dim, m_dim, rng);
    std::vector<Vec> instances(static_cast<size_t>(k));
    for (Vec& h : instances) {
      h.resize(static_cast<size_t>(m_dim));
      for (double& v : h) v = 2.0 * rng.next_double() - 1.0;
    }
    const auto result = attention_pool(instances, att);
    const auto want = oracle::attention_weights(instances, att);
    double sum = 0.0;
    for (size_t i = 0; i < result.weights.size(); ++i) {
      CHECK(std::fabs(result.weights[i] - want[i]) <= 1e-12);
      CHECK(result.weights[i] > 0.0);
      sum += result.weights[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
    // pooled vector equals the weighted sum of instances
    for (int c = 0; c < m_dim; ++c) {
      double z = 0.0;
      for (int i = 0; i < k; ++i) z += want[static_cast<size_t>(i)] * instances[static_cast<size_t>(i)][static_cast<size_t>(c)];
      CHECK(std::fabs(result.pooled[static_cast<size_t>(c)] - z) <= 1e-12);
    }
  }
}

TEST_CASE("attention pooling rejects dimension mismatches") {
  const AttentionHead att = AttentionHead::zeros(2, 4);
  CHECK_THROWS_AS(attention_pool({Vec(3, 0.0)}, att), DataError);
  CHECK_THROWS_AS(attention_pool({}, att), DataError);
}

TEST_CASE("attention bag loss is ln 2 at probability one half") {
  const FcHead head = FcHead::zeros({4, 3, 2, 1});
  const Vec z(2, 0.0);
  CHECK(std::fabs(attention_bag_loss(z, 0, head) - std::log(2.0)) <= 1e-15);
  CHECK(std::fabs(attention_bag_loss(z, 1, head) - std::log(2.0)) <= 1e-15);
}

TEST_CASE("attention bag loss decreases monotonically as p approaches the label") {
  FcHead head = FcHead::zeros({4, 3, 2, 1});
  double prev1 = std::numeric_limits<double>::infinity();
  double prev0 = -1.0;
  for (double b3 : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    head.biases[2][0] = b3;
    const double l1 = attention_bag_loss(Vec(2, 0.0), 1, head);
    const double l0 = attention_bag_loss(Vec(2, 0.0), 0, head);
    CHECK(l1 < prev1);   // p grows toward 1, label-1 loss falls
    CHECK(l0 > prev0);   // and the label-0 loss rises
    prev1 = l1;
    prev0 = l0;
  }
  head.biases[2][0] = 50.0;
  CHECK(attention_bag_loss(Vec(2, 0.0), 1, head) <= 1e-12);
}

TEST_CASE("bce_loss clamps its probability") {
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(std::isfinite(bce_loss(1.0, 0)));
  CHECK(bce_loss(0.0, 1) == -std::log(1e-12));
}

TEST_CASE("attention gradients match central finite differences") {
  SplitMix64 rng(77);
  const double lambdas[] = {0.0, 1e-3, 0.01};
  for (int trial = 0; trial < 20; ++trial) {
    RandomAttentionCase rc = draw_attention_case(rng, false);
    const std::vector<LabeledBag> bags = {{&rc.bag0, 1}, {&rc.bag1, 0}};
    const double lambda = lambdas[trial % 3];
    const BackwardResult res = attention_backward(bags, rc.model, lambda);
    CHECK(std::fabs(res.loss - attention_batch_objective(bags, rc.model, lambda)) <= 1e-12);
    const auto analytic = flat_grads(res.grads);
    auto objective = [&]() { return attention_batch_objective(bags, rc.model, lambda); };
    CHECK(max_fd_error(rc.model, objective, analytic) <= 1e-4);
  }
}

TEST_CASE("attention gradients match finite differences through frozen dropout") {
  SplitMix64 rng(78);
  for (int trial = 0; trial < 8; ++trial) {
    RandomAttentionCase rc = draw_attention_case(rng, true);
    const std::vector<LabeledBag> bags = {{&rc.bag0, 1}, {&rc.bag1, 0}};
    const double lambda = 1e-3;
    const BackwardResult res = attention_backward(bags, rc.model, lambda, &rc.masks);
    const auto analytic = flat_grads(res.grads);
    auto objective = [&]() {
      return attention_batch_objective(bags, rc.model, lambda, &rc.masks);
    };
    CHECK(max_fd_error(rc.model, objective, analytic) <= 1e-4);
  }
}

TEST_CASE("model_bag_score: deep MIL takes the max segment score") {
  SplitMix64 rng(12);
  MilModel model;
  model.fc = FcHead::glorot({4, 3, 2, 1}, rng);
  FeatureBag bag = testing::random_feature_bag(rng, 5, 4);
  const Vec scores = score_segments(model.fc, bag);
  CHECK(model_bag_score(model, bag) == *std::max_element(scores.begin(), scores.end()));
}

TEST_CASE("checkpoints round-trip both model kinds bit-exactly") {
  TempDir tmp("ckpt");
  SplitMix64 rng(13);

  MilModel deep;
  deep.fc = FcHead::glorot({6, 5, 4, 1}, rng);
  save_checkpoint(tmp.file("deep.wmck"), deep);
  const MilModel deep2 = load_checkpoint(tmp.file("deep.wmck"));
  CHECK(deep2.kind == MilModel::Kind::DeepMil);
  CHECK(checkpoint_bytes(deep2) == checkpoint_bytes(deep));
  for (size_t l = 0; l < 3; ++l) {
    CHECK(deep2.fc.weights[l].a == deep.fc.weights[l].a);
    CHECK(deep2.fc.biases[l] == deep.fc.biases[l]);
  }

  MilModel att;
  att.kind = MilModel::Kind::Attention;
  att.fc = FcHead::glorot({6, 5, 4, 1}, rng);
  att.attention = AttentionHead::glorot(3, 4, rng);
  save_checkpoint(tmp.file("att.wmck"), att);
  const MilModel att2 = load_checkpoint(tmp.file("att.wmck"));
  REQUIRE(att2.attention.has_value());
  CHECK(att2.attention->V.a == att.attention->V.a);
  CHECK(att2.attention->w == att.attention->w);
  // attention parameters sit after the FC block: the deep prefix of both
  // files only differs in the kind field and the dim table
  CHECK(checkpoint_bytes(att).size() ==
        checkpoint_bytes(deep).size() + 8 /* dims */ + (3 * 4 + 3) * 8 /* V,w */);
}

TEST_CASE("checkpoint loading rejects corrupted headers and dims") {
  TempDir tmp("ckptbad");
  SplitMix64 rng(14);
  MilModel model;
  model.fc = FcHead::glorot({3, 3, 2, 1}, rng);
  save_checkpoint(tmp.file("ok.wmck"), model);
  std::string bytes = read_file(tmp.file("ok.wmck"));

  std::string bad = bytes;
  bad[0] = 'Z';
  write_file(tmp.file("m.wmck"), bad);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("m.wmck")), DataError);

  bad = bytes;
  bad[4] = 3;  // version
  write_file(tmp.file("v.wmck"), bad);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("v.wmck")), DataError);

  write_file(tmp.file("t.wmck"), bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(tmp.file("t.wmck")), DataError);

  bad = bytes;
  bad[16] = 9;  // first layer out-dim: breaks the dim chain
  write_file(tmp.file("d.wmck"), bad);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("d.wmck")), DataError);
}
