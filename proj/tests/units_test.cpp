#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pfn/error.hpp"
#include "pfn/units.hpp"
#include "support.hpp"

namespace pfn {
namespace {

double elu(double x) { return x > 0 ? x : std::expm1(x); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void set(ParameterStore& store, const std::string& name, std::vector<double> v) {
  auto& t = store[store.find(name)].tensor;
  ASSERT_EQ(t.size(), v.size()) << name;
  std::copy(v.begin(), v.end(), t.values().begin());
}

TEST(TableUnit, ZeroOutputLayerGivesOneHalf) {
  std::mt19937_64 rng(1);
  ParameterStore store;
  const TableUnit unit(store, "ner", 3, 4, 2, true);
  test::randomize(store, rng, 1.0);
  set(store, "ner.output.weight", std::vector<double>(8, 0.0));
  set(store, "ner.output.bias", {0.0, 0.0});
  Tape tape;
  const Var p = unit.fill(tape, std::as_const(store), tape.constant(test::random_tensor({3, 3}, rng)),
                          tape.constant(test::uniform(3, rng)));
  EXPECT_EQ(tape.shape(p), (Shape{9, 2}));
  for (double v : tape.value(p)) EXPECT_EQ(v, 0.5);
}

TEST(TableUnit, ScalarInstanceByHand) {
  ParameterStore store;
  const TableUnit unit(store, "ner", 1, 1, 1, false);
  set(store, "ner.span.weight", {0.7, -1.3});
  set(store, "ner.span.bias", {0.2});
  set(store, "ner.output.weight", {1.5});
  set(store, "ner.output.bias", {-0.4});
  const double h[2] = {0.9, -0.6};
  Tape tape;
  const auto p = tape.value(unit.fill(tape, std::as_const(store), tape.constant(Tensor::matrix(2, 1, {h[0], h[1]})),
                                      std::nullopt));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(p[i * 2 + j], sigmoid(1.5 * elu(0.7 * h[i] - 1.3 * h[j] + 0.2) - 0.4), 1e-15);
}

TEST(TableUnit, PairOrderMatters) {
  std::mt19937_64 rng(2);
  ParameterStore store;
  const TableUnit unit(store, "re", 4, 4, 1, true);
  test::randomize(store, rng, 1.0);
  Tape tape;
  const auto p = tape.value(unit.fill(tape, std::as_const(store), tape.constant(test::random_tensor({3, 4}, rng)),
                                      tape.constant(test::uniform(4, rng))));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) EXPECT_NE(p[i * 3 + j], p[j * 3 + i]);
}

TEST(TableUnit, RejectsMissingGlobalAndBadWidth) {
  ParameterStore store;
  const TableUnit unit(store, "ner", 2, 2, 1, true);
  Tape tape;
  const Var h = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_THROW(unit.fill(tape, std::as_const(store), h, std::nullopt), DimensionError);
  EXPECT_THROW(unit.fill(tape, std::as_const(store), tape.constant(Tensor::matrix(1, 3, {1, 2, 3})),
                         tape.constant({0.0, 0.0})),
               DimensionError);
  EXPECT_THROW(TableUnit(store, "x", 2, 2, 0, true), ConfigError);
}

TEST(JointLoss, SingleCellIsLn2) {
  ScoreTables pred(1, 1, 1), gold(1, 1, 1);
  pred.entity = {0.5};
  pred.relation = {0.5};
  gold.entity = {1.0};
  gold.relation = {0.0};
  EXPECT_NEAR(joint_loss(pred, gold, {}), 2.0 * std::log(2.0), 1e-15);
}

TEST(JointLoss, PerfectFitIsNearZero) {
  std::mt19937_64 rng(3);
  const std::size_t n = 5, e = 3, r = 2;
  ScoreTables gold(n, e, r);
  for (double& v : gold.entity) v = static_cast<double>(rng() % 2);
  for (double& v : gold.relation) v = static_cast<double>(rng() % 2);
  const double loss = joint_loss(gold, gold, {});
  EXPECT_GE(loss, 0.0);
  EXPECT_LE(loss, n * n * (e + r) * 1e-6);
}

TEST(JointLoss, TwoByTwoByHand) {
  ScoreTables pred(2, 1, 1), gold(2, 1, 1);
  pred.entity = {0.9, 0.2, 0.7, 0.4};
  gold.entity = {1, 0, 1, 1};
  pred.relation = {0.1, 0.8, 0.3, 0.6};
  gold.relation = {0, 1, 1, 0};
  auto bce = [](double p, double y) { return -(y * std::log(p) + (1 - y) * std::log(1 - p)); };
  // Cell (1,0) of the entity table is below the diagonal.
  const double ner = bce(0.9, 1) + bce(0.2, 0) + bce(0.4, 1);
  const double re = bce(0.1, 0) + bce(0.8, 1) + bce(0.3, 1) + bce(0.6, 0);
  EXPECT_NEAR(joint_loss(pred, gold, {}), ner + re, 1e-14);

  LossOptions unmasked;
  unmasked.mask_lower_triangle = false;
  EXPECT_NEAR(joint_loss(pred, gold, unmasked), ner + bce(0.7, 1) + re, 1e-14);

  LossOptions normalized;
  normalized.normalize = true;
  EXPECT_NEAR(joint_loss(pred, gold, normalized), ner / 3 + re / 4, 1e-14);
}

TEST(JointLoss, TapeAndPlainEvaluationsAgree) {
  std::mt19937_64 rng(4);
  const ScoreTables pred = test::random_tables(rng, 4, 2, 3);
  ScoreTables gold(4, 2, 3);
  for (double& v : gold.entity) v = static_cast<double>(rng() % 2);
  for (double& v : gold.relation) v = static_cast<double>(rng() % 2);
  Tape tape;
  const Var loss = joint_loss(tape, tape.constant(Tensor::matrix(16, 2, pred.entity)),
                              tape.constant(Tensor::matrix(16, 3, pred.relation)), gold, {});
  EXPECT_NEAR(tape.scalar(loss), joint_loss(pred, gold, {}), 1e-12);
  EXPECT_THROW(joint_loss(tape, tape.constant(Tensor::matrix(9, 2, std::vector<double>(18, 0.5))),
                          tape.constant(Tensor::matrix(16, 3, pred.relation)), gold, {}),
               DimensionError);
}

TEST(JointLoss, ZeroOnlyAtGold) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreTables gold(3, 2, 1);
    for (double& v : gold.entity) v = static_cast<double>(rng() % 2);
    for (double& v : gold.relation) v = static_cast<double>(rng() % 2);
    ScoreTables pred = gold;
    const std::size_t cell = rng() % pred.relation.size();
    pred.relation[cell] = 0.5;
    EXPECT_GT(joint_loss(pred, gold, {}), joint_loss(gold, gold, {}));
  }
}

TEST(Decode, AllZeroTablesAreEmpty) {
  const ScoreTables t(4, 2, 2);
  const DecodedResult r = decode_universal(t);
  EXPECT_TRUE(r.entities.empty());
  EXPECT_TRUE(r.triples.empty());
}

TEST(Decode, EntityWithoutRelation) {
  ScoreTables t(3, 1, 1);
  t.entity_at(0, 1, 0) = 0.8;
  t.relation_at(0, 0, 0) = 0.49;
  const DecodedResult r = decode_universal(t);
  ASSERT_EQ(r.entities.size(), 1u);
  EXPECT_EQ(r.entities[0], (EntitySpan{0, 1, 0}));
  EXPECT_TRUE(r.triples.empty());
}

TEST(Decode, ThresholdTiesAreAccepted) {
  ScoreTables t(2, 1, 1);
  t.entity_at(0, 0, 0) = 0.5;
  t.entity_at(1, 1, 0) = 0.5;
  t.relation_at(0, 1, 0) = 0.5;
  const DecodedResult r = decode_universal(t);
  EXPECT_EQ(r.entities.size(), 2u);
  ASSERT_EQ(r.triples.size(), 1u);
  EXPECT_EQ(r.head_only(), (std::vector<HeadTriple>{{0, 0, 1}}));
}

TEST(Decode, SharedStartsGiveCrossProduct) {
  ScoreTables t(3, 2, 1);
  t.entity_at(0, 0, 0) = 0.9;
  t.entity_at(0, 1, 1) = 0.9;
  t.entity_at(2, 2, 0) = 0.9;
  t.relation_at(0, 2, 0) = 0.9;
  const DecodedResult r = decode_universal(t);
  EXPECT_EQ(r.triples.size(), 2u);
  EXPECT_EQ(r.triples, test::brute_force_decode(t).triples);
  EXPECT_EQ(r.head_only().size(), 1u);
}

TEST(Decode, UniversalMatchesBruteForce) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const ScoreTables t = test::random_tables(rng, 1 + rng() % 6, 1 + rng() % 3, 1 + rng() % 3);
    const Thresholds th{0.3 + 0.5 * (rng() % 100) / 100.0, 0.3 + 0.5 * (rng() % 100) / 100.0};
    const DecodedResult r = decode_universal(t, th);
    const DecodedResult oracle = test::brute_force_decode(t, th);
    EXPECT_EQ(r.entities, oracle.entities);
    EXPECT_EQ(r.triples, oracle.triples);
  }
}

TEST(Decode, SelectiveEquivalences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const ScoreTables t = test::random_tables(rng, n, 2, 2);
    std::vector<EntitySpan> all;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        for (int k = 0; k < 2; ++k) all.push_back({i, j, k});
    const DecodedResult universal = decode_universal(t);
    EXPECT_EQ(decode_selective(t, all).triples, universal.triples);
    EXPECT_TRUE(decode_selective(t, {}).triples.empty());

    std::vector<EntitySpan> gold;
    for (std::size_t g = 0; g < 2 && g < n; ++g) gold.push_back({rng() % n, rng() % n, 0});
    for (auto& e : gold) {
      if (e.start > e.end) std::swap(e.start, e.end);
    }
    auto gold_start = [&](std::size_t i) {
      return std::any_of(gold.begin(), gold.end(), [&](const EntitySpan& e) { return e.start == i; });
    };
    const DecodedResult oracle =
        test::brute_force_decode(t, {}, [&](std::size_t i, std::size_t m) { return gold_start(i) && gold_start(m); });
    EXPECT_EQ(decode_selective(t, gold).triples, oracle.triples);
  }
}

TEST(Decode, RaisingThresholdsNeverAddsOutputs) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoreTables t = test::random_tables(rng, 1 + rng() % 6, 2, 2);
    std::size_t prev_entities = SIZE_MAX, prev_triples = SIZE_MAX;
    for (double th = 0.05; th < 1.0; th += 0.1) {
      const DecodedResult r = decode_universal(t, {th, 0.5});
      EXPECT_LE(r.entities.size(), prev_entities);
      EXPECT_LE(r.triples.size(), prev_triples);
      prev_entities = r.entities.size();
      prev_triples = r.triples.size();
    }
    prev_triples = SIZE_MAX;
    for (double th = 0.05; th < 1.0; th += 0.1) {
      const DecodedResult r = decode_universal(t, {0.5, th});
      EXPECT_LE(r.triples.size(), prev_triples);
      prev_triples = r.triples.size();
    }
  }
}

TEST(Decode, TriplesReferenceDecodedEntities) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const DecodedResult r = decode_universal(test::random_tables(rng, 5, 2, 2));
    for (const auto& tr : r.triples) {
      EXPECT_TRUE(std::binary_search(r.entities.begin(), r.entities.end(), tr.subject));
      EXPECT_TRUE(std::binary_search(r.entities.begin(), r.entities.end(), tr.object));
    }
    for (const auto& e : r.entities) EXPECT_LE(e.start, e.end);
  }
}

TEST(Decode, StrategyNamesRoundTrip) {
  for (auto s : {DecodingStrategy::universal, DecodingStrategy::selective})
    EXPECT_EQ(parse_decoding(to_string(s)), s);
  EXPECT_THROW(parse_decoding("greedy"), ConfigError);
}

}  // namespace
}  // namespace pfn
