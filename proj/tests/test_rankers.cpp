#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "keydesc/dense.hpp"
#include "keydesc/rankers.hpp"
#include "support/stubs.hpp"
#include "support/synthetic.hpp"

namespace keydesc {
namespace {

Instance with_passages(std::vector<std::string> passages, std::string reference = "a b c") {
  return {"E", "T", {}, {}, std::move(passages), std::move(reference)};
}

TEST(Query, Serialization) {
  const Instance inst{"Kenny Jay", "Career", {{"sport", "x"}, {"birth_date", "y"}}, {"city"}, {"p"}, "r"};
  EXPECT_EQ(Query::of(inst).text(), "Kenny Jay Career sport birth_date city");
}

TEST(Oracle, SpecExamples) {
  const auto r = rank_rouge2_oracle(with_passages({"a b c", "x y"}), 2);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.scores, (std::vector<double>{1.0, 0.0}));
  // Reference bigrams: ab bc cd; passages share 1/3, 2/3, 0.
  const auto s = rank_rouge2_oracle(with_passages({"a b x", "a b c d", "q r"}, "a b c d"), 3);
  EXPECT_EQ(s.order, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_NEAR(s.scores[0], 1.0, 1e-12);
  EXPECT_NEAR(s.scores[1], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(silver_sequence(with_passages({"x y", "a b c"}), 2), (std::vector<std::size_t>{1, 0}));
}

TEST(TfIdf, SpecExamples) {
  // Query "E T": "t" appears twice in p0 and once in p1; df = 2 -> ratio 2:1.
  const auto r = rank_tfidf(with_passages({"t t", "t x"}), 2);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(r.scores[0] / r.scores[1], 2.0, 1e-12);
  EXPECT_NEAR(r.scores[1], 1.0, 1e-12);  // idf = ln(3/3) + 1
  const auto none = rank_tfidf(with_passages({"x", "y", "z"}), 3);
  EXPECT_EQ(none.order, (std::vector<std::size_t>{0, 1, 2}));
  const auto unique = rank_tfidf(with_passages({"x", "y e", "z"}), 1);
  EXPECT_EQ(unique.order, (std::vector<std::size_t>{1}));
  EXPECT_NEAR(unique.scores[0], std::log(4.0 / 2.0) + 1.0, 1e-12);
}

TEST(SeqRank, RedundancyPenaltySkipsDuplicate) {
  // p0 and p1 are identical and most relevant; p2 is less relevant but different.
  Instance inst{"alpha", "beta", {}, {}, {"alpha beta gamma", "alpha beta gamma", "alpha delta", "zeta"}, "r"};
  const auto plain = seq_rank({1.0, 0.0}, inst, 2);
  EXPECT_EQ(plain.order, (std::vector<std::size_t>{0, 1}));
  // Hand trace with idf = ln(5/(df+1)) + 1: step-2 scores are p1 0.79 - 1,
  // p2 0.3385 - 0.2674, p3 0.
  const auto diverse = seq_rank({1.0, 1.0}, inst, 2);
  EXPECT_NEAR(diverse.scores[1], 0.3385 - 0.2674, 1e-3);
  EXPECT_EQ(diverse.order, (std::vector<std::size_t>{0, 2}));
  EXPECT_NO_THROW(diverse.validate());
  EXPECT_EQ(seq_rank({1.0, 5.0}, inst, 1).order, (std::vector<std::size_t>{0}));
}

TEST(SeqRank, BetaZeroIsIndependentCosineSort) {
  const auto corpus = test_support::redundant_corpus(5, 9);
  for (const auto& inst : corpus) {
    const TfIdfIndex index(inst.passages);
    const auto qv = index.vector_of(tokenize(Query::of(inst).text()));
    std::vector<double> rel;
    for (std::size_t i = 0; i < inst.passages.size(); ++i) rel.push_back(TfIdfIndex::cosine(qv, index.passage_vector(i)));
    EXPECT_EQ(seq_rank({}, inst, 10).order, top_k(rel, 10).order);
    // Same relevance function -> same argmax as an independent ranker.
    EXPECT_EQ(seq_rank({1.0, 0.7}, inst, 1).order.front(), top_k(rel, 1).order.front());
  }
}

TEST(SeqFit, SelectsBetaZeroWhenRedundancyNeverHelps) {
  // The duplicated passages are exactly the oracle's top-2.
  std::vector<Instance> train;
  for (int i = 0; i < 3; ++i)
    train.push_back({"E", "T", {}, {}, {"e t a b", "e t a b", "e c d", "z"}, "e t a b"});
  const SeqGrid grid{{1.0, 0.0}, {1.0, 0.5}};
  EXPECT_EQ(seq_fit(train, 2, grid).beta, 0.0);
  EXPECT_EQ(seq_fit(train, 2, {{2.0, 3.0}}).alpha, 2.0);
  EXPECT_THROW(seq_fit(train, 2, {}), ConfigError);
  EXPECT_THROW(seq_fit({}, 2, grid), PreconditionError);
  EXPECT_THROW(seq_fit(train, 2, {{-1.0, 0.0}}), ConfigError);
}

TEST(RecallAtK, Examples) {
  const auto a = top_k({3, 2, 1, 0}, 2), b = top_k({0, 1, 2, 3}, 2);
  EXPECT_EQ(recall_at_k(a, a, 2), 1.0);
  EXPECT_EQ(recall_at_k(a, b, 2), 0.0);
  const auto small = top_k({1, 0}, 10);
  EXPECT_EQ(recall_at_k(small, small, 10), 1.0);
}

TEST(Neural, InputsAreByteExact) {
  const Instance inst{"Kenny Jay", "Career", {{"sport", "x"}, {"birth_date", "y"}}, {"city"}, {"p zero", "p one"}, "r"};
  const auto in = neural_ranker_inputs(inst);
  ASSERT_EQ(in.size(), 2u);
  EXPECT_EQ(in[0], "question: [Entity] Kenny Jay [Title] Career [Keys] sport birth_date + city index: 0 context: p zero");
  EXPECT_EQ(in[1], "question: [Entity] Kenny Jay [Title] Career [Keys] sport birth_date + city index: 1 context: p one");
}

TEST(Neural, ParseDropsInvalidAndPads) {
  const auto r = parse_index_sequence("3 x 3 -1 9 1", 5, 4);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{3, 1, 0, 2}));
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(parse_index_sequence("", 2, 5).order, (std::vector<std::size_t>{0, 1}));
}

TEST(Neural, RanksViaGenerateBackend) {
  test_support::ScriptedBackend gen;
  std::size_t seen_inputs = 0;
  gen.on_generate = [&](const std::vector<std::string>& in, std::size_t) {
    seen_inputs = in.size();
    return GenerateResult{"2 0", false};
  };
  const auto r = rank_neural(with_passages({"a", "b", "c"}), 2, gen);
  EXPECT_EQ(seen_inputs, 3u);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{2, 0}));
}

TEST(Rankers, OutputsSatisfyInvariantsOnRandomInstances) {
  const auto corpus = test_support::topic_corpus(12, 21, 4, 9);
  const auto model = dense::DenseRankerModel::initialize({512, true, true}, 16, 3);
  for (const auto& inst : corpus)
    for (std::size_t k : {1u, 5u, 10u, 50u}) {
      for (const auto& r : {rank_rouge2_oracle(inst, k), rank_tfidf(inst, k), seq_rank({1.0, 0.5}, inst, k),
                            dense::dense_rank(model, inst, k)}) {
        EXPECT_NO_THROW(r.validate());
        EXPECT_EQ(r.order.size(), std::min(k, inst.passages.size()));
      }
      const auto oracle = rank_rouge2_oracle(inst, k);
      EXPECT_EQ(recall_at_k(oracle, oracle, k), 1.0);
    }
}

TEST(Rankers, JsonShapes) {
  const auto j = to_json(top_k({0.5, 1.0}, 1));
  EXPECT_EQ(j.dump(), R"({"order":[1],"scores":[1.0],"k":1,"num_passages":2})");
  const auto m = seq_model_from_json(to_json(SeqRankerModel{0.5, 2.0}));
  EXPECT_EQ(m.beta, 2.0);
  EXPECT_THROW(seq_model_from_json(nlohmann::json{{"alpha", 1}}), SchemaError);
}

}  // namespace
}  // namespace keydesc
