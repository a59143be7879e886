#include <gtest/gtest.h>

#include <memory>
#include <string>
#include <vector>

#include "keydesc/mafe.hpp"
#include "support/stubs.hpp"

namespace keydesc::mafe {
namespace {

using test_support::ScriptedBackend;
using test_support::verdict;

struct Fixture {
  std::string reference;
  std::vector<FactualTriple> triples;
};

std::vector<Fixture> identity_fixtures() {
  return {
      {"Kenny Jay was born in 1937. The sport of Kenny Jay was professional wrestling.",
       {{"Kenny Jay", "birth_date", "1937"}, {"Kenny Jay", "sport", "Professional wrestling"}}},
      {"Barack Obama was born in Hawaii. He served as president of the United States.",
       {{"Barack Obama", "birth_place", "Hawaii"}}},
      {"The priory of St Frideswide stood in Oxford until 1524.", {{"St Frideswide's Priory", "location", "Oxford"}}},
  };
}

TEST(Mafe, F1IsHarmonic) {
  EXPECT_DOUBLE_EQ(mafe_f1(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(mafe_f1(0, 0.7), 0.0);
  EXPECT_NEAR(mafe_f1(0.2, 0.3), 0.24, 1e-12);
}

TEST(Mafe, TripleContextAndAnswerSpan) {
  const std::vector<FactualTriple> t{{"Kenny Jay", "sport", "Professional wrestling"}, {"Kenny Jay", "birth_date", "1937"}};
  EXPECT_EQ(triple_context(t), "Kenny Jay sport professional wrestling. Kenny Jay birth date 1937.");
  const auto span = triple_answer_span(t[0]);
  EXPECT_EQ(span.sentence, "Kenny Jay sport professional wrestling");
  EXPECT_EQ(span.surface, "professional wrestling");
}

TEST(Mafe, SpansViaFallbackExtractor) {
  Backends b = Backends::all(std::make_shared<MockBackend>());
  b.spans = nullptr;
  std::vector<std::string> got;
  for (const auto& s : extract_spans("Barack Obama was born in Hawaii.", b)) got.push_back(s.surface);
  EXPECT_NE(std::find(got.begin(), got.end(), "Barack Obama"), got.end());
  EXPECT_NE(std::find(got.begin(), got.end(), "Hawaii"), got.end());
  EXPECT_TRUE(extract_spans("it is so", b).empty());
  EXPECT_TRUE(extract_spans("", b).empty());
}

TEST(Mafe, AnswerQuestionPreconditions) {
  MockBackend m;
  EXPECT_THROW(answer_question("", "ctx", m), PreconditionError);
  EXPECT_TRUE(answer_question("What?", "", m).unanswerable);
}

TEST(Mafe, MatchAnswersFollowsNliLabel) {
  ScriptedBackend nli;
  std::string premise, hypothesis;
  nli.on_nli = [&](std::string_view p, std::string_view h) {
    premise = p;
    hypothesis = h;
    return verdict(NliLabel::entailment);
  };
  EXPECT_EQ(match_answers("What sport?", "saxophone", "saxophonist", &nli, nullptr), 1.0);
  EXPECT_EQ(premise, "What sport? saxophone");
  EXPECT_EQ(hypothesis, "What sport? saxophonist");
  nli.on_nli = [](auto, auto) { return verdict(NliLabel::contradiction); };
  EXPECT_EQ(match_answers("Q?", "an american lawyer", "an american politician", &nli, nullptr), 0.0);
  EXPECT_EQ(match_answers("Q?", "x", "", &nli, nullptr), 0.0);
}

TEST(Mafe, MatchAnswersWithoutNliUsesTokenF1) {
  EXPECT_NEAR(match_answers("Q?", "the united kingdom", "united kingdom", nullptr, nullptr), 0.8, 1e-12);
}

TEST(Mafe, NeutralFallsBackToBertScore) {
  ScriptedBackend b({.embed_style = MockEmbedStyle::exact});
  b.on_nli = [](auto, auto) { return verdict(NliLabel::neutral); };
  // One-hot embeddings: two of three gold tokens have an exact partner.
  EXPECT_NEAR(match_answers("Q?", "liberal party members", "party members", &b, &b), 2 * (2.0 / 3) / (1 + 2.0 / 3), 1e-12);
}

TEST(Mafe, IdentityIsPerfect) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  for (const auto& f : identity_fixtures()) {
    const auto r = evaluate(f.reference, f.reference, f.triples, b);
    EXPECT_DOUBLE_EQ(r.recall, 1.0) << f.reference;
    EXPECT_DOUBLE_EQ(r.precision, 1.0) << f.reference;
    EXPECT_DOUBLE_EQ(r.f1, 1.0) << f.reference;
    for (const auto& item : r.recall_items)
      EXPECT_EQ(item.score, 1.0) << item.item.question << " -> " << item.predicted;
  }
}

TEST(Mafe, EmptyHypothesisIsZero) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  const auto f = identity_fixtures()[0];
  const auto r = evaluate("", f.reference, f.triples, b);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_TRUE(r.diagnostics.no_precision_questions);
  EXPECT_FALSE(r.recall_items.empty());
  for (const auto& item : r.recall_items) EXPECT_TRUE(item.unanswerable);
}

TEST(Mafe, EmptyReferenceIsPreconditionError) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  EXPECT_THROW(mafe_recall("x", "  ", {}, b), PreconditionError);
}

TEST(Mafe, RecallHandTraceHalf) {
  // Two questions; the first is answered and entailed, the second is unanswerable.
  auto s = std::make_shared<ScriptedBackend>();
  s->on_qa = [](std::string_view q, std::string_view) {
    if (q.find("___ was") != std::string_view::npos) return QaResult{"Kenny Jay", false, 1.0};
    return QaResult{};
  };
  Backends b = Backends::all(s);
  b.spans = nullptr;
  MafeOptions opts;
  const auto side = mafe_recall_items("anything", "Kenny Jay was born in 1937.", {}, b, opts);
  // Spans: "Kenny Jay", "born", "1937".
  ASSERT_EQ(side.items.size(), 3u);
  EXPECT_NEAR(side.score, 1.0 / 3.0, 1e-12);

  s->on_qg = [](const AnswerSpan& span) {
    if (span.surface == "born") throw BackendError("/v1/qg", "down");
    return MockBackend().qg(span);
  };
  const auto two = mafe_recall_items("anything", "Kenny Jay was born in 1937.", {}, b, opts);
  ASSERT_EQ(two.items.size(), 2u);
  EXPECT_EQ(two.qg_failures, 1u);
  EXPECT_DOUBLE_EQ(two.score, 0.5);
}

TEST(Mafe, PrecisionTakesMaxOverReferenceAndTriples) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  const std::string hyp = "Kenny Jay was born in 1937.";
  const std::string ref = "Kenny Jay wrestled in Minneapolis.";
  const std::vector<FactualTriple> triples{{"Kenny Jay", "birth_date", "1937"}};
  const auto side = mafe_precision_items(hyp, ref, triples, b);
  const auto it = std::find_if(side.items.begin(), side.items.end(), [](const ItemRecord& r) { return r.item.gold_answer == "1937"; });
  ASSERT_NE(it, side.items.end());
  EXPECT_EQ(it->predicted_triples, "1937");
  EXPECT_EQ(it->score_triples, 1.0);
  EXPECT_EQ(it->score_reference, 0.0);
  EXPECT_EQ(it->score, 1.0);
}

TEST(Mafe, HallucinationScoresZeroPrecision) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  const auto p = mafe_precision("Zebras migrate across Patagonia annually.", "Kenny Jay was born in 1937.",
                                {{"Kenny Jay", "birth_date", "1937"}}, b);
  EXPECT_EQ(p, 0.0);
}

TEST(Mafe, ReportIsDeterministicAcrossRunsAndParallelism) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  const auto f = identity_fixtures()[0];
  const std::string hyp = "Kenny Jay wrestled for the American Wrestling Association. He was born in Saint Paul.";
  const auto a = to_json(evaluate(hyp, f.reference, f.triples, b)).dump();
  const auto c = to_json(evaluate(hyp, f.reference, f.triples, b)).dump();
  MafeOptions par;
  par.parallelism = 4;
  const auto d = to_json(evaluate(hyp, f.reference, f.triples, b, par)).dump();
  EXPECT_EQ(a, c);
  EXPECT_EQ(a, d);
}

TEST(Mafe, ReportMeansMatchItems) {
  auto b = Backends::all(std::make_shared<MockBackend>());
  const auto f = identity_fixtures()[0];
  const auto r = evaluate("Kenny Jay wrestled in Minneapolis.", f.reference, f.triples, b);
  double s = 0;
  for (const auto& i : r.recall_items) s += i.score;
  EXPECT_NEAR(r.recall, s / static_cast<double>(r.recall_items.size()), 1e-12);
  s = 0;
  for (const auto& i : r.precision_items) s += i.score;
  EXPECT_NEAR(r.precision, s / static_cast<double>(r.precision_items.size()), 1e-12);
  for (const auto& i : r.recall_items) {
    EXPECT_GE(i.score, 0.0);
    EXPECT_LE(i.score, 1.0);
  }
}

TEST(Mafe, QuestionFilterDropsUnanswerableSourceQuestions) {
  auto s = std::make_shared<ScriptedBackend>();
  s->on_qa = [](auto, auto) { return QaResult{}; };
  auto b = Backends::all(s);
  MafeOptions opts;
  opts.filter_questions = true;
  const auto r = evaluate("Kenny Jay was born in 1937.", "Kenny Jay was born in 1937.", {}, b, opts);
  EXPECT_TRUE(r.recall_items.empty());
  EXPECT_TRUE(r.diagnostics.no_recall_questions);
  EXPECT_GT(r.diagnostics.filtered_questions, 0u);
}

TEST(Mafe, MissingQgBackendIsConfigError) {
  Backends b;
  EXPECT_THROW(evaluate("a", "b", {}, b), ConfigError);
}

}  // namespace
}  // namespace keydesc::mafe
