#include <gtest/gtest.h>

#include <json.hpp>

#include <random>

#include "fixtures.hpp"
#include "wukong/dataset.hpp"
#include "wukong/errors.hpp"
#include "wukong/evaluation.hpp"
#include "wukong/sampler.hpp"

using namespace wukong;

namespace {

double frac(const nlohmann::json& j) { return j[0].get<double>() / j[1].get<double>(); }

EvalCase make_case(std::string id, std::string prediction, std::vector<std::string> gts) {
  EvalCase c;
  c.case_id = std::move(id);
  c.question = "What is kept?";
  c.prediction = std::move(prediction);
  c.gt_answers = std::move(gts);
  return c;
}

class ThrowingBackend final : public LlmBackend {
 public:
  std::string backend_id() const override { return "down"; }
  BackendReply generate(const PromptAssembly&) override { throw BackendError("connection refused"); }
};

}  // namespace

TEST(Metrics, GoldenTable) {
  const auto cases = nlohmann::json::parse(read_file(fixtures::data_dir() / "metric_golden.json"));
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    const auto pred = c["prediction"].get<std::string>();
    const auto gts = c["gt_answers"].get<std::vector<std::string>>();
    SCOPED_TRACE("case " + std::to_string(c["case"].get<int>()));
    EXPECT_NEAR(anls(pred, gts), frac(c["anls"]), 1e-12);
    EXPECT_NEAR(token_f1(pred, gts), frac(c["token_f1"]), 1e-12);
    EXPECT_NEAR(rouge_l(pred, gts), frac(c["rouge_l"]), 1e-12);
    for (std::size_t i = 0; i < gts.size(); ++i) {
      EXPECT_EQ(levenshtein(normalize_answer(pred), normalize_answer(gts[i])), c["lev"][i].get<std::size_t>());
    }
  }
}

TEST(Metrics, Examples) {
  EXPECT_NEAR(anls("kitten", {"sitting"}), 4.0 / 7.0, 1e-12);
  EXPECT_DOUBLE_EQ(anls("abcd", {"abef"}), 0.5);
  EXPECT_DOUBLE_EQ(anls("abc", {"xyc"}), 0.0);
  EXPECT_DOUBLE_EQ(anls("Paris.", {"London", "paris"}), 1.0);
  EXPECT_DOUBLE_EQ(token_f1("the cat sat", {"the cat"}), 0.8);
  EXPECT_DOUBLE_EQ(anls("", {""}), 1.0);
  EXPECT_EQ(normalize_answer("  Hello,   World!! "), "hello, world");
  EXPECT_EQ(levenshtein("é", "e"), 1u);
  EXPECT_EQ(levenshtein("", "abc"), 3u);
}

TEST(Metrics, RangesAndSymmetry) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto a = fixtures::random_words(rng, 1 + rng() % 8);
    const auto b = fixtures::random_words(rng, 1 + rng() % 8);
    for (const double v : {anls(a, {b}), token_f1(a, {b}), rouge_l(a, {b})}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
    EXPECT_DOUBLE_EQ(token_f1(a, {b}), token_f1(b, {a}));
    EXPECT_DOUBLE_EQ(anls(a, {a}), 1.0);
    EXPECT_GE(anls(a, {b, a}), anls(a, {b}));
  }
}

TEST(Recall, Examples) {
  EXPECT_DOUBLE_EQ(*retrieval_recall({"a", "b", "c"}, {"b", "z"}, 5), 0.5);
  EXPECT_DOUBLE_EQ(*retrieval_recall({"a", "b", "c"}, {"c"}, 2), 0.0);
  EXPECT_FALSE(retrieval_recall({"a"}, {}, 5));
}

TEST(Recall, RandomRetrievalBaseline) {
  fixtures::TempDir dir;
  const BlobStore blobs(dir / "blobs");
  OfflineEmbedder embedder(OfflineEmbedder::Options{3, 64, false});
  EmbeddingCache cache;
  const ProviderIds ids{embedder.provider_id(), embedder.provider_id()};
  std::mt19937_64 rng(5);
  std::vector<EvalCase> cases;
  for (int d = 0; d < 10; ++d) {
    const auto doc = fixtures::synthetic_document(blobs, "doc" + std::to_string(d), 100, d, 12);
    for (const auto& c : doc.chunks()) embed_chunk_cached(cache, embedder, embedder, c);
    for (int q = 0; q < 200; ++q) {
      const auto query = fixtures::random_words(rng, 6) + " " + std::to_string(q);
      const auto ev = top_k(score_all(embed_text(embedder, query), doc, cache, ids), {5, 0});
      EvalCase c = make_case(std::to_string(d) + "-" + std::to_string(q), "x", {"y"});
      c.sampled_evidence = ev.chunk_ids();
      c.gt_evidence = {chunk_id(doc.chunks()[rng() % doc.chunks().size()])};
      cases.push_back(std::move(c));
    }
  }
  const auto report = evaluate_run(cases, 5);
  ASSERT_TRUE(report.overall.recall_at_k);
  EXPECT_NEAR(*report.overall.recall_at_k, 0.05, 0.02);
}

TEST(Judge, VerdictsAndUnavailability) {
  auto c = make_case("1", "Five.", {"five"});
  ScriptedBackend yes(std::map<std::string, std::string>{{"*", " 1\n"}});
  ScriptedBackend no(std::map<std::string, std::string>{{"*", "0 because"}});
  ScriptedBackend junk(std::map<std::string, std::string>{{"*", "maybe"}});
  ThrowingBackend down;
  EXPECT_EQ(gpt_acc(yes, c), 1);
  EXPECT_EQ(gpt_acc(no, c), 0);
  EXPECT_FALSE(gpt_acc(junk, c));
  EXPECT_FALSE(gpt_acc(down, c));
  const auto text = render_prompt(judge_prompt(c));
  EXPECT_NE(text.find("Five."), std::string::npos);
  EXPECT_NE(text.find("- five"), std::string::npos);
}

TEST(Run, AggregatesAndBuckets) {
  std::vector<EvalCase> cases;
  auto a = make_case("a", "five", {"five"});
  a.sampled_evidence = {"t1", "t2"};
  a.gt_evidence = {"t1"};
  a.doc_chunks = 5;
  a.prompt_tokens = 100;
  a.latency_ms = 10;
  a.judge = 1;
  auto b = make_case("b", "six", {"five"});
  b.doc_chunks = 60;
  b.k = 10;
  b.prompt_tokens = 300;
  b.latency_ms = 30;
  cases = {a, b};
  const auto r = evaluate_run(cases, 5, {10, 50});
  EXPECT_EQ(r.overall.case_count, 2u);
  EXPECT_DOUBLE_EQ(r.overall.anls, 0.5);
  EXPECT_DOUBLE_EQ(*r.overall.recall_at_k, 1.0);
  EXPECT_EQ(r.overall.recall_excluded, 1u);
  EXPECT_DOUBLE_EQ(r.overall.mean_tokens, 200.0);
  EXPECT_DOUBLE_EQ(r.overall.mean_latency_ms, 20.0);
  EXPECT_DOUBLE_EQ(*r.overall.gpt_acc, 1.0);
  EXPECT_EQ(r.by_k.size(), 2u);
  EXPECT_EQ(r.by_k.at(10).case_count, 1u);
  EXPECT_EQ(r.length_order, (std::vector<std::string>{"<10", ">=50"}));
  EXPECT_EQ(length_bucket_labels({10, 50}), (std::vector<std::string>{"<10", "10-49", ">=50"}));
  EXPECT_EQ(length_bucket(10, {10, 50}), "10-49");
  EXPECT_EQ(length_bucket(49, {10, 50}), "10-49");
  EXPECT_EQ(length_bucket(50, {10, 50}), ">=50");

  const auto table = format_report(r);
  EXPECT_NE(table.find("ANLS"), std::string::npos);
  EXPECT_NE(table.find("50.0"), std::string::npos);
  EXPECT_NE(format_length_table(r).find(">=50"), std::string::npos);
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_DOUBLE_EQ(j["overall"]["anls"].get<double>(), 0.5);
  EXPECT_TRUE(j["by_k"].contains("10"));

  EXPECT_THROW(evaluate_run({}, 5), EmptyRunError);
  EXPECT_THROW(evaluate_run(cases, 0), ConfigError);
  EXPECT_THROW(evaluate_run({make_case("z", "a", {})}, 5), DomainError);
}

TEST(Join, CorpusAndPredictions) {
  CorpusRecord r1{"qa-1", "paper-1", Strategy::TextOnly, "What?", {"five"}, {"t1"}, Split::Test, "g"};
  CorpusRecord r2{"qa-2", "paper-1", Strategy::Section, "Who?", {"me"}, {"t2"}, Split::Test, "g"};
  const auto corpus = encode_record(r1) + "\n" + encode_record(r2) + "\n";
  const std::string preds =
      R"({"id":"qa-1","prediction":"Five","sampled_evidence":[{"chunk_id":"t1"},"t3"],"prompt_tokens":9,"k":3})"
      "\n";
  const auto cases = join_cases(corpus, preds);
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].sampled_evidence, (std::vector<std::string>{"t1", "t3"}));
  EXPECT_EQ(cases[0].gt_evidence, std::vector<std::string>{"t1"});
  EXPECT_EQ(cases[0].k, 3u);
  EXPECT_EQ(cases[0].prompt_tokens, 9u);

  EXPECT_THROW(join_cases(corpus, R"({"id":"qa-9","prediction":"x"})"), IntegrityError);
  EXPECT_THROW(join_cases(corpus, R"({"id":"qa-1"})"), ParseError);
  EXPECT_THROW(join_cases(corpus, "{oops"), ParseError);
}
