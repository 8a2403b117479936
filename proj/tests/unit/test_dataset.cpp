#include <gtest/gtest.h>

#include <json.hpp>

#include <set>

#include "fixtures.hpp"
#include "wukong/dataset.hpp"
#include "wukong/errors.hpp"

using namespace wukong;
using wukong::fixtures::TempDir;

namespace {

struct Corpus {
  TempDir dir;
  BlobStore blobs{dir / "blobs"};
  OfflineEmbedder embedder{OfflineEmbedder::Options{5, 256, true}};
  EmbeddingCache cache;
  std::vector<ParsedDocument> docs;

  Corpus() {
    docs.push_back(fixtures::sample_paper(blobs));
    docs.push_back(fixtures::related_paper(blobs));
    for (const auto& d : docs) {
      for (const auto& c : d.chunks()) embed_chunk_cached(cache, embedder, embedder, c);
    }
  }
  SelectionContext ctx() const { return {&cache, embedder.provider_id(), 0.6}; }
  std::vector<const ParsedDocument*> pointers() const {
    std::vector<const ParsedDocument*> out;
    for (const auto& d : docs) out.push_back(&d);
    return out;
  }
};

QAPair pair(std::string question, std::vector<std::string> answers, Strategy s = Strategy::TextOnly) {
  QAPair p;
  p.id = "qa-" + std::to_string(std::hash<std::string>{}(question));
  p.question = std::move(question);
  p.answers = std::move(answers);
  p.evidence = EvidenceSelection{s, {"t0"}, "paper-1", 0};
  p.generator_id = "test";
  return p;
}

}  // namespace

TEST(Selection, ForcedTextOnly) {
  const ParsedDocument doc("one", "one.pdf", {fixtures::text_chunk("only", 0, {}, "The single paragraph.")});
  const auto sel = select_evidence(doc, Strategy::TextOnly, 42);
  EXPECT_EQ(sel.chunk_ids, std::vector<std::string>{"only"});
  EXPECT_THROW(select_evidence(doc, Strategy::ImageOnly, 1), StrategyUnsatisfiableError);
  EXPECT_THROW(select_evidence(doc, Strategy::ImageText, 1), StrategyUnsatisfiableError);
}

TEST(Selection, ImageTextResolvesReference) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  std::vector<Chunk> c;
  c.push_back(fixtures::text_chunk("t0", 0, {}, "Opening remarks without references."));
  c.push_back(fixtures::image_chunk(blobs, "i0", 1, "First.", "Figure 1"));
  c.push_back(fixtures::text_chunk("t1", 2, {}, "More text."));
  c.push_back(fixtures::text_chunk("t2", 3, {}, "Still nothing."));
  c.push_back(fixtures::text_chunk("t3", 4, {}, "Nothing here."));
  c.push_back(fixtures::text_chunk("t4", 5, {}, "As Figure 2 shows, the loss falls."));
  c.push_back(fixtures::image_chunk(blobs, "i1", 6, "Loss curve.", "Figure 2"));
  const ParsedDocument doc("refs", "refs.pdf", std::move(c));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(select_evidence(doc, Strategy::ImageText, seed).chunk_ids, (std::vector<std::string>{"t4", "i1"}));
  }
}

TEST(Selection, FigureReferences) {
  const auto refs = find_figure_refs("See Fig. 3 and table 2, also FIGURE 10.");
  ASSERT_EQ(refs.size(), 3u);
  EXPECT_EQ(refs[0], (FigureRef{"figure", "3"}));
  EXPECT_EQ(refs[1], (FigureRef{"table", "2"}));
  EXPECT_EQ(refs[2], (FigureRef{"figure", "10"}));
  EXPECT_EQ(parse_figure_label("Table 4"), (FigureRef{"table", "4"}));
  EXPECT_FALSE(parse_figure_label("Overview"));
}

TEST(Selection, SectionTakesWholeSection) {
  Corpus c;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto sel = select_evidence(c.docs[0], Strategy::Section, seed);
    check_selection(sel, c.docs[0]);
    std::set<std::vector<std::string>> paths;
    for (const auto& id : sel.chunk_ids) paths.insert(c.docs[0].effective_section(order_index(*c.docs[0].find(id))));
    EXPECT_EQ(paths.size(), 1u);
  }
}

TEST(Selection, CrossParagraphUsesRelatedness) {
  Corpus c;
  const auto sel = select_evidence(c.docs[1], Strategy::CrossParagraph, 3, c.ctx());
  check_selection(sel, c.docs[1], c.ctx());
  for (const auto& id : sel.chunk_ids) {
    EXPECT_NE(std::get<TextChunk>(*c.docs[1].find(id)).text.find("topic:sparsity"), std::string::npos);
  }
  EXPECT_THROW(select_evidence(c.docs[1], Strategy::CrossParagraph, 3), ConfigError);
  EXPECT_THROW(select_evidence(c.docs[0], Strategy::CrossParagraph, 3, c.ctx()), StrategyUnsatisfiableError);
}

TEST(Selection, CompositionInvariantsOverManySeeds) {
  Corpus c;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    for (const auto& doc : c.docs) {
      for (const auto s : all_strategies()) {
        try {
          const auto sel = select_evidence(doc, s, seed, c.ctx());
          check_selection(sel, doc, c.ctx());
          EXPECT_EQ(sel, select_evidence(doc, s, seed, c.ctx()));
          ++checked;
        } catch (const StrategyUnsatisfiableError&) {
          ASSERT_TRUE(s == Strategy::CrossParagraph && doc.doc_id() == "paper-1");
        }
      }
    }
  }
  EXPECT_GE(checked, 9000u);
}

TEST(Selection, CheckRejectsBadSelections) {
  Corpus c;
  const auto& doc = c.docs[0];
  EXPECT_THROW(check_selection({Strategy::TextOnly, {"i0"}, "paper-1", 0}, doc), IntegrityError);
  EXPECT_THROW(check_selection({Strategy::TextOnly, {"zz"}, "paper-1", 0}, doc), IntegrityError);
  EXPECT_THROW(check_selection({Strategy::ImageText, {"t0", "i2"}, "paper-1", 0}, doc), IntegrityError);
  EXPECT_THROW(check_selection({Strategy::Section, {"t0"}, "paper-1", 0}, doc), IntegrityError);
  EXPECT_THROW(check_selection({Strategy::CrossParagraph, {"t0", "t1"}, "paper-1", 0}, doc), IntegrityError);
}

TEST(Prompts, TextOnlyTrain) {
  Corpus c;
  const EvidenceSelection sel{Strategy::TextOnly, {"t3"}, "paper-1", 0};
  const auto p = build_prompt(sel, c.docs[0], TemplateLibrary::builtin(), Split::Train, Phase::QA);
  const auto text = render_prompt(p);
  EXPECT_NE(text.find(std::get<TextChunk>(*c.docs[0].find("t3")).text), std::string::npos);
  EXPECT_NE(text.find("[Q1]:"), std::string::npos);
  EXPECT_NE(text.find("[A1]:"), std::string::npos);
  EXPECT_EQ(text.find("{material}"), std::string::npos);
}

TEST(Prompts, SectionTestForbidsLabels) {
  Corpus c;
  const auto sel = select_evidence(c.docs[0], Strategy::Section, 1);
  const auto text = render_prompt(build_prompt(sel, c.docs[0], TemplateLibrary::builtin(), Split::Test, Phase::Question));
  EXPECT_NE(text.find("from the figure/table"), std::string::npos);
}

TEST(Prompts, QuestionsAreSubstituted) {
  Corpus c;
  const auto sel = select_evidence(c.docs[0], Strategy::TextOnly, 1);
  const auto one = render_prompt(build_prompt(sel, c.docs[0], TemplateLibrary::builtin(), Split::Test,
                                              Phase::AnswerConcise, {"What is kept?"}));
  EXPECT_NE(one.find("What is kept?"), std::string::npos);
  const auto two = render_prompt(build_prompt(sel, c.docs[0], TemplateLibrary::builtin(), Split::Test,
                                              Phase::AnswerConcise, {"First?", "Second?"}));
  EXPECT_NE(two.find("[Q1]: First?"), std::string::npos);
  EXPECT_NE(two.find("[Q2]: Second?"), std::string::npos);
}

TEST(Prompts, UnknownCombination) {
  Corpus c;
  const auto sel = select_evidence(c.docs[1], Strategy::CrossParagraph, 1, c.ctx());
  EXPECT_THROW(build_prompt(sel, c.docs[1], TemplateLibrary::builtin(), Split::Test, Phase::Question), TemplateError);
  EXPECT_THROW(TemplateLibrary::builtin().get(Strategy::TextOnly, Split::Train, Phase::AnswerKeywords), TemplateError);
  EXPECT_THROW(parse_strategy("Diagonal"), ConfigError);
}

TEST(Parsing, Examples) {
  EXPECT_EQ(parse_generation("[Q1]: q\n[A1]: a", MarkerLayout::QuestionAnswer),
            (std::vector<GeneratedQA>{{"q", {"a"}}}));
  EXPECT_EQ(parse_generation("[thinking procedure]: first I look at the table\n[A1]: x", MarkerLayout::AnswerVariants),
            (std::vector<GeneratedQA>{{"", {"x"}}}));
  EXPECT_THROW(parse_generation("quit", MarkerLayout::QuestionAnswer), SkipDocumentSignal);
  EXPECT_THROW(parse_generation("  Quit.\n", MarkerLayout::QuestionsOnly), SkipDocumentSignal);
  EXPECT_THROW(parse_generation("I cannot help with that.", MarkerLayout::QuestionAnswer), GenerationParseError);
}

TEST(Parsing, LayoutsAndVariants) {
  const auto qa = parse_generation(
      "Sure.\n[Q1]: first?\n[A11]: short\n[A12]: long one\n[Q2]: second?\n[A21]: s2\n[A22]: l2\n",
      MarkerLayout::QuestionAnswer);
  ASSERT_EQ(qa.size(), 2u);
  EXPECT_EQ(qa[0].answers, (std::vector<std::string>{"short", "long one"}));
  EXPECT_EQ(qa[1].question, "second?");
  const auto qs = parse_generation("[Q1]: a?\n[Q2]: b?", MarkerLayout::QuestionsOnly);
  ASSERT_EQ(qs.size(), 2u);
  const auto per = parse_generation("[A2]: two\n[A1]: one", MarkerLayout::AnswersPerQuestion);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_EQ(per[0].answers, std::vector<std::string>{"one"});
  const auto multi = parse_generation("[Q]: multi\nline?\n[A]: yes", MarkerLayout::QuestionAnswer);
  EXPECT_EQ(multi[0].question, "multi\nline?");
}

TEST(Filter, Rules) {
  const auto rules = default_filter_rules();
  auto out = filter_qa({pair("Why?", {"Because."}), pair("这是一个关于稀疏采样器作用的问题吗？", {"是的。"}),
                        pair("How many chunks does the sampler keep by default?", {"Five."})},
                       rules);
  ASSERT_EQ(out.rejected.size(), 2u);
  EXPECT_EQ(out.rejected[0].rejection, "too_short_question");
  EXPECT_EQ(out.rejected[1].rejection, "non_english");
  ASSERT_EQ(out.kept.size(), 1u);
  EXPECT_TRUE(out.kept[0].kept());

  EXPECT_EQ(filter_qa({pair("Why?", {""})}, {}).kept.size(), 1u);
}

TEST(Filter, AnswerLimits) {
  const auto rules = default_filter_rules();
  std::string forty;
  for (int i = 0; i < 40; ++i) forty += "word ";
  const auto q = std::string("What does the sampler keep for each question?");
  EXPECT_EQ(filter_qa({pair(q, {forty, "detail"})}, rules).rejected.size(), 1u);
  EXPECT_EQ(filter_qa({pair(q, {"short", forty})}, rules).kept.size(), 1u);
  EXPECT_EQ(filter_qa({pair(q, {forty})}, rules).kept.size(), 1u);
}

TEST(Filter, HandLabeledExpectations) {
  const auto cases = nlohmann::json::parse(read_file(fixtures::data_dir() / "filter_expectations.json"));
  std::vector<QAPair> pairs;
  for (const auto& c : cases) pairs.push_back(pair(c["question"], c["answers"].get<std::vector<std::string>>()));
  const auto out = filter_qa(pairs, default_filter_rules());
  std::map<std::string, std::string> verdict;
  for (const auto& p : out.kept) verdict[p.question] = "kept";
  for (const auto& p : out.rejected) verdict[p.question] = p.rejection;
  for (const auto& c : cases) EXPECT_EQ(verdict[c["question"]], c["expected"]) << c["question"];
}

TEST(Filter, AddingRulesNeverGrowsKeptSet) {
  const auto all = default_filter_rules();
  const auto cases = nlohmann::json::parse(read_file(fixtures::data_dir() / "filter_expectations.json"));
  std::vector<QAPair> pairs;
  for (const auto& c : cases) pairs.push_back(pair(c["question"], c["answers"].get<std::vector<std::string>>()));
  std::size_t prev = pairs.size() + 1;
  for (std::size_t n = 0; n <= all.size(); ++n) {
    const std::vector<FilterRule> subset(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    const auto kept = filter_qa(pairs, subset).kept.size();
    EXPECT_LE(kept, prev);
    prev = kept;
  }
}

TEST(Corpus, StatsAndRoundTrip) {
  Corpus c;
  TempDir out;
  std::vector<QAPair> pairs{pair("How does the first paragraph frame the problem?", {"a"}),
                            pair("How does the second paragraph frame the problem?", {"b"}),
                            pair("Which section discusses the sampler in detail here?", {"c"}, Strategy::Section)};
  pairs[2].evidence.chunk_ids = {"t3"};
  auto rejected = pair("Why?", {"x"});
  rejected.rejection = "too_short_question";
  pairs.push_back(rejected);
  const DocumentLookup lookup = [&](const std::string& id) -> const ParsedDocument* {
    return id == "paper-1" ? &c.docs[0] : nullptr;
  };
  const auto stats = export_corpus(pairs, Split::Train, out / "c.jsonl", lookup);
  EXPECT_EQ(stats.count(Strategy::TextOnly, Split::Train), 2u);
  EXPECT_EQ(stats.count(Strategy::Section, Split::Train), 1u);
  EXPECT_NE(stats.table().find("Text-only"), std::string::npos);
  auto back = import_corpus(out / "c.jsonl");
  std::vector<CorpusRecord> want;
  for (std::size_t i = 0; i < 3; ++i) want.push_back(to_record(pairs[i]));
  std::sort(back.begin(), back.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(back, want);

  auto dangling = pairs;
  dangling[0].evidence.chunk_ids = {"missing"};
  EXPECT_THROW(export_corpus(dangling, Split::Train, out / "d.jsonl", lookup), IntegrityError);
  EXPECT_FALSE(std::filesystem::exists(out / "d.jsonl"));
}

TEST(Corpus, MalformedLines) {
  TempDir out;
  write_file_atomic(out / "bad.jsonl", "{\"id\":\"x\"}\n");
  EXPECT_THROW(import_corpus(out / "bad.jsonl"), ParseError);
  EXPECT_THROW(decode_record("not json"), ParseError);
}

TEST(TokenBucketTest, RefillsAtRate) {
  TokenBucket b(2.0, 2.0);
  const auto t0 = TokenBucket::Clock::now();
  EXPECT_TRUE(b.try_acquire(t0));
  EXPECT_TRUE(b.try_acquire(t0));
  EXPECT_FALSE(b.try_acquire(t0));
  EXPECT_TRUE(b.try_acquire(t0 + std::chrono::milliseconds(500)));
  EXPECT_FALSE(b.try_acquire(t0 + std::chrono::milliseconds(500)));
  TokenBucket off(0.0, 1.0);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(off.try_acquire(t0));
}

TEST(Builder, EndToEndWithScriptedBackend) {
  Corpus c;
  auto backend = ScriptedBackend::from_json_file(fixtures::data_dir() / "scripted_dataset.json", "scripted-gen");
  const auto expectations = nlohmann::json::parse(read_file(fixtures::data_dir() / "filter_expectations.json"));
  std::map<std::string, std::string> expected;
  for (const auto& e : expectations) expected[e["question"]] = e["expected"];

  for (const auto split : {Split::Train, Split::Test}) {
    BuilderConfig cfg;
    cfg.strategies = all_strategies();
    cfg.split = split;
    cfg.selections_per_strategy = 2;
    cfg.seed = 9;
    if (split == Split::Test) cfg.strategies.pop_back();
    const auto result = build_dataset(c.pointers(), *backend, TemplateLibrary::builtin(), c.ctx(), cfg);
    for (const auto& s : result.skipped) {
      EXPECT_TRUE(s.strategy == Strategy::CrossParagraph && s.doc_id == "paper-1") << s.reason;
    }
    std::set<Strategy> seen;
    for (const auto* group : {&result.kept, &result.rejected}) {
      for (const auto& p : *group) {
        const auto& doc = p.evidence.doc_id == "paper-1" ? c.docs[0] : c.docs[1];
        check_selection(p.evidence, doc, c.ctx());
        seen.insert(p.evidence.strategy);
        EXPECT_EQ(p.kept() ? std::string("kept") : p.rejection, expected.at(p.question)) << p.question;
        EXPECT_EQ(p.split, split);
        EXPECT_EQ(p.generator_id, "scripted-gen");
      }
    }
    EXPECT_EQ(seen.size(), cfg.strategies.size());
    EXPECT_FALSE(result.kept.empty());

    cfg.max_in_flight = 1;
    const auto serial = build_dataset(c.pointers(), *backend, TemplateLibrary::builtin(), c.ctx(), cfg);
    ASSERT_EQ(serial.kept.size(), result.kept.size());
    for (std::size_t i = 0; i < serial.kept.size(); ++i) EXPECT_EQ(to_record(serial.kept[i]), to_record(result.kept[i]));
  }
}

TEST(Builder, QuitSkipsTheSelection) {
  Corpus c;
  ScriptedBackend quit(std::map<std::string, std::string>{{"*", "quit"}});
  BuilderConfig cfg;
  cfg.strategies = {Strategy::ImageOnly};
  cfg.split = Split::Test;
  const auto r = build_dataset(c.pointers(), quit, TemplateLibrary::builtin(), c.ctx(), cfg);
  EXPECT_TRUE(r.kept.empty());
  EXPECT_EQ(r.skipped.size(), 2u);
}
