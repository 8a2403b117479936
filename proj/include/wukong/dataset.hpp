#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wukong/doc_model.hpp"
#include "wukong/embedding.hpp"
#include "wukong/generation.hpp"

namespace wukong {

enum class Strategy { TextOnly, ImageOnly, ImageText, Section, CrossParagraph };
enum class Split { Train, Test };
enum class Phase { QA, Question, Answer, AnswerConcise, AnswerKeywords };

const char* strategy_name(Strategy s) noexcept;
Strategy parse_strategy(std::string_view s);
const char* split_name(Split s) noexcept;
Split parse_split(std::string_view s);
const char* phase_name(Phase p) noexcept;
const std::vector<Strategy>& all_strategies();

struct EvidenceSelection {
  Strategy strategy = Strategy::TextOnly;
  std::vector<std::string> chunk_ids;
  std::string doc_id;
  std::uint64_t rng_seed = 0;
  friend bool operator==(const EvidenceSelection&, const EvidenceSelection&) = default;
};

/// What CrossParagraph needs to judge relatedness.
struct SelectionContext {
  const EmbeddingCache* cache = nullptr;
  std::string text_provider_id;
  double theta_rel = 0.6;
};

/// Figure reference in running text, e.g. "Fig. 2" -> {"figure", "2"}.
struct FigureRef {
  std::string kind;  // "figure" or "table"
  std::string number;
  friend auto operator<=>(const FigureRef&, const FigureRef&) = default;
};
std::vector<FigureRef> find_figure_refs(std::string_view text);
std::optional<FigureRef> parse_figure_label(std::string_view label);

/// Deterministic in (doc, strategy, seed). StrategyUnsatisfiableError when the
/// document cannot support the strategy.
EvidenceSelection select_evidence(const ParsedDocument& doc, Strategy strategy, std::uint64_t seed,
                                  const SelectionContext& context = {});

/// IntegrityError unless the selection satisfies its strategy's composition
/// rule on `doc`. CrossParagraph relatedness is checked only with a cache.
void check_selection(const EvidenceSelection& selection, const ParsedDocument& doc,
                     const SelectionContext& context = {});

struct PromptTemplate {
  std::string id;
  std::string text;
};

class TemplateLibrary {
 public:
  /// The generation prompts for every supported (strategy, split, phase).
  static const TemplateLibrary& builtin();

  void add(Strategy strategy, Split split, Phase phase, PromptTemplate t);
  /// TemplateError when absent.
  const PromptTemplate& get(Strategy strategy, Split split, Phase phase) const;
  bool has(Strategy strategy, Split split, Phase phase) const;

 private:
  std::map<std::tuple<Strategy, Split, Phase>, PromptTemplate> templates_;
};

/// Substitutes `{material}` (the selected chunks) and `{questions}` into the
/// template for (strategy, split, phase).
PromptAssembly build_prompt(const EvidenceSelection& selection, const ParsedDocument& doc,
                            const TemplateLibrary& library, Split split, Phase phase,
                            const std::vector<std::string>& questions = {});

/// How markers in a generation map onto questions and answers.
enum class MarkerLayout {
  QuestionAnswer,      // [Qn] with [An] or [An1]/[An2]
  QuestionsOnly,       // [Qn] or [Q]
  AnswersPerQuestion,  // [An] answers question n
  AnswerVariants,      // [A1], [A2] are two answers to one question
};

struct GeneratedQA {
  std::string question;
  std::vector<std::string> answers;
  friend bool operator==(const GeneratedQA&, const GeneratedQA&) = default;
};

/// "[thinking procedure]:" blocks are dropped. A bare "quit" raises
/// SkipDocumentSignal; nothing extractable raises GenerationParseError.
std::vector<GeneratedQA> parse_generation(std::string_view raw, MarkerLayout layout);

struct QAPair {
  std::string id;
  std::string question;
  /// One answer, or [concise, detailed]. Test pairs carry [concise, keywords].
  std::vector<std::string> answers;
  EvidenceSelection evidence;
  std::string generator_id;
  Split split = Split::Train;
  /// Empty when kept, else the id of the first failing rule.
  std::string rejection;

  bool kept() const noexcept { return rejection.empty(); }
};

struct FilterRule {
  std::string rule_id;
  std::string description;
  std::function<bool(const QAPair&)> passes;
};

struct FilterParams {
  std::size_t min_question_tokens = 6;
  std::size_t max_concise_answer_tokens = 30;
  std::size_t max_detailed_answer_tokens = 120;
  double min_ascii_ratio = 0.9;
};

/// non_english, too_short_question, not_a_question, too_long_answer, in
/// that order.
std::vector<FilterRule> default_filter_rules(const FilterParams& params = {});

struct FilterOutcome {
  std::vector<QAPair> kept;
  std::vector<QAPair> rejected;
};

FilterOutcome filter_qa(std::vector<QAPair> pairs, const std::vector<FilterRule>& rules);

/// One line of an exported corpus.
struct CorpusRecord {
  std::string id;
  std::string doc_id;
  Strategy strategy = Strategy::TextOnly;
  std::string question;
  std::vector<std::string> answers;
  std::vector<std::string> evidence;
  Split split = Split::Train;
  std::string generator;
  friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
  friend auto operator<=>(const CorpusRecord& a, const CorpusRecord& b) { return a.id <=> b.id; }
};

CorpusRecord to_record(const QAPair& pair);
std::string encode_record(const CorpusRecord& record);
/// ParseError for malformed lines.
CorpusRecord decode_record(std::string_view line);

struct CorpusStats {
  std::map<std::pair<Strategy, Split>, std::size_t> counts;
  std::size_t count(Strategy s, Split split) const;
  /// Category / strategy rows with Training and Test columns.
  std::string table() const;
};

CorpusStats corpus_stats(const std::vector<CorpusRecord>& records);

using DocumentLookup = std::function<const ParsedDocument*(const std::string& doc_id)>;

/// Writes the kept pairs of `split` as JSON lines. With `lookup`, every
/// evidence id must resolve (IntegrityError). IoError on write failure.
CorpusStats export_corpus(const std::vector<QAPair>& pairs, Split split, const std::filesystem::path& out,
                          const DocumentLookup& lookup = {});
std::vector<CorpusRecord> import_corpus(const std::filesystem::path& in);

/// Blocking token bucket. `rate_per_second <= 0` disables limiting.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;
  TokenBucket(double rate_per_second, double burst);
  void acquire();
  /// Non-blocking variant for tests: true when a token was taken at `now`.
  bool try_acquire(Clock::time_point now);

 private:
  void refill(Clock::time_point now);
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

struct BuilderConfig {
  std::vector<Strategy> strategies{Strategy::TextOnly};
  Split split = Split::Train;
  std::size_t selections_per_strategy = 1;
  std::uint64_t seed = 0;
  FilterParams filter;
  std::size_t max_in_flight = 4;
  double rate_per_second = 0.0;
  double burst = 4.0;
  RetryPolicy retry;
};

struct SkippedSelection {
  std::string doc_id;
  Strategy strategy = Strategy::TextOnly;
  std::string reason;
};

struct BuildResult {
  std::vector<QAPair> kept;
  std::vector<QAPair> rejected;
  std::vector<SkippedSelection> skipped;
};

/// Selection, prompting, generation, parsing and filtering for every
/// document. Documents run concurrently up to `max_in_flight`; the output
/// order depends only on the inputs.
BuildResult build_dataset(const std::vector<const ParsedDocument*>& docs, LlmBackend& backend,
                          const TemplateLibrary& library, const SelectionContext& context,
                          const BuilderConfig& config);

}  // namespace wukong
