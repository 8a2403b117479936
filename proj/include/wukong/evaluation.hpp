#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wukong/generation.hpp"

namespace wukong {

/// Unit-cost edit distance over Unicode scalar values.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// ASCII lowercase, whitespace collapsed and trimmed, trailing ASCII
/// punctuation removed. Applied to both sides of every metric.
std::string normalize_answer(std::string_view s);

/// Max over gts of s = 1 - lev / max(len) when s >= threshold, else 0.
double anls(std::string_view prediction, const std::vector<std::string>& gts, double threshold = 0.5);
double token_f1(std::string_view prediction, const std::vector<std::string>& gts);
/// ROUGE-L F-measure (beta = 1) over word tokens.
double rouge_l(std::string_view prediction, const std::vector<std::string>& gts);

/// |gt ∩ top-k sampled| / |gt|; absent when gt is empty.
std::optional<double> retrieval_recall(const std::vector<std::string>& sampled, const std::vector<std::string>& gt,
                                       std::size_t k);

struct EvalCase {
  std::string case_id;
  std::string question;
  std::vector<std::string> gt_answers;
  std::vector<std::string> gt_evidence;
  std::string prediction;
  /// Chunk ids in rank order.
  std::vector<std::string> sampled_evidence;
  std::size_t prompt_tokens = 0;
  std::size_t latency_ms = 0;
  /// Sampler k used for this case; the run's k when absent.
  std::optional<std::size_t> k;
  /// Chunk count of the source document, for length buckets.
  std::optional<std::size_t> doc_chunks;
  /// Judge verdict (0 or 1) when one was obtained.
  std::optional<int> judge;
};

/// Judge prompt for one case.
PromptAssembly judge_prompt(const EvalCase& c);

/// 0 or 1 from the judge, or absent when the judge is unavailable or its
/// reply is not a verdict.
std::optional<int> gpt_acc(LlmBackend& judge, const EvalCase& c);

struct MetricReport {
  std::size_t case_count = 0;
  std::size_t k = 0;
  double anls = 0.0;
  double token_f1 = 0.0;
  double rouge_l = 0.0;
  std::optional<double> recall_at_k;
  std::size_t recall_cases = 0;
  std::size_t recall_excluded = 0;
  double mean_tokens = 0.0;
  double mean_latency_ms = 0.0;
  std::optional<double> gpt_acc;
};

struct RunReport {
  MetricReport overall;
  std::map<std::size_t, MetricReport> by_k;
  /// Keyed by bucket label, e.g. "10-49".
  std::map<std::string, MetricReport> by_length;
  std::vector<std::string> length_order;
};

/// Bucket edges over doc_chunks. {10, 50} gives "<10", "10-49", ">=50".
std::vector<std::string> length_bucket_labels(const std::vector<std::size_t>& edges);
std::string length_bucket(std::size_t doc_chunks, const std::vector<std::size_t>& edges);

/// EmptyRunError on no cases.
RunReport evaluate_run(const std::vector<EvalCase>& cases, std::size_t k,
                       const std::vector<std::size_t>& length_edges = {10, 50, 100, 200});

/// Text columns ×100, then recall@k, tokens, latency and GPT Acc.
std::string format_report(const RunReport& report);
/// One row per k with the same columns.
std::string format_k_table(const RunReport& report);
std::string format_length_table(const RunReport& report);
std::string report_json(const RunReport& report);

/// Joins a corpus file with a predictions file on "id". Records without a
/// prediction are skipped; predictions for unknown ids are an IntegrityError.
std::vector<EvalCase> load_cases(const std::filesystem::path& corpus, const std::filesystem::path& predictions);
/// Same, from in-memory JSON lines.
std::vector<EvalCase> join_cases(std::string_view corpus_jsonl, std::string_view predictions_jsonl);

}  // namespace wukong
