#include "wukong/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "wukong/dataset.hpp"
#include "wukong/errors.hpp"
#include "wukong/text.hpp"

namespace wukong {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto x = text::decode_utf8(a);
  const auto y = text::decode_utf8(b);
  if (x.empty()) return y.size();
  if (y.empty()) return x.size();
  std::vector<std::size_t> prev(y.size() + 1);
  std::vector<std::size_t> cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

std::string normalize_answer(std::string_view s) {
  auto out = text::collapse_whitespace(text::to_lower_ascii(s));
  while (!out.empty() && text::is_ascii_punct(static_cast<unsigned char>(out.back()))) out.pop_back();
  return text::trim(out);
}

namespace {

double anls_one(const std::string& p, const std::string& g, double threshold) {
  const auto lp = text::decode_utf8(p).size();
  const auto lg = text::decode_utf8(g).size();
  if (lp == 0 && lg == 0) return 1.0;
  if (lp == 0 || lg == 0) return 0.0;
  const double s = 1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(std::max(lp, lg));
  return s >= threshold ? s : 0.0;
}

std::vector<std::string> metric_tokens(std::string_view s) { return text::word_tokens(normalize_answer(s)); }

double f1_one(const std::vector<std::string>& p, const std::vector<std::string>& g) {
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_one(const std::vector<std::string>& p, const std::vector<std::string>& g) {
  if (p.empty() || g.empty()) return 0.0;
  const auto l = lcs(p, g);
  if (l == 0) return 0.0;
  const double precision = static_cast<double>(l) / static_cast<double>(p.size());
  const double recall = static_cast<double>(l) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

double anls(std::string_view prediction, const std::vector<std::string>& gts, double threshold) {
  const auto p = normalize_answer(prediction);
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, anls_one(p, normalize_answer(g), threshold));
  return best;
}

double token_f1(std::string_view prediction, const std::vector<std::string>& gts) {
  const auto p = metric_tokens(prediction);
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, f1_one(p, metric_tokens(g)));
  return best;
}

double rouge_l(std::string_view prediction, const std::vector<std::string>& gts) {
  const auto p = metric_tokens(prediction);
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, rouge_one(p, metric_tokens(g)));
  return best;
}

std::optional<double> retrieval_recall(const std::vector<std::string>& sampled, const std::vector<std::string>& gt,
                                       std::size_t k) {
  const std::set<std::string> want(gt.begin(), gt.end());
  if (want.empty()) return std::nullopt;
  const std::set<std::string> top(sampled.begin(), sampled.begin() + static_cast<std::ptrdiff_t>(std::min(k, sampled.size())));
  std::size_t hit = 0;
  for (const auto& g : want) hit += top.count(g);
  return static_cast<double>(hit) / static_cast<double>(want.size());
}

// --- judge -------------------------------------------------------------------------

PromptAssembly judge_prompt(const EvalCase& c) {
  std::string body =
      "You are grading an answer to a question about a document. Reply with 1 if the prediction is correct "
      "according to the reference answers, otherwise reply with 0. Reply with the digit only.\n\n";
  body += "Question: " + c.question + "\nReference answers:\n";
  for (const auto& g : c.gt_answers) body += "- " + g + "\n";
  body += "Prediction: " + c.prediction + "\n";
  return instruction_prompt("judge-v1", std::move(body));
}

std::optional<int> gpt_acc(LlmBackend& judge, const EvalCase& c) {
  std::string reply;
  try {
    GenerateOptions opts;
    opts.retry.max_attempts = 1;
    reply = generate_answer(judge, judge_prompt(c), opts).answer_text;
  } catch (const Error&) {
    return std::nullopt;
  }
  const auto t = text::trim(reply);
  if (t.empty()) return std::nullopt;
  if (t[0] == '1') return 1;
  if (t[0] == '0') return 0;
  return std::nullopt;
}

// --- aggregation -------------------------------------------------------------------

std::vector<std::string> length_bucket_labels(const std::vector<std::size_t>& edges) {
  std::vector<std::string> out;
  if (edges.empty()) return {"all"};
  out.push_back("<" + std::to_string(edges.front()));
  for (std::size_t i = 1; i < edges.size(); ++i) {
    out.push_back(std::to_string(edges[i - 1]) + "-" + std::to_string(edges[i] - 1));
  }
  out.push_back(">=" + std::to_string(edges.back()));
  return out;
}

std::string length_bucket(std::size_t n, const std::vector<std::size_t>& edges) {
  const auto labels = length_bucket_labels(edges);
  if (edges.empty()) return labels.front();
  const auto it = std::upper_bound(edges.begin(), edges.end(), n);
  return labels[static_cast<std::size_t>(it - edges.begin())];
}

namespace {

MetricReport aggregate(const std::vector<const EvalCase*>& cases, std::size_t run_k) {
  MetricReport r;
  r.case_count = cases.size();
  r.k = run_k;
  double anls_sum = 0.0;
  double f1_sum = 0.0;
  double rouge_sum = 0.0;
  double recall_sum = 0.0;
  double token_sum = 0.0;
  double latency_sum = 0.0;
  double judge_sum = 0.0;
  std::size_t judged = 0;
  for (const auto* c : cases) {
    anls_sum += anls(c->prediction, c->gt_answers);
    f1_sum += token_f1(c->prediction, c->gt_answers);
    rouge_sum += rouge_l(c->prediction, c->gt_answers);
    if (const auto rec = retrieval_recall(c->sampled_evidence, c->gt_evidence, c->k.value_or(run_k))) {
      recall_sum += *rec;
      ++r.recall_cases;
    } else {
      ++r.recall_excluded;
    }
    token_sum += static_cast<double>(c->prompt_tokens);
    latency_sum += static_cast<double>(c->latency_ms);
    if (c->judge) {
      judge_sum += *c->judge;
      ++judged;
    }
  }
  const double n = static_cast<double>(cases.size());
  r.anls = anls_sum / n;
  r.token_f1 = f1_sum / n;
  r.rouge_l = rouge_sum / n;
  if (r.recall_cases > 0) r.recall_at_k = recall_sum / static_cast<double>(r.recall_cases);
  r.mean_tokens = token_sum / n;
  r.mean_latency_ms = latency_sum / n;
  if (judged > 0) r.gpt_acc = judge_sum / static_cast<double>(judged);
  return r;
}

}  // namespace

RunReport evaluate_run(const std::vector<EvalCase>& cases, std::size_t k, const std::vector<std::size_t>& length_edges) {
  if (cases.empty()) throw EmptyRunError("evaluation run has no cases");
  if (k == 0) throw ConfigError("k must be at least 1");
  for (const auto& c : cases) {
    if (c.gt_answers.empty()) throw DomainError("case " + c.case_id + " has no ground-truth answer");
  }
  std::vector<const EvalCase*> all;
  std::map<std::size_t, std::vector<const EvalCase*>> by_k;
  std::map<std::string, std::vector<const EvalCase*>> by_length;
  for (const auto& c : cases) {
    all.push_back(&c);
    by_k[c.k.value_or(k)].push_back(&c);
    if (c.doc_chunks) by_length[length_bucket(*c.doc_chunks, length_edges)].push_back(&c);
  }
  RunReport report;
  report.overall = aggregate(all, k);
  for (const auto& [kk, group] : by_k) report.by_k[kk] = aggregate(group, kk);
  for (const auto& label : length_bucket_labels(length_edges)) {
    const auto it = by_length.find(label);
    if (it == by_length.end()) continue;
    report.by_length[label] = aggregate(it->second, k);
    report.length_order.push_back(label);
  }
  return report;
}

// --- reports -----------------------------------------------------------------------

namespace {

std::string header(const char* first) {
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6s %8s %8s %10s %10s %9s %12s %8s\n", first, "cases", "ANLS",
                "F1(tok)", "ROUGE-L", "Recall@k", "Token", "Latency(ms)", "GPT Acc");
  return line;
}

std::string row(const std::string& label, const MetricReport& r) {
  char recall[32];
  char gpt[32];
  if (r.recall_at_k) {
    std::snprintf(recall, sizeof recall, "%.1f", *r.recall_at_k * 100.0);
  } else {
    std::snprintf(recall, sizeof recall, "-");
  }
  if (r.gpt_acc) {
    std::snprintf(gpt, sizeof gpt, "%.1f", *r.gpt_acc * 100.0);
  } else {
    std::snprintf(gpt, sizeof gpt, "-");
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6zu %8.1f %8.1f %10.1f %10s %9.0f %12.1f %8s\n", label.c_str(),
                r.case_count, r.anls * 100.0, r.token_f1 * 100.0, r.rouge_l * 100.0, recall, r.mean_tokens,
                r.mean_latency_ms, gpt);
  return line;
}

nlohmann::ordered_json metric_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["case_count"] = r.case_count;
  j["k"] = r.k;
  j["anls"] = r.anls;
  j["token_f1"] = r.token_f1;
  j["rouge_l"] = r.rouge_l;
  if (r.recall_at_k) j["recall_at_k"] = *r.recall_at_k;
  j["recall_cases"] = r.recall_cases;
  j["recall_excluded"] = r.recall_excluded;
  j["mean_tokens"] = r.mean_tokens;
  j["mean_latency_ms"] = r.mean_latency_ms;
  if (r.gpt_acc) j["gpt_acc"] = *r.gpt_acc;
  return j;
}

}  // namespace

std::string format_report(const RunReport& report) {
  return header("run") + row("k=" + std::to_string(report.overall.k), report.overall);
}

std::string format_k_table(const RunReport& report) {
  std::string out = header("k");
  for (const auto& [k, r] : report.by_k) out += row(std::to_string(k), r);
  return out;
}

std::string format_length_table(const RunReport& report) {
  std::string out = header("chunks");
  for (const auto& label : report.length_order) out += row(label, report.by_length.at(label));
  return out;
}

std::string report_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["overall"] = metric_json(report.overall);
  nlohmann::ordered_json by_k = nlohmann::ordered_json::object();
  for (const auto& [k, r] : report.by_k) by_k[std::to_string(k)] = metric_json(r);
  j["by_k"] = std::move(by_k);
  nlohmann::ordered_json by_len = nlohmann::ordered_json::object();
  for (const auto& label : report.length_order) by_len[label] = metric_json(report.by_length.at(label));
  j["by_length"] = std::move(by_len);
  return j.dump();
}

// --- loading -----------------------------------------------------------------------

namespace {

template <typename F>
void for_each_line(std::string_view data, F&& f) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    auto end = data.find('\n', pos);
    if (end == std::string_view::npos) end = data.size();
    ++line_no;
    const auto line = data.substr(pos, end - pos);
    pos = end + 1;
    if (!text::trim(line).empty()) f(line, line_no);
  }
}

}  // namespace

std::vector<EvalCase> join_cases(std::string_view corpus_jsonl, std::string_view predictions_jsonl) {
  std::map<std::string, nlohmann::json> predictions;
  for_each_line(predictions_jsonl, [&](std::string_view line, std::size_t line_no) {
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("id").get<std::string>();
      if (!predictions.emplace(id, std::move(j)).second) {
        throw ParseError("duplicate prediction id " + id, line_no, 1);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad prediction: ") + e.what(), line_no, 1);
    }
  });

  std::vector<EvalCase> cases;
  std::set<std::string> matched;
  for_each_line(corpus_jsonl, [&](std::string_view line, std::size_t line_no) {
    CorpusRecord r;
    try {
      r = decode_record(line);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no, 1);
    }
    const auto it = predictions.find(r.id);
    if (it == predictions.end()) return;
    matched.insert(r.id);
    const auto& p = it->second;
    EvalCase c;
    c.case_id = r.id;
    c.question = r.question;
    c.gt_answers = r.answers;
    c.gt_evidence = r.evidence;
    try {
      c.prediction = p.at("prediction").get<std::string>();
      for (const auto& e : p.value("sampled_evidence", nlohmann::json::array())) {
        c.sampled_evidence.push_back(e.is_object() ? e.at("chunk_id").get<std::string>() : e.get<std::string>());
      }
      c.prompt_tokens = p.value("prompt_tokens", std::size_t{0});
      c.latency_ms = p.value("latency_ms", std::size_t{0});
      if (p.contains("k")) c.k = p["k"].get<std::size_t>();
      if (p.contains("doc_chunks")) c.doc_chunks = p["doc_chunks"].get<std::size_t>();
      if (p.contains("judge")) c.judge = p["judge"].get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad prediction for " + r.id + ": " + e.what());
    }
    cases.push_back(std::move(c));
  });
  for (const auto& [id, _] : predictions) {
    if (matched.count(id) == 0) throw IntegrityError("prediction " + id + " has no corpus record");
  }
  return cases;
}

std::vector<EvalCase> load_cases(const std::filesystem::path& corpus, const std::filesystem::path& predictions) {
  return join_cases(read_file(corpus), read_file(predictions));
}

}  // namespace wukong
