#include "wukong/generation.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <thread>

#include <json.hpp>

#include "wukong/errors.hpp"
#include "wukong/hash.hpp"
#include "wukong/text.hpp"

namespace wukong {

const std::string& part_chunk_id(const EvidencePart& part) noexcept {
  return std::visit([](const auto& p) -> const std::string& { return p.chunk_id; }, part);
}

std::vector<std::string> PromptAssembly::evidence_ids() const {
  std::vector<std::string> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(part_chunk_id(p));
  return out;
}

std::size_t estimate_prompt_tokens(const std::string& instruction, const std::string& query,
                                   const std::vector<EvidencePart>& parts) {
  std::size_t total = text::estimate_tokens(instruction) + text::estimate_tokens(query);
  for (const auto& part : parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      total += text::estimate_tokens(t->content);
    } else {
      const auto& img = std::get<ImagePart>(part);
      total += kImageTokenCost + text::estimate_tokens(img.caption);
      if (img.figure_label) total += text::estimate_tokens(*img.figure_label);
    }
  }
  return total;
}

namespace {

const std::map<std::string, std::string>& answer_templates() {
  static const std::map<std::string, std::string> templates = [] {
    const std::string base =
        "Answer the question using only the evidence below. Cite the ids of the evidence you used in square "
        "brackets, for example [t3]. If the evidence does not contain the answer, say so.";
    return std::map<std::string, std::string>{{"grounded-v1", base}, {"grounded-v1-reading-order", base}};
  }();
  return templates;
}

}  // namespace

const std::string& answer_instruction(const std::string& template_id) {
  const auto& t = answer_templates();
  const auto it = t.find(template_id);
  if (it == t.end()) throw TemplateError("unknown answer template: " + template_id);
  return it->second;
}

PromptAssembly assemble_prompt(const std::string& query, const SampledEvidence& evidence, const ParsedDocument& doc,
                               const std::string& template_id) {
  PromptAssembly out;
  out.template_id = template_id;
  out.instruction = answer_instruction(template_id);
  out.query = query;
  if (evidence.entries.empty()) throw IntegrityError("prompt needs at least one evidence chunk");

  std::vector<const Chunk*> chunks;
  for (const auto& e : evidence.entries) {
    const auto* c = doc.find(e.chunk_id);
    if (c == nullptr) throw IntegrityError("evidence id " + e.chunk_id + " not in document " + doc.doc_id());
    chunks.push_back(c);
  }
  if (template_id == "grounded-v1-reading-order") {
    std::stable_sort(chunks.begin(), chunks.end(),
                     [](const Chunk* a, const Chunk* b) { return order_index(*a) < order_index(*b); });
  }
  for (const auto* c : chunks) {
    if (const auto* t = std::get_if<TextChunk>(c)) {
      out.parts.emplace_back(TextPart{t->chunk_id, t->text});
    } else {
      const auto& img = std::get<ImageChunk>(*c);
      out.parts.emplace_back(ImagePart{img.chunk_id, img.image_ref, img.caption, img.figure_label});
    }
  }
  out.token_estimate = estimate_prompt_tokens(out.instruction, out.query, out.parts);
  return out;
}

PromptAssembly instruction_prompt(std::string template_id, std::string text) {
  PromptAssembly p;
  p.template_id = std::move(template_id);
  p.instruction = std::move(text);
  p.token_estimate = estimate_prompt_tokens(p.instruction, p.query, p.parts);
  return p;
}

std::string render_prompt(const PromptAssembly& prompt) {
  std::string out = prompt.instruction;
  if (!prompt.parts.empty()) {
    out += "\n\n[Evidence]\n";
    for (const auto& part : prompt.parts) {
      if (const auto* t = std::get_if<TextPart>(&part)) {
        out += "[" + t->chunk_id + "] " + t->content + "\n";
      } else {
        const auto& img = std::get<ImagePart>(part);
        out += "[" + img.chunk_id + "] <image " + img.image_ref.hash + ">";
        if (img.figure_label) out += " " + *img.figure_label + ":";
        if (!img.caption.empty()) out += " " + img.caption;
        out += "\n";
      }
    }
  }
  if (!prompt.query.empty()) out += "\n[Question]\n" + prompt.query + "\n";
  return out;
}

// --- generate ----------------------------------------------------------------------

namespace {

std::vector<std::string> cited_evidence(const std::string& answer, const std::vector<std::string>& ids) {
  static const std::regex cite(R"(\[([^\[\]\s]+)\])");
  std::set<std::string> cited;
  for (auto it = std::sregex_iterator(answer.begin(), answer.end(), cite); it != std::sregex_iterator(); ++it) {
    cited.insert((*it)[1].str());
  }
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (cited.count(id) != 0) out.push_back(id);
  }
  return out.empty() ? ids : out;
}

}  // namespace

AnswerResult generate_answer(LlmBackend& backend, const PromptAssembly& prompt, const GenerateOptions& options) {
  if (options.context_limit && prompt.token_estimate > *options.context_limit) {
    throw ContextOverflowError(prompt.token_estimate, *options.context_limit);
  }
  const auto& retry = options.retry;
  const auto attempts = std::max<std::size_t>(1, retry.max_attempts);
  const auto start = std::chrono::steady_clock::now();
  std::chrono::milliseconds delay = retry.base_delay;
  for (std::size_t attempt = 1;; ++attempt) {
    try {
      auto reply = backend.generate(prompt);
      const auto elapsed = std::chrono::steady_clock::now() - start;
      AnswerResult r;
      r.evidence_used = cited_evidence(reply.answer, prompt.evidence_ids());
      r.answer_text = std::move(reply.answer);
      r.prompt_tokens = reply.prompt_tokens.value_or(prompt.token_estimate);
      r.latency_ms = static_cast<std::size_t>(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count());
      r.backend_id = backend.backend_id();
      r.attempts = attempt;
      return r;
    } catch (const TransientBackendError& e) {
      if (attempt >= attempts) {
        throw BackendError("backend failed after " + std::to_string(attempt) + " attempts: " + e.what());
      }
    } catch (const ContextOverflowError&) {
      throw;
    }
    if (retry.sleep) {
      retry.sleep(delay);
    } else {
      std::this_thread::sleep_for(delay);
    }
    delay = std::chrono::milliseconds(static_cast<long long>(std::llround(static_cast<double>(delay.count()) * retry.growth)));
  }
}

// --- mocks -------------------------------------------------------------------------

BackendReply EchoBackend::generate(const PromptAssembly& prompt) {
  return {"echo:" + sha256_hex(render_prompt(prompt)).substr(0, 16), prompt.token_estimate};
}

BackendReply ExtractiveBackend::generate(const PromptAssembly& prompt) {
  for (const auto& part : prompt.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) return {t->content, prompt.token_estimate};
  }
  for (const auto& part : prompt.parts) {
    if (const auto* img = std::get_if<ImagePart>(&part)) return {img->caption, prompt.token_estimate};
  }
  return {"", prompt.token_estimate};
}

ScriptedBackend::ScriptedBackend(std::map<std::string, std::string> transcript, std::string id)
    : transcript_(std::move(transcript)), id_(std::move(id)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json_file(const std::filesystem::path& path, std::string id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("transcript " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("transcript must be a JSON object");
  std::map<std::string, std::string> t;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw ConfigError("transcript reply for " + k + " is not a string");
    t[k] = v.get<std::string>();
  }
  return std::make_shared<ScriptedBackend>(std::move(t), std::move(id));
}

BackendReply ScriptedBackend::generate(const PromptAssembly& prompt) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  const auto key = sha256_hex(render_prompt(prompt));
  auto it = transcript_.find(key);
  if (it == transcript_.end()) it = transcript_.find("*");
  if (it == transcript_.end()) throw BackendError("no scripted reply for prompt " + key);
  return {it->second, prompt.token_estimate};
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

ThrottledBackend::ThrottledBackend(std::shared_ptr<LlmBackend> inner, std::size_t max_in_flight)
    : inner_(std::move(inner)), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

BackendReply ThrottledBackend::generate(const PromptAssembly& prompt) {
  {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
  }
  struct Release {
    ThrottledBackend* self;
    ~Release() {
      {
        std::lock_guard lock(self->mutex_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};
  return inner_->generate(prompt);
}

}  // namespace wukong
