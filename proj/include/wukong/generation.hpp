#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wukong/doc_model.hpp"
#include "wukong/sampler.hpp"

namespace wukong {

inline constexpr std::size_t kImageTokenCost = 256;
inline constexpr const char* kDefaultTemplateId = "grounded-v1";

struct TextPart {
  std::string chunk_id;
  std::string content;
  friend bool operator==(const TextPart&, const TextPart&) = default;
};

struct ImagePart {
  std::string chunk_id;
  BlobRef image_ref;
  std::string caption;
  std::optional<std::string> figure_label;
  friend bool operator==(const ImagePart& a, const ImagePart& b) {
    return a.chunk_id == b.chunk_id && a.image_ref.hash == b.image_ref.hash && a.caption == b.caption &&
           a.figure_label == b.figure_label;
  }
};

using EvidencePart = std::variant<TextPart, ImagePart>;

const std::string& part_chunk_id(const EvidencePart& part) noexcept;

struct PromptAssembly {
  std::string template_id;
  std::string instruction;
  std::string query;
  std::vector<EvidencePart> parts;
  std::size_t token_estimate = 0;

  std::vector<std::string> evidence_ids() const;
  friend bool operator==(const PromptAssembly&, const PromptAssembly&) = default;
};

/// Text estimate of instruction, query, text parts and captions, plus
/// kImageTokenCost per image part.
std::size_t estimate_prompt_tokens(const std::string& instruction, const std::string& query,
                                   const std::vector<EvidencePart>& parts);

/// Instruction text for an answer template. Known ids: "grounded-v1" (rank
/// order) and "grounded-v1-reading-order". TemplateError otherwise.
const std::string& answer_instruction(const std::string& template_id);

/// Parts follow the evidence rank order (or reading order for the
/// reading-order template). IntegrityError on empty evidence or an id that
/// is not in `doc`.
PromptAssembly assemble_prompt(const std::string& query, const SampledEvidence& evidence, const ParsedDocument& doc,
                               const std::string& template_id = kDefaultTemplateId);

/// Canonical flat text of a prompt. Image parts appear as references. This
/// is what mock backends hash and what the scripted transcript is keyed by.
std::string render_prompt(const PromptAssembly& prompt);

/// A bare instruction prompt with no evidence parts, as used by the dataset
/// builder.
PromptAssembly instruction_prompt(std::string template_id, std::string text);

struct BackendReply {
  std::string answer;
  std::optional<std::size_t> prompt_tokens;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string backend_id() const = 0;
  /// TransientBackendError for failures worth retrying, BackendError for
  /// the rest, ContextOverflowError when the prompt is too long.
  virtual BackendReply generate(const PromptAssembly& prompt) = 0;
};

struct AnswerResult {
  std::string answer_text;
  std::vector<std::string> evidence_used;
  std::size_t prompt_tokens = 0;
  std::size_t latency_ms = 0;
  std::string backend_id;
  std::size_t attempts = 0;
};

struct RetryPolicy {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds base_delay{200};
  double growth = 4.0;
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GenerateOptions {
  RetryPolicy retry;
  /// When set, prompts whose estimate exceeds it fail before any call.
  std::optional<std::size_t> context_limit;
};

/// Calls the backend with retries on TransientBackendError. After the last
/// attempt the failure surfaces as BackendError. `evidence_used` is the set
/// of prompt evidence ids cited as "[id]" in the answer, or every prompt id
/// when the answer cites none.
AnswerResult generate_answer(LlmBackend& backend, const PromptAssembly& prompt, const GenerateOptions& options = {});

/// Answer is "echo:" plus the first 16 hex digits of sha256(render_prompt).
class EchoBackend final : public LlmBackend {
 public:
  std::string backend_id() const override { return "mock-echo"; }
  BackendReply generate(const PromptAssembly& prompt) override;
};

/// Returns the highest-ranked text part verbatim (the first image caption
/// when no text part exists).
class ExtractiveBackend final : public LlmBackend {
 public:
  std::string backend_id() const override { return "mock-extractive"; }
  BackendReply generate(const PromptAssembly& prompt) override;
};

/// Replays a transcript keyed by the hex sha256 of render_prompt. The key
/// "*" is a fallback reply. A prompt without a reply is a BackendError.
class ScriptedBackend final : public LlmBackend {
 public:
  explicit ScriptedBackend(std::map<std::string, std::string> transcript, std::string id = "mock-scripted");
  /// JSON object {"<sha256 hex>": "<reply>", ..., "*": "<fallback>"}.
  static std::shared_ptr<ScriptedBackend> from_json_file(const std::filesystem::path& path, std::string id = "mock-scripted");

  std::string backend_id() const override { return id_; }
  BackendReply generate(const PromptAssembly& prompt) override;
  std::size_t calls() const;

 private:
  std::map<std::string, std::string> transcript_;
  std::string id_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

/// Caps concurrent calls into another backend.
class ThrottledBackend final : public LlmBackend {
 public:
  ThrottledBackend(std::shared_ptr<LlmBackend> inner, std::size_t max_in_flight);
  std::string backend_id() const override { return inner_->backend_id(); }
  BackendReply generate(const PromptAssembly& prompt) override;

 private:
  std::shared_ptr<LlmBackend> inner_;
  std::size_t max_in_flight_;
  std::size_t in_flight_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

/// HTTP+JSON client for `POST /generate`. Image parts are sent as base64
/// blob bytes read through `image_ref.locator`.
class HttpLlmBackend final : public LlmBackend {
 public:
  struct Options {
    std::string endpoint;  // e.g. "http://127.0.0.1:8081"
    std::string token;
    std::chrono::milliseconds timeout{30000};
  };
  explicit HttpLlmBackend(Options options);
  std::string backend_id() const override { return "http:" + options_.endpoint; }
  BackendReply generate(const PromptAssembly& prompt) override;

  /// The request body, exposed for wire-format tests.
  static std::string request_body(const PromptAssembly& prompt);

 private:
  Options options_;
};

}  // namespace wukong
