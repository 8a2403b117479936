#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "wukong/adapter.hpp"
#include "wukong/dataset.hpp"
#include "wukong/doc_model.hpp"
#include "wukong/embedding.hpp"
#include "wukong/errors.hpp"
#include "wukong/evaluation.hpp"
#include "wukong/generation.hpp"
#include "wukong/sampler.hpp"

namespace wukong {

/// Every key is optional in the JSON form; see the README for the key set.
struct EngineConfig {
  std::filesystem::path store_root = "wukong-store";

  std::string embed_endpoint;        // empty selects the offline embedder
  std::string image_embed_endpoint;  // empty shares the text provider
  std::string embed_token;
  std::string embed_provider_id;
  std::size_t dims = 256;
  std::uint64_t offline_seed = 0;
  bool offline_planted = false;

  std::string llm_backend = "extractive";  // echo | extractive | scripted | http
  std::string llm_endpoint;
  std::string llm_token;
  std::filesystem::path scripted_transcript;
  std::optional<std::size_t> context_limit;

  std::size_t k = 5;
  std::size_t modality_floor = 0;
  std::string answer_template = kDefaultTemplateId;
  /// Adapter file applied to query vectors in ask and sample.
  std::filesystem::path adapter;

  double temperature = 0.07;
  double learning_rate = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t train_seed = 0;

  std::size_t max_in_flight = 4;
  double rate_per_second = 0.0;
  double theta_rel = 0.6;

  std::string parser_command;

  /// ConfigError on unknown keys or wrong types.
  static EngineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// ConfigError unless k >= 1, temperature > 0 and the backend is known.
  void validate() const;
};

struct DocumentSummary {
  std::string doc_id;
  std::string source_name;
  std::size_t n_text = 0;
  std::size_t m_image = 0;
};

struct AskResult {
  std::string doc_id;
  SampledEvidence evidence;
  AnswerResult answer;
};

/// An ask whose generation failed after sampling succeeded. The error code
/// is the underlying failure's; the evidence is kept for the caller.
class AskFailure : public Error {
 public:
  AskFailure(ErrorCode code, const std::string& message, SampledEvidence evidence)
      : Error(code, message), evidence_(std::move(evidence)) {}
  const SampledEvidence& evidence() const noexcept { return evidence_; }

 private:
  SampledEvidence evidence_;
};

struct DatasetRequest {
  std::vector<std::string> doc_ids;  // empty means every document
  BuilderConfig builder;
  std::string corpus_name = "corpus";
};

struct DatasetOutcome {
  BuildResult result;
  CorpusStats stats;
  std::filesystem::path corpus_path;
};

struct TrainOutcome {
  TrainResult result;
  std::filesystem::path adapter_path;
  std::size_t examples = 0;
  std::size_t skipped = 0;
};

/// The document store plus the inference pipeline. Reads run concurrently;
/// writes to one document are serialized.
class Engine {
 public:
  /// Providers and backend are built from `config` unless injected.
  explicit Engine(EngineConfig config, std::shared_ptr<EmbeddingProvider> text_provider = nullptr,
                  std::shared_ptr<EmbeddingProvider> image_provider = nullptr,
                  std::shared_ptr<LlmBackend> backend = nullptr);

  const EngineConfig& config() const noexcept { return config_; }

  /// Ingests an interleaved document file (blobs beside it) or, for a .pdf,
  /// runs the configured external parser. Atomic: on any error the store is
  /// unchanged. Returns the doc_id.
  std::string ingest_path(const std::filesystem::path& source);
  std::string ingest(const ParsedDocument& doc);

  std::vector<DocumentSummary> list_documents() const;
  /// NotFoundError for unknown ids.
  std::shared_ptr<const ParsedDocument> document(const std::string& doc_id) const;
  /// Verified blob bytes. NotFoundError when no stored document holds it.
  std::string blob(const std::string& hash) const;

  SampledEvidence sample(const std::string& doc_id, const std::string& question,
                         std::optional<std::size_t> k = std::nullopt);
  AskResult ask(const std::string& doc_id, const std::string& question, std::optional<std::size_t> k = std::nullopt);

  RunReport evaluate(const std::vector<EvalCase>& cases, std::optional<std::size_t> k = std::nullopt) const;

  DatasetOutcome build_dataset(const DatasetRequest& request);
  TrainOutcome train_adapter(const std::filesystem::path& corpus, const std::string& adapter_name,
                             std::optional<TrainConfig> train = std::nullopt);

  /// IntegrityError on dangling ids, missing vectors or hash mismatches.
  void check_integrity() const;

  const EmbeddingCache& cache() const noexcept { return cache_; }
  /// Similarity evaluations performed by sample/ask so far.
  std::size_t similarity_evaluations() const noexcept { return evaluations_.load(); }
  ProviderIds provider_ids() const;
  EmbeddingProvider& text_provider() noexcept { return *text_provider_; }

 private:
  struct StoredDocument {
    std::shared_ptr<const ParsedDocument> doc;
    /// Null when some chunk had no cached vector at load time.
    std::shared_ptr<const PreparedDocument> prepared;
  };

  std::filesystem::path docs_dir() const;
  std::filesystem::path caches_dir() const;
  std::filesystem::path doc_dir(const std::string& doc_id) const;
  std::mutex& doc_lock(const std::string& doc_id);
  void load_store();
  void persist_caches(const EmbeddingCache& additions);
  EmbeddingVector query_vector(const std::string& question);
  StoredDocument stored(const std::string& doc_id) const;
  SampledEvidence sample_in(const StoredDocument& s, const std::string& question, std::optional<std::size_t> k);
  std::shared_ptr<const PreparedDocument> try_prepare(const ParsedDocument& doc) const;

  EngineConfig config_;
  std::shared_ptr<EmbeddingProvider> text_provider_;
  std::shared_ptr<EmbeddingProvider> image_provider_;
  std::shared_ptr<LlmBackend> backend_;
  std::optional<LinearAdapter> adapter_;

  EmbeddingCache cache_;
  mutable std::shared_mutex docs_mutex_;
  std::map<std::string, StoredDocument> docs_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> doc_locks_;
  std::mutex cache_file_mutex_;
  std::atomic<std::size_t> evaluations_{0};
};

/// Doc ids become directory names: [A-Za-z0-9._-], not "." or "..".
bool valid_doc_id(const std::string& id);

std::shared_ptr<LlmBackend> make_backend(const EngineConfig& config);

// JSON wire forms shared by the C API, the CLI and the HTTP service.
nlohmann::ordered_json evidence_json(const SampledEvidence& evidence, const ParsedDocument& doc);
nlohmann::ordered_json ask_json(const AskResult& result, const ParsedDocument& doc);
nlohmann::ordered_json document_json(const ParsedDocument& doc);
std::string content_preview(const Chunk& chunk, std::size_t max_chars = 160);

}  // namespace wukong
