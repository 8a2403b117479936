#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "wukong/doc_model.hpp"
#include "wukong/embedding.hpp"

namespace wukong {

struct ScoredChunk {
  std::string chunk_id;
  Modality modality = Modality::Text;
  std::size_t order_index = 0;
  double score = 0.0;
};

/// One cosine score per chunk, split by modality and kept in reading order.
struct ScoreSet {
  std::vector<ScoredChunk> text_scores;
  std::vector<ScoredChunk> image_scores;

  std::size_t size() const noexcept { return text_scores.size() + image_scores.size(); }
};

struct SamplerConfig {
  std::size_t k = 5;
  /// Minimum number of images among the selection, when that many exist.
  std::size_t modality_floor = 0;
};

struct EvidenceEntry {
  std::string chunk_id;
  Modality modality = Modality::Text;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
  std::size_t order_index = 0;

  friend bool operator==(const EvidenceEntry&, const EvidenceEntry&) = default;
};

struct SampledEvidence {
  std::vector<EvidenceEntry> entries;
  std::string query_text;

  std::vector<std::string> chunk_ids() const;
  friend bool operator==(const SampledEvidence&, const SampledEvidence&) = default;
};

/// The embedding providers whose cached vectors the sampler reads.
struct ProviderIds {
  std::string text;
  std::string image;
};

/// Tie rule shared by top_k and its tests: higher score first, then lower
/// order_index.
bool ranks_before(const ScoredChunk& a, const ScoredChunk& b) noexcept;

/// Scores every chunk of `doc` against `query`. Each call performs exactly
/// n + m similarity evaluations, which are added to `evaluations` when given.
/// CacheMissError lists every chunk without a cached vector.
ScoreSet score_all(const EmbeddingVector& query, const ParsedDocument& doc, const EmbeddingCache& cache,
                   const ProviderIds& providers, std::size_t* evaluations = nullptr);

/// A document's cached vectors resolved once, in reading order, so repeated
/// scoring does no hashing or cache lookups.
struct PreparedDocument {
  std::vector<ScoredChunk> slots;
  std::size_t dims = 0;
  /// Row-major vectors widened to double, one row per slot.
  std::vector<double> rows;
  std::vector<double> norms;
};

/// CacheMissError lists every chunk without a cached vector.
PreparedDocument prepare_document(const ParsedDocument& doc, const EmbeddingCache& cache, const ProviderIds& providers);

/// Same scores as score_all, with exactly n + m similarity evaluations.
ScoreSet score_prepared(const EmbeddingVector& query, const PreparedDocument& prepared,
                        std::size_t* evaluations = nullptr);

/// Joint selection over both modalities. k larger than the population
/// returns everything.
SampledEvidence top_k(const ScoreSet& scores, const SamplerConfig& config);

/// embed_text(query) -> score_all -> top_k. The query vector is never cached.
SampledEvidence sample(const std::string& query, const ParsedDocument& doc, EmbeddingProvider& text_provider,
                       EmbeddingProvider& image_provider, const EmbeddingCache& cache,
                       const SamplerConfig& config, std::size_t* evaluations = nullptr);

}  // namespace wukong
