#include "wukong/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "wukong/errors.hpp"

namespace wukong {

std::vector<std::string> SampledEvidence::chunk_ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.chunk_id);
  return out;
}

bool ranks_before(const ScoredChunk& a, const ScoredChunk& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.order_index < b.order_index;
}

PreparedDocument prepare_document(const ParsedDocument& doc, const EmbeddingCache& cache, const ProviderIds& providers) {
  PreparedDocument out;
  out.slots.reserve(doc.chunks().size());
  out.norms.reserve(doc.chunks().size());
  std::vector<std::string> missing;
  for (const auto& chunk : doc.chunks()) {
    const bool is_text = std::holds_alternative<TextChunk>(chunk);
    const auto record = cache.find(is_text ? providers.text : providers.image, chunk_content_hash(chunk));
    if (!record) {
      missing.push_back(chunk_id(chunk));
      continue;
    }
    const auto& v = record->vector.values;
    if (out.slots.empty()) out.dims = v.size();
    if (v.size() != out.dims) throw DimsError("mixed vector widths in one document");
    const double n = dot_product(v.data(), v.data(), v.size());
    if (n == 0.0) throw DomainError("cosine similarity of a zero vector");
    out.slots.push_back({chunk_id(chunk), modality(chunk), order_index(chunk), 0.0});
    out.norms.push_back(std::sqrt(n));
    out.rows.insert(out.rows.end(), v.begin(), v.end());
  }
  if (!missing.empty()) throw CacheMissError(std::move(missing));
  return out;
}

ScoreSet score_prepared(const EmbeddingVector& query, const PreparedDocument& prepared, std::size_t* evaluations) {
  const auto d = query.values.size();
  if (!prepared.slots.empty() && d != prepared.dims) {
    throw DimsError("dims mismatch: " + std::to_string(d) + " vs " + std::to_string(prepared.dims));
  }
  const std::vector<double> q(query.values.begin(), query.values.end());
  const double qn = dot_product(q.data(), q.data(), d);
  if (qn == 0.0) throw DomainError("cosine similarity of a zero vector");
  const double qnorm = std::sqrt(qn);
  ScoreSet out;
  out.text_scores.reserve(prepared.slots.size());
  out.image_scores.reserve(prepared.slots.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < prepared.slots.size(); ++i) {
    const double dot = dot_product(q.data(), prepared.rows.data() + i * d, d);
    ScoredChunk s = prepared.slots[i];
    s.score = std::clamp(dot / (qnorm * prepared.norms[i]), -1.0, 1.0);
    ++count;
    if (!std::isfinite(s.score)) throw DomainError("non-finite similarity for " + s.chunk_id);
    (s.modality == Modality::Text ? out.text_scores : out.image_scores).push_back(std::move(s));
  }
  if (evaluations != nullptr) *evaluations += count;
  return out;
}

ScoreSet score_all(const EmbeddingVector& query, const ParsedDocument& doc, const EmbeddingCache& cache,
                   const ProviderIds& providers, std::size_t* evaluations) {
  return score_prepared(query, prepare_document(doc, cache, providers), evaluations);
}

SampledEvidence top_k(const ScoreSet& scores, const SamplerConfig& config) {
  if (config.k == 0) throw ConfigError("k must be at least 1");
  std::vector<const ScoredChunk*> pool;
  pool.reserve(scores.size());
  for (const auto& c : scores.text_scores) pool.push_back(&c);
  for (const auto& c : scores.image_scores) pool.push_back(&c);
  if (pool.empty()) throw DomainError("cannot select from an empty score set");

  const auto before = [](const ScoredChunk* a, const ScoredChunk* b) { return ranks_before(*a, *b); };
  const auto take = std::min(config.k, pool.size());
  const auto cut = pool.begin() + static_cast<std::ptrdiff_t>(take);
  std::partial_sort(pool.begin(), cut, pool.end(), before);

  const auto is_image = [](const ScoredChunk* c) { return c->modality == Modality::Image; };
  const auto have = static_cast<std::size_t>(std::count_if(pool.begin(), cut, is_image));
  if (config.modality_floor > have) {
    // Swap the weakest selected text chunks for the strongest unselected images.
    std::sort(cut, pool.end(), before);
    auto need = config.modality_floor - have;
    auto next_image = cut;
    for (auto slot = take; slot-- > 0 && need > 0;) {
      if (is_image(pool[slot])) continue;
      next_image = std::find_if(next_image, pool.end(), is_image);
      if (next_image == pool.end()) break;
      std::iter_swap(pool.begin() + static_cast<std::ptrdiff_t>(slot), next_image);
      ++next_image;
      --need;
    }
    std::sort(pool.begin(), cut, before);
  }

  SampledEvidence out;
  out.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& c = *pool[i];
    out.entries.push_back(EvidenceEntry{c.chunk_id, c.modality, c.score, i + 1, c.order_index});
  }
  return out;
}

SampledEvidence sample(const std::string& query, const ParsedDocument& doc, EmbeddingProvider& text_provider,
                       EmbeddingProvider& image_provider, const EmbeddingCache& cache,
                       const SamplerConfig& config, std::size_t* evaluations) {
  const auto q = embed_text(text_provider, query);
  auto evidence = top_k(score_all(q, doc, cache, {text_provider.provider_id(), image_provider.provider_id()},
                                  evaluations),
                        config);
  evidence.query_text = query;
  return evidence;
}

}  // namespace wukong
