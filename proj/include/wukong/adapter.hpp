#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wukong/doc_model.hpp"
#include "wukong/embedding.hpp"
#include "wukong/sampler.hpp"

namespace wukong {

using Vec = std::vector<double>;

struct BatchProvenance {
  std::string doc_id;
  std::vector<std::string> positive_ids;
  std::vector<std::string> negative_ids;
  std::string strategy;
};

/// One query with its evidence (positives) and sampled negatives. The query
/// is the raw, pre-adapter embedding.
struct TrainingBatch {
  Vec query;
  std::vector<Vec> positives;
  std::vector<Vec> negatives;
  BatchProvenance provenance;
};

/// Query-side linear map W (d_out x d_in, row-major). Outputs are always
/// re-normalized: adapted = W q / |W q|.
class LinearAdapter {
 public:
  LinearAdapter() = default;
  LinearAdapter(std::size_t d_out, std::size_t d_in, std::vector<double> weight);
  static LinearAdapter identity(std::size_t dims);

  std::size_t d_out() const noexcept { return d_out_; }
  std::size_t d_in() const noexcept { return d_in_; }
  const std::vector<double>& weight() const noexcept { return weight_; }
  std::vector<double>& weight() noexcept { return weight_; }

  /// W q without normalization.
  Vec project(std::span<const double> q) const;
  /// normalize(W q). DomainError if W q vanishes.
  Vec apply(std::span<const double> q) const;
  EmbeddingVector apply(const EmbeddingVector& q) const;

  /// "WKAD", u32 d_out, u32 d_in, then little-endian f32 weights.
  std::string encode() const;
  static LinearAdapter decode(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static LinearAdapter load(const std::filesystem::path& path);

  friend bool operator==(const LinearAdapter&, const LinearAdapter&) = default;

 private:
  std::size_t d_out_ = 0;
  std::size_t d_in_ = 0;
  std::vector<double> weight_;
};

struct TrainConfig {
  double temperature = 0.07;
  double learning_rate = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

struct LossReport {
  double l_rep = 0.0;
  std::optional<double> l_qa_external;
  double l_total = 0.0;
};

/// Per-positive softmax objective: each positive competes only against the
/// negatives,
///   L = -(1/P) sum_i log( e^{s_i/t} / (e^{s_i/t} + sum_j e^{s_j/t}) ),
/// with s = cosine similarity to the query. Accumulation runs over sorted
/// terms, so the result is exactly invariant to the order of positives and
/// of negatives. ConfigError for t <= 0, DimsError on width mismatch.
double contrastive_loss(std::span<const double> query, const std::vector<Vec>& positives,
                        const std::vector<Vec>& negatives, double temperature);

struct LossGradient {
  double loss = 0.0;
  /// dL/dW, same layout as LinearAdapter::weight().
  std::vector<double> grad;
};

/// Loss of the adapted query and its exact gradient with respect to W,
/// including the Jacobian of the re-normalization.
LossGradient contrastive_loss_grad(const TrainingBatch& batch, double temperature, const LinearAdapter& adapter);

struct NegativeSample {
  std::vector<std::string> text_ids;
  std::vector<std::string> image_ids;

  std::vector<std::string> all() const;
};

/// Two text and two image chunks drawn uniformly without replacement from
/// the non-positive chunks. A modality short of spares is backfilled from the
/// other; with fewer than four spares all of them are used. DomainError only
/// when the document has no spare chunk at all.
NegativeSample sample_negatives(const ParsedDocument& doc, const std::vector<std::string>& positive_ids,
                                std::mt19937_64& rng);

struct TrainResult {
  LinearAdapter adapter;
  /// Mean per-example loss of each epoch, measured before each update.
  std::vector<double> epoch_loss;
};

/// Mini-batch gradient descent (no momentum) on the mean contrastive loss.
/// Starts from `initial` or the identity. Deterministic for a fixed seed.
/// TrainingDivergedError on a non-finite loss.
TrainResult train_adapter(const std::vector<TrainingBatch>& batches, const TrainConfig& config,
                          std::optional<LinearAdapter> initial = std::nullopt);

/// l_total = l_rep + l_qa_external. The external term is a reported scalar
/// only. DomainError for negative or non-finite inputs.
LossReport compose_total_loss(double l_rep, std::optional<double> l_qa_external = std::nullopt);

Vec to_vec(const EmbeddingVector& v);

/// Builds a batch from cached chunk vectors: positives are `positive_ids`,
/// negatives come from sample_negatives. CacheMissError when a chunk has no
/// cached vector.
TrainingBatch make_batch(const EmbeddingVector& query, const ParsedDocument& doc, const EmbeddingCache& cache,
                         const ProviderIds& providers, const std::vector<std::string>& positive_ids,
                         std::mt19937_64& rng, std::string strategy = {});

}  // namespace wukong
