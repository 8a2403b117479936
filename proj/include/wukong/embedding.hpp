#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wukong/doc_model.hpp"

namespace wukong {

/// Dense embedding. Vectors that enter the cache or the sampler are unit
/// norm; `normalized` is the only way this module produces them.
struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dims() const noexcept { return values.size(); }
  /// L2-normalizes in double precision. DomainError on zero or non-finite input.
  static EmbeddingVector normalized(std::span<const double> raw);
  static EmbeddingVector normalized(std::span<const float> raw);
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double l2_norm(const EmbeddingVector& v) noexcept;
bool is_unit(const EmbeddingVector& v, double tolerance = 1e-6) noexcept;

/// dot(a,b) / (|a||b|), clamped to [-1, 1]. DimsError on mismatch.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
/// Double-precision dot product with a fixed summation order (eight lanes,
/// then a pairwise reduction). cosine_similarity and the sampler share it.
double dot_product(const float* a, const float* b, std::size_t n) noexcept;
/// Same order on values already widened to double; equal results.
double dot_product(const double* a, const double* b, std::size_t n) noexcept;

struct EmbeddingRecord {
  std::string chunk_id;
  Modality modality = Modality::Text;
  std::string content_hash;
  std::string provider_id;
  EmbeddingVector vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

/// Cache keys. Image keys cover the blob hash and the caption, so a caption
/// edit is a different piece of content.
std::string text_content_hash(std::string_view text);
std::string image_content_hash(std::string_view blob_hash, std::string_view caption);
std::string chunk_content_hash(const Chunk& chunk);

struct EmbeddingInput {
  Modality modality = Modality::Text;
  /// UTF-8 text, or raw blob bytes for images.
  std::string content;
  std::string caption;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Name plus version, e.g. "offline-v1/seed=7/dims=64".
  virtual std::string provider_id() const = 0;
  virtual std::size_t dims() const = 0;
  /// May return an unnormalized vector; callers go through embed_text /
  /// embed_image which enforce the contract.
  virtual std::vector<float> embed(const EmbeddingInput& input) = 0;
};

/// Non-empty text in, unit vector of the provider's declared dims out.
EmbeddingVector embed_text(EmbeddingProvider& provider, std::string_view text);

/// Reads and verifies the blob behind `image_ref`, then embeds bytes + caption.
EmbeddingVector embed_image(EmbeddingProvider& provider, const BlobRef& image_ref, std::string_view caption);

/// Deterministic embedder for offline runs. Content is hashed with the seed
/// into a Gaussian direction. In planted mode, whitespace tokens of the form
/// `topic:<name>` add a shared document-space direction per name and
/// `qtopic:<name>` a separate query-space direction, so correlated content
/// can be constructed on purpose.
class OfflineEmbedder final : public EmbeddingProvider {
 public:
  struct Options {
    std::uint64_t seed = 0;
    std::size_t dims = 256;
    bool planted = false;
    /// Share of squared norm carried by topic directions when present.
    double topic_share = 0.9;
  };

  explicit OfflineEmbedder(Options options);
  OfflineEmbedder(std::uint64_t seed, std::size_t dims) : OfflineEmbedder(Options{seed, dims}) {}

  std::string provider_id() const override;
  std::size_t dims() const override { return options_.dims; }
  std::vector<float> embed(const EmbeddingInput& input) override;

  const Options& options() const noexcept { return options_; }

 private:
  std::vector<double> gaussian(std::string_view material) const;

  Options options_;
};

/// HTTP+JSON client for `POST /embed`. Transport failures and 5xx replies
/// are retryable ProviderErrors; a reply whose "dims" disagrees with its
/// values or with `dims` is a ProviderContractError.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  struct Options {
    std::string endpoint;  // e.g. "http://127.0.0.1:8080"
    std::string token;
    std::string provider_id;
    std::size_t dims = 0;
    std::chrono::milliseconds timeout{30000};
  };
  explicit HttpEmbeddingProvider(Options options);
  std::string provider_id() const override { return options_.provider_id; }
  std::size_t dims() const override { return options_.dims; }
  std::vector<float> embed(const EmbeddingInput& input) override;

  static std::string request_body(const EmbeddingInput& input);

 private:
  Options options_;
};

/// Caps concurrent calls into another provider.
class ThrottledProvider final : public EmbeddingProvider {
 public:
  ThrottledProvider(std::shared_ptr<EmbeddingProvider> inner, std::size_t max_in_flight);

  std::string provider_id() const override { return inner_->provider_id(); }
  std::size_t dims() const override { return inner_->dims(); }
  std::vector<float> embed(const EmbeddingInput& input) override;

 private:
  std::shared_ptr<EmbeddingProvider> inner_;
  std::size_t max_in_flight_;
  std::size_t in_flight_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

/// Records keyed by (provider_id, content_hash). Readers run concurrently;
/// writers are serialized. Records are held behind shared_ptr<const> so a
/// reader sees either nothing or a complete record.
class EmbeddingCache {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  /// dims == 0 leaves the width unset until the first put.
  explicit EmbeddingCache(std::size_t dims = 0) : dims_(dims) {}
  EmbeddingCache(const EmbeddingCache& other);
  EmbeddingCache& operator=(const EmbeddingCache& other);

  std::size_t dims() const;
  std::size_t size() const;

  std::optional<EmbeddingRecord> get(std::string_view provider_id, std::string_view content_hash) const;
  std::shared_ptr<const EmbeddingRecord> find(std::string_view provider_id, std::string_view content_hash) const;
  /// Validates the record and replaces any record under the same key.
  void put(EmbeddingRecord record);
  void merge(const EmbeddingCache& other);
  /// All records, in key order.
  std::vector<EmbeddingRecord> records() const;

  /// Little-endian binary file; see the README for the layout. When
  /// `provider_id` is given only that provider's records are written.
  void persist(const std::filesystem::path& locator, std::optional<std::string_view> provider_id = {}) const;
  static EmbeddingCache load(const std::filesystem::path& locator);
  static EmbeddingCache decode(std::string_view bytes);
  std::string encode(std::optional<std::string_view> provider_id = {}) const;

 private:
  using Key = std::pair<std::string, std::string>;

  mutable std::shared_mutex mutex_;
  std::size_t dims_;
  std::map<Key, std::shared_ptr<const EmbeddingRecord>> records_;
};

/// Cache-through embedding for one chunk: returns the cached record when the
/// key is present, otherwise embeds with the matching provider and stores.
EmbeddingRecord embed_chunk_cached(EmbeddingCache& cache, EmbeddingProvider& text_provider,
                                   EmbeddingProvider& image_provider, const Chunk& chunk);

}  // namespace wukong
