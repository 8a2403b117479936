#include "wukong/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>

#include "wukong/errors.hpp"
#include "wukong/hash.hpp"
#include "wukong/text.hpp"

namespace wukong {

namespace {

template <typename T>
EmbeddingVector normalize_impl(std::span<const T> raw) {
  double sq = 0.0;
  for (T x : raw) {
    if (!std::isfinite(static_cast<double>(x))) throw DomainError("non-finite embedding component");
    sq += static_cast<double>(x) * static_cast<double>(x);
  }
  if (raw.empty() || sq == 0.0) throw DomainError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(sq);
  EmbeddingVector out;
  out.values.reserve(raw.size());
  for (T x : raw) out.values.push_back(static_cast<float>(static_cast<double>(x) * inv));
  return out;
}

}  // namespace

EmbeddingVector EmbeddingVector::normalized(std::span<const double> raw) { return normalize_impl(raw); }
EmbeddingVector EmbeddingVector::normalized(std::span<const float> raw) { return normalize_impl(raw); }

double l2_norm(const EmbeddingVector& v) noexcept {
  double sq = 0.0;
  for (float x : v.values) sq += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sq);
}

bool is_unit(const EmbeddingVector& v, double tolerance) noexcept {
  return !v.values.empty() && std::abs(l2_norm(v) - 1.0) < tolerance;
}

__attribute__((target_clones("avx2", "default"))) double dot_product(const float* a, const float* b,
                                                                     std::size_t n) noexcept {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
  }
  for (; i < n; ++i) acc[i % 8] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

__attribute__((target_clones("avx2", "default"))) double dot_product(const double* a, const double* b,
                                                                     std::size_t n) noexcept {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (; i < n; ++i) acc[i % 8] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dims() != b.dims()) {
    throw DimsError("dims mismatch: " + std::to_string(a.dims()) + " vs " + std::to_string(b.dims()));
  }
  const auto n = a.values.size();
  const double dot = dot_product(a.values.data(), b.values.data(), n);
  const double na = dot_product(a.values.data(), a.values.data(), n);
  const double nb = dot_product(b.values.data(), b.values.data(), n);
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero vector");
  const double s = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(s, -1.0, 1.0);
}

std::string text_content_hash(std::string_view text) {
  std::string material = "text";
  material.push_back('\0');
  material.append(text);
  return content_address(material);
}

std::string image_content_hash(std::string_view blob_hash, std::string_view caption) {
  std::string material = "image";
  material.push_back('\0');
  material.append(blob_hash);
  material.push_back('\0');
  material.append(caption);
  return content_address(material);
}

std::string chunk_content_hash(const Chunk& chunk) {
  if (const auto* t = std::get_if<TextChunk>(&chunk)) return text_content_hash(t->text);
  const auto& img = std::get<ImageChunk>(chunk);
  return image_content_hash(img.image_ref.hash, img.caption);
}

namespace {

EmbeddingVector checked(EmbeddingProvider& provider, const EmbeddingInput& input) {
  const auto raw = provider.embed(input);
  if (raw.size() != provider.dims()) {
    throw ProviderContractError(provider.provider_id() + " returned " + std::to_string(raw.size()) +
                                " dims, declared " + std::to_string(provider.dims()));
  }
  try {
    return EmbeddingVector::normalized(std::span<const float>(raw));
  } catch (const DomainError& e) {
    throw ProviderContractError(provider.provider_id() + ": " + e.what());
  }
}

}  // namespace

EmbeddingVector embed_text(EmbeddingProvider& provider, std::string_view text) {
  if (text::trim(text).empty()) throw DomainError("cannot embed empty text");
  return checked(provider, EmbeddingInput{Modality::Text, std::string(text), {}});
}

EmbeddingVector embed_image(EmbeddingProvider& provider, const BlobRef& image_ref, std::string_view caption) {
  if (image_ref.locator.empty() || !std::filesystem::exists(image_ref.locator)) {
    throw MissingBlobError("blob not found: " + image_ref.hash);
  }
  auto bytes = read_file(image_ref.locator);
  if (content_address(bytes) != image_ref.hash) {
    throw IntegrityError("blob content does not match " + image_ref.hash);
  }
  return checked(provider, EmbeddingInput{Modality::Image, std::move(bytes), std::string(caption)});
}

// --- offline embedder --------------------------------------------------------

OfflineEmbedder::OfflineEmbedder(Options options) : options_(options) {
  if (options_.dims == 0) throw ConfigError("offline embedder dims must be positive");
  if (!(options_.topic_share > 0.0 && options_.topic_share < 1.0)) {
    throw ConfigError("topic_share must lie in (0, 1)");
  }
}

std::string OfflineEmbedder::provider_id() const {
  std::ostringstream id;
  id << "offline-v1/seed=" << options_.seed << "/dims=" << options_.dims;
  if (options_.planted) id << "/planted=" << options_.topic_share;
  return id.str();
}

std::vector<double> OfflineEmbedder::gaussian(std::string_view material) const {
  std::string keyed = std::to_string(options_.seed);
  keyed.push_back('\0');
  keyed.append(material);
  const auto digest = sha256(keyed);
  std::uint64_t state = 0;
  std::memcpy(&state, digest.data(), sizeof state);
  std::mt19937_64 rng(state);
  // Box-Muller over raw 53-bit draws keeps the stream identical across
  // standard library implementations.
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  std::vector<double> out(options_.dims);
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    out[i] = r * std::cos(theta);
    if (i + 1 < out.size()) out[i + 1] = r * std::sin(theta);
  }
  return out;
}

namespace {

void add_unit(std::vector<double>& acc, const std::vector<double>& v, double weight) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double scale = weight / std::sqrt(sq);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i] * scale;
}

std::string strip_punct_tail(std::string_view token) {
  while (!token.empty() && text::is_ascii_punct(static_cast<unsigned char>(token.back()))) {
    token.remove_suffix(1);
  }
  return std::string(token);
}

}  // namespace

std::vector<float> OfflineEmbedder::embed(const EmbeddingInput& input) {
  std::string material = modality_name(input.modality);
  material.push_back('\0');
  if (input.modality == Modality::Image) {
    material += content_address(input.content);
    material.push_back('\0');
    material += input.caption;
  } else {
    material += input.content;
  }
  const auto noise = gaussian(material);

  std::vector<std::string> topics;
  if (options_.planted) {
    std::istringstream words(input.modality == Modality::Image ? input.caption : input.content);
    std::string w;
    while (words >> w) {
      w = strip_punct_tail(w);
      if (w.rfind("topic:", 0) == 0 && w.size() > 6) {
        topics.push_back(std::string("doc") + '\0' + w.substr(6));
      } else if (w.rfind("qtopic:", 0) == 0 && w.size() > 7) {
        topics.push_back(std::string("query") + '\0' + w.substr(7));
      }
    }
  }

  std::vector<double> acc(options_.dims, 0.0);
  if (topics.empty()) {
    add_unit(acc, noise, 1.0);
  } else {
    std::vector<double> topic_sum(options_.dims, 0.0);
    for (const auto& t : topics) add_unit(topic_sum, gaussian(std::string("topic") + '\0' + t), 1.0);
    add_unit(acc, topic_sum, std::sqrt(options_.topic_share));
    add_unit(acc, noise, std::sqrt(1.0 - options_.topic_share));
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

// --- throttling ----------------------------------------------------------------

ThrottledProvider::ThrottledProvider(std::shared_ptr<EmbeddingProvider> inner, std::size_t max_in_flight)
    : inner_(std::move(inner)), max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {}

std::vector<float> ThrottledProvider::embed(const EmbeddingInput& input) {
  {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
  }
  struct Release {
    ThrottledProvider& self;
    ~Release() {
      {
        std::lock_guard lock(self.mutex_);
        --self.in_flight_;
      }
      self.cv_.notify_one();
    }
  } release{*this};
  return inner_->embed(input);
}

// --- cache -----------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(const EmbeddingCache& other) {
  std::shared_lock lock(other.mutex_);
  dims_ = other.dims_;
  records_ = other.records_;
}

EmbeddingCache& EmbeddingCache::operator=(const EmbeddingCache& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dims_ = other.dims_;
  records_ = other.records_;
  return *this;
}

std::size_t EmbeddingCache::dims() const {
  std::shared_lock lock(mutex_);
  return dims_;
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

std::shared_ptr<const EmbeddingRecord> EmbeddingCache::find(std::string_view provider_id,
                                                            std::string_view content_hash) const {
  Key key{std::string(provider_id), std::string(content_hash)};
  std::shared_lock lock(mutex_);
  const auto it = records_.find(key);
  return it == records_.end() ? nullptr : it->second;
}

std::optional<EmbeddingRecord> EmbeddingCache::get(std::string_view provider_id,
                                                   std::string_view content_hash) const {
  auto r = find(provider_id, content_hash);
  if (!r) return std::nullopt;
  return *r;
}

void EmbeddingCache::put(EmbeddingRecord record) {
  if (record.provider_id.empty()) throw DomainError("record has empty provider_id");
  if (record.content_hash.empty()) throw DomainError("record has empty content_hash");
  if (!is_unit(record.vector)) throw DomainError("record vector for " + record.chunk_id + " is not unit norm");
  auto stored = std::make_shared<const EmbeddingRecord>(std::move(record));
  std::unique_lock lock(mutex_);
  if (dims_ == 0) dims_ = stored->vector.dims();
  if (stored->vector.dims() != dims_) {
    throw DimsError("cache holds " + std::to_string(dims_) + "-dim vectors, got " +
                    std::to_string(stored->vector.dims()));
  }
  records_[Key{stored->provider_id, stored->content_hash}] = std::move(stored);
}

void EmbeddingCache::merge(const EmbeddingCache& other) {
  for (auto& r : other.records()) put(std::move(r));
}

std::vector<EmbeddingRecord> EmbeddingCache::records() const {
  std::shared_lock lock(mutex_);
  std::vector<EmbeddingRecord> out;
  out.reserve(records_.size());
  for (const auto& [k, r] : records_) out.push_back(*r);
  return out;
}

namespace {

constexpr char kMagic[4] = {'W', 'K', 'E', 'C'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_bytes(std::string& out, std::string_view s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CacheFormatError("cache file truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string EmbeddingCache::encode(std::optional<std::string_view> provider_id) const {
  const auto all = records();
  std::vector<const EmbeddingRecord*> selected;
  for (const auto& r : all) {
    if (!provider_id || r.provider_id == *provider_id) selected.push_back(&r);
  }
  std::string out(kMagic, 4);
  put_le<std::uint16_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, selected.size());
  for (const auto* r : selected) {
    put_bytes(out, r->provider_id);
    put_bytes(out, r->content_hash);
    put_bytes(out, r->chunk_id);
    out.push_back(static_cast<char>(r->modality == Modality::Text ? 0 : 1));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r->vector.dims()));
    for (float f : r->vector.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

EmbeddingCache EmbeddingCache::decode(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CacheFormatError("bad cache magic");
  ByteReader in(bytes.substr(4));
  const auto version = in.le<std::uint16_t>();
  if (version != kFormatVersion) {
    throw CacheVersionError("cache format version " + std::to_string(version) + ", expected " +
                            std::to_string(kFormatVersion));
  }
  const auto count = in.le<std::uint64_t>();
  EmbeddingCache cache;
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    r.provider_id = in.bytes();
    r.content_hash = in.bytes();
    r.chunk_id = in.bytes();
    const auto m = in.le<std::uint8_t>();
    if (m > 1) throw CacheFormatError("bad modality tag " + std::to_string(m));
    r.modality = m == 0 ? Modality::Text : Modality::Image;
    const auto dims = in.le<std::uint32_t>();
    if (dims == 0) throw CacheFormatError("record with zero dims");
    r.vector.values.resize(dims);
    for (auto& f : r.vector.values) f = std::bit_cast<float>(in.le<std::uint32_t>());
    try {
      cache.put(std::move(r));
    } catch (const Error& e) {
      throw CacheFormatError(std::string("invalid cache record: ") + e.what());
    }
  }
  if (!in.done()) throw CacheFormatError("trailing bytes after last cache record");
  return cache;
}

void EmbeddingCache::persist(const std::filesystem::path& locator, std::optional<std::string_view> provider_id) const {
  write_file_atomic(locator, encode(provider_id));
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& locator) { return decode(read_file(locator)); }

EmbeddingRecord embed_chunk_cached(EmbeddingCache& cache, EmbeddingProvider& text_provider,
                                   EmbeddingProvider& image_provider, const Chunk& chunk) {
  const auto hash = chunk_content_hash(chunk);
  const bool is_text = std::holds_alternative<TextChunk>(chunk);
  auto& provider = is_text ? text_provider : image_provider;
  const auto pid = provider.provider_id();
  if (auto hit = cache.find(pid, hash)) {
    EmbeddingRecord r = *hit;
    r.chunk_id = wukong::chunk_id(chunk);
    return r;
  }
  EmbeddingRecord r;
  r.chunk_id = wukong::chunk_id(chunk);
  r.modality = modality(chunk);
  r.content_hash = hash;
  r.provider_id = pid;
  if (is_text) {
    r.vector = embed_text(provider, std::get<TextChunk>(chunk).text);
  } else {
    const auto& img = std::get<ImageChunk>(chunk);
    r.vector = embed_image(provider, img.image_ref, img.caption);
  }
  cache.put(r);
  return r;
}

}  // namespace wukong
