#include "wukong/adapter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "wukong/errors.hpp"

namespace wukong {

// --- adapter -------------------------------------------------------------------

LinearAdapter::LinearAdapter(std::size_t d_out, std::size_t d_in, std::vector<double> weight)
    : d_out_(d_out), d_in_(d_in), weight_(std::move(weight)) {
  if (d_out_ == 0 || d_in_ == 0) throw DomainError("adapter dims must be positive");
  if (weight_.size() != d_out_ * d_in_) throw DimsError("adapter weight has wrong size");
  for (double w : weight_) {
    if (!std::isfinite(w)) throw DomainError("adapter weight is not finite");
  }
}

LinearAdapter LinearAdapter::identity(std::size_t dims) {
  std::vector<double> w(dims * dims, 0.0);
  for (std::size_t i = 0; i < dims; ++i) w[i * dims + i] = 1.0;
  return LinearAdapter(dims, dims, std::move(w));
}

Vec LinearAdapter::project(std::span<const double> q) const {
  if (q.size() != d_in_) throw DimsError("adapter expects " + std::to_string(d_in_) + " dims, got " + std::to_string(q.size()));
  Vec u(d_out_, 0.0);
  for (std::size_t r = 0; r < d_out_; ++r) {
    const double* row = weight_.data() + r * d_in_;
    double acc = 0.0;
    for (std::size_t c = 0; c < d_in_; ++c) acc += row[c] * q[c];
    u[r] = acc;
  }
  return u;
}

Vec LinearAdapter::apply(std::span<const double> q) const {
  auto u = project(q);
  double sq = 0.0;
  for (double x : u) sq += x * x;
  if (!(sq > 0.0) || !std::isfinite(sq)) throw DomainError("adapter output has zero or non-finite norm");
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : u) x *= inv;
  return u;
}

EmbeddingVector LinearAdapter::apply(const EmbeddingVector& q) const {
  const auto raw = project(to_vec(q));
  return EmbeddingVector::normalized(std::span<const double>(raw));
}

namespace {

constexpr char kAdapterMagic[4] = {'W', 'K', 'A', 'D'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string LinearAdapter::encode() const {
  std::string out(kAdapterMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(d_out_));
  put_u32(out, static_cast<std::uint32_t>(d_in_));
  for (double w : weight_) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
  return out;
}

LinearAdapter LinearAdapter::decode(std::string_view bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kAdapterMagic, 4) != 0) {
    throw IntegrityError("not an adapter file (bad magic)");
  }
  const std::size_t d_out = get_u32(bytes, 4);
  const std::size_t d_in = get_u32(bytes, 8);
  if (bytes.size() != 12 + 4 * d_out * d_in) throw IntegrityError("adapter file has wrong length");
  std::vector<double> w(d_out * d_in);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
  return LinearAdapter(d_out, d_in, std::move(w));
}

void LinearAdapter::save(const std::filesystem::path& path) const { write_file_atomic(path, encode()); }

LinearAdapter LinearAdapter::load(const std::filesystem::path& path) { return decode(read_file(path)); }

// --- loss ----------------------------------------------------------------------

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimsError("dims mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw DomainError("similarity with a zero vector");
  return dot(a, b) / (na * nb);
}

void validate(std::size_t dims, const std::vector<Vec>& positives, const std::vector<Vec>& negatives,
              double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
  if (positives.empty()) throw DomainError("at least one positive is required");
  if (negatives.empty()) throw DomainError("at least one negative is required");
  for (const auto* group : {&positives, &negatives}) {
    for (const auto& v : *group) {
      if (v.size() != dims) {
        throw DimsError("dims mismatch: " + std::to_string(dims) + " vs " + std::to_string(v.size()));
      }
    }
  }
}

/// Sum in ascending order so the result depends only on the multiset.
double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

/// log(1 + sum_j exp(z_j)) for one positive, z_j = (s_j - s_i) / t, plus the
/// softmax weights: p_pos for the positive itself and p_neg[j].
struct PositiveTerm {
  double loss;
  double p_pos;
  std::vector<double> p_neg;
};

PositiveTerm positive_term(double s_pos, const std::vector<double>& s_neg, double temperature) {
  std::vector<double> z(s_neg.size());
  for (std::size_t j = 0; j < s_neg.size(); ++j) z[j] = (s_neg[j] - s_pos) / temperature;
  const double m = std::max(0.0, *std::max_element(z.begin(), z.end()));
  std::vector<double> shifted(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) shifted[j] = std::exp(z[j] - m);
  const double tail = sorted_sum(shifted);
  const double self = std::exp(-m);
  PositiveTerm t;
  t.loss = m == 0.0 ? std::log1p(tail) : m + std::log(self + tail);
  const double denom = self + tail;
  t.p_pos = self / denom;
  t.p_neg.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) t.p_neg[j] = shifted[j] / denom;
  return t;
}

}  // namespace

double contrastive_loss(std::span<const double> query, const std::vector<Vec>& positives,
                        const std::vector<Vec>& negatives, double temperature) {
  validate(query.size(), positives, negatives, temperature);
  std::vector<double> s_neg;
  s_neg.reserve(negatives.size());
  for (const auto& n : negatives) s_neg.push_back(cosine(query, n));
  std::vector<double> terms;
  terms.reserve(positives.size());
  for (const auto& p : positives) terms.push_back(positive_term(cosine(query, p), s_neg, temperature).loss);
  return sorted_sum(std::move(terms)) / static_cast<double>(positives.size());
}

LossGradient contrastive_loss_grad(const TrainingBatch& batch, double temperature, const LinearAdapter& adapter) {
  validate(adapter.d_out(), batch.positives, batch.negatives, temperature);
  if (batch.query.size() != adapter.d_in()) throw DimsError("query width does not match adapter input");

  const auto u = adapter.project(batch.query);
  const double u_norm = norm(u);
  if (!(u_norm > 0.0) || !std::isfinite(u_norm)) throw DomainError("adapter output has zero or non-finite norm");
  Vec a(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) a[i] = u[i] / u_norm;

  // Unit versions of the keys so that s = a . e is the cosine similarity.
  auto unit = [](const Vec& v) {
    const double n = norm(v);
    if (n == 0.0) throw DomainError("similarity with a zero vector");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
  };
  std::vector<Vec> pos;
  std::vector<Vec> neg;
  for (const auto& p : batch.positives) pos.push_back(unit(p));
  for (const auto& n : batch.negatives) neg.push_back(unit(n));

  std::vector<double> s_neg;
  for (const auto& n : neg) s_neg.push_back(dot(a, n));

  const double inv_p = 1.0 / static_cast<double>(pos.size());
  const double inv_t = 1.0 / temperature;
  std::vector<double> terms;
  Vec g_a(a.size(), 0.0);
  for (const auto& p : pos) {
    const auto t = positive_term(dot(a, p), s_neg, temperature);
    terms.push_back(t.loss);
    // d loss_i / d a = (1/t) [ (p_pos - 1) e_i + sum_j p_j e_j ]
    const double c_pos = inv_p * inv_t * (t.p_pos - 1.0);
    for (std::size_t k = 0; k < a.size(); ++k) g_a[k] += c_pos * p[k];
    for (std::size_t j = 0; j < neg.size(); ++j) {
      const double c = inv_p * inv_t * t.p_neg[j];
      for (std::size_t k = 0; k < a.size(); ++k) g_a[k] += c * neg[j][k];
    }
  }

  // Through a = u / |u|:  g_u = (g_a - (a . g_a) a) / |u|,  dL/dW = g_u q^T.
  const double radial = dot(a, g_a);
  LossGradient out;
  out.loss = sorted_sum(std::move(terms)) * inv_p;
  out.grad.assign(adapter.d_out() * adapter.d_in(), 0.0);
  for (std::size_t r = 0; r < adapter.d_out(); ++r) {
    const double g_u = (g_a[r] - radial * a[r]) / u_norm;
    double* row = out.grad.data() + r * adapter.d_in();
    for (std::size_t c = 0; c < adapter.d_in(); ++c) row[c] = g_u * batch.query[c];
  }
  return out;
}

// --- negatives -----------------------------------------------------------------

std::vector<std::string> NegativeSample::all() const {
  std::vector<std::string> out = text_ids;
  out.insert(out.end(), image_ids.begin(), image_ids.end());
  return out;
}

namespace {

/// Moves `count` uniformly chosen elements of `pool` to its front (partial
/// Fisher-Yates) and returns them.
std::vector<std::string> draw(std::vector<std::string>& pool, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  std::vector<std::string> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

}  // namespace

NegativeSample sample_negatives(const ParsedDocument& doc, const std::vector<std::string>& positive_ids,
                                std::mt19937_64& rng) {
  constexpr std::size_t kPerModality = 2;
  const std::set<std::string> positives(positive_ids.begin(), positive_ids.end());
  std::vector<std::string> spare_text;
  std::vector<std::string> spare_image;
  for (const auto& c : doc.chunks()) {
    if (positives.count(chunk_id(c)) != 0) continue;
    (std::holds_alternative<TextChunk>(c) ? spare_text : spare_image).push_back(chunk_id(c));
  }
  if (spare_text.empty() && spare_image.empty()) {
    throw DomainError("document " + doc.doc_id() + " has no chunk left to use as a negative");
  }
  NegativeSample out;
  out.text_ids = draw(spare_text, kPerModality, rng);
  out.image_ids = draw(spare_image, kPerModality, rng);
  const auto missing = 2 * kPerModality - out.text_ids.size() - out.image_ids.size();
  if (missing > 0) {
    auto more_text = draw(spare_text, missing, rng);
    out.text_ids.insert(out.text_ids.end(), more_text.begin(), more_text.end());
    auto more_images = draw(spare_image, missing - more_text.size(), rng);
    out.image_ids.insert(out.image_ids.end(), more_images.begin(), more_images.end());
  }
  return out;
}

// --- training --------------------------------------------------------------------

TrainResult train_adapter(const std::vector<TrainingBatch>& batches, const TrainConfig& config,
                          std::optional<LinearAdapter> initial) {
  if (batches.empty()) throw DomainError("no training batches");
  if (!(config.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  const auto dims = batches.front().query.size();
  TrainResult result{initial ? std::move(*initial) : LinearAdapter::identity(dims), {}};
  auto& adapter = result.adapter;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> step(adapter.weight().size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto stop = std::min(order.size(), start + config.batch_size);
      std::fill(step.begin(), step.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const auto lg = contrastive_loss_grad(batches[order[i]], config.temperature, adapter);
        if (!std::isfinite(lg.loss)) throw TrainingDivergedError(epoch);
        epoch_sum += lg.loss;
        for (std::size_t k = 0; k < step.size(); ++k) step[k] += lg.grad[k];
      }
      const double scale = config.learning_rate / static_cast<double>(stop - start);
      auto& w = adapter.weight();
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] -= scale * step[k];
        if (!std::isfinite(w[k])) throw TrainingDivergedError(epoch);
      }
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(order.size()));
  }
  return result;
}

LossReport compose_total_loss(double l_rep, std::optional<double> l_qa_external) {
  if (!std::isfinite(l_rep) || l_rep < 0.0) throw DomainError("l_rep must be finite and non-negative");
  if (l_qa_external && (!std::isfinite(*l_qa_external) || *l_qa_external < 0.0)) {
    throw DomainError("l_qa must be finite and non-negative");
  }
  return LossReport{l_rep, l_qa_external, l_rep + l_qa_external.value_or(0.0)};
}

Vec to_vec(const EmbeddingVector& v) { return Vec(v.values.begin(), v.values.end()); }

TrainingBatch make_batch(const EmbeddingVector& query, const ParsedDocument& doc, const EmbeddingCache& cache,
                         const ProviderIds& providers, const std::vector<std::string>& positive_ids,
                         std::mt19937_64& rng, std::string strategy) {
  if (positive_ids.empty()) throw DomainError("a training example needs at least one positive");
  const auto negatives = sample_negatives(doc, positive_ids, rng);
  std::vector<std::string> missing;
  auto lookup = [&](const std::string& id, std::vector<Vec>& into) {
    const auto* c = doc.find(id);
    if (c == nullptr) throw IntegrityError("evidence id " + id + " not in document " + doc.doc_id());
    const bool is_text = std::holds_alternative<TextChunk>(*c);
    const auto r = cache.find(is_text ? providers.text : providers.image, chunk_content_hash(*c));
    if (!r) {
      missing.push_back(id);
      return;
    }
    into.push_back(to_vec(r->vector));
  };
  TrainingBatch b;
  b.query = to_vec(query);
  for (const auto& id : positive_ids) lookup(id, b.positives);
  const auto neg_ids = negatives.all();
  for (const auto& id : neg_ids) lookup(id, b.negatives);
  if (!missing.empty()) throw CacheMissError(std::move(missing));
  b.provenance = BatchProvenance{doc.doc_id(), positive_ids, neg_ids, std::move(strategy)};
  return b;
}

}  // namespace wukong
