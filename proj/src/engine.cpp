#include "wukong/engine.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <set>

#include "wukong/hash.hpp"
#include "wukong/text.hpp"

namespace wukong {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// --- config ------------------------------------------------------------------------

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key ") + key + " has the wrong type");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "store_root",      "embed_endpoint",   "image_embed_endpoint", "embed_token",     "embed_provider_id",
      "dims",            "offline_seed",     "offline_planted",      "llm_backend",     "llm_endpoint",
      "llm_token",       "scripted_transcript", "context_limit",     "k",               "modality_floor",
      "answer_template", "adapter",          "temperature",          "learning_rate",   "epochs",
      "batch_size",      "train_seed",       "max_in_flight",        "rate_per_second", "theta_rel",
      "parser_command"};
  return keys;
}

}  // namespace

EngineConfig EngineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (known_keys().count(key) == 0) throw ConfigError("unknown config key: " + key);
  }
  EngineConfig c;
  std::string path;
  if (j.contains("store_root")) {
    read_key(j, "store_root", path);
    c.store_root = path;
  }
  read_key(j, "embed_endpoint", c.embed_endpoint);
  read_key(j, "image_embed_endpoint", c.image_embed_endpoint);
  read_key(j, "embed_token", c.embed_token);
  read_key(j, "embed_provider_id", c.embed_provider_id);
  read_key(j, "dims", c.dims);
  read_key(j, "offline_seed", c.offline_seed);
  read_key(j, "offline_planted", c.offline_planted);
  read_key(j, "llm_backend", c.llm_backend);
  read_key(j, "llm_endpoint", c.llm_endpoint);
  read_key(j, "llm_token", c.llm_token);
  if (j.contains("scripted_transcript")) {
    path.clear();
    read_key(j, "scripted_transcript", path);
    c.scripted_transcript = path;
  }
  if (j.contains("context_limit") && !j["context_limit"].is_null()) {
    std::size_t limit = 0;
    read_key(j, "context_limit", limit);
    c.context_limit = limit;
  }
  read_key(j, "k", c.k);
  read_key(j, "modality_floor", c.modality_floor);
  read_key(j, "answer_template", c.answer_template);
  if (j.contains("adapter")) {
    path.clear();
    read_key(j, "adapter", path);
    c.adapter = path;
  }
  read_key(j, "temperature", c.temperature);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "epochs", c.epochs);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "train_seed", c.train_seed);
  read_key(j, "max_in_flight", c.max_in_flight);
  read_key(j, "rate_per_second", c.rate_per_second);
  read_key(j, "theta_rel", c.theta_rel);
  read_key(j, "parser_command", c.parser_command);
  c.validate();
  return c;
}

json EngineConfig::to_json() const {
  json j{{"store_root", store_root.string()},
         {"embed_endpoint", embed_endpoint},
         {"image_embed_endpoint", image_embed_endpoint},
         {"embed_provider_id", embed_provider_id},
         {"dims", dims},
         {"offline_seed", offline_seed},
         {"offline_planted", offline_planted},
         {"llm_backend", llm_backend},
         {"llm_endpoint", llm_endpoint},
         {"scripted_transcript", scripted_transcript.string()},
         {"k", k},
         {"modality_floor", modality_floor},
         {"answer_template", answer_template},
         {"adapter", adapter.string()},
         {"temperature", temperature},
         {"learning_rate", learning_rate},
         {"epochs", epochs},
         {"batch_size", batch_size},
         {"train_seed", train_seed},
         {"max_in_flight", max_in_flight},
         {"rate_per_second", rate_per_second},
         {"theta_rel", theta_rel},
         {"parser_command", parser_command}};
  if (context_limit) j["context_limit"] = *context_limit;
  return j;
}

void EngineConfig::validate() const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (dims == 0) throw ConfigError("dims must be positive");
  if (store_root.empty()) throw ConfigError("store_root is empty");
  static const std::set<std::string> backends{"echo", "extractive", "scripted", "http"};
  if (backends.count(llm_backend) == 0) throw ConfigError("unknown llm_backend: " + llm_backend);
  if (llm_backend == "scripted" && scripted_transcript.empty()) {
    throw ConfigError("llm_backend scripted needs scripted_transcript");
  }
  if (llm_backend == "http" && llm_endpoint.empty()) throw ConfigError("llm_backend http needs llm_endpoint");
  answer_instruction(answer_template);
}

std::shared_ptr<LlmBackend> make_backend(const EngineConfig& c) {
  std::shared_ptr<LlmBackend> inner;
  if (c.llm_backend == "echo") {
    inner = std::make_shared<EchoBackend>();
  } else if (c.llm_backend == "extractive") {
    inner = std::make_shared<ExtractiveBackend>();
  } else if (c.llm_backend == "scripted") {
    inner = ScriptedBackend::from_json_file(c.scripted_transcript);
  } else if (c.llm_backend == "http") {
    inner = std::make_shared<HttpLlmBackend>(HttpLlmBackend::Options{c.llm_endpoint, c.llm_token});
  } else {
    throw ConfigError("unknown llm_backend: " + c.llm_backend);
  }
  return std::make_shared<ThrottledBackend>(std::move(inner), c.max_in_flight);
}

bool valid_doc_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.size() > 200) return false;
  return std::all_of(id.begin(), id.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) != 0 || ch == '.' || ch == '_' || ch == '-';
  });
}

// --- wire forms --------------------------------------------------------------------

std::string content_preview(const Chunk& chunk, std::size_t max_chars) {
  std::string s;
  if (const auto* t = std::get_if<TextChunk>(&chunk)) {
    s = t->text;
  } else {
    const auto& img = std::get<ImageChunk>(chunk);
    s = img.figure_label ? *img.figure_label + (img.caption.empty() ? "" : ": " + img.caption) : img.caption;
  }
  s = text::collapse_whitespace(s);
  const auto cps = text::decode_utf8(s);
  if (cps.size() <= max_chars) return s;
  return text::encode_utf8(std::u32string_view(cps).substr(0, max_chars)) + "...";
}

ordered_json evidence_json(const SampledEvidence& evidence, const ParsedDocument& doc) {
  ordered_json out = ordered_json::array();
  for (const auto& e : evidence.entries) {
    ordered_json item;
    item["chunk_id"] = e.chunk_id;
    item["modality"] = modality_name(e.modality);
    item["score"] = e.score;
    item["rank"] = e.rank;
    item["order_index"] = e.order_index;
    const auto* c = doc.find(e.chunk_id);
    item["content_preview"] = c != nullptr ? content_preview(*c) : "";
    if (c != nullptr) {
      if (const auto* img = std::get_if<ImageChunk>(c)) {
        item["image_hash"] = img->image_ref.hash;
        if (img->figure_label) item["figure_label"] = *img->figure_label;
      }
    }
    out.push_back(std::move(item));
  }
  return out;
}

ordered_json ask_json(const AskResult& r, const ParsedDocument& doc) {
  ordered_json j;
  j["doc_id"] = r.doc_id;
  j["question"] = r.evidence.query_text;
  j["answer"] = r.answer.answer_text;
  j["evidence"] = evidence_json(r.evidence, doc);
  j["evidence_used"] = r.answer.evidence_used;
  j["prompt_tokens"] = r.answer.prompt_tokens;
  j["latency_ms"] = r.answer.latency_ms;
  j["backend_id"] = r.answer.backend_id;
  return j;
}

ordered_json document_json(const ParsedDocument& doc) {
  ordered_json j;
  j["doc_id"] = doc.doc_id();
  j["source"] = doc.source_name();
  j["n_text"] = doc.n_text();
  j["m_image"] = doc.m_image();
  ordered_json chunks = ordered_json::array();
  for (const auto& c : doc.chunks()) {
    ordered_json item;
    item["chunk_id"] = chunk_id(c);
    item["order_index"] = order_index(c);
    item["modality"] = modality_name(modality(c));
    if (const auto* t = std::get_if<TextChunk>(&c)) {
      item["section_path"] = t->section_path;
      item["text"] = t->text;
    } else {
      const auto& img = std::get<ImageChunk>(c);
      item["caption"] = img.caption;
      if (img.figure_label) item["figure_label"] = *img.figure_label;
      item["image_hash"] = img.image_ref.hash;
    }
    chunks.push_back(std::move(item));
  }
  j["chunks"] = std::move(chunks);
  return j;
}

// --- engine ------------------------------------------------------------------------

namespace {

std::string provider_slug(const std::string& provider_id) {
  std::string out;
  for (char ch : provider_id) out += std::isalnum(static_cast<unsigned char>(ch)) != 0 ? ch : '_';
  return out + "-" + sha256_hex(provider_id).substr(0, 8);
}

}  // namespace

Engine::Engine(EngineConfig config, std::shared_ptr<EmbeddingProvider> text_provider,
               std::shared_ptr<EmbeddingProvider> image_provider, std::shared_ptr<LlmBackend> backend)
    : config_(std::move(config)) {
  config_.validate();
  if (config_.embed_token.empty()) {
    if (const char* t = std::getenv("WUKONG_EMBED_TOKEN")) config_.embed_token = t;
  }
  if (config_.llm_token.empty()) {
    if (const char* t = std::getenv("WUKONG_LLM_TOKEN")) config_.llm_token = t;
  }
  if (text_provider) {
    text_provider_ = std::move(text_provider);
  } else if (config_.embed_endpoint.empty()) {
    text_provider_ = std::make_shared<OfflineEmbedder>(
        OfflineEmbedder::Options{config_.offline_seed, config_.dims, config_.offline_planted});
  } else {
    text_provider_ = std::make_shared<ThrottledProvider>(
        std::make_shared<HttpEmbeddingProvider>(HttpEmbeddingProvider::Options{
            config_.embed_endpoint, config_.embed_token, config_.embed_provider_id, config_.dims}),
        config_.max_in_flight);
  }
  if (image_provider) {
    image_provider_ = std::move(image_provider);
  } else if (!config_.image_embed_endpoint.empty()) {
    image_provider_ = std::make_shared<ThrottledProvider>(
        std::make_shared<HttpEmbeddingProvider>(HttpEmbeddingProvider::Options{
            config_.image_embed_endpoint, config_.embed_token, "", config_.dims}),
        config_.max_in_flight);
  } else {
    image_provider_ = text_provider_;
  }
  if (text_provider_->dims() != image_provider_->dims()) {
    throw DimsError("text and image providers must share one width");
  }
  backend_ = backend ? std::move(backend) : make_backend(config_);

  std::error_code ec;
  fs::create_directories(docs_dir(), ec);
  fs::create_directories(caches_dir(), ec);
  fs::create_directories(config_.store_root / "corpora", ec);
  fs::create_directories(config_.store_root / "adapters", ec);
  if (!fs::is_directory(docs_dir())) throw IoError("store_root is not writable: " + config_.store_root.string());

  if (!config_.adapter.empty()) {
    auto path = config_.adapter;
    if (!fs::exists(path) && fs::exists(config_.store_root / "adapters" / path)) {
      path = config_.store_root / "adapters" / path;
    }
    adapter_ = LinearAdapter::load(path);
    if (adapter_->d_in() != text_provider_->dims() || adapter_->d_out() != text_provider_->dims()) {
      throw DimsError("adapter width does not match the embedding provider");
    }
  }
  load_store();
}

fs::path Engine::docs_dir() const { return config_.store_root / "docs"; }
fs::path Engine::caches_dir() const { return config_.store_root / "caches"; }
fs::path Engine::doc_dir(const std::string& doc_id) const { return docs_dir() / doc_id; }

ProviderIds Engine::provider_ids() const { return {text_provider_->provider_id(), image_provider_->provider_id()}; }

std::mutex& Engine::doc_lock(const std::string& doc_id) {
  std::lock_guard lock(locks_mutex_);
  auto& slot = doc_locks_[doc_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void Engine::load_store() {
  for (const auto& entry : fs::directory_iterator(caches_dir())) {
    if (entry.path().extension() == ".wkec") cache_.merge(EmbeddingCache::load(entry.path()));
  }
  for (const auto& entry : fs::directory_iterator(docs_dir())) {
    if (!entry.is_directory() || entry.path().filename().string().rfind(".staging", 0) == 0) continue;
    const auto file = entry.path() / "document.xml";
    if (!fs::exists(file)) continue;
    auto doc = std::make_shared<const ParsedDocument>(load_document(file));
    const auto id = doc->doc_id();
    auto prepared = try_prepare(*doc);
    docs_[id] = StoredDocument{std::move(doc), std::move(prepared)};
  }
}

void Engine::persist_caches(const EmbeddingCache& additions) {
  std::lock_guard lock(cache_file_mutex_);
  cache_.merge(additions);
  std::set<std::string> providers;
  for (const auto& r : additions.records()) providers.insert(r.provider_id);
  for (const auto& pid : providers) cache_.persist(caches_dir() / (provider_slug(pid) + ".wkec"), pid);
}

std::string Engine::ingest_path(const fs::path& source) {
  if (!fs::exists(source)) throw NotFoundError("no such file: " + source.string());
  if (source.extension() == ".pdf") {
    if (config_.parser_command.empty()) throw ConfigError("ingesting a PDF needs parser_command");
    const auto scratch = config_.store_root / ".scratch-blobs";
    return ingest(external_parse(source, ExternalParserConfig{config_.parser_command, scratch}));
  }
  return ingest(load_document(source));
}

std::string Engine::ingest(const ParsedDocument& doc) {
  const auto& id = doc.doc_id();
  if (!valid_doc_id(id)) throw IntegrityError("doc id is not usable as a store key: " + id);
  std::lock_guard write_lock(doc_lock(id));

  // Embed everything first so a provider failure leaves the store untouched.
  EmbeddingCache staging;
  for (const auto& chunk : doc.chunks()) {
    const bool is_text = std::holds_alternative<TextChunk>(chunk);
    const auto pid = (is_text ? text_provider_ : image_provider_)->provider_id();
    const auto hash = chunk_content_hash(chunk);
    if (cache_.find(pid, hash) || staging.find(pid, hash)) continue;
    embed_chunk_cached(staging, *text_provider_, *image_provider_, chunk);
  }

  thread_local std::mt19937_64 rng{std::random_device{}()};
  const auto staging_dir = docs_dir() / (".staging-" + id + "-" + std::to_string(rng()));
  const auto final_dir = doc_dir(id);
  std::error_code ec;
  try {
    save_document(doc, staging_dir / "document.xml");
    auto stored = std::make_shared<const ParsedDocument>(load_document(staging_dir / "document.xml"));
    const auto trash = docs_dir() / (".staging-old-" + id + "-" + std::to_string(rng()));
    if (fs::exists(final_dir)) fs::rename(final_dir, trash);
    fs::rename(staging_dir, final_dir);
    fs::remove_all(trash, ec);
    persist_caches(staging);
    stored = std::make_shared<const ParsedDocument>(load_document(final_dir / "document.xml"));
    auto prepared = try_prepare(*stored);
    std::unique_lock lock(docs_mutex_);
    docs_[id] = StoredDocument{std::move(stored), std::move(prepared)};
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging_dir, ec);
    throw IoError(std::string("ingest failed: ") + e.what());
  } catch (...) {
    fs::remove_all(staging_dir, ec);
    throw;
  }
  return id;
}

std::vector<DocumentSummary> Engine::list_documents() const {
  std::shared_lock lock(docs_mutex_);
  std::vector<DocumentSummary> out;
  for (const auto& [id, s] : docs_) out.push_back({id, s.doc->source_name(), s.doc->n_text(), s.doc->m_image()});
  return out;
}

Engine::StoredDocument Engine::stored(const std::string& doc_id) const {
  std::shared_lock lock(docs_mutex_);
  const auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw NotFoundError("unknown document: " + doc_id);
  return it->second;
}

std::shared_ptr<const ParsedDocument> Engine::document(const std::string& doc_id) const { return stored(doc_id).doc; }

std::shared_ptr<const PreparedDocument> Engine::try_prepare(const ParsedDocument& doc) const {
  try {
    return std::make_shared<const PreparedDocument>(prepare_document(doc, cache_, provider_ids()));
  } catch (const CacheMissError&) {
    return nullptr;
  }
}

std::string Engine::blob(const std::string& hash) const {
  const auto address = hash.rfind("sha256:", 0) == 0 ? hash : "sha256:" + hash;
  std::vector<std::string> ids;
  {
    std::shared_lock lock(docs_mutex_);
    for (const auto& [id, _] : docs_) ids.push_back(id);
  }
  for (const auto& id : ids) {
    const BlobStore store(doc_dir(id) / "blobs");
    if (store.contains(address)) return store.read(address);
  }
  throw NotFoundError("unknown blob: " + hash);
}

EmbeddingVector Engine::query_vector(const std::string& question) {
  auto q = embed_text(*text_provider_, question);
  if (adapter_) q = adapter_->apply(q);
  return q;
}

SampledEvidence Engine::sample(const std::string& doc_id, const std::string& question, std::optional<std::size_t> k) {
  return sample_in(stored(doc_id), question, k);
}

SampledEvidence Engine::sample_in(const StoredDocument& s, const std::string& question, std::optional<std::size_t> k) {
  SamplerConfig sc{k.value_or(config_.k), config_.modality_floor};
  if (sc.k == 0) throw ConfigError("k must be at least 1");
  std::size_t evaluations = 0;
  const auto query = query_vector(question);
  auto evidence = top_k(s.prepared ? score_prepared(query, *s.prepared, &evaluations)
                                   : score_all(query, *s.doc, cache_, provider_ids(), &evaluations),
                        sc);
  evaluations_ += evaluations;
  evidence.query_text = question;
  return evidence;
}

AskResult Engine::ask(const std::string& doc_id, const std::string& question, std::optional<std::size_t> k) {
  const auto s = stored(doc_id);
  const auto& doc = s.doc;
  AskResult r;
  r.doc_id = doc_id;
  r.evidence = sample_in(s, question, k);
  try {
    GenerateOptions opts;
    opts.context_limit = config_.context_limit;
    r.answer = generate_answer(*backend_, assemble_prompt(question, r.evidence, *doc, config_.answer_template), opts);
  } catch (const Error& e) {
    throw AskFailure(e.code(), e.what(), r.evidence);
  }
  return r;
}

RunReport Engine::evaluate(const std::vector<EvalCase>& cases, std::optional<std::size_t> k) const {
  return evaluate_run(cases, k.value_or(config_.k));
}

DatasetOutcome Engine::build_dataset(const DatasetRequest& request) {
  if (!valid_doc_id(request.corpus_name)) throw ConfigError("corpus name is not a valid file name");
  std::vector<std::shared_ptr<const ParsedDocument>> held;
  if (request.doc_ids.empty()) {
    for (const auto& s : list_documents()) held.push_back(document(s.doc_id));
  } else {
    for (const auto& id : request.doc_ids) held.push_back(document(id));
  }
  std::vector<const ParsedDocument*> docs;
  for (const auto& d : held) docs.push_back(d.get());
  SelectionContext ctx{&cache_, text_provider_->provider_id(), config_.theta_rel};
  auto builder = request.builder;
  builder.max_in_flight = config_.max_in_flight;
  builder.rate_per_second = config_.rate_per_second;
  DatasetOutcome out;
  out.result = wukong::build_dataset(docs, *backend_, TemplateLibrary::builtin(), ctx, builder);
  out.corpus_path = config_.store_root / "corpora" / (request.corpus_name + ".jsonl");
  const DocumentLookup lookup = [&](const std::string& id) -> const ParsedDocument* {
    for (const auto& d : held) {
      if (d->doc_id() == id) return d.get();
    }
    return nullptr;
  };
  out.stats = export_corpus(out.result.kept, request.builder.split, out.corpus_path, lookup);
  return out;
}

TrainOutcome Engine::train_adapter(const fs::path& corpus, const std::string& adapter_name,
                                   std::optional<TrainConfig> train) {
  if (!valid_doc_id(adapter_name)) throw ConfigError("adapter name is not a valid file name");
  auto path = corpus;
  for (const auto& candidate : {config_.store_root / "corpora" / corpus,
                                config_.store_root / "corpora" / (corpus.string() + ".jsonl")}) {
    if (!fs::exists(path) && fs::exists(candidate)) path = candidate;
  }
  if (!fs::exists(path)) throw NotFoundError("no such corpus: " + corpus.string());
  const auto records = import_corpus(path);
  const TrainConfig tc = train.value_or(TrainConfig{config_.temperature, config_.learning_rate, config_.epochs,
                                                    config_.batch_size, config_.train_seed});
  std::mt19937_64 rng(tc.seed);
  TrainOutcome out;
  std::vector<TrainingBatch> batches;
  for (const auto& r : records) {
    const auto doc = document(r.doc_id);
    try {
      batches.push_back(make_batch(embed_text(*text_provider_, r.question), *doc, cache_, provider_ids(), r.evidence,
                                   rng, strategy_name(r.strategy)));
    } catch (const DomainError&) {
      ++out.skipped;
    }
  }
  out.examples = batches.size();
  if (batches.empty()) throw DomainError("corpus yields no training examples");
  out.result = wukong::train_adapter(batches, tc);
  out.adapter_path = config_.store_root / "adapters" / (adapter_name + ".wkad");
  out.result.adapter.save(out.adapter_path);
  return out;
}

void Engine::check_integrity() const {
  std::vector<std::shared_ptr<const ParsedDocument>> docs;
  {
    std::shared_lock lock(docs_mutex_);
    for (const auto& [_, s] : docs_) docs.push_back(s.doc);
  }
  const auto ids = provider_ids();
  for (const auto& doc : docs) {
    const auto file = doc_dir(doc->doc_id()) / "document.xml";
    if (!(load_document(file) == *doc)) throw IntegrityError("stored file differs from memory for " + doc->doc_id());
    const BlobStore store(doc_dir(doc->doc_id()) / "blobs");
    for (const auto& c : doc->chunks()) {
      const bool is_text = std::holds_alternative<TextChunk>(c);
      if (!cache_.find(is_text ? ids.text : ids.image, chunk_content_hash(c))) {
        throw IntegrityError("no cached vector for " + doc->doc_id() + "/" + chunk_id(c));
      }
      if (!is_text) store.read(std::get<ImageChunk>(c).image_ref.hash);
    }
  }
  const auto corpora = config_.store_root / "corpora";
  for (const auto& entry : fs::directory_iterator(corpora)) {
    if (entry.path().extension() != ".jsonl") continue;
    for (const auto& r : import_corpus(entry.path())) {
      const auto it = std::find_if(docs.begin(), docs.end(), [&](const auto& d) { return d->doc_id() == r.doc_id; });
      if (it == docs.end()) throw IntegrityError("corpus record " + r.id + " cites unknown document " + r.doc_id);
      for (const auto& e : r.evidence) {
        if ((*it)->find(e) == nullptr) throw IntegrityError("corpus record " + r.id + " cites unknown chunk " + e);
      }
    }
  }
}

}  // namespace wukong
