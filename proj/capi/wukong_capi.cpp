#include "wukong/wukong.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "wukong/engine.hpp"
#include "wukong/hash.hpp"

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

struct wk_engine {
  std::unique_ptr<wukong::Engine> engine;
};

namespace {

char* dup_string(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) return nullptr;
  std::memcpy(p, s.data(), s.size());
  p[s.size()] = '\0';
  return p;
}

void set_out(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

ordered_json error_body(int code, const std::string& message) {
  ordered_json e;
  e["code"] = code;
  e["name"] = wk_status_name(code);
  e["message"] = message;
  return ordered_json{{"error", e}};
}

json parse_request(const char* request_json) {
  if (request_json == nullptr || *request_json == '\0') return json::object();
  json j;
  try {
    j = json::parse(request_json);
  } catch (const json::exception& e) {
    throw wukong::UsageError(std::string("request is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw wukong::UsageError("request must be a JSON object");
  return j;
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw wukong::UsageError(std::string("request field ") + key + " has the wrong type");
  }
}

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw wukong::UsageError(std::string("request needs string field ") + key);
  return j[key].get<std::string>();
}

std::optional<std::size_t> optional_k(const json& j) {
  if (!j.contains("k") || j["k"].is_null()) return std::nullopt;
  if (!j["k"].is_number_integer() || j["k"].get<long long>() < 1) throw wukong::UsageError("k must be a positive integer");
  return j["k"].get<std::size_t>();
}

// Runs `body`, mapping exceptions onto the error JSON.
template <typename F>
wk_status guarded(char** out, F&& body) {
  if (out != nullptr) *out = nullptr;
  try {
    set_out(out, body());
    return WK_OK;
  } catch (const wukong::AskFailure& e) {
    auto err = error_body(static_cast<int>(e.code()), e.what());
    ordered_json ev = ordered_json::array();
    for (const auto& x : e.evidence().entries) {
      ev.push_back({{"chunk_id", x.chunk_id}, {"modality", wukong::modality_name(x.modality)}, {"score", x.score},
                    {"rank", x.rank}});
    }
    err["evidence"] = std::move(ev);
    set_out(out, err.dump());
    return static_cast<wk_status>(e.code());
  } catch (const wukong::Error& e) {
    set_out(out, error_body(static_cast<int>(e.code()), e.what()).dump());
    return static_cast<wk_status>(e.code());
  } catch (const std::exception& e) {
    set_out(out, error_body(WK_E_INTERNAL, e.what()).dump());
    return WK_E_INTERNAL;
  } catch (...) {
    set_out(out, error_body(WK_E_INTERNAL, "unknown failure").dump());
    return WK_E_INTERNAL;
  }
}

std::string ingest_inline(wukong::Engine& engine, const json& req) {
  const auto xml = required_string(req, "document_xml");
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const auto dir = fs::temp_directory_path() / ("wukong-upload-" + std::to_string(rng()));
  std::error_code ec;
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ignored;
      fs::remove_all(p, ignored);
    }
  } cleanup{dir};
  fs::create_directories(dir / "blobs", ec);
  const wukong::BlobStore store(dir / "blobs");
  if (req.contains("blobs")) {
    if (!req["blobs"].is_object()) throw wukong::UsageError("blobs must be an object");
    for (const auto& [hash, data] : req["blobs"].items()) {
      if (!data.is_string()) throw wukong::UsageError("blob " + hash + " must be base64 text");
      const auto ref = store.put(wukong::base64_decode(data.get<std::string>()));
      if (ref.hash != hash) throw wukong::IntegrityError("blob bytes do not match " + hash);
    }
  }
  wukong::write_file_atomic(dir / "document.xml", xml);
  return engine.ingest_path(dir / "document.xml");
}

ordered_json summary_json(const wukong::ParsedDocument& doc) {
  ordered_json j;
  j["doc_id"] = doc.doc_id();
  j["source"] = doc.source_name();
  j["n_text"] = doc.n_text();
  j["m_image"] = doc.m_image();
  return j;
}

std::string jsonl_of(const json& value, const char* what) {
  if (!value.is_array()) throw wukong::UsageError(std::string(what) + " must be an array");
  std::string out;
  for (const auto& v : value) out += v.dump() + "\n";
  return out;
}

}  // namespace

extern "C" {

wk_status wk_engine_open(const char* config_json, wk_engine** engine, char** out) {
  if (engine != nullptr) *engine = nullptr;
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine out-pointer is null");
    json cfg;
    try {
      cfg = config_json == nullptr || *config_json == '\0' ? json::object() : json::parse(config_json);
    } catch (const json::exception& e) {
      throw wukong::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    auto h = std::make_unique<wk_engine>();
    h->engine = std::make_unique<wukong::Engine>(wukong::EngineConfig::from_json(cfg));
    ordered_json j;
    j["store_root"] = h->engine->config().store_root.string();
    j["documents"] = h->engine->list_documents().size();
    *engine = h.release();
    return j.dump();
  });
}

void wk_engine_close(wk_engine* engine) { delete engine; }

wk_status wk_ingest(wk_engine* engine, const char* request_json, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine is null");
    const auto req = parse_request(request_json);
    std::string id;
    if (req.contains("path")) {
      id = engine->engine->ingest_path(required_string(req, "path"));
    } else {
      id = ingest_inline(*engine->engine, req);
    }
    return summary_json(*engine->engine->document(id)).dump();
  });
}

wk_status wk_list_documents(wk_engine* engine, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine is null");
    ordered_json docs = ordered_json::array();
    for (const auto& s : engine->engine->list_documents()) {
      ordered_json j;
      j["doc_id"] = s.doc_id;
      j["source"] = s.source_name;
      j["n_text"] = s.n_text;
      j["m_image"] = s.m_image;
      docs.push_back(std::move(j));
    }
    return ordered_json{{"documents", docs}}.dump();
  });
}

wk_status wk_get_document(wk_engine* engine, const char* doc_id, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr || doc_id == nullptr) throw wukong::UsageError("engine or doc_id is null");
    return wukong::document_json(*engine->engine->document(doc_id)).dump();
  });
}

wk_status wk_get_blob(wk_engine* engine, const char* hash, unsigned char** data, size_t* size, char** out) {
  if (data != nullptr) *data = nullptr;
  if (size != nullptr) *size = 0;
  if (out != nullptr) *out = nullptr;
  std::string bytes;
  char* msg = nullptr;
  const auto status = guarded(&msg, [&] {
    if (engine == nullptr || hash == nullptr || data == nullptr || size == nullptr) {
      throw wukong::UsageError("null argument");
    }
    bytes = engine->engine->blob(hash);
    return std::string();
  });
  if (status != WK_OK) {
    if (out != nullptr) {
      *out = msg;
    } else {
      wk_free_string(msg);
    }
    return status;
  }
  wk_free_string(msg);
  *data = static_cast<unsigned char*>(std::malloc(bytes.empty() ? 1 : bytes.size()));
  if (*data == nullptr) return WK_E_INTERNAL;
  std::memcpy(*data, bytes.data(), bytes.size());
  *size = bytes.size();
  return WK_OK;
}

wk_status wk_ask(wk_engine* engine, const char* doc_id, const char* request_json, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr || doc_id == nullptr) throw wukong::UsageError("engine or doc_id is null");
    const auto req = parse_request(request_json);
    const auto question = required_string(req, "question");
    const auto k = optional_k(req);
    const auto doc = engine->engine->document(doc_id);
    return wukong::ask_json(engine->engine->ask(doc_id, question, k), *doc).dump();
  });
}

wk_status wk_sample(wk_engine* engine, const char* doc_id, const char* request_json, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr || doc_id == nullptr) throw wukong::UsageError("engine or doc_id is null");
    const auto req = parse_request(request_json);
    const auto question = required_string(req, "question");
    const auto k = optional_k(req);
    const auto doc = engine->engine->document(doc_id);
    const auto evidence = engine->engine->sample(doc_id, question, k);
    ordered_json j;
    j["doc_id"] = doc_id;
    j["question"] = question;
    j["k"] = k.value_or(engine->engine->config().k);
    j["evidence"] = wukong::evidence_json(evidence, *doc);
    return j.dump();
  });
}

wk_status wk_eval_run(wk_engine* engine, const char* request_json, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine is null");
    const auto req = parse_request(request_json);
    std::string corpus;
    std::string preds;
    if (req.contains("corpus")) {
      corpus = jsonl_of(req["corpus"], "corpus");
    } else {
      corpus = wukong::read_file(required_string(req, "corpus_path"));
    }
    if (req.contains("predictions")) {
      preds = jsonl_of(req["predictions"], "predictions");
    } else {
      preds = wukong::read_file(required_string(req, "predictions_path"));
    }
    const auto cases = wukong::join_cases(corpus, preds);
    const auto k = optional_k(req).value_or(engine->engine->config().k);
    const auto edges = field<std::vector<std::size_t>>(req, "length_edges", {10, 50, 100, 200});
    const auto report = wukong::evaluate_run(cases, k, edges);
    auto j = ordered_json::parse(wukong::report_json(report));
    j["table"] = wukong::format_report(report);
    return j.dump();
  });
}

wk_status wk_build_dataset(wk_engine* engine, const char* request_json, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine is null");
    const auto req = parse_request(request_json);
    const auto& cfg = engine->engine->config();
    wukong::DatasetRequest r;
    r.doc_ids = field<std::vector<std::string>>(req, "doc_ids", {});
    r.corpus_name = field<std::string>(req, "corpus_name", "corpus");
    if (req.contains("strategies")) {
      r.builder.strategies.clear();
      for (const auto& s : field<std::vector<std::string>>(req, "strategies", {})) {
        r.builder.strategies.push_back(wukong::parse_strategy(s));
      }
    }
    r.builder.split = wukong::parse_split(field<std::string>(req, "split", "train"));
    r.builder.selections_per_strategy = field<std::size_t>(req, "selections_per_strategy", 1);
    r.builder.seed = field<std::uint64_t>(req, "seed", 0);
    r.builder.max_in_flight = cfg.max_in_flight;
    r.builder.rate_per_second = cfg.rate_per_second;
    const auto outcome = engine->engine->build_dataset(r);

    ordered_json j;
    j["corpus_path"] = outcome.corpus_path.string();
    j["kept"] = outcome.result.kept.size();
    ordered_json rejected = ordered_json::object();
    for (const auto& p : outcome.result.rejected) rejected[p.rejection] = rejected.value(p.rejection, 0) + 1;
    j["rejected"] = std::move(rejected);
    ordered_json skipped = ordered_json::array();
    for (const auto& s : outcome.result.skipped) {
      skipped.push_back({{"doc_id", s.doc_id}, {"strategy", wukong::strategy_name(s.strategy)}, {"reason", s.reason}});
    }
    j["skipped"] = std::move(skipped);
    ordered_json counts = ordered_json::object();
    for (const auto s : wukong::all_strategies()) counts[wukong::strategy_name(s)] = outcome.stats.count(s, r.builder.split);
    j["counts"] = std::move(counts);
    j["table"] = outcome.stats.table();
    return j.dump();
  });
}

wk_status wk_train_adapter(wk_engine* engine, const char* request_json, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine is null");
    const auto req = parse_request(request_json);
    const auto& cfg = engine->engine->config();
    wukong::TrainConfig tc{field<double>(req, "temperature", cfg.temperature),
                           field<double>(req, "learning_rate", cfg.learning_rate),
                           field<std::size_t>(req, "epochs", cfg.epochs),
                           field<std::size_t>(req, "batch_size", cfg.batch_size),
                           field<std::uint64_t>(req, "seed", cfg.train_seed)};
    const auto outcome =
        engine->engine->train_adapter(required_string(req, "corpus"), field<std::string>(req, "name", "adapter"), tc);
    ordered_json j;
    j["adapter_path"] = outcome.adapter_path.string();
    j["examples"] = outcome.examples;
    j["skipped"] = outcome.skipped;
    j["epoch_loss"] = outcome.result.epoch_loss;
    return j.dump();
  });
}

wk_status wk_check_store(wk_engine* engine, char** out) {
  return guarded(out, [&] {
    if (engine == nullptr) throw wukong::UsageError("engine is null");
    engine->engine->check_integrity();
    ordered_json j;
    j["ok"] = true;
    j["documents"] = engine->engine->list_documents().size();
    j["cache_records"] = engine->engine->cache().size();
    return j.dump();
  });
}

void wk_free_string(char* s) { std::free(s); }
void wk_free_blob(unsigned char* data) { std::free(data); }

const char* wk_status_name(int status) {
  if (status == WK_OK) return "Ok";
  if (status < WK_E_INTERNAL || status > WK_E_NOT_FOUND) return "Unknown";
  return wukong::error_code_name(static_cast<wukong::ErrorCode>(status));
}

int wk_http_status(int status) {
  switch (status) {
    case WK_OK:
      return 200;
    case WK_E_PARSE:
    case WK_E_INTEGRITY:
    case WK_E_MISSING_BLOB:
    case WK_E_CONVERSION:
      return 422;
    case WK_E_NOT_FOUND:
      return 404;
    case WK_E_BACKEND:
    case WK_E_CONTEXT_OVERFLOW:
    case WK_E_PROVIDER:
    case WK_E_PROVIDER_CONTRACT:
    case WK_E_EXTERNAL_TOOL:
      return 502;
    case WK_E_CACHE_FORMAT:
    case WK_E_CACHE_VERSION:
    case WK_E_CACHE_MISS:
      return 507;
    case WK_E_USAGE:
    case WK_E_CONFIG:
    case WK_E_DOMAIN:
    case WK_E_TEMPLATE:
    case WK_E_DIMS:
    case WK_E_EMPTY_RUN:
      return 400;
    default:
      return 500;
  }
}

const char* wk_version(void) { return "0.1.0"; }

}  // extern "C"
