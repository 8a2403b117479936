#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "http_service.hpp"
#include "wukong/wukong.h"

using nlohmann::json;

namespace {

enum class Kind { String, Integer, Number, Boolean };

const std::vector<std::pair<std::string, Kind>>& config_keys() {
  static const std::vector<std::pair<std::string, Kind>> keys{
      {"store_root", Kind::String},        {"embed_endpoint", Kind::String},
      {"image_embed_endpoint", Kind::String}, {"embed_token", Kind::String},
      {"embed_provider_id", Kind::String}, {"dims", Kind::Integer},
      {"offline_seed", Kind::Integer},     {"offline_planted", Kind::Boolean},
      {"llm_backend", Kind::String},       {"llm_endpoint", Kind::String},
      {"llm_token", Kind::String},         {"scripted_transcript", Kind::String},
      {"context_limit", Kind::Integer},    {"k", Kind::Integer},
      {"modality_floor", Kind::Integer},   {"answer_template", Kind::String},
      {"adapter", Kind::String},           {"temperature", Kind::Number},
      {"learning_rate", Kind::Number},     {"epochs", Kind::Integer},
      {"batch_size", Kind::Integer},       {"train_seed", Kind::Integer},
      {"max_in_flight", Kind::Integer},    {"rate_per_second", Kind::Number},
      {"theta_rel", Kind::Number},         {"parser_command", Kind::String}};
  return keys;
}

json convert(const std::string& key, Kind kind, const std::string& raw) {
  try {
    switch (kind) {
      case Kind::String:
        return raw;
      case Kind::Integer:
        return std::stoull(raw);
      case Kind::Number:
        return std::stod(raw);
      case Kind::Boolean:
        if (raw == "1" || raw == "true") return true;
        if (raw == "0" || raw == "false") return false;
        break;
    }
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError(key, "cannot read value '" + raw + "'");
}

std::string env_name(const std::string& key) {
  std::string out = "WUKONG_";
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

struct Output {
  bool json_mode = false;
};

int report_failure(const Output& o, int status, const char* out) {
  if (o.json_mode) {
    std::cout << (out != nullptr ? out : "{}") << "\n";
  } else {
    std::string message = out != nullptr ? out : "";
    try {
      const auto j = json::parse(message);
      message = j.at("error").at("message").get<std::string>();
    } catch (const std::exception&) {
    }
    std::cerr << "error: " << wk_status_name(status) << ": " << message << "\n";
  }
  return status;
}

// Prints the result of one C API call; returns the exit status.
template <typename F, typename Human>
int run_call(const Output& o, F&& call, Human&& human) {
  char* out = nullptr;
  const int status = call(&out);
  int code = 0;
  if (status != WK_OK) {
    code = report_failure(o, status, out);
  } else if (o.json_mode) {
    std::cout << out << "\n";
  } else {
    human(json::parse(out));
  }
  wk_free_string(out);
  return code;
}

void print_evidence(const json& evidence) {
  for (const auto& e : evidence) {
    std::cout << "  #" << e["rank"].get<int>() << " " << e["chunk_id"].get<std::string>() << " ["
              << e["modality"].get<std::string>() << "] score=" << e["score"].get<double>() << "  "
              << e["content_preview"].get<std::string>() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wukong: long-document question answering"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  bool json_mode = false;
  app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_flag("--json", json_mode, "single-line JSON output");
  std::map<std::string, std::string> flag_values;
  for (const auto& [key, kind] : config_keys()) {
    if (key == "embed_token" || key == "llm_token") continue;
    app.add_option(flag_name(key), flag_values[key], "config key " + key);
  }

  auto* ingest = app.add_subcommand("ingest", "ingest interleaved document files or PDFs");
  std::vector<std::string> ingest_paths;
  ingest->add_option("paths", ingest_paths, "document files")->required();

  auto* ask = app.add_subcommand("ask", "answer a question about one document");
  auto* sample = app.add_subcommand("sample", "rank evidence for a question without generating");
  std::string doc_id;
  std::string question;
  for (auto* sub : {ask, sample}) {
    sub->add_option("--doc", doc_id, "document id")->required();
    sub->add_option("--question,-q", question, "question text")->required();
  }

  auto* eval = app.add_subcommand("eval", "score predictions against a corpus");
  std::string cases_path;
  std::string preds_path;
  std::vector<std::size_t> length_edges;
  eval->add_option("--cases", cases_path, "corpus JSON lines")->required()->check(CLI::ExistingFile);
  eval->add_option("--preds", preds_path, "prediction JSON lines")->required()->check(CLI::ExistingFile);
  eval->add_option("--length-edges", length_edges, "document length bucket edges");

  auto* build = app.add_subcommand("build-dataset", "generate and filter QA pairs");
  std::vector<std::string> build_docs;
  std::vector<std::string> strategies;
  std::string split = "train";
  std::size_t selections = 1;
  std::uint64_t build_seed = 0;
  std::string corpus_name = "corpus";
  build->add_option("--doc", build_docs, "document ids (default all)");
  build->add_option("--strategy", strategies, "TextOnly, ImageOnly, ImageText, Section, CrossParagraph");
  build->add_option("--split", split, "train or test");
  build->add_option("--selections", selections, "selections per strategy and document");
  build->add_option("--seed", build_seed, "selection seed");
  build->add_option("--corpus-name", corpus_name, "output corpus name");

  auto* train = app.add_subcommand("train-adapter", "fit the query adapter on a corpus");
  std::string train_corpus;
  std::string adapter_name = "adapter";
  train->add_option("--corpus", train_corpus, "corpus file or name in the store")->required();
  train->add_option("--name", adapter_name, "adapter name");

  auto* check = app.add_subcommand("check-store", "verify store integrity");

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }
  const Output o{json_mode};

  // file < env < flags
  json config = json::object();
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    try {
      config = json::parse(in);
    } catch (const json::exception& e) {
      std::cerr << "error: config file: " << e.what() << "\n";
      return 14;
    }
  }
  try {
    for (const auto& [key, kind] : config_keys()) {
      if (const char* v = std::getenv(env_name(key).c_str()); v != nullptr && *v != '\0') {
        config[key] = convert(key, kind, v);
      }
      const auto it = flag_values.find(key);
      if (it != flag_values.end() && !app.get_option(flag_name(key))->empty()) {
        config[key] = convert(key, kind, it->second);
      }
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  wk_engine* engine = nullptr;
  char* open_out = nullptr;
  const int open_status = wk_engine_open(config.dump().c_str(), &engine, &open_out);
  if (open_status != WK_OK) {
    const int code = report_failure(o, open_status, open_out);
    wk_free_string(open_out);
    return code;
  }
  wk_free_string(open_out);

  int code = 0;
  if (ingest->parsed()) {
    for (const auto& path : ingest_paths) {
      const auto req = json{{"path", path}}.dump();
      code = run_call(
          o, [&](char** out) { return wk_ingest(engine, req.c_str(), out); },
          [](const json& j) {
            std::cout << "ingested " << j["doc_id"].get<std::string>() << " (" << j["n_text"] << " text, "
                      << j["m_image"] << " image)\n";
          });
      if (code != 0) break;
    }
  } else if (ask->parsed() || sample->parsed()) {
    const auto req = json{{"question", question}}.dump();
    if (ask->parsed()) {
      code = run_call(
          o, [&](char** out) { return wk_ask(engine, doc_id.c_str(), req.c_str(), out); },
          [](const json& j) {
            std::cout << j["answer"].get<std::string>() << "\n\nevidence:\n";
            print_evidence(j["evidence"]);
            std::cout << "prompt tokens: " << j["prompt_tokens"] << ", latency: " << j["latency_ms"] << " ms\n";
          });
    } else {
      code = run_call(
          o, [&](char** out) { return wk_sample(engine, doc_id.c_str(), req.c_str(), out); },
          [](const json& j) { print_evidence(j["evidence"]); });
    }
  } else if (eval->parsed()) {
    json req{{"corpus_path", cases_path}, {"predictions_path", preds_path}};
    if (!length_edges.empty()) req["length_edges"] = length_edges;
    const auto body = req.dump();
    code = run_call(
        o, [&](char** out) { return wk_eval_run(engine, body.c_str(), out); },
        [](const json& j) { std::cout << j["table"].get<std::string>(); });
  } else if (build->parsed()) {
    json req{{"split", split}, {"selections_per_strategy", selections}, {"seed", build_seed},
             {"corpus_name", corpus_name}};
    if (!build_docs.empty()) req["doc_ids"] = build_docs;
    if (!strategies.empty()) req["strategies"] = strategies;
    const auto body = req.dump();
    code = run_call(
        o, [&](char** out) { return wk_build_dataset(engine, body.c_str(), out); },
        [](const json& j) {
          std::cout << j["table"].get<std::string>() << "kept " << j["kept"] << ", rejected " << j["rejected"].dump()
                    << ", skipped " << j["skipped"].size() << "\nwrote " << j["corpus_path"].get<std::string>()
                    << "\n";
        });
  } else if (train->parsed()) {
    const auto body = json{{"corpus", train_corpus}, {"name", adapter_name}}.dump();
    code = run_call(
        o, [&](char** out) { return wk_train_adapter(engine, body.c_str(), out); },
        [](const json& j) {
          std::cout << "trained on " << j["examples"] << " examples (" << j["skipped"] << " skipped)\nepoch loss:";
          for (const auto& l : j["epoch_loss"]) std::cout << " " << l.get<double>();
          std::cout << "\nwrote " << j["adapter_path"].get<std::string>() << "\n";
        });
  } else if (check->parsed()) {
    code = run_call(
        o, [&](char** out) { return wk_check_store(engine, out); },
        [](const json& j) { std::cout << "store ok: " << j["documents"] << " documents\n"; });
  } else if (serve->parsed()) {
    wukong::service::HttpService service(engine);
    std::cerr << "listening on " << host << ":" << port << "\n";
    if (!service.listen(host, port)) {
      std::cerr << "error: cannot bind " << host << ":" << port << "\n";
      code = 23;
    }
  }
  wk_engine_close(engine);
  return code;
}
