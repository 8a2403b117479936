#include "http_service.hpp"

#include <httplib.h>

namespace wukong::service {

namespace {

using Call = std::function<wk_status(char**)>;

void relay(httplib::Response& res, const Call& call) {
  char* out = nullptr;
  const auto status = call(&out);
  res.status = wk_http_status(status);
  res.set_content(out != nullptr ? out : "{}", "application/json");
  wk_free_string(out);
}

}  // namespace

HttpService::HttpService(wk_engine* engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  s.Post("/documents", [this](const httplib::Request& req, httplib::Response& res) {
    relay(res, [&](char** out) { return wk_ingest(engine_, req.body.c_str(), out); });
  });
  s.Get("/documents", [this](const httplib::Request&, httplib::Response& res) {
    relay(res, [&](char** out) { return wk_list_documents(engine_, out); });
  });
  s.Get(R"(/documents/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    relay(res, [&](char** out) { return wk_get_document(engine_, id.c_str(), out); });
  });
  s.Post(R"(/documents/([^/]+)/ask)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    relay(res, [&](char** out) { return wk_ask(engine_, id.c_str(), req.body.c_str(), out); });
  });
  s.Post(R"(/documents/([^/]+)/sample)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    relay(res, [&](char** out) { return wk_sample(engine_, id.c_str(), req.body.c_str(), out); });
  });
  s.Post("/eval/run", [this](const httplib::Request& req, httplib::Response& res) {
    relay(res, [&](char** out) { return wk_eval_run(engine_, req.body.c_str(), out); });
  });
  s.Post("/datasets/build", [this](const httplib::Request& req, httplib::Response& res) {
    relay(res, [&](char** out) { return wk_build_dataset(engine_, req.body.c_str(), out); });
  });
  s.Post("/adapters/train", [this](const httplib::Request& req, httplib::Response& res) {
    relay(res, [&](char** out) { return wk_train_adapter(engine_, req.body.c_str(), out); });
  });
  s.Get("/store/check", [this](const httplib::Request&, httplib::Response& res) {
    relay(res, [&](char** out) { return wk_check_store(engine_, out); });
  });
  s.Get(R"(/blobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string hash = req.matches[1];
    unsigned char* data = nullptr;
    std::size_t size = 0;
    char* out = nullptr;
    const auto status = wk_get_blob(engine_, hash.c_str(), &data, &size, &out);
    res.status = wk_http_status(status);
    if (status == WK_OK) {
      res.set_content(std::string(reinterpret_cast<const char*>(data), size), "application/octet-stream");
    } else {
      res.set_content(out != nullptr ? out : "{}", "application/json");
    }
    wk_free_blob(data);
    wk_free_string(out);
  });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(R"({"error":{"code":2,"name":"UsageError","message":"no such route"}})", "application/json");
  });
}

HttpService::~HttpService() = default;

bool HttpService::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen_after_bind() { return server_->listen_after_bind(); }

void HttpService::stop() { server_->stop(); }

void HttpService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace wukong::service
