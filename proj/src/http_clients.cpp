#include <httplib.h>
#include <json.hpp>

#include "wukong/embedding.hpp"
#include "wukong/errors.hpp"
#include "wukong/generation.hpp"
#include "wukong/hash.hpp"

namespace wukong {

namespace {

using nlohmann::json;

httplib::Client make_client(const std::string& endpoint, const std::string& token,
                            std::chrono::milliseconds timeout) {
  httplib::Client client(endpoint);
  if (!client.is_valid()) throw ConfigError("invalid endpoint: " + endpoint);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  if (!token.empty()) client.set_bearer_token_auth(token);
  return client;
}

}  // namespace

// --- embeddings --------------------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ConfigError("embedding endpoint is empty");
  if (options_.dims == 0) throw ConfigError("embedding dims must be positive");
  if (options_.provider_id.empty()) options_.provider_id = "http:" + options_.endpoint;
}

std::string HttpEmbeddingProvider::request_body(const EmbeddingInput& input) {
  json body;
  body["modality"] = modality_name(input.modality);
  body["content"] = input.modality == Modality::Text ? input.content : base64_encode(input.content);
  body["caption"] = input.caption;
  return body.dump();
}

std::vector<float> HttpEmbeddingProvider::embed(const EmbeddingInput& input) {
  auto client = make_client(options_.endpoint, options_.token, options_.timeout);
  const auto res = client.Post("/embed", request_body(input), "application/json");
  if (!res) throw ProviderError("embedding provider unreachable: " + httplib::to_string(res.error()), true);
  if (res->status != 200) {
    throw ProviderError("embedding provider returned HTTP " + std::to_string(res->status), res->status >= 500 || res->status == 429);
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception& e) {
    throw ProviderContractError(std::string("embedding reply is not JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("values") || !reply["values"].is_array()) {
    throw ProviderContractError("embedding reply lacks a values array");
  }
  std::vector<float> values;
  values.reserve(reply["values"].size());
  for (const auto& v : reply["values"]) {
    if (!v.is_number()) throw ProviderContractError("embedding value is not a number");
    values.push_back(v.get<float>());
  }
  if (reply.contains("dims") && (!reply["dims"].is_number_unsigned() || reply["dims"].get<std::size_t>() != values.size())) {
    throw ProviderContractError("embedding reply dims disagree with its values");
  }
  if (values.size() != options_.dims) {
    throw ProviderContractError("provider declared " + std::to_string(options_.dims) + " dims but returned " +
                                std::to_string(values.size()));
  }
  return values;
}

// --- generation --------------------------------------------------------------------

HttpLlmBackend::HttpLlmBackend(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ConfigError("llm endpoint is empty");
}

std::string HttpLlmBackend::request_body(const PromptAssembly& prompt) {
  json parts = json::array();
  for (const auto& part : prompt.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      parts.push_back({{"type", "text"}, {"content", t->content}});
    } else {
      const auto& img = std::get<ImagePart>(part);
      if (img.image_ref.locator.empty()) throw MissingBlobError("image " + img.chunk_id + " has no stored blob");
      const auto bytes = read_file(img.image_ref.locator);
      if (content_address(bytes) != img.image_ref.hash) {
        throw IntegrityError("blob for " + img.chunk_id + " does not match its hash");
      }
      parts.push_back({{"type", "image"}, {"data", base64_encode(bytes)}, {"caption", img.caption}});
    }
  }
  json body{{"instruction", prompt.instruction}, {"query", prompt.query}, {"parts", std::move(parts)}};
  return body.dump();
}

BackendReply HttpLlmBackend::generate(const PromptAssembly& prompt) {
  auto client = make_client(options_.endpoint, options_.token, options_.timeout);
  const auto res = client.Post("/generate", request_body(prompt), "application/json");
  if (!res) throw TransientBackendError("llm backend unreachable: " + httplib::to_string(res.error()));
  if (res->status == 413) throw ContextOverflowError(prompt.token_estimate, 0);
  if (res->status >= 500 || res->status == 429) {
    throw TransientBackendError("llm backend returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw BackendError("llm backend returned HTTP " + std::to_string(res->status));
  try {
    const auto reply = json::parse(res->body);
    BackendReply out;
    out.answer = reply.at("answer").get<std::string>();
    if (reply.contains("prompt_tokens") && reply["prompt_tokens"].is_number_unsigned()) {
      out.prompt_tokens = reply["prompt_tokens"].get<std::size_t>();
    }
    return out;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed llm reply: ") + e.what());
  }
}

}  // namespace wukong
