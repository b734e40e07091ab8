#include <cstdlib>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "lesr/llm.hpp"

namespace lesr::llm {
namespace {

// Splits "scheme://host[:port]/path" into the client base and request path.
std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const bool http = url.rfind("http://", 0) == 0;
  const bool https = url.rfind("https://", 0) == 0;
  if (!http && !https)
    throw GeneratorError("endpoint must start with http:// or https://: " + url);
  const std::size_t scheme_len = http ? 7 : 8;
  const std::size_t slash = url.find('/', scheme_len);
  if (slash == std::string::npos || slash + 1 >= url.size())
    throw GeneratorError(
        "endpoint must include the completions path, e.g. "
        "http://host:port/v1/chat/completions: " +
        url);
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpGenerator::HttpGenerator(RemoteOptions options)
    : options_(std::move(options)) {
  split_endpoint(options_.endpoint);  // fail fast on malformed URLs
  if (options_.model.empty()) throw GeneratorError("remote model id is empty");
  if (options_.timeout_seconds < 1)
    throw GeneratorError("remote timeout must be >= 1 second");
  if (options_.transport_retries < 0)
    throw GeneratorError("remote transport retries must be >= 0");
  if (!options_.api_key_env.empty()) {
    const char* value = std::getenv(options_.api_key_env.c_str());
    if (value == nullptr || *value == '\0')
      throw GeneratorError("API key environment variable '" +
                           options_.api_key_env +
                           "' is not set; export it or use the mock generator");
    api_key_ = value;
  }
}

std::string HttpGenerator::complete(const std::string& system_text,
                                    const std::string& user_text) {
  const auto [base, path] = split_endpoint(options_.endpoint);

  nlohmann::json body = {
      {"model", options_.model},
      {"messages",
       {{{"role", "system"}, {"content", system_text}},
        {{"role", "user"}, {"content", user_text}}}},
      {"temperature", options_.temperature},
  };
  httplib::Headers headers;
  if (!api_key_.empty())
    headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.transport_retries; ++attempt) {
    httplib::Client client(base);
    client.set_connection_timeout(options_.timeout_seconds, 0);
    client.set_read_timeout(options_.timeout_seconds, 0);
    client.set_write_timeout(options_.timeout_seconds, 0);

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status) + ": " +
                   res->body.substr(0, 200);
      continue;
    }
    try {
      nlohmann::json reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed completion response: ") + e.what();
    }
  }
  throw GeneratorError("chat-completion request failed after " +
                       std::to_string(options_.transport_retries + 1) +
                       " attempts; last error: " + last_error);
}

}  // namespace lesr::llm
