#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include "mteforge/judge.hpp"

namespace mteforge::judge {

HttpChatProvider::HttpChatProvider(const JudgeConfig& cfg)
    : model_(cfg.model), timeout_s_(cfg.timeout_s) {
  const auto scheme_end = cfg.endpoint.find("://");
  if (cfg.endpoint.empty() || scheme_end == std::string::npos) {
    throw ConfigError("judge endpoint must be an http(s) URL, got '" + cfg.endpoint + "'");
  }
  const auto path_start = cfg.endpoint.find('/', scheme_end + 3);
  base_ = cfg.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions"
                                          : cfg.endpoint.substr(path_start);
  if (const char* key = std::getenv(cfg.api_key_env.c_str())) api_key_ = key;
}

ProviderResponse HttpChatProvider::complete(const std::string& prompt) {
  httplib::Client client(base_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const nlohmann::json body = {
      {"model", model_},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};

  ProviderResponse out;
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    out.status = 0;
    out.timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
    out.error = httplib::to_string(err);
    return out;
  }
  out.status = res->status;
  if (res->status != 200) {
    out.error = res->body.substr(0, 200);
    return out;
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    // Not retryable: the server answered, but not in the expected shape.
    out.status = -1;
    out.error = std::string("unexpected response body: ") + e.what();
  }
  return out;
}

}  // namespace mteforge::judge
