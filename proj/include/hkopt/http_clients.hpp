/* Copyright 2026 The hkopt Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// HTTP clients for OpenAI-style completion endpoints.

#ifndef HKOPT_HTTP_CLIENTS_HPP_
#define HKOPT_HTTP_CLIENTS_HPP_

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "hkopt/coder.hpp"
#include "hkopt/core_model.hpp"
#include "hkopt/error.hpp"
#include "hkopt/policy.hpp"

namespace hkopt {

struct HttpEndpoint {
  std::string base_url;  // e.g. https://host/v1
  std::string model;
  std::string api_key_env;
  double timeout_s = 120;
};

inline HttpEndpoint http_endpoint_from_json(const json& j, const std::string& ctx) {
  HttpEndpoint e;
  e.base_url = detail::get<std::string>(j, "base_url", ctx);
  e.model = detail::get<std::string>(j, "model", ctx);
  e.api_key_env = j.value("api_key_env", std::string{});
  e.timeout_s = j.value("timeout_s", e.timeout_s);
  if (e.base_url.find("://") == std::string::npos)
    throw ConfigError(ctx + ": base_url needs a scheme: '" + e.base_url + "'");
  return e;
}

namespace detail {

/// POSTs JSON to `<base_url><path>` and returns the parsed body.
inline json post_json(const HttpEndpoint& ep, const std::string& path, const json& body) {
  const auto scheme_end = ep.base_url.find("://") + 3;
  const auto slash = ep.base_url.find('/', scheme_end);
  const std::string origin = ep.base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : ep.base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client cli(origin);
  const auto secs = static_cast<time_t>(ep.timeout_s);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  cli.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (!ep.api_key_env.empty()) {
    const char* key = std::getenv(ep.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw ConfigError("environment variable " + ep.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = cli.Post(prefix + path, headers, body.dump(), "application/json");
  if (!res)
    throw TransportError(ep.base_url + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError(ep.base_url + path + ": HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(ep.base_url + path + ": malformed body: " + e.what());
  }
}

}  // namespace detail

/// Chat-completions coder.
class HttpCoderClient : public CoderClient {
 public:
  explicit HttpCoderClient(HttpEndpoint ep) : ep_(std::move(ep)) {}

  std::string complete(const std::string& prompt) override {
    json body = {{"model", ep_.model},
                 {"temperature", 0},
                 {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto j = detail::post_json(ep_, "/chat/completions", body);
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw TransportError(std::string("chat completion without content: ") + e.what());
    }
  }

 private:
  HttpEndpoint ep_;
};

/// Completions endpoint scored through echoed prompt log-probabilities.
class HttpTextModelClient : public TextModelClient {
 public:
  explicit HttpTextModelClient(HttpEndpoint ep) : ep_(std::move(ep)) {}

  std::optional<std::vector<TokenLogprob>> score_continuation(
      const std::string& prompt, const std::string& continuation) override {
    json body = {{"model", ep_.model},
                 {"prompt", prompt + continuation},
                 {"max_tokens", 0},
                 {"echo", true},
                 {"logprobs", 0}};
    json j;
    try {
      j = detail::post_json(ep_, "/completions", body);
    } catch (const TransportError&) {
      return std::nullopt;
    }
    const json* lp = nullptr;
    try {
      lp = &j.at("choices").at(0).at("logprobs");
    } catch (const json::exception&) {
      return std::nullopt;
    }
    if (lp->is_null() || !lp->contains("tokens") || !lp->contains("token_logprobs") ||
        !lp->contains("text_offset"))
      return std::nullopt;
    const auto& toks = (*lp)["tokens"];
    const auto& lps = (*lp)["token_logprobs"];
    const auto& offs = (*lp)["text_offset"];
    std::vector<TokenLogprob> out;
    for (std::size_t i = 0; i < toks.size() && i < lps.size() && i < offs.size(); ++i) {
      if (offs[i].get<std::size_t>() < prompt.size()) continue;
      if (lps[i].is_null()) return std::nullopt;
      out.push_back({toks[i].get<std::string>(), lps[i].get<double>()});
    }
    if (out.empty()) return std::nullopt;
    return out;
  }

  std::string generate(const std::string& prompt) override {
    json body = {{"model", ep_.model}, {"prompt", prompt}, {"max_tokens", 32}, {"temperature", 0}};
    auto j = detail::post_json(ep_, "/completions", body);
    try {
      return j.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw TransportError(std::string("completion without text: ") + e.what());
    }
  }

 private:
  HttpEndpoint ep_;
};

}  // namespace hkopt

#endif  // HKOPT_HTTP_CLIENTS_HPP_
