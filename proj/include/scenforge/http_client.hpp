// Copyright 2026 The Scenforge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SCENFORGE_HTTP_CLIENT_HPP
#define SCENFORGE_HTTP_CLIENT_HPP

// Opt-in text-generation client speaking a minimal JSON protocol:
//   POST /complete  {"prompt": "..."}  ->  {"text": "..."}
// Endpoint and bearer token come from SCENFORGE_LLM_ENDPOINT and
// SCENFORGE_LLM_KEY unless given explicitly.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "scenforge/pipeline.hpp"

namespace scenforge::pipeline {

class HttpClient final : public TextGenClient {
 public:
  HttpClient(std::string host, int port, std::string key = "")
      : host_(std::move(host)), port_(port), key_(std::move(key)) {}

  // Reads SCENFORGE_LLM_ENDPOINT ("host:port") and SCENFORGE_LLM_KEY.
  static HttpClient from_env() {
    const char* endpoint = std::getenv("SCENFORGE_LLM_ENDPOINT");
    if (!endpoint) throw ClientError("SCENFORGE_LLM_ENDPOINT is not set");
    std::string ep(endpoint);
    auto colon = ep.rfind(':');
    if (colon == std::string::npos)
      throw ClientError("SCENFORGE_LLM_ENDPOINT must be host:port");
    const char* key = std::getenv("SCENFORGE_LLM_KEY");
    return HttpClient(ep.substr(0, colon), std::atoi(ep.c_str() + colon + 1),
                      key ? key : "");
  }

  std::string complete(const std::string& prompt) const override {
    httplib::Client cli(host_, port_);
    cli.set_read_timeout(30, 0);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
    nlohmann::json body = {{"prompt", prompt}};
    auto res = cli.Post("/complete", headers, body.dump(), "application/json");
    if (!res) throw ClientError("text-generation endpoint unreachable");
    if (res->status != 200)
      throw ClientError("text-generation endpoint returned status " +
                        std::to_string(res->status));
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("text") || !parsed["text"].is_string())
      throw ClientError("text-generation endpoint returned malformed JSON");
    return parsed["text"].get<std::string>();
  }

 private:
  std::string host_;
  int port_;
  std::string key_;
};

}  // namespace scenforge::pipeline

#endif  // SCENFORGE_HTTP_CLIENT_HPP
