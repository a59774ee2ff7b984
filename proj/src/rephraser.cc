// Copyright 2026 The ELSA-Toy Authors.
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

#include "elsa/captions.h"

#include <httplib.h>
#include <json.hpp>

namespace elsa::cap {
namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

RephraserClient::RephraserClient(RephraserEndpoint endpoint)
    : endpoint_(std::move(endpoint)),
      slots_(std::max(1, endpoint_.max_concurrent)) {
  const std::string& url = endpoint_.url;
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.substr(0, scheme) != "http") {
    throw ConfigError("rephraser url must start with http://, got '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  base_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

RephraseResult RephraserClient::rephrase(const std::string& prompt,
                                         const std::string& fallback_caption) {
  SlotGuard guard(slots_);
  const nlohmann::json body = {{"prompt", prompt},
                               {"temperature", endpoint_.temperature},
                               {"max_tokens", endpoint_.max_tokens}};
  const std::string payload = body.dump();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      endpoint_.timeout - secs);

  RephraseResult out{fallback_caption, true, {}};
  for (int attempt = 0; attempt <= std::max(0, endpoint_.retries); ++attempt) {
    httplib::Client cli(base_);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    const auto res = cli.Post(path_, payload, "application/json");
    if (!res) {
      out.error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      out.error = "http status " + std::to_string(res->status);
      continue;
    }
    const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() ||
        !parsed.contains("text") || !parsed["text"].is_string()) {
      out.error = "malformed response";
      return out;  // retrying would get the same body
    }
    return {parsed["text"].get<std::string>(), false, {}};
  }
  return out;
}

}  // namespace elsa::cap
