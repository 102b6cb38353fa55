#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "solrepair/error.hpp"
#include "solrepair/http.hpp"
#include "solrepair/repair.hpp"

namespace solrepair::repair {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::int64_t approx_tokens(std::string_view s) {
  return static_cast<std::int64_t>((s.size() + 3) / 4);
}

}  // namespace

std::string prompt_hash(std::string_view prompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(prompt)));
  return buf;
}

ScriptedClient ScriptedClient::from_json(const json& doc) {
  ScriptedClient c;
  try {
    if (doc.contains("schema") && doc["schema"] != "solrepair.mock-client/1") {
      throw ConfigError("unsupported mock client schema: " + doc["schema"].dump());
    }
    c.name_ = doc.value("name", "scripted");
    if (doc.contains("default")) c.fallback_ = doc["default"].get<std::string>();
    for (const auto& e : doc.at("entries")) {
      Entry entry;
      if (e.contains("prompt_hash")) entry.hash = e["prompt_hash"].get<std::string>();
      entry.contains = e.value("contains", std::vector<std::string>{});
      if (e.contains("completion")) entry.completions.push_back(e["completion"].get<std::string>());
      for (const auto& alt : e.value("completions", std::vector<std::string>{})) {
        entry.completions.push_back(alt);
      }
      if (e.contains("usage")) {
        entry.usage = metrics::Usage{e["usage"].value("prompt_tokens", std::int64_t{0}),
                                     e["usage"].value("completion_tokens", std::int64_t{0})};
      }
      entry.fail = e.value("fail", false);
      if (!entry.hash && entry.contains.empty()) {
        throw ConfigError("mock client entry needs prompt_hash or contains");
      }
      if (entry.completions.empty() && !entry.fail) {
        throw ConfigError("mock client entry has no completion");
      }
      c.entries_.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed mock client fixture: ") + e.what());
  }
  return c;
}

ScriptedClient ScriptedClient::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(json::parse(ss.str()));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

Completion ScriptedClient::complete(const CompletionRequest& request) {
  const std::string hash = prompt_hash(request.prompt);
  const Entry* hit = nullptr;
  for (const auto& e : entries_) {
    if (e.hash && *e.hash == hash) {
      hit = &e;
      break;
    }
  }
  if (hit == nullptr) {
    for (const auto& e : entries_) {
      if (e.hash || e.contains.empty()) continue;
      bool all = std::all_of(e.contains.begin(), e.contains.end(), [&](const std::string& s) {
        return request.prompt.find(s) != std::string::npos;
      });
      if (all) {
        hit = &e;
        break;
      }
    }
  }
  Completion out;
  if (hit == nullptr) {
    if (!fallback_) throw ModelError("no scripted completion for prompt " + hash);
    out.text = *fallback_;
  } else {
    if (hit->fail) throw ModelError("scripted failure for prompt " + hash);
    std::size_t pick = 0;
    if (hit->completions.size() > 1) {
      std::uint64_t mix = splitmix64(request.seed ^ fnv1a(request.prompt) ^
                                     splitmix64(static_cast<std::uint64_t>(request.sample_index)));
      pick = static_cast<std::size_t>(mix % hit->completions.size());
    }
    out.text = hit->completions[pick];
    if (hit->usage) {
      out.usage = *hit->usage;
      return out;
    }
  }
  out.usage = {approx_tokens(request.prompt), approx_tokens(out.text)};
  return out;
}

RateLimiter::RateLimiter(double per_minute)
    : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(per_minute > 0 ? 60.0 / per_minute : 0.0))),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    slot = std::max(next_, std::chrono::steady_clock::now());
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

HttpChatClient::HttpChatClient(Options options) : options_(std::move(options)) {
  if (options_.url.empty()) throw ConfigError("model endpoint URL is empty");
  if (options_.requests_per_minute > 0) {
    limiter_ = std::make_unique<RateLimiter>(options_.requests_per_minute);
  }
}

Completion HttpChatClient::complete(const CompletionRequest& request) {
  if (limiter_) limiter_->acquire();
  json body = {{"model", options_.model},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
               {"max_tokens", request.max_tokens},
               {"temperature", options_.temperature},
               {"seed", request.seed + static_cast<std::uint64_t>(request.sample_index)}};
  std::vector<std::pair<std::string, std::string>> headers;
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key) {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = http::post_json(options_.url, body.dump(), headers, options_.timeout_seconds);
  if (!res.error.empty()) throw ModelError("model endpoint " + options_.url + ": " + res.error);
  if (res.status != 200) {
    throw ModelError("model endpoint returned HTTP " + std::to_string(res.status) + ": " +
                     res.body.substr(0, 500));
  }
  try {
    auto doc = json::parse(res.body);
    Completion c;
    c.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    if (doc.contains("usage")) {
      c.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
      c.usage.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    return c;
  } catch (const json::exception& e) {
    throw ModelError(std::string("unexpected model response: ") + e.what());
  }
}

}  // namespace solrepair::repair
