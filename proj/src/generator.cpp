#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "entfact/generator.hpp"

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <thread>

#include "entfact/error.hpp"
#include "entfact/rng.hpp"
#include "entfact/text.hpp"

namespace entfact {

namespace {

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space_byte(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string trigram_key(const std::string& w1, const std::string& w2) {
  std::string key = w1;
  key.push_back('\x1f');
  key += w2;
  return key;
}

}  // namespace

void NgramGenerator::train(std::string_view text) {
  const auto tokens = whitespace_tokens(text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    ++unigrams_[tokens[i]];
    if (i >= 1) ++bigrams_[tokens[i - 1]][tokens[i]];
    if (i >= 2) ++trigrams_[trigram_key(tokens[i - 2], tokens[i - 1])][tokens[i]];
  }
}

const NgramGenerator::Counts* NgramGenerator::continuation_counts(const std::string& w1,
                                                                  const std::string& w2) const {
  if (!w1.empty()) {
    if (auto it = trigrams_.find(trigram_key(w1, w2)); it != trigrams_.end()) return &it->second;
  }
  if (!w2.empty()) {
    if (auto it = bigrams_.find(w2); it != bigrams_.end()) return &it->second;
  }
  return unigrams_.empty() ? nullptr : &unigrams_;
}

std::string NgramGenerator::generate(std::string_view prompt, int max_tokens) {
  const std::uint64_t prompt_hash = fnv1a64(prompt);
  std::uint32_t call = 0;
  {
    std::lock_guard lock(calls_mutex_);
    call = calls_[prompt_hash]++;
  }
  Rng rng(derive_seed(seed_ ^ prompt_hash, "ngram", call));

  auto context = whitespace_tokens(prompt);
  std::string w1 = context.size() >= 2 ? context[context.size() - 2] : std::string();
  std::string w2 = context.empty() ? std::string() : context.back();

  std::string out;
  for (int t = 0; t < max_tokens; ++t) {
    const Counts* counts = continuation_counts(w1, w2);
    if (counts == nullptr) break;
    std::uint64_t total = 0;
    for (const auto& [word, c] : *counts) total += c;
    std::uint64_t pick = rng.uniform_index(total);
    const std::string* next = nullptr;
    for (const auto& [word, c] : *counts) {
      if (pick < c) {
        next = &word;
        break;
      }
      pick -= c;
    }
    if (!out.empty() || (!prompt.empty() && !is_space_byte(static_cast<unsigned char>(prompt.back())))) {
      out.push_back(' ');
    }
    out += *next;
    w1 = std::move(w2);
    w2 = *next;
  }
  return out;
}

// ---------------------------------------------------------------- HTTP

std::string generator_token_from_env() {
  const char* token = std::getenv("ENTFACT_GENERATOR_TOKEN");
  return token == nullptr ? std::string() : std::string(token);
}

HttpGenerator::HttpGenerator(HttpGeneratorOptions options) : options_(std::move(options)) {
  const std::string& url = options_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "generator endpoint must be an http(s) URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpGenerator::generate(std::string_view prompt, int max_tokens) {
  nlohmann::json body = {{"prompt", std::string(prompt)}, {"max_tokens", max_tokens}};
  const std::string payload = body.dump();

  httplib::Client client(scheme_host_port_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  if (!options_.bearer_token.empty()) client.set_bearer_token_auth(options_.bearer_token);

  std::string last_error;
  auto delay = options_.backoff;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto result = client.Post(path_, payload, "application/json");
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status != 200) {
      last_error = "HTTP status " + std::to_string(result->status);
      continue;
    }
    try {
      auto reply = nlohmann::json::parse(result->body);
      return reply.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("bad reply: ") + e.what();
    }
  }
  throw Error(ErrorCode::GeneratorUnavailable,
              "generator at " + options_.endpoint + " failed after " +
                  std::to_string(options_.retries + 1) + " attempts: " + last_error);
}

}  // namespace entfact
