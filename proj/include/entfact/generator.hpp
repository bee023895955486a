#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace entfact {

// Text continuation source used by the generated replacement strategy.
class GeneratorPort {
 public:
  virtual ~GeneratorPort() = default;
  virtual std::string generate(std::string_view prompt, int max_tokens) = 0;
};

// Word trigram model with backoff to bigram and unigram counts, trained on a
// human-written corpus. Sampling for a prompt is seeded by (seed, prompt,
// number of earlier calls with the same prompt), so retries produce fresh
// continuations while the whole call sequence stays reproducible.
class NgramGenerator : public GeneratorPort {
 public:
  explicit NgramGenerator(std::uint64_t seed) : seed_(seed) {}

  void train(std::string_view text);
  template <typename Range>
  void train_all(const Range& texts) {
    for (const auto& t : texts) train(t);
  }

  std::string generate(std::string_view prompt, int max_tokens) override;

  std::size_t vocabulary_size() const { return unigrams_.size(); }

 private:
  using Counts = std::map<std::string, std::uint32_t>;

  const Counts* continuation_counts(const std::string& w1, const std::string& w2) const;

  std::uint64_t seed_;
  Counts unigrams_;
  std::unordered_map<std::string, Counts> bigrams_;
  std::unordered_map<std::string, Counts> trigrams_;  // key "w1\x1fw2"
  std::mutex calls_mutex_;
  std::unordered_map<std::uint64_t, std::uint32_t> calls_;
};

struct HttpGeneratorOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/generate
  std::chrono::milliseconds timeout{30000};
  int retries = 3;
  std::chrono::milliseconds backoff{250};  // doubled after every failed attempt
  std::string bearer_token;                // empty -> no Authorization header
};

// Reads ENTFACT_GENERATOR_TOKEN when set.
std::string generator_token_from_env();

// POST {"prompt", "max_tokens"} -> {"text"}. Transport failures and non-200
// replies are retried `retries` times before GeneratorUnavailable is thrown.
class HttpGenerator : public GeneratorPort {
 public:
  explicit HttpGenerator(HttpGeneratorOptions options);

  std::string generate(std::string_view prompt, int max_tokens) override;

 private:
  HttpGeneratorOptions options_;
  std::string scheme_host_port_;
  std::string path_;
};

}  // namespace entfact
