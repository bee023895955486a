#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <gtest/gtest.h>

#include <atomic>
#include <nlohmann/json.hpp>
#include <thread>

#include "entfact/error.hpp"
#include "entfact/generator.hpp"

using namespace entfact;

TEST(Ngram, DeterministicAndFreshOnRetry) {
  const std::vector<std::string> corpus{"Funding came from Relay Ventures and Samsung.",
                                        "Funding came from Bosch last year.",
                                        "The plant opened in Stuttgart."};
  NgramGenerator a(4), b(4);
  a.train_all(corpus);
  b.train_all(corpus);
  EXPECT_GT(a.vocabulary_size(), 10u);
  std::vector<std::string> first, second;
  for (int i = 0; i < 5; ++i) {
    first.push_back(a.generate("Funding came from", 6));
    second.push_back(b.generate("Funding came from", 6));
  }
  EXPECT_EQ(first, second);
  EXPECT_FALSE(first[0].empty());
}

TEST(Ngram, UntrainedGivesEmpty) {
  NgramGenerator g(1);
  EXPECT_EQ(g.generate("anything", 5), "");
}

namespace {

class LocalServer {
 public:
  explicit LocalServer(int failures_before_success) : failures_(failures_before_success) {
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      auth_ = req.get_header_value("Authorization");
      if (calls_ <= failures_) {
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      res.set_content(nlohmann::json{{"text", "Samsung " + std::to_string(body.at("max_tokens").get<int>())}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/generate"; }
  int calls() const { return calls_; }
  std::string auth() const { return auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  std::atomic<int> calls_{0};
  std::string auth_;
};

}  // namespace

TEST(Http, RetriesThenSucceedsWithBearer) {
  LocalServer server(2);
  HttpGeneratorOptions opt;
  opt.endpoint = server.url();
  opt.retries = 3;
  opt.backoff = std::chrono::milliseconds(1);
  opt.bearer_token = "secret";
  HttpGenerator gen(opt);
  EXPECT_EQ(gen.generate("Funding came from", 8), "Samsung 8");
  EXPECT_EQ(server.calls(), 3);
  EXPECT_EQ(server.auth(), "Bearer secret");
}

TEST(Http, GivesUpAfterRetries) {
  LocalServer server(100);
  HttpGeneratorOptions opt;
  opt.endpoint = server.url();
  opt.retries = 3;
  opt.backoff = std::chrono::milliseconds(1);
  HttpGenerator gen(opt);
  try {
    gen.generate("x", 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GeneratorUnavailable);
  }
  EXPECT_EQ(server.calls(), 4);
}

TEST(Http, BadEndpoint) {
  HttpGeneratorOptions opt;
  opt.endpoint = "not a url";
  EXPECT_THROW(HttpGenerator{opt}, Error);
}
