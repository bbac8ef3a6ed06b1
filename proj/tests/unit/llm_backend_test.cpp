#include "promptscape/llm_backend.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "promptscape/error.hpp"
#include "promptscape/evaluation.hpp"
#include "promptscape/synthetic.hpp"

namespace promptscape {
namespace {

using json = nlohmann::json;

// Loopback stub server on an ephemeral port.
class StubServer {
 public:
  StubServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig fast_config(const std::string& url) {
  BackendConfig c;
  c.base_url = url;
  c.timeout = std::chrono::milliseconds(5000);
  c.max_retries = 3;
  c.backoff = {std::chrono::milliseconds(1)};
  return c;
}

std::string chat_reply(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

ChatRequest simple_request() {
  ChatRequest r;
  r.model = "llama3.2";
  r.messages = {{"system", "You check statements."}, {"user", "2 + 2 = 5"}};
  r.temperature = 0.3;
  return r;
}

TEST(ChatRequestBody, RoundTripsThroughParser) {
  auto r = simple_request();
  r.seed = 42;
  EXPECT_EQ(parse_chat_request_body(chat_request_body(r)), r);
  r.seed.reset();
  const auto j = json::parse(chat_request_body(r));
  EXPECT_FALSE(j.contains("seed"));
  EXPECT_EQ(j.at("messages").size(), 2u);
}

TEST(ChatRequestBody, MetadataStaysInProcess) {
  auto r = simple_request();
  r.metadata["persona"] = "generator";
  EXPECT_EQ(chat_request_body(r).find("persona"), std::string::npos);
}

TEST(ChatRequestValidation, RejectsBadShapes) {
  auto r = simple_request();
  EXPECT_NO_THROW(validate(r));
  r.temperature = -1;
  EXPECT_THROW(validate(r), ValidationError);
  r = simple_request();
  r.messages.clear();
  EXPECT_THROW(validate(r), ValidationError);
  r = simple_request();
  r.messages[0].role = "assistant";
  EXPECT_THROW(validate(r), ValidationError);
}

TEST(ParseChatResponse, ErrorsOnMalformedBodies) {
  EXPECT_EQ(parse_chat_response(chat_reply("hi")), "hi");
  EXPECT_THROW(parse_chat_response("not json"), BackendError);
  EXPECT_THROW(parse_chat_response(R"({"choices":[]})"), BackendError);
  EXPECT_THROW(parse_chat_response(R"({"choices":[{"text":"x"}]})"), BackendError);
}

TEST(BackendConfig, RejectsNonPositiveTimeoutAndBadUrl) {
  auto c = fast_config("http://127.0.0.1:1");
  c.timeout = std::chrono::milliseconds(0);
  EXPECT_THROW(HttpBackend{c}, ValidationError);
  EXPECT_THROW(HttpBackend{fast_config("127.0.0.1:80")}, ValidationError);
}

TEST(HttpChat, ReturnsFirstChoiceAndSendsParseableBody) {
  StubServer stub;
  std::mutex mu;
  ChatRequest seen;
  std::string auth;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    seen = parse_chat_request_body(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(chat_reply("fixed answer"), "application/json");
  });
  ::setenv("PROMPTSCAPE_TEST_KEY", "sekrit", 1);
  auto cfg = fast_config(stub.url());
  cfg.api_key_env = "PROMPTSCAPE_TEST_KEY";
  EXPECT_EQ(HttpBackend(cfg).chat(simple_request()), "fixed answer");
  std::lock_guard lock(mu);
  EXPECT_EQ(seen, simple_request());
  EXPECT_EQ(auth, "Bearer sekrit");
}

TEST(HttpChat, BaseUrlPathPrefixIsKept) {
  StubServer stub;
  stub.server().Post("/api/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_reply("prefixed"), "application/json");
  });
  EXPECT_EQ(HttpBackend(fast_config(stub.url() + "/api/")).chat(simple_request()), "prefixed");
}

TEST(HttpChat, RetriesServerErrors) {
  StubServer stub;
  std::atomic<int> attempts{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++attempts <= 2) {
      res.status = 500;
      res.set_content("overloaded", "text/plain");
      return;
    }
    res.set_content(chat_reply("third time"), "application/json");
  });
  auto cfg = fast_config(stub.url());
  cfg.max_retries = 2;
  EXPECT_EQ(HttpBackend(cfg).chat(simple_request()), "third time");
  EXPECT_EQ(attempts.load(), 3);
}

TEST(HttpChat, GivesUpAfterRetryBudget) {
  StubServer stub;
  std::atomic<int> attempts{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 503;
  });
  auto cfg = fast_config(stub.url());
  cfg.max_retries = 2;
  EXPECT_THROW(HttpBackend(cfg).chat(simple_request()), BackendError);
  EXPECT_EQ(attempts.load(), 3);
}

TEST(HttpChat, ClientErrorsAreNotRetried) {
  StubServer stub;
  std::atomic<int> attempts{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 401;
    res.set_content("bad key", "text/plain");
  });
  try {
    HttpBackend(fast_config(stub.url())).chat(simple_request());
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.status(), 401);
    EXPECT_NE(std::string(e.what()).find("bad key"), std::string::npos);
  }
  EXPECT_EQ(attempts.load(), 1);
}

TEST(HttpChat, UnreachableEndpointFailsAsBackendError) {
  auto cfg = fast_config("http://127.0.0.1:1");
  cfg.max_retries = 1;
  cfg.timeout = std::chrono::milliseconds(200);
  EXPECT_THROW(HttpBackend(cfg).chat(simple_request()), BackendError);
}

void serve_embeddings(StubServer& stub, std::vector<std::size_t>& batch_sizes, std::mutex& mu,
                      std::size_t dim_after_first_batch = 3) {
  stub.server().Post("/v1/embeddings", [&, dim_after_first_batch](const httplib::Request& req,
                                                                   httplib::Response& res) {
    const auto body = json::parse(req.body);
    const auto& input = body.at("input");
    std::size_t dim = 3;
    {
      std::lock_guard lock(mu);
      if (!batch_sizes.empty()) dim = dim_after_first_batch;
      batch_sizes.push_back(input.size());
    }
    json data = json::array();
    // Reverse order with explicit indices; the client must reorder.
    for (std::size_t i = input.size(); i-- > 0;) {
      const double tag = std::stod(input[i].get<std::string>().substr(1));
      data.push_back({{"index", i}, {"embedding", std::vector<double>(dim, tag)}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

TEST(HttpEmbed, SingleText) {
  StubServer stub;
  std::vector<std::size_t> sizes;
  std::mutex mu;
  serve_embeddings(stub, sizes, mu);
  const auto v = HttpBackend(fast_config(stub.url())).embed({"t7"}, "all-MiniLM-L6-v2");
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], (std::vector<double>{7, 7, 7}));
}

TEST(HttpEmbed, BatchesOf64PreserveOrder) {
  StubServer stub;
  std::vector<std::size_t> sizes;
  std::mutex mu;
  serve_embeddings(stub, sizes, mu);
  const auto v = HttpBackend(fast_config(stub.url())).embed(numbered(130), "m");
  EXPECT_EQ(sizes, (std::vector<std::size_t>{64, 64, 2}));
  ASSERT_EQ(v.size(), 130u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i][0], static_cast<double>(i));
}

TEST(HttpEmbed, DimensionMismatchAcrossBatchesFails) {
  StubServer stub;
  std::vector<std::size_t> sizes;
  std::mutex mu;
  serve_embeddings(stub, sizes, mu, 4);
  EXPECT_THROW(HttpBackend(fast_config(stub.url())).embed(numbered(70), "m"), BackendError);
}

TEST(HttpEmbed, RejectsEmptyInput) {
  EXPECT_THROW(HttpBackend(fast_config("http://127.0.0.1:1")).embed({}, "m"), ValidationError);
}

// A two-dimensional smooth landscape with target e1; a unit vector at angle
// theta from e1 has planted fitness (1 + cos theta) / 2.
PlantedLandscape unit_landscape() {
  PlantedLandscape l;
  l.kind = PlantedKind::kSmooth;
  l.dim = 2;
  l.target = {1.0, 0.0};
  return l;
}

TextEmbedder fixed_fitness(double p) {
  const double c = 2.0 * p - 1.0;
  const std::vector<double> v{c, std::sqrt(std::max(0.0, 1.0 - c * c))};
  return [v](std::string_view) { return v; };
}

double mock_accuracy(double p, std::uint64_t seed, std::size_t per_category = 10) {
  const auto land = unit_landscape();
  const auto embed = fixed_fitness(p);
  const ChatFn chat = [&](const ChatRequest& r) { return mock_chat(r, land, embed, {seed, 0.0}); };
  const Prompt prompt{"p", "You check statements.", Strategy::kExternal, std::nullopt};
  const auto e = evaluate_prompt(prompt, synthetic_test_cases(per_category), {chat, chat}, {});
  if (!e.record) throw std::runtime_error("mock evaluation failed");
  return e.record->accuracy;
}

TEST(MockChat, CertainGeneratorIsAlwaysRight) {
  EXPECT_NEAR(planted_fitness(unit_landscape(), fixed_fitness(1.0)("x")), 1.0, 1e-15);
  EXPECT_EQ(mock_accuracy(1.0, 0), 1.0);
}

TEST(MockChat, HopelessGeneratorIsAlwaysWrong) {
  EXPECT_EQ(mock_accuracy(0.0, 0), 0.0);
}

TEST(MockChat, AccuracyTracksPlantedProbability) {
  // 100 cases, 200 statements: 3 sigma of a binomial proportion at 0.7.
  const double bound = 3.0 * std::sqrt(0.7 * 0.3 / 200.0);
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    inside += std::abs(mock_accuracy(0.7, seed) - 0.7) <= bound ? 1 : 0;
  }
  EXPECT_GE(inside, 19);
  EXPECT_LE(std::abs(mock_accuracy(0.7, 0) - 0.7), bound);
}

TEST(MockChat, PureFunctionOfInputs) {
  const auto land = make_rugged_landscape(8, 6.0, 1);
  const TextEmbedder embed = [](std::string_view) { return random_unit_vector(8, 3); };
  const TestCase c = synthetic_test_cases(1)[0];
  const Prompt prompt{"p", "You check statements.", Strategy::kExternal, std::nullopt};
  const auto gen = build_generator_request(prompt, c, StatementKind::kErroneous);
  const auto a = mock_chat(gen, land, embed, {5, 0.0});
  for (int i = 0; i < 5; ++i) EXPECT_EQ(mock_chat(gen, land, embed, {5, 0.0}), a);
  const auto ev = build_evaluator_request(a, c, StatementKind::kErroneous);
  EXPECT_EQ(mock_chat(ev, land, embed, {5, 0.0}), mock_chat(ev, land, embed, {5, 0.0}));
}

TEST(MockChat, ZeroScoreProbabilityKeepsWeights) {
  const auto land = unit_landscape();
  const auto embed = fixed_fitness(0.6);
  const ChatFn chat = [&](const ChatRequest& r) { return mock_chat(r, land, embed, {2, 0.3}); };
  const Prompt prompt{"p", "You check statements.", Strategy::kExternal, std::nullopt};
  const auto cases = synthetic_test_cases(10);
  const auto e = evaluate_prompt(prompt, cases, {chat, chat}, {});
  ASSERT_TRUE(e.record);
  EXPECT_EQ(e.record->overall.total(), 200.0);
  std::size_t zeros = 0;
  for (const auto& t : e.trials) zeros += t.score == Score::kPartial ? 1 : 0;
  EXPECT_GT(zeros, 0u);
  EXPECT_LT(zeros, 200u);
}

TEST(MockChat, RejectsUnrecognizedShape) {
  const auto land = unit_landscape();
  EXPECT_THROW(mock_chat(simple_request(), land, fixed_fitness(0.5), {}), ValidationError);
}

}  // namespace
}  // namespace promptscape
