#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptscape/synthetic.hpp"

namespace promptscape {

struct ChatMessage {
  std::string role;  // "system" or "user"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  // In-process side channel (persona, ground truth for mocks). Never sent
  // over the wire.
  std::map<std::string, std::string> metadata;

  bool operator==(const ChatRequest&) const = default;
};

void validate(const ChatRequest& request);

// OpenAI-compatible JSON body for POST /v1/chat/completions.
std::string chat_request_body(const ChatRequest& request);
ChatRequest parse_chat_request_body(std::string_view body);
std::string parse_chat_response(std::string_view body);

// Any chat-completion implementation: HTTP client, mock, or test script.
using ChatFn = std::function<std::string(const ChatRequest&)>;
using EmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

struct BackendConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string api_key_env;  // variable holding the bearer token; empty for none
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  // Delay before retry i is backoff[min(i, size-1)]; empty means no delay.
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500),
                                                 std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(8000)};
};

inline constexpr std::size_t kEmbedBatchSize = 64;

// Client for the OpenAI-compatible wire protocol. Retries transport
// failures and 5xx responses on the backoff schedule, never 4xx.
class HttpBackend {
 public:
  explicit HttpBackend(BackendConfig config);

  std::string chat(const ChatRequest& request) const;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) const;

  const BackendConfig& config() const noexcept { return config_; }

 private:
  std::string post(const std::string& path, const std::string& body) const;

  BackendConfig config_;
  std::string scheme_host_;
  std::string path_prefix_;
};

// Metadata keys the evaluation request builders set for mocks.
inline constexpr std::string_view kMetaPersona = "persona";
inline constexpr std::string_view kMetaStatementKind = "statement_kind";
inline constexpr std::string_view kPersonaGenerator = "generator";
inline constexpr std::string_view kPersonaEvaluator = "evaluator";

// Markers the mock generator emits and the mock evaluator reads back.
inline constexpr std::string_view kVerdictError = "Verdict: ERROR";
inline constexpr std::string_view kVerdictNoError = "Verdict: NO ERROR";

// Maps a prompt text to its embedding for the mock generator persona.
using TextEmbedder = std::function<std::vector<double>(std::string_view)>;

struct MockChatOptions {
  std::uint64_t seed = 0;
  double zero_score_probability = 0.0;
};

// Deterministic chat stand-in driven by a planted landscape. The generator
// persona answers correctly with probability planted_fitness(embed(system
// message)); the evaluator persona grades the answer against the ground
// truth carried in metadata. Pure function of (request, landscape, options).
std::string mock_chat(const ChatRequest& request, const PlantedLandscape& landscape,
                      const TextEmbedder& embed, const MockChatOptions& options);

}  // namespace promptscape
