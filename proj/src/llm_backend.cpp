#include "promptscape/llm_backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "promptscape/error.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

using ojson = nlohmann::ordered_json;

namespace {

std::string_view message_with_role(const ChatRequest& r, std::string_view role) {
  for (const auto& m : r.messages) {
    if (m.role == role) return m.content;
  }
  return {};
}

std::string meta(const ChatRequest& r, std::string_view key) {
  auto it = r.metadata.find(std::string(key));
  return it == r.metadata.end() ? std::string() : it->second;
}

ojson parse_body(std::string_view body) {
  try {
    return ojson::parse(body);
  } catch (const ojson::exception&) {
    throw BackendError("response body is not JSON: " + std::string(body.substr(0, 200)));
  }
}

}  // namespace

void validate(const ChatRequest& request) {
  if (request.messages.empty()) throw ValidationError("chat request has no messages");
  if (!(request.temperature >= 0.0)) throw ValidationError("chat temperature must be >= 0");
  for (const auto& m : request.messages) {
    if (m.role != "system" && m.role != "user") {
      throw ValidationError("chat message role must be system or user, got '" + m.role + "'");
    }
  }
}

std::string chat_request_body(const ChatRequest& request) {
  ojson j;
  j["model"] = request.model;
  ojson messages = ojson::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  j["messages"] = std::move(messages);
  j["temperature"] = request.temperature;
  if (request.seed) j["seed"] = *request.seed;
  return j.dump();
}

ChatRequest parse_chat_request_body(std::string_view body) {
  try {
    const auto j = ojson::parse(body);
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
      r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    r.temperature = j.at("temperature").get<double>();
    if (auto it = j.find("seed"); it != j.end()) r.seed = it->get<std::int64_t>();
    return r;
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("malformed chat request: ") + e.what());
  }
}

std::string parse_chat_response(std::string_view body) {
  const auto j = parse_body(body);
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) {
    throw BackendError("chat response has no choices");
  }
  try {
    return choices->front().at("message").at("content").get<std::string>();
  } catch (const ojson::exception& e) {
    throw BackendError(std::string("chat response missing message content: ") + e.what());
  }
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  if (config_.timeout.count() <= 0) throw ValidationError("backend timeout must be positive");
  if (config_.max_retries < 0) throw ValidationError("backend max_retries must be >= 0");
  const std::string& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("base_url must start with http:// or https://: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::post(const std::string& path, const std::string& body) const {
  httplib::Client client(scheme_host_);
  if (!client.is_valid()) throw BackendError("unsupported base_url: " + config_.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const std::string full_path = path_prefix_ + path;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0 && !config_.backoff.empty()) {
      const auto i = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), config_.backoff.size() - 1);
      std::this_thread::sleep_for(config_.backoff[i]);
    }
    auto res = client.Post(full_path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status >= 400) {
      throw BackendError("HTTP " + std::to_string(res->status) + " from " + full_path + ": " + res->body,
                         res->status);
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError("unexpected HTTP " + std::to_string(res->status) + " from " + full_path,
                         res->status);
    }
    return res->body;
  }
  throw BackendError(full_path + " failed after " + std::to_string(config_.max_retries + 1) +
                     " attempts: " + last_error);
}

std::string HttpBackend::chat(const ChatRequest& request) const {
  validate(request);
  return parse_chat_response(post("/v1/chat/completions", chat_request_body(request)));
}

std::vector<std::vector<double>> HttpBackend::embed(const std::vector<std::string>& texts,
                                                    const std::string& model) const {
  if (texts.empty()) throw ValidationError("embed: no texts");
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += kEmbedBatchSize) {
    const std::size_t end = std::min(texts.size(), start + kEmbedBatchSize);
    ojson body;
    body["model"] = model;
    body["input"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                             texts.begin() + static_cast<std::ptrdiff_t>(end));
    const auto j = parse_body(post("/v1/embeddings", body.dump()));
    auto data = j.find("data");
    if (data == j.end() || !data->is_array() || data->size() != end - start) {
      throw BackendError("embedding response must carry one entry per input");
    }
    std::vector<std::vector<double>> batch(end - start);
    std::vector<bool> filled(end - start, false);
    for (std::size_t i = 0; i < data->size(); ++i) {
      const auto& item = (*data)[i];
      std::size_t index = i;
      try {
        if (auto idx = item.find("index"); idx != item.end()) index = idx->get<std::size_t>();
        if (index >= batch.size() || filled[index]) throw BackendError("bad embedding index");
        batch[index] = item.at("embedding").get<std::vector<double>>();
      } catch (const ojson::exception& e) {
        throw BackendError(std::string("malformed embedding entry: ") + e.what());
      }
      filled[index] = true;
    }
    for (auto& v : batch) {
      if (v.empty()) throw BackendError("empty embedding vector");
      if (!out.empty() && v.size() != out.front().size()) {
        throw BackendError("embedding dimension mismatch: " + std::to_string(v.size()) + " vs " +
                           std::to_string(out.front().size()));
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

std::string mock_chat(const ChatRequest& request, const PlantedLandscape& landscape,
                      const TextEmbedder& embed, const MockChatOptions& options) {
  const std::string persona = meta(request, kMetaPersona);
  const std::string kind = meta(request, kMetaStatementKind);
  const std::string_view system = message_with_role(request, "system");
  const std::string_view user = message_with_role(request, "user");
  if ((persona != kPersonaGenerator && persona != kPersonaEvaluator) ||
      (kind != "correct" && kind != "erroneous") || user.empty()) {
    throw ValidationError("mock_chat: unrecognized request shape");
  }
  const bool erroneous = kind == "erroneous";
  std::string keyed(system);
  keyed += '\x1f';
  keyed += user;
  const std::uint64_t key = fnv1a(keyed);

  if (persona == kPersonaGenerator) {
    const double p = planted_fitness(landscape, embed(system));
    const bool correct = uniform01(derive_seed({options.seed, key})) < p;
    const bool asserts_error = correct == erroneous;
    return asserts_error ? std::string(kVerdictError) + ". The statement contains an error."
                         : std::string(kVerdictNoError) + ". The statement is correct.";
  }

  if (options.zero_score_probability > 0.0 &&
      uniform01(derive_seed({options.seed, key, 0x7a65726fULL})) < options.zero_score_probability) {
    return "0";
  }
  const bool says_no_error = user.find(kVerdictNoError) != std::string_view::npos;
  const bool says_error = !says_no_error && user.find(kVerdictError) != std::string_view::npos;
  if (!says_error && !says_no_error) return "-1";
  return says_error == erroneous ? "+1" : "-1";
}

}  // namespace promptscape
