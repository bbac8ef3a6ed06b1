#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptscape/core_model.hpp"
#include "promptscape/llm_backend.hpp"

namespace promptscape {

enum class StatementKind { kCorrect, kErroneous };

std::string_view statement_kind_name(StatementKind kind);

enum class Score : int { kContradicts = -1, kPartial = 0, kAligned = 1 };

struct StatementTrial {
  std::string case_id;
  StatementKind statement_kind = StatementKind::kCorrect;
  std::string generator_response;
  Score score = Score::kPartial;
  bool fallback = false;  // score 0 assigned because the evaluator never parsed
};

inline constexpr std::string_view kDefaultEvaluatorInstruction =
    "You grade an error-detection answer against the ground truth. Compare the answer's "
    "conclusion with the ground truth; do not re-solve the task. Reply with exactly one token: "
    "+1 if the answer aligns with the ground truth, 0 if it is partially correct but incomplete, "
    "-1 if it contradicts the ground truth.";

struct EvalConfig {
  std::string generator_model = "llama3.2";
  std::string evaluator_model = "llama3.2";
  double generator_temperature = 0.3;
  double evaluator_temperature = 0.1;
  std::size_t max_concurrent = 4;
  int retries = 2;
  std::optional<std::int64_t> seed;  // passed through to endpoints that accept one
  std::string evaluator_instruction = std::string(kDefaultEvaluatorInstruction);
};

void validate(const EvalConfig& config);

ChatRequest build_generator_request(const Prompt& prompt, std::string_view statement,
                                    const EvalConfig& config = {});
ChatRequest build_generator_request(const Prompt& prompt, const TestCase& test_case,
                                    StatementKind kind, const EvalConfig& config = {});

ChatRequest build_evaluator_request(std::string_view generator_response, const TestCase& test_case,
                                    StatementKind kind, const EvalConfig& config = {});

// First of "+1", "1", "0", "-1" found scanning whitespace-separated tokens
// left to right, after stripping surrounding punctuation. Throws ParseError
// when no token matches.
Score parse_score(std::string_view evaluator_text);

ConfusionCounts score_to_confusion(Score score, StatementKind kind);

// (tp + tn) / total; throws ValidationError when the total weight is zero.
double accuracy(const ConfusionCounts& counts);

struct EvalBackends {
  ChatFn generator;
  ChatFn evaluator;
};

struct PromptEvaluation {
  std::optional<FitnessRecord> record;  // empty when any trial failed
  std::vector<StatementTrial> trials;
  std::size_t warnings = 0;  // score-0 fallbacks after unparseable output
  std::size_t failed_trials = 0;
  std::vector<std::string> errors;
};

// Runs both statements of every case through generator -> evaluator ->
// parse_score -> score_to_confusion and aggregates the counts.
PromptEvaluation evaluate_prompt(const Prompt& prompt, const std::vector<TestCase>& cases,
                                 const EvalBackends& backends, const EvalConfig& config);

struct PopulationResult {
  std::vector<FitnessRecord> records;  // input order, successful prompts only
  std::vector<std::string> failed_prompt_ids;
  std::vector<std::string> errors;
  std::size_t warnings = 0;
  std::size_t resumed = 0;  // records taken from the resume ledger
};

// Hash of the inputs that determine a prompt's result: the cases plus
// models and temperatures.
std::string evaluation_fingerprint(const std::vector<TestCase>& cases, const EvalConfig& config);

// Evaluates prompts with up to config.max_concurrent prompts in flight.
// When `resume_ledger` is set, finished prompts are appended to it as they
// complete and prompts already recorded with the same text under the same
// fingerprint are not re-queried.
PopulationResult evaluate_population(const std::vector<Prompt>& prompts,
                                     const std::vector<TestCase>& cases,
                                     const EvalBackends& backends, const EvalConfig& config,
                                     const std::optional<std::filesystem::path>& resume_ledger = {});

}  // namespace promptscape
