#include "promptscape/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "promptscape/core_model.hpp"
#include "promptscape/embedding_space.hpp"
#include "promptscape/error.hpp"
#include "promptscape/evaluation.hpp"
#include "promptscape/generation.hpp"
#include "promptscape/landscape.hpp"
#include "promptscape/llm_backend.hpp"
#include "promptscape/random.hpp"
#include "promptscape/synthetic.hpp"
#include "promptscape/walks.hpp"

namespace promptscape {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::string_view kVariationInstruction =
    "Rephrase the following instruction for a language model that checks statements for "
    "errors. Keep its purpose, change its wording. Reply with the rephrased instruction only.";

// ---------------------------------------------------------------------------
// Endpoint configuration

struct RoleEndpoint {
  std::string base_url;  // empty: use the shared base_url
  std::string model;
};

struct EndpointConfig {
  BackendConfig transport;
  RoleEndpoint generator{"", "llama3.2"};
  RoleEndpoint evaluator{"", "llama3.2"};
  RoleEndpoint variation{"", "llama3.2"};
  RoleEndpoint embedding{"", "all-MiniLM-L6-v2"};
  ordered_json snapshot;  // file contents, null without --config

  BackendConfig for_role(const RoleEndpoint& role) const {
    BackendConfig c = transport;
    if (!role.base_url.empty()) c.base_url = role.base_url;
    return c;
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void read_role(const ordered_json& j, const char* key, RoleEndpoint& role) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_object()) throw ValidationError(std::string("config: '") + key + "' must be an object");
  if (r.contains("base_url")) role.base_url = r.at("base_url").get<std::string>();
  if (r.contains("model")) role.model = r.at("model").get<std::string>();
}

// Flags override file values: `base_url_flag` replaces every role's URL.
EndpointConfig load_endpoint_config(const std::string& config_path, const std::string& base_url_flag) {
  EndpointConfig cfg;
  if (!config_path.empty()) {
    const auto j = parse_json_file(config_path);
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    try {
      if (j.contains("base_url")) cfg.transport.base_url = j.at("base_url").get<std::string>();
      if (j.contains("api_key_env")) cfg.transport.api_key_env = j.at("api_key_env").get<std::string>();
      if (j.contains("timeout_ms")) {
        cfg.transport.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<std::int64_t>());
      }
      if (j.contains("max_retries")) cfg.transport.max_retries = j.at("max_retries").get<int>();
      if (j.contains("backoff_ms")) {
        cfg.transport.backoff.clear();
        for (const auto& b : j.at("backoff_ms")) {
          cfg.transport.backoff.emplace_back(b.get<std::int64_t>());
        }
      }
      read_role(j, "generator", cfg.generator);
      read_role(j, "evaluator", cfg.evaluator);
      read_role(j, "variation", cfg.variation);
      read_role(j, "embedding", cfg.embedding);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config " + config_path + ": " + e.what());
    }
    if (cfg.transport.timeout.count() <= 0) throw ValidationError("config: timeout_ms must be > 0");
    if (cfg.transport.max_retries < 0) throw ValidationError("config: max_retries must be >= 0");
    cfg.snapshot = j;
  }
  if (!base_url_flag.empty()) {
    cfg.transport.base_url = base_url_flag;
    for (auto* role : {&cfg.generator, &cfg.evaluator, &cfg.variation, &cfg.embedding}) {
      role->base_url.clear();
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Run context and manifest

struct RunContext {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
  fs::path out_dir;
  std::uint64_t seed = 0;
  ordered_json inputs = ordered_json::object();
  ordered_json results = ordered_json::object();
  ordered_json config = nullptr;

  void track_input(const fs::path& path) {
    const std::string bytes = read_file(path);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    inputs[path.string()] = std::string("fnv1a:") + buf;
  }

  fs::path output(std::string_view name) const { return out_dir / std::string(name); }
};

std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json option_snapshot(const CLI::App& leaf) {
  ordered_json opts = ordered_json::object();
  for (const CLI::Option* opt : leaf.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      opts[name] = r.size() == 1 ? ordered_json(r.front()) : ordered_json(r);
    } else if (!opt->get_default_str().empty()) {
      opts[name] = opt->get_default_str();
    }
  }
  return opts;
}

void write_manifest(const RunContext& ctx, const std::string& command_path, const CLI::App& leaf) {
  ordered_json m;
  m["tool"] = "promptscape";
  m["version"] = std::string(kToolVersion);
  m["command"] = ctx.args;
  m["subcommand"] = command_path;
  m["options"] = option_snapshot(leaf);
  m["config"] = ctx.config;
  m["seed"] = ctx.seed;
  m["inputs"] = ctx.inputs;
  if (!ctx.results.empty()) m["results"] = ctx.results;
  m["timestamp"] = utc_timestamp();
  const auto path = ctx.output(kManifestFile);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << m.dump(2) << '\n';
  if (!f) throw IoError("write failure on " + path.string());
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DataOptions {
  std::string data_dir;
  std::string prompts;
  std::string embeddings;
  std::string fitness;
  std::string align = "strict";
};

void add_data_options(CLI::App* app, DataOptions& o) {
  app->add_option("--data", o.data_dir, "Directory holding prompts/embeddings/fitness JSONL");
  app->add_option("--prompts", o.prompts, "Prompts JSONL (overrides --data)");
  app->add_option("--embeddings", o.embeddings, "Embeddings JSONL (overrides --data)");
  app->add_option("--fitness", o.fitness, "Fitness JSONL (overrides --data)");
  app->add_option("--align", o.align, "Id alignment policy")
      ->check(CLI::IsMember({"strict", "intersect"}))
      ->capture_default_str();
}

LandscapeDataset load_data(RunContext& ctx, const DataOptions& o) {
  DatasetPaths paths;
  if (!o.data_dir.empty()) paths = DatasetPaths::in_directory(o.data_dir);
  if (!o.prompts.empty()) paths.prompts = o.prompts;
  if (!o.embeddings.empty()) paths.embeddings = o.embeddings;
  if (!o.fitness.empty()) paths.fitness = o.fitness;
  if (paths.prompts.empty() || paths.embeddings.empty() || paths.fitness.empty()) {
    throw ValidationError("dataset inputs missing: give --data or all of --prompts/--embeddings/--fitness");
  }
  for (const auto& p : {paths.prompts, paths.embeddings, paths.fitness}) ctx.track_input(p);
  auto loaded = load_dataset(paths, o.align == "strict" ? AlignMode::kStrict : AlignMode::kIntersect);
  if (!loaded.dropped_ids.empty()) {
    ctx.err << "warning: dropped " << loaded.dropped_ids.size() << " ids missing from some input\n";
    ctx.results["dropped_ids"] = loaded.dropped_ids;
  }
  return std::move(loaded.dataset);
}

struct EndpointOptions {
  std::string config;
  std::string base_url;
};

void add_endpoint_options(CLI::App* app, EndpointOptions& o) {
  app->add_option("--config", o.config, "JSON file with endpoints and model names");
  app->add_option("--base-url", o.base_url, "Override every endpoint's base URL");
}

EndpointConfig resolve_endpoints(RunContext& ctx, const EndpointOptions& o) {
  auto cfg = load_endpoint_config(o.config, o.base_url);
  if (!o.config.empty()) ctx.track_input(o.config);
  ctx.config = cfg.snapshot;
  return cfg;
}

FitnessSelector parse_selector(const std::string& name) {
  if (name == "overall") return FitnessSelector::overall();
  return FitnessSelector::of(parse_category(name));
}

std::optional<std::pair<double, double>> optional_range(const CLI::Option* lo, const CLI::Option* hi,
                                                        double lo_value, double hi_value) {
  if (lo->count() == 0 && hi->count() == 0) return std::nullopt;
  if (lo->count() == 0 || hi->count() == 0) throw ValidationError("--dmin and --dmax go together");
  if (!(lo_value < hi_value)) throw ValidationError("--dmin must be below --dmax");
  return std::make_pair(lo_value, hi_value);
}

// ---------------------------------------------------------------------------
// Sub-commands

void cmd_generate_systematic(RunContext& ctx) {
  const auto prompts = enumerate_systematic();
  write_prompts(ctx.output("prompts.jsonl"), prompts);
  ctx.err << "wrote " << prompts.size() << " prompts\n";
}

struct NoveltyOptions {
  std::size_t rounds = 1000;
  std::size_t cap = 256;
  std::size_t k = 10;
  std::string variation = "mock";
  std::string embed_backend = "mock";
  std::size_t dim = 384;
  double variation_temperature = 0.9;
  std::string seed_prompt = render_systematic_prompt(0);
  EndpointOptions endpoints;
};

int cmd_generate_novelty(RunContext& ctx, const NoveltyOptions& o) {
  NoveltyConfig cfg{o.rounds, o.cap, o.k, ctx.seed};
  validate(cfg);
  const bool needs_http = o.variation == "llm" || o.embed_backend == "http";
  std::optional<EndpointConfig> endpoints;
  std::optional<HttpBackend> variation_backend, embed_backend;
  if (needs_http) {
    endpoints = resolve_endpoints(ctx, o.endpoints);
    if (o.variation == "llm") variation_backend.emplace(endpoints->for_role(endpoints->variation));
    if (o.embed_backend == "http") embed_backend.emplace(endpoints->for_role(endpoints->embedding));
  }

  VariationPort vary = rule_based_variation;
  if (variation_backend) {
    vary = [&](std::string_view parent, std::uint64_t seed) {
      ChatRequest req;
      req.model = endpoints->variation.model;
      req.temperature = o.variation_temperature;
      req.seed = static_cast<std::int64_t>(seed >> 1);
      req.messages = {{"system", std::string(kVariationInstruction)}, {"user", std::string(parent)}};
      return variation_backend->chat(req);
    };
  }
  EmbeddingPort embed = [&](std::string_view text) { return mock_embed(text, o.dim, ctx.seed); };
  if (embed_backend) {
    embed = [&](std::string_view text) {
      return embed_backend->embed({std::string(text)}, endpoints->embedding.model).front();
    };
  }

  const Prompt seed_prompt{"seed", o.seed_prompt, Strategy::kNovelty, std::nullopt};
  const auto outcome = novelty_search(seed_prompt, cfg, vary, embed, [&](std::size_t round, const NoveltyArchive&) {
    if ((round + 1) % 100 == 0) ctx.err << "novelty round " << round + 1 << "/" << cfg.rounds << '\n';
  });
  write_prompts(ctx.output("prompts.jsonl"), outcome.archive.all_generated);
  std::vector<Prompt> reservoir;
  for (const auto& m : outcome.archive.reservoir) reservoir.push_back(m.prompt);
  write_prompts(ctx.output("reservoir.jsonl"), reservoir);
  ctx.results["rounds_completed"] = outcome.rounds_completed;
  ctx.results["replacements"] = outcome.replacements;
  ctx.err << "generated " << outcome.archive.all_generated.size() << " prompts, reservoir "
          << reservoir.size() << '\n';
  if (!outcome.ok()) {
    ctx.err << "error: novelty search stopped: " << *outcome.error << '\n';
    return kExitBackend;
  }
  return kExitOk;
}

struct EmbedOptions {
  std::string prompts;
  std::string backend = "mock";
  std::string model;
  std::size_t dim = 384;
  EndpointOptions endpoints;
};

void cmd_embed(RunContext& ctx, const EmbedOptions& o) {
  ctx.track_input(o.prompts);
  const auto prompts = read_prompts(o.prompts);
  std::vector<EmbeddingEntry> entries;
  if (o.backend == "mock") {
    if (o.dim == 0) throw ValidationError("--dim must be positive");
    const std::string tag = o.model.empty() ? "mock-" + std::to_string(o.dim) + "-" + std::to_string(ctx.seed) : o.model;
    for (const auto& p : prompts) entries.push_back({p.id, mock_embed(p.text, o.dim, ctx.seed), tag});
  } else {
    const auto endpoints = resolve_endpoints(ctx, o.endpoints);
    const std::string model = o.model.empty() ? endpoints.embedding.model : o.model;
    const HttpBackend backend(endpoints.for_role(endpoints.embedding));
    std::vector<std::string> texts;
    for (const auto& p : prompts) texts.push_back(p.text);
    auto vectors = backend.embed(texts, model);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      entries.push_back({prompts[i].id, std::move(vectors[i]), model});
    }
  }
  write_embeddings(ctx.output("embeddings.jsonl"), entries);
  ctx.err << "wrote " << entries.size() << " embeddings\n";
}

struct EvaluateOptions {
  std::string prompts;
  std::string cases;
  std::size_t synthetic_cases = 0;
  std::string backend = "mock";
  std::size_t concurrency = 4;
  bool resume = false;
  std::string generator_model;
  std::string evaluator_model;
  // mock backend
  std::string embeddings;
  std::string planted = "smooth";
  std::size_t planted_dim = 32;
  std::uint64_t planted_seed = 0;
  double omega = 6.0;
  std::uint64_t embed_seed = 0;
  double zero_prob = 0.0;
  EndpointOptions endpoints;
};

int cmd_evaluate(RunContext& ctx, const EvaluateOptions& o, bool seed_given) {
  ctx.track_input(o.prompts);
  const auto prompts = read_prompts(o.prompts);
  std::vector<TestCase> cases;
  if (!o.cases.empty()) {
    ctx.track_input(o.cases);
    cases = read_testcases(o.cases);
  } else if (o.synthetic_cases > 0) {
    cases = synthetic_test_cases(o.synthetic_cases);
  } else {
    throw ValidationError("give --cases or --synthetic-cases");
  }

  EvalConfig cfg;
  cfg.max_concurrent = o.concurrency;
  EvalBackends backends;
  std::optional<PlantedLandscape> land;
  std::unordered_map<std::string, std::vector<double>> by_text;
  std::optional<HttpBackend> gen_backend, eval_backend;

  if (o.backend == "mock") {
    land = o.planted == "smooth" ? make_smooth_landscape(o.planted_dim, o.planted_seed)
                                 : make_rugged_landscape(o.planted_dim, o.omega, o.planted_seed);
    if (!o.embeddings.empty()) {
      ctx.track_input(o.embeddings);
      std::unordered_map<std::string, std::vector<double>> by_id;
      for (auto& e : read_embeddings(o.embeddings)) by_id.emplace(e.prompt_id, std::move(e.vector));
      for (const auto& p : prompts) {
        auto it = by_id.find(p.id);
        if (it == by_id.end()) throw ValidationError("no embedding for prompt '" + p.id + "'");
        if (it->second.size() != o.planted_dim) {
          throw ValidationError("embedding of '" + p.id + "' has length " +
                                std::to_string(it->second.size()) + ", --planted-dim is " +
                                std::to_string(o.planted_dim));
        }
        by_text[p.text] = it->second;
      }
    } else {
      for (const auto& p : prompts) by_text[p.text] = mock_embed(p.text, o.planted_dim, o.embed_seed);
    }
    const MockChatOptions mock{ctx.seed, o.zero_prob};
    const TextEmbedder embed = [&by_text](std::string_view text) {
      auto it = by_text.find(std::string(text));
      if (it == by_text.end()) throw ValidationError("mock backend: unknown prompt text");
      return it->second;
    };
    backends.generator = [&, mock, embed](const ChatRequest& r) { return mock_chat(r, *land, embed, mock); };
    backends.evaluator = backends.generator;
  } else {
    const auto endpoints = resolve_endpoints(ctx, o.endpoints);
    cfg.generator_model = o.generator_model.empty() ? endpoints.generator.model : o.generator_model;
    cfg.evaluator_model = o.evaluator_model.empty() ? endpoints.evaluator.model : o.evaluator_model;
    if (seed_given) cfg.seed = static_cast<std::int64_t>(ctx.seed);
    gen_backend.emplace(endpoints.for_role(endpoints.generator));
    eval_backend.emplace(endpoints.for_role(endpoints.evaluator));
    backends.generator = [&](const ChatRequest& r) { return gen_backend->chat(r); };
    backends.evaluator = [&](const ChatRequest& r) { return eval_backend->chat(r); };
  }
  validate(cfg);

  std::optional<fs::path> ledger;
  if (o.resume) ledger = ctx.output("evaluation.ledger.jsonl");
  ctx.err << "evaluating " << prompts.size() << " prompts over " << cases.size() << " cases\n";
  const auto result = evaluate_population(prompts, cases, backends, cfg, ledger);
  write_fitness(ctx.output("fitness.jsonl"), result.records);
  ctx.results["evaluated"] = result.records.size();
  ctx.results["failed"] = result.failed_prompt_ids.size();
  ctx.results["warnings"] = result.warnings;
  ctx.results["resumed"] = result.resumed;
  if (result.warnings > 0) ctx.err << "warning: " << result.warnings << " unparseable evaluator outputs scored 0\n";
  for (const auto& e : result.errors) ctx.err << "error: " << e << '\n';
  if (!result.failed_prompt_ids.empty()) {
    ctx.err << "error: " << result.failed_prompt_ids.size() << " prompts failed\n";
    return kExitBackend;
  }
  return kExitOk;
}

struct AutocorrOptions {
  DataOptions data;
  std::string category = "overall";
  std::size_t bins = 25;
  std::size_t min_pairs = 30;
  double dmin = 0.0;
  double dmax = 0.0;
  CLI::Option* dmin_opt = nullptr;
  CLI::Option* dmax_opt = nullptr;
};

void cmd_autocorr(RunContext& ctx, const AutocorrOptions& o) {
  const auto dataset = load_data(ctx, o.data);
  AutocorrConfig cfg{o.bins, o.min_pairs, optional_range(o.dmin_opt, o.dmax_opt, o.dmin, o.dmax)};
  const auto matrix = pairwise_distances(dataset);
  std::vector<std::string> selections;
  if (o.category == "all") {
    selections.push_back("overall");
    for (Category c : all_categories()) selections.emplace_back(category_name(c));
  } else {
    selections.push_back(o.category);
  }
  for (const auto& name : selections) {
    const auto curve = autocorrelation(matrix, select_fitness(dataset, parse_selector(name)), cfg);
    const std::string file = name == "overall" ? "autocorr.csv" : "autocorr_" + name + ".csv";
    write_autocorr_csv(ctx.output(file), curve);
    ctx.err << file << ": " << curve.points.size() << " bins kept, " << curve.dropped_bins << " dropped\n";
  }
}

struct HistOptions {
  DataOptions data;
  std::string category = "overall";
  std::size_t bins = 10;
};

void cmd_hist(RunContext& ctx, const HistOptions& o) {
  const auto dataset = load_data(ctx, o.data);
  const auto values = select_fitness(dataset, parse_selector(o.category));
  write_histogram_csv(ctx.output("histogram.csv"), fitness_histogram(values, o.bins));
}

struct PcaOptions {
  DataOptions data;
  std::size_t components = 2;
};

void cmd_pca(RunContext& ctx, const PcaOptions& o) {
  const auto dataset = load_data(ctx, o.data);
  const auto pca = pca_project(dataset.embeddings(), o.components);
  if (pca.rank_deficient) ctx.err << "warning: embeddings span fewer dimensions than requested\n";
  if (!pca.converged) ctx.err << "warning: power iteration did not converge\n";
  write_pca_csv(ctx.output("pca.csv"), pca, dataset.accuracies());
  ctx.results["explained_fraction"] = pca.explained_fraction;
}

void cmd_range(RunContext& ctx, const DataOptions& o) {
  const auto dataset = load_data(ctx, o);
  const auto r = distance_range(dataset);
  ctx.out << format_double(r.min_nonzero) << ',' << format_double(r.max) << '\n';
  ctx.results["min_nonzero"] = r.min_nonzero;
  ctx.results["max"] = r.max;
}

struct WalkOptions {
  DataOptions data;
  std::string category = "overall";
  std::size_t starts = 50;
  std::size_t walks = 100;
  std::size_t steps = 50;
  std::size_t patience = 10;
  std::size_t thresholds = 50;
  double dmin = kDefaultMinThreshold;
  double dmax = kDefaultMaxThreshold;
  bool dump = false;
};

void cmd_walk(RunContext& ctx, const WalkOptions& o) {
  const auto dataset = load_data(ctx, o.data);
  if (!(o.dmin > 0.0 && o.dmin < o.dmax)) throw ValidationError("need 0 < --dmin < --dmax");
  WalkConfig cfg;
  cfg.n_starts = o.starts;
  cfg.walks_per_start = o.walks;
  cfg.max_steps = o.steps;
  cfg.patience = o.patience;
  cfg.thresholds = linspace_thresholds(o.thresholds, o.dmin, o.dmax);
  cfg.master_seed = ctx.seed;
  std::vector<WalkResult> dump;
  const auto curve = difficulty_curve(pairwise_distances(dataset),
                                      select_fitness(dataset, parse_selector(o.category)), cfg,
                                      o.dump ? &dump : nullptr);
  write_difficulty_csv(ctx.output("difficulty.csv"), curve);
  if (o.dump) write_walk_dump(ctx.output("walks.jsonl"), dump);
  ctx.err << "wrote " << curve.points.size() << " thresholds\n";
}

struct NkOptions {
  int n = 10;
  int k = 2;
};

void cmd_synth_nk(RunContext& ctx, const NkOptions& o) {
  const auto land = nk_generate(o.n, o.k, ctx.seed);
  save_dataset(nk_to_dataset(land), ctx.out_dir);
}

struct PlantedOptions {
  std::string kind = "smooth";
  std::size_t dim = 32;
  std::size_t points = 500;
  double omega = 6.0;
  std::size_t trap_points = 100;
  double isolation = 0.4;
};

void cmd_synth_planted(RunContext& ctx, const PlantedOptions& o) {
  if (o.kind == "trap") {
    TrapConfig cfg;
    cfg.n_points = o.points;
    cfg.trap_points = o.trap_points;
    cfg.dim = o.dim;
    cfg.isolation = o.isolation;
    cfg.omega = o.omega;
    cfg.seed = ctx.seed;
    save_dataset(planted_trap_dataset(cfg), ctx.out_dir);
    return;
  }
  const auto land = o.kind == "smooth" ? make_smooth_landscape(o.dim, ctx.seed)
                                       : make_rugged_landscape(o.dim, o.omega, ctx.seed);
  // Points use a seed distinct from the landscape's; `evaluate --planted-seed`
  // with the same value rebuilds the landscape.
  save_dataset(planted_dataset(land, o.points, o.dim, derive_seed({ctx.seed, 0x706f696eULL})).dataset,
               ctx.out_dir);
}

// ---------------------------------------------------------------------------
// Dispatch

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int cmd_replay(const std::string& manifest_path, const std::string& out_override, std::ostream& out,
               std::ostream& err, int depth) {
  if (depth > 0) throw ValidationError("replay manifests cannot themselves be replays");
  const auto m = parse_json_file(manifest_path);
  if (!m.is_object() || !m.contains("command") || !m.at("command").is_array()) {
    throw ValidationError(manifest_path + ": not a run manifest");
  }
  auto args = m.at("command").get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw ValidationError("cannot replay a replay manifest");
  if (m.contains("inputs")) {
    for (const auto& [path, hash] : m.at("inputs").items()) {
      RunContext probe{{}, out, err, {}};
      try {
        probe.track_input(path);
      } catch (const IoError&) {
        err << "warning: input " << path << " is missing\n";
        continue;
      }
      if (probe.inputs[path] != hash) err << "warning: input " << path << " changed since the recorded run\n";
    }
  }
  if (!out_override.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--out" && i + 1 < args.size()) {
        args[i + 1] = out_override;
        replaced = true;
      } else if (args[i].rfind("--out=", 0) == 0) {
        args[i] = "--out=" + out_override;
        replaced = true;
      }
    }
    if (!replaced) {
      args.push_back("--out");
      args.push_back(out_override);
    }
  }
  return dispatch(args, out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"Prompt fitness-landscape toolkit", "promptscape"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string out_dir;
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> seed_opts;
  const auto add_common = [&](CLI::App* sub, bool out_required = true) {
    auto* o = sub->add_option("--out", out_dir, "Output directory");
    if (out_required) o->required();
    seed_opts.push_back(sub->add_option("--seed", seed, "Master seed")->capture_default_str());
  };

  // generate
  auto* generate = app.add_subcommand("generate", "Create prompt populations");
  generate->require_subcommand(1);
  auto* gen_sys = generate->add_subcommand("systematic", "All 1024 category-emphasis prompts");
  add_common(gen_sys);
  NoveltyOptions nov;
  auto* gen_nov = generate->add_subcommand("novelty", "Novelty search over prompt variations");
  add_common(gen_nov);
  gen_nov->add_option("--rounds", nov.rounds, "Variation rounds")->capture_default_str();
  gen_nov->add_option("--cap", nov.cap, "Reservoir capacity")->capture_default_str();
  gen_nov->add_option("--k", nov.k, "Nearest neighbours in the novelty score")->capture_default_str();
  gen_nov->add_option("--variation", nov.variation, "Variation operator")
      ->check(CLI::IsMember({"mock", "llm"}))
      ->capture_default_str();
  gen_nov->add_option("--embed-backend", nov.embed_backend, "Embedding source")
      ->check(CLI::IsMember({"mock", "http"}))
      ->capture_default_str();
  gen_nov->add_option("--dim", nov.dim, "Mock embedding dimension")->capture_default_str();
  gen_nov->add_option("--variation-temperature", nov.variation_temperature)->capture_default_str();
  gen_nov->add_option("--seed-prompt", nov.seed_prompt, "Initial prompt")->capture_default_str();
  add_endpoint_options(gen_nov, nov.endpoints);

  // embed
  EmbedOptions emb;
  auto* embed = app.add_subcommand("embed", "Embed prompts");
  add_common(embed);
  embed->add_option("--prompts", emb.prompts, "Prompts JSONL")->required();
  embed->add_option("--backend", emb.backend)->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
  embed->add_option("--model", emb.model, "Model tag recorded with each vector");
  embed->add_option("--dim", emb.dim, "Mock embedding dimension")->capture_default_str();
  add_endpoint_options(embed, emb.endpoints);

  // evaluate
  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score prompts with the generator/evaluator pair");
  add_common(evaluate);
  evaluate->add_option("--prompts", ev.prompts, "Prompts JSONL")->required();
  evaluate->add_option("--cases", ev.cases, "Test cases JSONL");
  evaluate->add_option("--synthetic-cases", ev.synthetic_cases, "Generate N template cases per category");
  evaluate->add_option("--backend", ev.backend)->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
  evaluate->add_option("--concurrency", ev.concurrency, "Maximum in-flight prompts")->capture_default_str();
  evaluate->add_flag("--resume", ev.resume, "Keep and reuse a ledger of finished prompts in --out");
  evaluate->add_option("--generator-model", ev.generator_model);
  evaluate->add_option("--evaluator-model", ev.evaluator_model);
  evaluate->add_option("--embeddings", ev.embeddings, "Mock: prompt embeddings JSONL");
  evaluate->add_option("--planted", ev.planted, "Mock: planted landscape kind")
      ->check(CLI::IsMember({"smooth", "rugged"}))
      ->capture_default_str();
  evaluate->add_option("--planted-dim", ev.planted_dim)->capture_default_str();
  evaluate->add_option("--planted-seed", ev.planted_seed)->capture_default_str();
  evaluate->add_option("--omega", ev.omega, "Mock: rugged landscape frequency")->capture_default_str();
  evaluate->add_option("--embed-seed", ev.embed_seed, "Mock: seed for embeddings without --embeddings")
      ->capture_default_str();
  evaluate->add_option("--zero-prob", ev.zero_prob, "Mock: probability the evaluator answers 0")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  add_endpoint_options(evaluate, ev.endpoints);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Landscape analyses");
  analyze->require_subcommand(1);
  AutocorrOptions ac;
  auto* an_ac = analyze->add_subcommand("autocorr", "Distance-binned fitness autocorrelation");
  add_common(an_ac);
  add_data_options(an_ac, ac.data);
  an_ac->add_option("--category", ac.category, "overall, all, or a category name")->capture_default_str();
  an_ac->add_option("--bins", ac.bins)->capture_default_str();
  an_ac->add_option("--min-pairs", ac.min_pairs)->capture_default_str();
  ac.dmin_opt = an_ac->add_option("--dmin", ac.dmin, "Lower edge of the binned range");
  ac.dmax_opt = an_ac->add_option("--dmax", ac.dmax, "Upper edge of the binned range");
  HistOptions hi;
  auto* an_hist = analyze->add_subcommand("hist", "Fitness histogram");
  add_common(an_hist);
  add_data_options(an_hist, hi.data);
  an_hist->add_option("--category", hi.category)->capture_default_str();
  an_hist->add_option("--bins", hi.bins)->capture_default_str();
  PcaOptions pc;
  auto* an_pca = analyze->add_subcommand("pca", "Project embeddings on principal components");
  add_common(an_pca);
  add_data_options(an_pca, pc.data);
  an_pca->add_option("--components", pc.components)->capture_default_str();
  DataOptions rg;
  auto* an_range = analyze->add_subcommand("range", "Print min non-zero and max pairwise distance");
  add_common(an_range, false);
  add_data_options(an_range, rg);

  // walk
  WalkOptions wk;
  auto* walk = app.add_subcommand("walk", "Distance-constrained random walks");
  add_common(walk);
  add_data_options(walk, wk.data);
  walk->add_option("--category", wk.category)->capture_default_str();
  walk->add_option("--starts", wk.starts, "Lowest-fitness start prompts")->capture_default_str();
  walk->add_option("--walks", wk.walks, "Walks per start")->capture_default_str();
  walk->add_option("--steps", wk.steps)->capture_default_str();
  walk->add_option("--patience", wk.patience)->capture_default_str();
  walk->add_option("--thresholds", wk.thresholds, "Number of thresholds")->capture_default_str();
  walk->add_option("--dmin", wk.dmin)->capture_default_str();
  walk->add_option("--dmax", wk.dmax)->capture_default_str();
  walk->add_flag("--dump", wk.dump, "Also write every walk to walks.jsonl");

  // synth
  auto* synth = app.add_subcommand("synth", "Synthetic landscapes");
  synth->require_subcommand(1);
  NkOptions nk;
  auto* syn_nk = synth->add_subcommand("nk", "NK landscape over the full hypercube");
  add_common(syn_nk);
  syn_nk->add_option("--n", nk.n)->capture_default_str();
  syn_nk->add_option("--k", nk.k)->capture_default_str();
  PlantedOptions pl;
  auto* syn_pl = synth->add_subcommand("planted", "Planted landscape over random unit vectors");
  add_common(syn_pl);
  syn_pl->add_option("--kind", pl.kind)->check(CLI::IsMember({"smooth", "rugged", "trap"}))->capture_default_str();
  syn_pl->add_option("--dim", pl.dim)->capture_default_str();
  syn_pl->add_option("--points", pl.points)->capture_default_str();
  syn_pl->add_option("--omega", pl.omega)->capture_default_str();
  syn_pl->add_option("--trap-points", pl.trap_points, "trap: points in the low-fitness cluster")->capture_default_str();
  syn_pl->add_option("--isolation", pl.isolation, "trap: min distance to the cluster")->capture_default_str();

  // replay
  std::string manifest_path, replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", manifest_path)->required();
  replay->add_option("--out", replay_out, "Write to this directory instead of the recorded one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  if (replay->parsed()) return cmd_replay(manifest_path, replay_out, out, err, depth);

  // Locate the leaf sub-command.
  const CLI::App* leaf = &app;
  std::string path;
  while (!leaf->get_subcommands().empty()) {
    leaf = leaf->get_subcommands().front();
    path += (path.empty() ? "" : " ") + leaf->get_name();
  }

  RunContext ctx{args, out, err, out_dir, seed};
  bool seed_given = false;
  for (const auto* o : seed_opts) seed_given = seed_given || o->count() > 0;
  if (!ctx.out_dir.empty()) fs::create_directories(ctx.out_dir);

  int code = kExitOk;
  if (leaf == gen_sys) {
    cmd_generate_systematic(ctx);
  } else if (leaf == gen_nov) {
    code = cmd_generate_novelty(ctx, nov);
  } else if (leaf == embed) {
    cmd_embed(ctx, emb);
  } else if (leaf == evaluate) {
    code = cmd_evaluate(ctx, ev, seed_given);
  } else if (leaf == an_ac) {
    cmd_autocorr(ctx, ac);
  } else if (leaf == an_hist) {
    cmd_hist(ctx, hi);
  } else if (leaf == an_pca) {
    cmd_pca(ctx, pc);
  } else if (leaf == an_range) {
    cmd_range(ctx, rg);
  } else if (leaf == walk) {
    cmd_walk(ctx, wk);
  } else if (leaf == syn_nk) {
    cmd_synth_nk(ctx, nk);
  } else if (leaf == syn_pl) {
    cmd_synth_planted(ctx, pl);
  }
  if (!ctx.out_dir.empty()) write_manifest(ctx, path, *leaf);
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const BackendError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace promptscape
