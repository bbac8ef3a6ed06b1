#include "promptscape/walks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "promptscape/error.hpp"

namespace promptscape {

namespace {

struct WalkCore {
  double max_fitness;
  std::size_t steps;
  Termination termination;
};

template <typename OnStep>
WalkCore walk_core(const WalkGraph& graph, std::size_t start, std::span<const double> fitness,
                   double threshold, std::size_t max_steps, std::size_t patience, Rng& rng,
                   OnStep on_step) {
  std::size_t current = start;
  double best = fitness[start];
  std::size_t stale = 0;
  std::size_t steps = 0;
  while (steps < max_steps) {
    const std::size_t count = graph.neighbor_count(current, threshold);
    if (count == 0) return {best, steps, Termination::kIsolated};
    current = graph.neighbor(current, uniform_index(rng, count));
    ++steps;
    on_step(current);
    if (fitness[current] > best) {
      best = fitness[current];
      stale = 0;
    } else if (++stale >= patience) {
      return {best, steps, Termination::kPatience};
    }
  }
  return {best, steps, Termination::kStepLimit};
}

}  // namespace

std::vector<double> linspace_thresholds(std::size_t count, double lo, double hi) {
  if (count == 0) return {};
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  out.back() = hi;
  return out;
}

void validate(const WalkConfig& config) {
  if (config.n_starts == 0 || config.walks_per_start == 0 || config.max_steps == 0 ||
      config.patience == 0) {
    throw ValidationError("walk config: starts, walks, steps and patience must be positive");
  }
  if (config.thresholds.empty()) throw ValidationError("walk config: no thresholds");
  for (std::size_t i = 0; i < config.thresholds.size(); ++i) {
    if (!(config.thresholds[i] > 0.0)) throw ValidationError("walk config: thresholds must be > 0");
    if (i > 0 && !(config.thresholds[i] > config.thresholds[i - 1])) {
      throw ValidationError("walk config: thresholds must be strictly increasing");
    }
  }
}

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::kStepLimit: return "step_limit";
    case Termination::kPatience: return "patience";
    case Termination::kIsolated: return "isolated";
  }
  return "step_limit";
}

WalkGraph::WalkGraph(const DistanceMatrix& distances) : ids_(distances.ids()) {
  const std::size_t n = ids_.size();
  if (n == 0) return;
  sorted_distances_.resize(n * (n - 1));
  order_.resize(n * (n - 1));
  std::vector<std::uint32_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    idx.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) idx.push_back(static_cast<std::uint32_t>(j));
    }
    const auto row = distances.row(i);
    std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
      return row[a] != row[b] ? row[a] < row[b] : a < b;
    });
    for (std::size_t r = 0; r < n - 1; ++r) {
      order_[i * (n - 1) + r] = idx[r];
      sorted_distances_[i * (n - 1) + r] = row[idx[r]];
    }
  }
}

std::size_t WalkGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] == id) return i;
  }
  throw ValidationError("unknown start id '" + std::string(id) + "'");
}

std::size_t WalkGraph::neighbor_count(std::size_t node, double threshold) const {
  const std::size_t m = ids_.size() - 1;
  const auto begin = sorted_distances_.begin() + static_cast<std::ptrdiff_t>(node * m);
  return static_cast<std::size_t>(std::upper_bound(begin, begin + static_cast<std::ptrdiff_t>(m), threshold) - begin);
}

std::vector<std::size_t> worst_k(std::span<const std::string> ids, std::span<const double> fitness,
                                 std::size_t k) {
  if (ids.size() != fitness.size()) throw ValidationError("worst_k: size mismatch");
  if (k == 0 || k > ids.size()) {
    throw ValidationError("worst_k: k=" + std::to_string(k) + " out of range for population of " +
                          std::to_string(ids.size()));
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitness[a] != fitness[b] ? fitness[a] < fitness[b] : ids[a] < ids[b];
  });
  order.resize(k);
  return order;
}

std::vector<std::string> worst_k(const LandscapeDataset& dataset, std::size_t k) {
  std::vector<std::string> ids;
  for (const auto& p : dataset.prompts()) ids.push_back(p.id);
  const auto fitness = dataset.accuracies();
  std::vector<std::string> out;
  for (std::size_t i : worst_k(ids, fitness, k)) out.push_back(ids[i]);
  return out;
}

WalkResult random_walk(const WalkGraph& graph, std::size_t start, std::span<const double> fitness,
                       double threshold, std::size_t max_steps, std::size_t patience, Rng& rng) {
  if (start >= graph.size()) throw ValidationError("random_walk: start index out of range");
  if (fitness.size() != graph.size()) throw ValidationError("random_walk: fitness size mismatch");
  if (!(threshold > 0.0)) throw ValidationError("random_walk: threshold must be > 0");
  if (max_steps == 0 || patience == 0) throw ValidationError("random_walk: steps and patience must be positive");
  WalkResult result;
  result.start_id = graph.ids()[start];
  result.threshold = threshold;
  result.path_ids.push_back(result.start_id);
  const auto core = walk_core(graph, start, fitness, threshold, max_steps, patience, rng,
                              [&](std::size_t node) { result.path_ids.push_back(graph.ids()[node]); });
  result.max_fitness = core.max_fitness;
  result.steps_taken = core.steps;
  result.termination = core.termination;
  return result;
}

WalkResult random_walk(std::string_view start_id, const DistanceMatrix& distances,
                       std::span<const double> fitness, double threshold, std::size_t max_steps,
                       std::size_t patience, Rng& rng) {
  const WalkGraph graph(distances);
  return random_walk(graph, graph.index_of(start_id), fitness, threshold, max_steps, patience, rng);
}

std::uint64_t walk_seed(std::uint64_t master_seed, std::size_t start, std::size_t walk,
                        std::size_t threshold_index) {
  return derive_seed({master_seed, start, walk, threshold_index});
}

DifficultyCurve difficulty_curve(const DistanceMatrix& distances, std::span<const double> fitness,
                                 const WalkConfig& config, std::vector<WalkResult>* dump) {
  validate(config);
  if (distances.size() < config.n_starts) {
    throw ValidationError("difficulty_curve: population of " + std::to_string(distances.size()) +
                          " is smaller than n_starts=" + std::to_string(config.n_starts));
  }
  if (fitness.size() != distances.size()) throw ValidationError("difficulty_curve: fitness size mismatch");
  const WalkGraph graph(distances);
  const auto starts = worst_k(distances.ids(), fitness, config.n_starts);

  DifficultyCurve curve;
  const auto no_path = [](std::size_t) {};
  for (std::size_t t = 0; t < config.thresholds.size(); ++t) {
    const double threshold = config.thresholds[t];
    std::vector<double> maxima;
    maxima.reserve(config.n_starts * config.walks_per_start);
    for (std::size_t s = 0; s < starts.size(); ++s) {
      for (std::size_t w = 0; w < config.walks_per_start; ++w) {
        Rng rng(walk_seed(config.master_seed, s, w, t));
        if (dump) {
          dump->push_back(random_walk(graph, starts[s], fitness, threshold, config.max_steps,
                                      config.patience, rng));
          maxima.push_back(dump->back().max_fitness);
        } else {
          maxima.push_back(walk_core(graph, starts[s], fitness, threshold, config.max_steps,
                                     config.patience, rng, no_path)
                               .max_fitness);
        }
      }
    }
    double sum = 0.0;
    for (double m : maxima) sum += m;
    const double mean = sum / static_cast<double>(maxima.size());
    double ss = 0.0;
    for (double m : maxima) ss += (m - mean) * (m - mean);
    curve.points.push_back(
        {threshold, mean, std::sqrt(ss / static_cast<double>(maxima.size())), maxima.size()});
  }
  return curve;
}

DifficultyCurve difficulty_curve(const LandscapeDataset& dataset, const WalkConfig& config,
                                 std::vector<WalkResult>* dump) {
  const auto fitness = dataset.accuracies();
  return difficulty_curve(pairwise_distances(dataset), fitness, config, dump);
}

void write_difficulty_csv(const std::filesystem::path& path, const DifficultyCurve& curve) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "threshold,mean_max_fitness,std_max_fitness,n_runs\n";
  for (const auto& p : curve.points) {
    out << format_double(p.threshold) << ',' << format_double(p.mean_max_fitness) << ','
        << format_double(p.std_max_fitness) << ',' << p.n_runs << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

void write_walk_dump(const std::filesystem::path& path, const std::vector<WalkResult>& walks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& w : walks) {
    nlohmann::ordered_json j;
    j["start_id"] = w.start_id;
    j["threshold"] = w.threshold;
    j["max_fitness"] = w.max_fitness;
    j["steps_taken"] = w.steps_taken;
    j["termination"] = termination_name(w.termination);
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace promptscape
