#include "promptscape/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "promptscape/error.hpp"
#include "promptscape/random.hpp"

namespace promptscape {

namespace {

struct BinMoments {
  std::size_t pairs = 0;
  double sum = 0.0;  // over both members of each pair
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sxx = 0.0;
  double sxy = 0.0;
};

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
}

}  // namespace

std::vector<double> select_fitness(const LandscapeDataset& dataset, const FitnessSelector& selector) {
  return selector.category ? dataset.accuracies(*selector.category) : dataset.accuracies();
}

AutocorrCurve autocorrelation(const DistanceMatrix& distances, std::span<const double> fitness,
                              const AutocorrConfig& config) {
  const std::size_t n = distances.size();
  if (fitness.size() != n) throw ValidationError("autocorrelation: fitness/distance size mismatch");
  if (n < 3) throw ValidationError("autocorrelation: need at least 3 prompts");
  if (config.n_bins < 2) throw ValidationError("autocorrelation: n_bins must be at least 2");
  if (config.min_pairs_per_bin == 0) throw ValidationError("autocorrelation: min_pairs_per_bin must be positive");
  const auto [fmin, fmax] = std::minmax_element(fitness.begin(), fitness.end());
  if (*fmin == *fmax) throw ValidationError("autocorrelation: fitness has zero variance");

  double lo, hi;
  if (config.range) {
    std::tie(lo, hi) = *config.range;
    if (!(hi > lo)) throw ValidationError("autocorrelation: empty distance range");
  } else {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        lo = std::min(lo, distances.at(i, j));
        hi = std::max(hi, distances.at(i, j));
      }
    }
  }
  const double width = (hi - lo) / static_cast<double>(config.n_bins);
  const auto bin_of = [&](double d) -> std::optional<std::size_t> {
    if (d < lo || d > hi) return std::nullopt;
    if (width <= 0.0) return 0;
    auto b = static_cast<std::size_t>((d - lo) / width);
    return std::min(b, config.n_bins - 1);
  };

  AutocorrCurve curve;
  std::vector<BinMoments> bins(config.n_bins);
  // Pass 1: counts, sums, ranges.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = bin_of(distances.at(i, j));
      if (!b) {
        ++curve.out_of_range_pairs;
        continue;
      }
      auto& m = bins[*b];
      ++m.pairs;
      m.sum += fitness[i] + fitness[j];
      m.lo = std::min({m.lo, fitness[i], fitness[j]});
      m.hi = std::max({m.hi, fitness[i], fitness[j]});
    }
  }
  // Pass 2: centred second moments of the symmetrized pair set.
  std::vector<double> means(config.n_bins, 0.0);
  for (std::size_t b = 0; b < config.n_bins; ++b) {
    if (bins[b].pairs) means[b] = bins[b].sum / (2.0 * static_cast<double>(bins[b].pairs));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = bin_of(distances.at(i, j));
      if (!b) continue;
      auto& m = bins[*b];
      const double x = fitness[i] - means[*b];
      const double y = fitness[j] - means[*b];
      m.sxx += x * x + y * y;
      m.sxy += 2.0 * x * y;
    }
  }

  for (std::size_t b = 0; b < config.n_bins; ++b) {
    const auto& m = bins[b];
    if (m.pairs == 0) continue;
    if (m.pairs < config.min_pairs_per_bin || m.lo == m.hi || !(m.sxx > 0.0)) {
      ++curve.dropped_bins;
      curve.dropped_pairs += m.pairs;
      continue;
    }
    const double center = lo + (static_cast<double>(b) + 0.5) * width;
    curve.points.push_back({center, std::clamp(m.sxy / m.sxx, -1.0, 1.0), m.pairs});
  }
  if (curve.points.empty()) throw ValidationError("autocorrelation: every distance bin was dropped");
  return curve;
}

AutocorrCurve autocorrelation(const LandscapeDataset& dataset, const FitnessSelector& selector,
                              const AutocorrConfig& config) {
  if (dataset.size() < 3) throw ValidationError("autocorrelation: need at least 3 prompts");
  const auto fitness = select_fitness(dataset, selector);
  return autocorrelation(pairwise_distances(dataset), fitness, config);
}

Histogram fitness_histogram(std::span<const double> values, std::size_t n_bins,
                            std::pair<double, double> range) {
  if (values.empty()) throw ValidationError("histogram: no values");
  if (n_bins == 0) throw ValidationError("histogram: n_bins must be positive");
  const auto [lo, hi] = range;
  if (!(hi > lo)) throw ValidationError("histogram: empty range");

  Histogram h;
  const double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    h.bins.push_back({lo + static_cast<double>(b) * width,
                      b + 1 == n_bins ? hi : lo + static_cast<double>(b + 1) * width, 0});
  }
  double sum = 0.0;
  h.min = values.front();
  h.max = values.front();
  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      throw ValidationError("histogram: value " + format_double(v) + " outside range");
    }
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n_bins));
    ++h.bins[std::min(b, n_bins - 1)].count;
    sum += v;
    h.min = std::min(h.min, v);
    h.max = std::max(h.max, v);
  }
  h.count = values.size();
  h.mean = sum / static_cast<double>(h.count);
  double ss = 0.0;
  for (double v : values) ss += (v - h.mean) * (v - h.mean);
  h.std = std::sqrt(ss / static_cast<double>(h.count));
  return h;
}

Histogram fitness_histogram(const LandscapeDataset& dataset, std::size_t n_bins,
                            std::pair<double, double> range) {
  const auto values = dataset.accuracies();
  return fitness_histogram(values, n_bins, range);
}

PcaResult pca_project(std::span<const EmbeddingEntry> embeddings, std::size_t n_components) {
  const std::size_t n = embeddings.size();
  if (n_components == 0) throw ValidationError("pca: n_components must be positive");
  if (n < n_components + 1) {
    throw ValidationError("pca: need at least " + std::to_string(n_components + 1) + " points");
  }
  const std::size_t d = embeddings.front().vector.size();
  for (const auto& e : embeddings) {
    if (e.vector.size() != d) throw ValidationError("pca: vector length mismatch at '" + e.prompt_id + "'");
  }

  PcaResult out;
  out.mean.assign(d, 0.0);
  for (const auto& e : embeddings) {
    out.ids.push_back(e.prompt_id);
    for (std::size_t k = 0; k < d; ++k) out.mean[k] += e.vector[k];
  }
  for (double& m : out.mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> centred(n, std::vector<double>(d));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      centred[i][k] = embeddings[i].vector[k] - out.mean[k];
      total += centred[i][k] * centred[i][k];
    }
  }
  total /= static_cast<double>(n - 1);

  // Covariance-vector product without forming the d x d matrix.
  std::vector<double> proj(n);
  const auto cov_times = [&](const std::vector<double>& v) {
    std::vector<double> r(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) proj[i] = dot(centred[i], v);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) r[k] += proj[i] * centred[i][k];
    }
    for (double& x : r) x /= static_cast<double>(n - 1);
    return r;
  };
  const auto deflate = [&](std::vector<double>& v) {
    for (const auto& c : out.components) {
      const double a = dot(v, c);
      for (std::size_t k = 0; k < d; ++k) v[k] -= a * c[k];
    }
  };

  const std::size_t wanted = std::min(n_components, d);
  out.rank_deficient = wanted < n_components;
  for (std::size_t c = 0; c < wanted; ++c) {
    if (!(total > 0.0)) {
      out.rank_deficient = true;
      break;
    }
    Rng rng(derive_seed({0x706361ULL, c}));
    std::vector<double> v(d);
    for (double& x : v) x = uniform01(rng) - 0.5;
    deflate(v);
    normalize(v);

    double lambda = 0.0;
    bool converged = false;
    for (int it = 0; it < kPcaMaxIterations; ++it) {
      auto w = cov_times(v);
      deflate(w);
      const double norm_w = std::sqrt(dot(w, w));
      if (norm_w <= 1e-12 * total) {
        lambda = 0.0;
        converged = true;
        break;
      }
      for (double& x : w) x /= norm_w;
      double diff = 0.0;
      for (std::size_t k = 0; k < d; ++k) diff = std::max(diff, std::abs(w[k] - v[k]));
      v = std::move(w);
      lambda = norm_w;
      if (diff < kPcaTolerance) {
        converged = true;
        break;
      }
    }
    if (lambda <= 1e-12 * total) {
      out.rank_deficient = true;
      break;
    }
    out.converged = out.converged && converged;
    // Rayleigh quotient is more accurate than the last norm.
    lambda = dot(v, cov_times(v));
    std::size_t argmax = 0;
    for (std::size_t k = 1; k < d; ++k) {
      if (std::abs(v[k]) > std::abs(v[argmax])) argmax = k;
    }
    if (v[argmax] < 0.0) {
      for (double& x : v) x = -x;
    }
    out.components.push_back(std::move(v));
    out.explained_variance.push_back(lambda);
    out.explained_fraction.push_back(lambda / total);
  }

  out.coordinates.assign(n, std::vector<double>(out.components.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < out.components.size(); ++c) {
      out.coordinates[i][c] = dot(centred[i], out.components[c]);
    }
  }
  return out;
}

DistanceRange distance_range(const DistanceMatrix& distances) {
  const std::size_t n = distances.size();
  if (n < 2) throw ValidationError("distance_range: need at least 2 prompts");
  DistanceRange r{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distances.at(i, j);
      r.max = std::max(r.max, d);
      if (d > kZeroDistance) r.min_nonzero = std::min(r.min_nonzero, d);
    }
  }
  if (!std::isfinite(r.min_nonzero)) throw ValidationError("distance_range: all pairs are identical");
  return r;
}

DistanceRange distance_range(const LandscapeDataset& dataset) {
  return distance_range(pairwise_distances(dataset));
}

void write_autocorr_csv(const std::filesystem::path& path, const AutocorrCurve& curve) {
  auto out = open_csv(path);
  out << "bin_center,rho,pair_count\n";
  for (const auto& p : curve.points) {
    out << format_double(p.bin_center) << ',' << format_double(p.rho) << ',' << p.pair_count << '\n';
  }
  finish_csv(out, path);
}

void write_histogram_csv(const std::filesystem::path& path, const Histogram& histogram) {
  auto out = open_csv(path);
  out << "bin_lo,bin_hi,count\n";
  for (const auto& b : histogram.bins) {
    out << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << '\n';
  }
  finish_csv(out, path);
}

void write_pca_csv(const std::filesystem::path& path, const PcaResult& pca,
                   std::span<const double> accuracies) {
  if (accuracies.size() != pca.ids.size()) throw ValidationError("pca csv: accuracy count mismatch");
  auto out = open_csv(path);
  out << "prompt_id,pc1,pc2,accuracy\n";
  for (std::size_t i = 0; i < pca.ids.size(); ++i) {
    const auto& c = pca.coordinates[i];
    out << pca.ids[i] << ',' << format_double(c.size() > 0 ? c[0] : 0.0) << ','
        << format_double(c.size() > 1 ? c[1] : 0.0) << ',' << format_double(accuracies[i]) << '\n';
  }
  finish_csv(out, path);
}

}  // namespace promptscape
