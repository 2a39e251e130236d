#ifndef FEDMD_GMM_HPP
#define FEDMD_GMM_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/rng.hpp"

namespace fedmd {

constexpr double kVarianceFloor = 1e-6;

/// Diagonal-covariance Gaussian mixture fitted per client on benign traffic.
/// cluster_stds holds the per-dimension empirical stds of the points hard
/// assigned to each component; they define the histogram membership bands.
struct GmmModel {
  Vec weights;          // K mixing proportions
  Matrix means;         // K x d
  Matrix variances;     // K x d, floored at kVarianceFloor
  Matrix cluster_stds;  // K x d
  Vec log_likelihood_trace;  // mean log-likelihood per EM iteration

  std::size_t k() const { return weights.size(); }
  std::size_t dim() const { return means.cols; }
};

namespace detail {

inline double log_normal_diag(const double* x, const double* mu, const double* var,
                              std::size_t d) {
  const double log2pi = 1.8378770664093454836;
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double diff = x[j] - mu[j];
    s += diff * diff / var[j] + std::log(var[j]) + log2pi;
  }
  return -0.5 * s;
}

inline double logsumexp(const Vec& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// k-means++ seeding: spread initial means by squared-distance sampling.
inline std::vector<std::size_t> kmeanspp_indices(const Matrix& data, std::size_t k, Rng& rng) {
  std::vector<std::size_t> centers;
  centers.push_back(static_cast<std::size_t>(rng.index(data.rows)));
  Vec d2(data.rows, 0.0);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c : centers)
        best = std::min(best, sq_dist(data.row(i), data.row(c), data.cols));
      d2[i] = best;
      total += best;
    }
    std::size_t next;
    if (total <= 0.0) {
      next = static_cast<std::size_t>(rng.index(data.rows));
    } else {
      double target = rng.uniform() * total;
      double acc = 0.0;
      next = data.rows - 1;
      for (std::size_t i = 0; i < data.rows; ++i) {
        acc += d2[i];
        if (acc >= target) {
          next = i;
          break;
        }
      }
    }
    centers.push_back(next);
  }
  return centers;
}

}  // namespace detail

/// Log of the mixture density at x.
inline double log_density(const GmmModel& g, const Vec& x) {
  require(x.size() == g.dim(), "DimensionMismatch: log_density");
  Vec terms(g.k());
  for (std::size_t c = 0; c < g.k(); ++c)
    terms[c] = std::log(g.weights[c]) +
               detail::log_normal_diag(x.data(), g.means.row(c), g.variances.row(c), x.size());
  return detail::logsumexp(terms);
}

/// Mixture probability density at x. Not bounded by 1; underflows to 0 far
/// from every component.
inline double density(const GmmModel& g, const Vec& x) { return std::exp(log_density(g, x)); }

/// Index of the component maximizing weight * component density; ties go to
/// the lowest index.
inline int hard_assign(const GmmModel& g, const Vec& x) {
  require(x.size() == g.dim(), "DimensionMismatch: hard_assign");
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < g.k(); ++c) {
    double score = std::log(g.weights[c]) +
                   detail::log_normal_diag(x.data(), g.means.row(c), g.variances.row(c), x.size());
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(c);
    }
  }
  return best;
}

/// Fits a diagonal GMM by EM. Means are seeded with k-means++ draws, mixing
/// weights start uniform and variances start at the per-feature data variance.
/// Stops when the mean log-likelihood improves by less than tol.
inline GmmModel fit_em(const Matrix& data, int k, int max_iters, double tol,
                       std::uint64_t seed) {
  require(k >= 1, "BadArgument: fit_em k must be >= 1");
  require(data.rows > 0, "EmptyDataset: fit_em");
  require(static_cast<std::size_t>(k) <= data.rows,
          "InsufficientData: fit_em needs at least k samples");
  require(max_iters >= 1, "BadArgument: fit_em max_iters must be >= 1");

  const std::size_t n = data.rows, d = data.cols, kk = static_cast<std::size_t>(k);
  Rng rng(derive_seed(seed, 0x63a11u));

  GmmModel g;
  g.weights.assign(kk, 1.0 / static_cast<double>(kk));
  g.means = Matrix(kk, d);
  g.variances = Matrix(kk, d);
  auto centers = detail::kmeanspp_indices(data, kk, rng);
  for (std::size_t c = 0; c < kk; ++c)
    for (std::size_t j = 0; j < d; ++j) g.means(c, j) = data(centers[c], j);
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += data(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (data(i, j) - m) * (data(i, j) - m);
    v = std::max(v / static_cast<double>(n), kVarianceFloor);
    for (std::size_t c = 0; c < kk; ++c) g.variances(c, j) = v;
  }

  Matrix resp(n, kk);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    // E step
    double ll = 0.0;
    Vec terms(kk);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < kk; ++c)
        terms[c] = std::log(g.weights[c]) +
                   detail::log_normal_diag(data.row(i), g.means.row(c), g.variances.row(c), d);
      double lse = detail::logsumexp(terms);
      ll += lse;
      for (std::size_t c = 0; c < kk; ++c) resp(i, c) = std::exp(terms[c] - lse);
    }
    ll /= static_cast<double>(n);
    g.log_likelihood_trace.push_back(ll);

    // M step
    for (std::size_t c = 0; c < kk; ++c) {
      double nc = 0.0;
      for (std::size_t i = 0; i < n; ++i) nc += resp(i, c);
      if (nc < 1e-12) {
        g.weights[c] = 1e-12;
        continue;  // starved component keeps its previous parameters
      }
      g.weights[c] = nc / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += resp(i, c) * data(i, j);
        m /= nc;
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double diff = data(i, j) - m;
          v += resp(i, c) * diff * diff;
        }
        g.means(c, j) = m;
        g.variances(c, j) = std::max(v / nc, kVarianceFloor);
      }
    }
    double wsum = 0.0;
    for (double w : g.weights) wsum += w;
    for (double& w : g.weights) w /= wsum;

    if (iter > 0 && std::fabs(ll - prev_ll) < tol) break;
    prev_ll = ll;
  }

  // empirical stds of the hard-assigned members define the histogram bands
  g.cluster_stds = Matrix(kk, d);
  std::vector<std::vector<std::size_t>> members(kk);
  for (std::size_t i = 0; i < n; ++i)
    members[static_cast<std::size_t>(hard_assign(g, data.row_vec(i)))].push_back(i);
  for (std::size_t c = 0; c < kk; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      if (members[c].size() < 2) {
        g.cluster_stds(c, j) = std::sqrt(g.variances(c, j));
      } else {
        double m = 0.0;
        for (std::size_t i : members[c]) m += data(i, j);
        m /= static_cast<double>(members[c].size());
        double v = 0.0;
        for (std::size_t i : members[c]) v += (data(i, j) - m) * (data(i, j) - m);
        g.cluster_stds(c, j) = std::sqrt(v / static_cast<double>(members[c].size()));
      }
    }
  }
  return g;
}

/// Mean silhouette coefficient over the (sub)sampled points; Euclidean
/// distance, and points in singleton clusters score 0. Errors unless at least
/// two clusters are non-empty.
inline double silhouette(const Matrix& data, const std::vector<int>& labels,
                         std::size_t subsample_cap = 2000, std::uint64_t seed = 0) {
  require(data.rows == labels.size(), "DimensionMismatch: silhouette labels");
  require(data.rows >= 2, "InsufficientData: silhouette needs at least 2 points");

  std::vector<std::size_t> idx;
  if (subsample_cap > 0 && data.rows > subsample_cap) {
    Rng rng(derive_seed(seed, 0x51140u));
    idx = rng.sample_without_replacement(data.rows, subsample_cap);
  } else {
    idx.resize(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) idx[i] = i;
  }

  int max_label = 0;
  for (std::size_t i : idx) {
    require(labels[i] >= 0, "BadArgument: silhouette labels must be non-negative");
    max_label = std::max(max_label, labels[i]);
  }
  std::size_t kk = static_cast<std::size_t>(max_label) + 1;
  std::vector<std::size_t> cluster_size(kk, 0);
  for (std::size_t i : idx) cluster_size[static_cast<std::size_t>(labels[i])]++;
  std::size_t non_empty = 0;
  for (std::size_t s : cluster_size) non_empty += (s > 0) ? 1 : 0;
  if (non_empty < 2) fail("DegenerateClustering: silhouette needs >= 2 non-empty clusters");

  double total = 0.0;
  Vec sums(kk);
  for (std::size_t i : idx) {
    std::size_t own = static_cast<std::size_t>(labels[i]);
    if (cluster_size[own] < 2) continue;  // singleton scores 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j : idx) {
      if (i == j) continue;
      sums[static_cast<std::size_t>(labels[j])] +=
          std::sqrt(sq_dist(data.row(i), data.row(j), data.cols));
    }
    double a = sums[own] / static_cast<double>(cluster_size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kk; ++c) {
      if (c == own || cluster_size[c] == 0) continue;
      b = std::min(b, sums[c] / static_cast<double>(cluster_size[c]));
    }
    double denom = std::max(a, b);
    total += (denom > 0.0) ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(idx.size());
}

/// Result of the per-client component-count sweep.
struct ComponentSelection {
  std::vector<int> tested_ks;
  Vec scores;     // silhouette per candidate, -1 for degenerate fits
  Vec seconds;    // wall-clock spent per candidate
  int best_k = 0;
};

/// Fits one GMM per candidate K, scores each by silhouette over the hard
/// assignment, and picks the argmax (ties to the smaller K). Candidates whose
/// fit collapses below two populated clusters score -1.
inline ComponentSelection select_components(const Matrix& data, const std::vector<int>& grid,
                                            int max_iters, double tol,
                                            std::size_t subsample_cap, std::uint64_t seed) {
  require(!grid.empty(), "BadArgument: select_components grid is empty");
  ComponentSelection sel;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k : grid) {
    auto t0 = std::chrono::steady_clock::now();
    GmmModel g = fit_em(data, k, max_iters, tol, derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::vector<int> labels(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) labels[i] = hard_assign(g, data.row_vec(i));
    double score;
    if (k == 1) {
      score = -1.0;
    } else {
      try {
        score = silhouette(data, labels, subsample_cap,
                           derive_seed(seed, static_cast<std::uint64_t>(k), 0x51c0u));
      } catch (const Error&) {
        score = -1.0;  // collapsed to one populated cluster
      }
    }
    auto t1 = std::chrono::steady_clock::now();
    sel.tested_ks.push_back(k);
    sel.scores.push_back(score);
    sel.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (score > best_score || (score == best_score && k < sel.best_k)) {
      best_score = score;
      sel.best_k = k;
    }
  }
  return sel;
}

/// Default candidate grid {2, ..., min(30, n/5)}, never smaller than {2}.
inline std::vector<int> default_component_grid(std::size_t n) {
  int hi = std::min<int>(30, static_cast<int>(n / 5));
  std::vector<int> grid;
  for (int k = 2; k <= std::max(2, hi); ++k) grid.push_back(k);
  return grid;
}

}  // namespace fedmd

#endif  // FEDMD_GMM_HPP
