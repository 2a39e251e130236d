#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "fedmd/gmm.hpp"
#include "fedmd/rng.hpp"

using namespace fedmd;
using Catch::Approx;

namespace {

GmmModel manual_model(const Vec& weights, const std::vector<Vec>& means,
                      const std::vector<Vec>& variances) {
  GmmModel g;
  g.weights = weights;
  g.means = Matrix(means.size(), means[0].size());
  g.variances = Matrix(means.size(), means[0].size());
  g.cluster_stds = Matrix(means.size(), means[0].size());
  for (std::size_t c = 0; c < means.size(); ++c) {
    g.means.set_row(c, means[c]);
    g.variances.set_row(c, variances[c]);
    for (std::size_t j = 0; j < means[0].size(); ++j)
      g.cluster_stds(c, j) = std::sqrt(variances[c][j]);
  }
  return g;
}

double naive_density(const GmmModel& g, const Vec& x) {
  const double two_pi = 6.283185307179586476925286766559;
  double total = 0.0;
  for (std::size_t c = 0; c < g.k(); ++c) {
    double p = g.weights[c];
    for (std::size_t j = 0; j < x.size(); ++j) {
      double var = g.variances(c, j);
      double diff = x[j] - g.means(c, j);
      p *= std::exp(-diff * diff / (2.0 * var)) / std::sqrt(two_pi * var);
    }
    total += p;
  }
  return total;
}

Matrix blob_data(const std::vector<Vec>& centers, std::size_t per_blob, double sigma,
                 std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(centers.size() * per_blob, centers[0].size());
  std::size_t r = 0;
  for (const auto& c : centers)
    for (std::size_t i = 0; i < per_blob; ++i, ++r)
      for (std::size_t j = 0; j < c.size(); ++j) m(r, j) = rng.normal(c[j], sigma);
  return m;
}

}  // namespace

// ============================================================
// density
// ============================================================

TEST_CASE("density of a standard normal peaks at 1/sqrt(2*pi)", "[gmm]") {
  auto g = manual_model({1.0}, {{0.0}}, {{1.0}});
  CHECK(density(g, {0.0}) == Approx(0.39894228040143268).epsilon(1e-12));
  CHECK(density(g, {1.0}) == Approx(0.24197072451914337).epsilon(1e-12));
}

TEST_CASE("density matches direct summation on random mixtures", "[gmm]") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    Vec w = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
    double ws = w[0] + w[1] + w[2];
    for (auto& v : w) v /= ws;
    std::vector<Vec> mu, var;
    for (int c = 0; c < 3; ++c) {
      mu.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)});
      var.push_back({rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)});
    }
    auto g = manual_model(w, mu, var);
    Vec x = {rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)};
    double expected = naive_density(g, x);
    CHECK(density(g, x) == Approx(expected).epsilon(1e-10));
    CHECK(log_density(g, x) == Approx(std::log(expected)).epsilon(1e-10));
  }
}

TEST_CASE("density underflows to zero far from every component", "[gmm]") {
  auto g = manual_model({1.0}, {{0.0}}, {{1.0}});
  CHECK(density(g, {200.0}) == 0.0);
}

TEST_CASE("density can exceed one for narrow components", "[gmm]") {
  auto g = manual_model({1.0}, {{0.0}}, {{1e-4}});
  CHECK(density(g, {0.0}) > 1.0);
}

TEST_CASE("fitted 1-D mixture density integrates to one", "[gmm]") {
  Matrix data = blob_data({{0.0}, {20.0}}, 150, 1.5, 911);
  auto g = fit_em(data, 2, 100, 1e-8, 3);
  double mass = 0.0, lo = -15.0, hi = 35.0, step = 0.005;
  for (double x = lo; x < hi; x += step)
    mass += 0.5 * (density(g, {x}) + density(g, {x + step})) * step;
  CHECK(mass == Approx(1.0).margin(0.01));
}

// ============================================================
// fitting
// ============================================================

TEST_CASE("single component fit recovers mean and variance in closed form", "[gmm]") {
  Matrix data(2, 1);
  data(0, 0) = 0.0;
  data(1, 0) = 2.0;
  auto g = fit_em(data, 1, 10, 1e-8, 0);
  REQUIRE(g.k() == 1);
  CHECK(g.weights[0] == Approx(1.0));
  CHECK(g.means(0, 0) == Approx(1.0).margin(1e-12));
  // population variance of {0, 2}; the 1e-6 floor is inactive here
  CHECK(g.variances(0, 0) == Approx(1.0).margin(1e-9));
  CHECK(g.cluster_stds(0, 0) == Approx(1.0).margin(1e-9));
}

TEST_CASE("two well-separated blobs are recovered", "[gmm]") {
  Matrix data = blob_data({{0.0, 0.0}, {10.0, 10.0}}, 120, 0.5, 42);
  auto g = fit_em(data, 2, 100, 1e-8, 7);
  // order components by first mean coordinate
  std::size_t lo = g.means(0, 0) < g.means(1, 0) ? 0 : 1, hi = 1 - lo;
  CHECK(g.means(lo, 0) == Approx(0.0).margin(0.3));
  CHECK(g.means(lo, 1) == Approx(0.0).margin(0.3));
  CHECK(g.means(hi, 0) == Approx(10.0).margin(0.3));
  CHECK(g.means(hi, 1) == Approx(10.0).margin(0.3));
  CHECK(g.weights[0] == Approx(0.5).margin(0.05));
  CHECK(g.weights[1] == Approx(0.5).margin(0.05));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 2; ++j) CHECK(g.variances(c, j) == Approx(0.25).margin(0.15));
}

TEST_CASE("log-likelihood trace never decreases", "[gmm]") {
  Rng rng(23);
  Matrix data(200, 3);
  for (auto& v : data.data) v = rng.uniform(0.0, 10.0);
  auto g = fit_em(data, 4, 60, 0.0, 11);  // tol 0 forces every iteration to run
  REQUIRE(g.log_likelihood_trace.size() > 5);
  for (std::size_t i = 1; i < g.log_likelihood_trace.size(); ++i)
    CHECK(g.log_likelihood_trace[i] - g.log_likelihood_trace[i - 1] >= -1e-8);
}

TEST_CASE("fit_em is deterministic under a fixed seed", "[gmm]") {
  Matrix data = blob_data({{0.0}, {5.0}}, 40, 1.0, 99);
  auto a = fit_em(data, 2, 50, 1e-8, 1234);
  auto b = fit_em(data, 2, 50, 1e-8, 1234);
  CHECK(a.weights == b.weights);
  CHECK(a.means == b.means);
  CHECK(a.variances == b.variances);
  CHECK(a.cluster_stds == b.cluster_stds);
  CHECK(a.log_likelihood_trace == b.log_likelihood_trace);
}

TEST_CASE("degenerate data hits the variance floor", "[gmm]") {
  Matrix data(6, 1);
  for (auto& v : data.data) v = 4.0;
  auto g = fit_em(data, 2, 30, 1e-8, 5);
  double wsum = 0.0;
  for (double w : g.weights) wsum += w;
  CHECK(wsum == Approx(1.0));
  for (double v : g.variances.data) CHECK(v >= kVarianceFloor);
  CHECK(std::isfinite(g.log_likelihood_trace.back()));
}

TEST_CASE("clusters with a single member fall back to the model deviation", "[gmm]") {
  Matrix data(2, 1);
  data(0, 0) = 0.0;
  data(1, 0) = 10.0;
  auto g = fit_em(data, 2, 50, 1e-8, 21);
  // each component captures one point, so its empirical spread is undefined
  for (std::size_t c = 0; c < 2; ++c)
    CHECK(g.cluster_stds(c, 0) == Approx(std::sqrt(g.variances(c, 0))));
}

TEST_CASE("fit_em argument validation", "[gmm]") {
  Matrix data(3, 1);
  data.data = {0.0, 1.0, 2.0};
  CHECK_THROWS_WITH(fit_em(data, 0, 10, 1e-8, 0), Catch::Matchers::StartsWith("BadArgument"));
  CHECK_THROWS_WITH(fit_em(data, 4, 10, 1e-8, 0),
                    Catch::Matchers::StartsWith("InsufficientData"));
  CHECK_THROWS_WITH(fit_em(data, 1, 0, 1e-8, 0), Catch::Matchers::StartsWith("BadArgument"));
  Matrix empty(0, 1);
  CHECK_THROWS_WITH(fit_em(empty, 1, 10, 1e-8, 0), Catch::Matchers::StartsWith("EmptyDataset"));
}

// ============================================================
// hard assignment
// ============================================================

TEST_CASE("hard_assign picks the dominant component", "[gmm]") {
  auto g = manual_model({0.5, 0.5}, {{0.0}, {10.0}}, {{1.0}, {1.0}});
  CHECK(hard_assign(g, {-1.0}) == 0);
  CHECK(hard_assign(g, {11.0}) == 1);
  CHECK(hard_assign(g, {5.0}) == 0);  // exact tie resolves to the lowest index
}

TEST_CASE("hard_assign agrees with an exhaustive scan", "[gmm]") {
  Rng rng(77);
  auto g = manual_model({0.2, 0.5, 0.3}, {{0.0, 0.0}, {3.0, -1.0}, {-2.0, 4.0}},
                        {{1.0, 2.0}, {0.5, 0.5}, {2.0, 1.0}});
  for (int rep = 0; rep < 50; ++rep) {
    Vec x = {rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0)};
    int best = 0;
    double best_score = -1.0;
    for (std::size_t c = 0; c < g.k(); ++c) {
      double p = g.weights[c];
      for (std::size_t j = 0; j < 2; ++j) {
        double var = g.variances(c, j), diff = x[j] - g.means(c, j);
        p *= std::exp(-diff * diff / (2.0 * var)) / std::sqrt(2.0 * 3.141592653589793 * var);
      }
      if (p > best_score) {
        best_score = p;
        best = static_cast<int>(c);
      }
    }
    CHECK(hard_assign(g, x) == best);
  }
}

// ============================================================
// silhouette
// ============================================================

namespace {

double silhouette_oracle(const Matrix& data, const std::vector<int>& labels) {
  std::size_t n = data.rows;
  int kk = 1 + *std::max_element(labels.begin(), labels.end());
  std::vector<std::size_t> size(static_cast<std::size_t>(kk), 0);
  for (int l : labels) size[static_cast<std::size_t>(l)]++;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t own = static_cast<std::size_t>(labels[i]);
    if (size[own] < 2) continue;
    Vec sums(static_cast<std::size_t>(kk), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < data.cols; ++c) {
        double diff = data(i, c) - data(j, c);
        d2 += diff * diff;
      }
      sums[static_cast<std::size_t>(labels[j])] += std::sqrt(d2);
    }
    double a = sums[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < static_cast<std::size_t>(kk); ++c)
      if (c != own && size[c] > 0) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("silhouette matches the quadratic oracle", "[gmm]") {
  Rng rng(3);
  Matrix data(30, 2);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < 30; ++i) {
    int c = static_cast<int>(i % 3);
    labels[i] = c;
    data(i, 0) = rng.normal(3.0 * c, 1.0);
    data(i, 1) = rng.normal(-2.0 * c, 1.0);
  }
  CHECK(silhouette(data, labels) == Approx(silhouette_oracle(data, labels)).margin(1e-12));
}

TEST_CASE("silhouette handles a hand-checked case with a singleton", "[gmm]") {
  Matrix data(3, 1);
  data.data = {0.0, 0.1, 5.0};
  std::vector<int> labels = {0, 0, 1};
  // points 0 and 1: a = 0.1, b = mean distance to the singleton
  double s0 = (5.0 - 0.1) / 5.0;
  double s1 = (4.9 - 0.1) / 4.9;
  CHECK(silhouette(data, labels) == Approx((s0 + s1 + 0.0) / 3.0).margin(1e-12));
}

TEST_CASE("silhouette of well-separated clusters approaches one", "[gmm]") {
  Matrix data = blob_data({{0.0, 0.0}, {50.0, 50.0}}, 25, 0.5, 13);
  std::vector<int> labels(50);
  for (std::size_t i = 25; i < 50; ++i) labels[i] = 1;
  CHECK(silhouette(data, labels) > 0.95);
}

TEST_CASE("silhouette subsampling is deterministic", "[gmm]") {
  Matrix data = blob_data({{0.0}, {10.0}}, 300, 1.0, 4);
  std::vector<int> labels(600);
  for (std::size_t i = 300; i < 600; ++i) labels[i] = 1;
  double a = silhouette(data, labels, 100, 9);
  double b = silhouette(data, labels, 100, 9);
  CHECK(a == b);
  CHECK(a > 0.8);
}

TEST_CASE("silhouette error cases", "[gmm]") {
  Matrix data(4, 1);
  data.data = {0.0, 1.0, 2.0, 3.0};
  CHECK_THROWS_WITH(silhouette(data, {0, 0, 0, 0}),
                    Catch::Matchers::StartsWith("DegenerateClustering"));
  CHECK_THROWS_WITH(silhouette(data, {0, 0, 0}),
                    Catch::Matchers::StartsWith("DimensionMismatch"));
  CHECK_THROWS_WITH(silhouette(data, {0, 1, 0, -1}),
                    Catch::Matchers::StartsWith("BadArgument"));
}

// ============================================================
// component-count selection
// ============================================================

TEST_CASE("select_components finds three planted blobs", "[gmm]") {
  Matrix data = blob_data({{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}}, 60, 0.7, 31);
  auto sel = select_components(data, {2, 3, 4, 5, 6}, 80, 1e-7, 2000, 19);
  REQUIRE(sel.tested_ks.size() == 5);
  REQUIRE(sel.scores.size() == 5);
  REQUIRE(sel.seconds.size() == 5);
  CHECK(sel.best_k == 3);
  for (double s : sel.seconds) CHECK(s >= 0.0);
  // the winning score is the max of the sweep
  double mx = *std::max_element(sel.scores.begin(), sel.scores.end());
  CHECK(sel.scores[1] == mx);
}

TEST_CASE("select_components with a single candidate returns it", "[gmm]") {
  Matrix data = blob_data({{0.0}, {8.0}}, 30, 1.0, 2);
  auto sel = select_components(data, {2}, 50, 1e-7, 2000, 1);
  CHECK(sel.best_k == 2);
  CHECK(sel.scores[0] > 0.5);
}

TEST_CASE("select_components scores k=1 as ineligible", "[gmm]") {
  Matrix data = blob_data({{0.0}, {8.0}}, 30, 1.0, 2);
  auto sel = select_components(data, {1, 2}, 50, 1e-7, 2000, 1);
  CHECK(sel.scores[0] == -1.0);
  CHECK(sel.best_k == 2);
}

TEST_CASE("default_component_grid scales with the sample count", "[gmm]") {
  auto tiny = default_component_grid(10);
  REQUIRE(tiny.size() == 1);
  CHECK(tiny[0] == 2);
  auto mid = default_component_grid(25);
  CHECK(mid == std::vector<int>({2, 3, 4, 5}));
  auto big = default_component_grid(10000);
  CHECK(big.front() == 2);
  CHECK(big.back() == 30);
}
