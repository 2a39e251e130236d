#ifndef FEDMD_PREPROCESS_HPP
#define FEDMD_PREPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/dataio.hpp"
#include "fedmd/rng.hpp"

namespace fedmd {

// ============================================================
// z-score normalization
// ============================================================

constexpr double kStdFloor = 1e-8;

struct NormalizationParams {
  Vec mean;
  Vec stddev;  // population std, floored at kStdFloor

  std::size_t dim() const { return mean.size(); }
};

inline NormalizationParams fit_normalizer(const Matrix& data) {
  require(data.rows >= 2, "InsufficientData: fit_normalizer needs at least 2 samples");
  NormalizationParams p;
  p.mean.resize(data.cols);
  p.stddev.resize(data.cols);
  for (std::size_t j = 0; j < data.cols; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) m += data(i, j);
    m /= static_cast<double>(data.rows);
    double v = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) {
      double diff = data(i, j) - m;
      v += diff * diff;
    }
    v /= static_cast<double>(data.rows);
    p.mean[j] = m;
    p.stddev[j] = std::max(std::sqrt(v), kStdFloor);
  }
  return p;
}

inline Vec apply_normalizer(const NormalizationParams& p, const Vec& x) {
  require(x.size() == p.dim(), "DimensionMismatch: apply_normalizer");
  Vec z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - p.mean[j]) / p.stddev[j];
  return z;
}

inline Vec invert_normalizer(const NormalizationParams& p, const Vec& z) {
  require(z.size() == p.dim(), "DimensionMismatch: invert_normalizer");
  Vec x(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) x[j] = z[j] * p.stddev[j] + p.mean[j];
  return x;
}

inline void normalize_in_place(const NormalizationParams& p, std::vector<Sample>& samples) {
  for (auto& s : samples) s.features = apply_normalizer(p, s.features);
}

// ============================================================
// SMOTE + Tomek-link rebalancing (binary: benign vs attack)
// ============================================================

namespace detail {

/// Nearest neighbor by Euclidean distance; ties go to the lowest index.
inline std::size_t nearest_neighbor(const std::vector<const Sample*>& pts, std::size_t self) {
  std::size_t best = pts.size();
  double best_d = std::numeric_limits<double>::infinity();
  std::size_t d = pts[self]->features.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i == self) continue;
    double dist = sq_dist(pts[i]->features.data(), pts[self]->features.data(), d);
    if (dist < best_d) {
      best_d = dist;
      best = i;
    }
  }
  return best;
}

inline std::vector<std::size_t> k_nearest(const std::vector<Sample>& pts, std::size_t self,
                                          std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  std::size_t d = pts[self].features.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i == self) continue;
    dist.emplace_back(sq_dist(pts[i].features.data(), pts[self].features.data(), d), i);
  }
  std::stable_sort(dist.begin(), dist.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k && i < dist.size(); ++i) out.push_back(dist[i].second);
  return out;
}

}  // namespace detail

/// Oversamples the minority class by SMOTE interpolation until class counts
/// are equal, then removes both endpoints of every Tomek link (mutual nearest
/// neighbors of opposite class). Surviving originals come first in the output,
/// bitwise unchanged, followed by surviving synthetic samples.
inline std::vector<Sample> smote_tomek(const std::vector<Sample>& input, int k_neighbors,
                                       std::uint64_t seed) {
  require(k_neighbors >= 1, "BadArgument: k_neighbors must be >= 1");
  std::vector<Sample> minority, majority;
  for (const auto& s : input) {
    if (s.label.is_benign()) majority.push_back(s);
    else if (s.label.is_attack()) minority.push_back(s);
    else fail("BadArgument: smote_tomek requires labeled samples");
  }
  if (minority.size() > majority.size()) std::swap(minority, majority);
  if (minority.empty() || majority.empty())
    fail("SingleClassInput: smote_tomek needs both classes present");
  if (static_cast<std::size_t>(k_neighbors) >= minority.size())
    fail("BadArgument: k_neighbors (" + std::to_string(k_neighbors) +
         ") must be smaller than the minority class size (" +
         std::to_string(minority.size()) + ")");

  Rng rng(derive_seed(seed, 0x5307eu));

  // neighbor lists over the original minority points only, so every synthetic
  // sample lies on a segment between two originals
  std::vector<std::vector<std::size_t>> knn(minority.size());
  for (std::size_t i = 0; i < minority.size(); ++i)
    knn[i] = detail::k_nearest(minority, i, static_cast<std::size_t>(k_neighbors));

  std::vector<Sample> synthetic;
  std::size_t need = majority.size() - minority.size();
  for (std::size_t t = 0; t < need; ++t) {
    std::size_t i = static_cast<std::size_t>(rng.index(minority.size()));
    std::size_t nn = knn[i][static_cast<std::size_t>(rng.index(knn[i].size()))];
    double u = rng.uniform();
    Sample s = minority[i];
    for (std::size_t j = 0; j < s.features.size(); ++j)
      s.features[j] += u * (minority[nn].features[j] - minority[i].features[j]);
    synthetic.push_back(std::move(s));
  }

  // combined view: originals in input order, then synthetics
  std::vector<Sample> combined;
  combined.reserve(input.size() + synthetic.size());
  for (const auto& s : input) combined.push_back(s);
  for (const auto& s : synthetic) combined.push_back(s);

  std::vector<const Sample*> ptrs;
  ptrs.reserve(combined.size());
  for (const auto& s : combined) ptrs.push_back(&s);

  std::vector<std::size_t> nn_of(combined.size());
  for (std::size_t i = 0; i < combined.size(); ++i)
    nn_of[i] = detail::nearest_neighbor(ptrs, i);

  std::vector<char> removed(combined.size(), 0);
  for (std::size_t i = 0; i < combined.size(); ++i) {
    std::size_t j = nn_of[i];
    if (j > i && nn_of[j] == i &&
        combined[i].label.is_attack() != combined[j].label.is_attack()) {
      removed[i] = removed[j] = 1;
    }
  }

  std::vector<Sample> out;
  out.reserve(combined.size());
  for (std::size_t i = 0; i < combined.size(); ++i)
    if (!removed[i]) out.push_back(std::move(combined[i]));
  return out;
}

// ============================================================
// Shapiro-Wilk normality test (Royston's AS R94 approximation)
// ============================================================

namespace detail {

/// Inverse standard normal CDF, Wichura's PPND16 rational approximations.
inline double inv_normal_cdf(double p) {
  require(p > 0.0 && p < 1.0, "BadArgument: inv_normal_cdf domain");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        q * (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                   6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
               1.3314166789178437745e+2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return num / den;
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return (q < 0.0) ? -val : val;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double poly5(double u, double c1, double c2, double c3, double c4, double c5) {
  return ((((c5 * u + c4) * u + c3) * u + c2) * u + c1) * u;
}

}  // namespace detail

struct ShapiroResult {
  double w = 0.0;
  double p_value = 0.0;
  std::size_t n_used = 0;
};

/// W statistic and upper-tail p-value. Inputs larger than max_n are reduced
/// to a seeded random subsample of max_n values first.
inline ShapiroResult shapiro_wilk(Vec values, std::size_t max_n = 5000,
                                  std::uint64_t seed = 0) {
  require(values.size() >= 3, "InsufficientData: shapiro_wilk needs at least 3 values");
  if (values.size() > max_n) {
    require(max_n >= 3, "BadArgument: shapiro_wilk max_n must be >= 3");
    Rng rng(derive_seed(seed, 0x54571u));
    auto pick = rng.sample_without_replacement(values.size(), max_n);
    Vec sub;
    sub.reserve(max_n);
    for (std::size_t i : pick) sub.push_back(values[i]);
    values.swap(sub);
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double nd = static_cast<double>(n);
  if (values[n - 1] - values[0] <= 0.0)
    fail("ZeroVariance: shapiro_wilk input has no spread");

  // expected normal order statistics (Blom approximation), antisymmetric
  Vec m(n);
  for (std::size_t i = 0; i < n; ++i)
    m[i] = detail::inv_normal_cdf((static_cast<double>(i + 1) - 0.375) / (nd + 0.25));
  double ssumm2 = 0.0;
  for (double v : m) ssumm2 += v * v;

  Vec a(n, 0.0);
  if (n == 3) {
    a[0] = -std::sqrt(0.5);
    a[2] = std::sqrt(0.5);
  } else {
    const double u = 1.0 / std::sqrt(nd);
    const double an = detail::poly5(u, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056) +
                      m[n - 1] / std::sqrt(ssumm2);
    if (n > 5) {
      const double an1 =
          detail::poly5(u, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633) +
          m[n - 2] / std::sqrt(ssumm2);
      const double phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                         (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      for (std::size_t i = 2; i + 2 < n; ++i) a[i] = m[i] / std::sqrt(phi);
      a[n - 1] = an;
      a[n - 2] = an1;
      a[0] = -an;
      a[1] = -an1;
    } else {
      const double phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
      for (std::size_t i = 1; i + 1 < n; ++i) a[i] = m[i] / std::sqrt(phi);
      a[n - 1] = an;
      a[0] = -an;
    }
  }

  double xbar = mean_of(values);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += a[i] * values[i];
    den += (values[i] - xbar) * (values[i] - xbar);
  }
  double w = (num * num) / den;
  if (w > 1.0) w = 1.0;

  double p;
  if (n == 3) {
    const double pi6 = 1.90985931710274;   // 6/pi
    const double stqr = 1.04719755119660;  // asin(sqrt(3/4))
    p = pi6 * (std::asin(std::sqrt(w)) - stqr);
    p = std::clamp(p, 0.0, 1.0);
  } else {
    double one_minus_w = std::max(1.0 - w, 1e-99);
    double zval;
    if (n <= 11) {
      const double g = -2.273 + 0.459 * nd;
      const double arg = g - std::log(one_minus_w);
      const double wt = -std::log(std::max(arg, 1e-99));
      const double mu = 0.5440 + nd * (-0.39978 + nd * (0.025054 + nd * -0.0006714));
      const double sigma = std::exp(1.3822 + nd * (-0.77857 + nd * (0.062767 + nd * -0.0020322)));
      zval = (wt - mu) / sigma;
    } else {
      const double ln_n = std::log(nd);
      const double wt = std::log(one_minus_w);
      const double mu = -1.5861 + ln_n * (-0.31082 + ln_n * (-0.083751 + ln_n * 0.0038915));
      const double sigma = std::exp(-0.4803 + ln_n * (-0.082676 + ln_n * 0.0030302));
      zval = (wt - mu) / sigma;
    }
    p = 1.0 - detail::normal_cdf(zval);
  }
  return {w, p, n};
}

/// Per-feature W test for multivariate data, summarized by medians.
struct NormalityReport {
  std::vector<ShapiroResult> per_feature;
  double median_w = 0.0;
  double median_p = 0.0;
};

inline NormalityReport shapiro_features(const Matrix& data, std::size_t max_n = 5000,
                                        std::uint64_t seed = 0) {
  require(data.cols >= 1, "EmptyDataset: shapiro_features");
  NormalityReport rep;
  Vec ws, ps;
  for (std::size_t j = 0; j < data.cols; ++j) {
    Vec col(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) col[i] = data(i, j);
    ShapiroResult r = shapiro_wilk(std::move(col), max_n, derive_seed(seed, j));
    ws.push_back(r.w);
    ps.push_back(r.p_value);
    rep.per_feature.push_back(r);
  }
  rep.median_w = median_of(ws);
  rep.median_p = median_of(ps);
  return rep;
}

}  // namespace fedmd

#endif  // FEDMD_PREPROCESS_HPP
