#ifndef FEDMD_DETECTION_HPP
#define FEDMD_DETECTION_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/dataio.hpp"
#include "fedmd/features.hpp"
#include "fedmd/gmm.hpp"
#include "fedmd/neural.hpp"

namespace fedmd {

constexpr double kDefaultEpsZero = 1e-12;
constexpr double kDefaultThresholdMultiplier = 0.01;

/// Reconstruction-error cutoff: mean + multiplier * std over the benign
/// training histograms (population std, deterministic reconstruction).
struct DetectionThreshold {
  double value = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double multiplier = kDefaultThresholdMultiplier;
};

inline DetectionThreshold threshold_from_errors(const Vec& errors,
                                                double multiplier = kDefaultThresholdMultiplier) {
  require(errors.size() >= 2, "InsufficientData: threshold needs at least 2 errors");
  DetectionThreshold th;
  th.multiplier = multiplier;
  th.mean = mean_of(errors);
  th.stddev = population_std(errors);
  th.value = th.mean + multiplier * th.stddev;
  return th;
}

inline DetectionThreshold compute_threshold(const Autoencoder& m, const Matrix& train_hist,
                                            double multiplier = kDefaultThresholdMultiplier) {
  require(train_hist.rows >= 2, "InsufficientData: compute_threshold needs >= 2 histograms");
  Vec errors(train_hist.rows);
  for (std::size_t i = 0; i < train_hist.rows; ++i)
    errors[i] = reconstruction_error(m, train_hist.row_vec(i));
  return threshold_from_errors(errors, multiplier);
}

/// Which rule produced a verdict: the high-density gate accepts, the
/// zero-density gate rejects, and everything in between goes through the
/// autoencoder branch.
enum class Route { GateHigh, GateZero, VaeBranch };

inline const char* route_name(Route r) {
  switch (r) {
    case Route::GateHigh: return "gate_high";
    case Route::GateZero: return "gate_zero";
    case Route::VaeBranch: return "vae_branch";
  }
  return "unknown";
}

struct Verdict {
  bool anomalous = false;
  Route route = Route::VaeBranch;
  double density = 0.0;
  double recon_error = std::numeric_limits<double>::quiet_NaN();  // VaeBranch only
};

/// Likelihood-gated detection of one (already normalized) sample.
inline Verdict classify(const GmmModel& g, const Autoencoder& m, const DetectionThreshold& th,
                        const Vec& x, double eps_zero = kDefaultEpsZero) {
  Verdict v;
  v.density = density(g, x);
  if (v.density >= 1.0) {
    v.anomalous = false;
    v.route = Route::GateHigh;
    return v;
  }
  if (v.density <= eps_zero) {
    v.anomalous = true;
    v.route = Route::GateZero;
    return v;
  }
  v.route = Route::VaeBranch;
  v.recon_error = reconstruction_error(m, histogram_one(g, x));
  v.anomalous = v.recon_error > th.value;
  return v;
}

/// Confusion counts and derived ratios; the positive class is Anomalous.
/// Ratios with a zero denominator are reported as 0 with the matching
/// *_defined flag cleared.
struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                         std::size_t fn) {
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  std::size_t total = tp + fp + tn + fn;
  require(total > 0, "EmptyInput: metrics_from_counts");
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    m.precision_defined = false;
  }
  if (tp + fn > 0) {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    m.recall_defined = false;
  }
  if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_defined = false;
  }
  return m;
}

struct ClientEvaluation {
  std::string client_id;
  MetricsReport metrics;
  std::map<std::string, std::size_t> route_counts;  // by route_name
  double ae_part_accuracy = 0.0;  // accuracy over VaeBranch-routed samples only
  bool ae_part_defined = false;
  std::size_t ae_part_total = 0;
  std::size_t ae_part_correct = 0;
};

/// Scores one client's benign_test plus attack_test through the gated
/// classifier; samples must already be normalized.
inline ClientEvaluation evaluate_client(const GmmModel& g, const Autoencoder& m,
                                        const DetectionThreshold& th, const ClientDataset& ds,
                                        double eps_zero = kDefaultEpsZero) {
  require(!ds.benign_test.empty() || !ds.attack_test.empty(),
          "EmptyDataset: evaluate_client has no test samples");
  ClientEvaluation ev;
  ev.client_id = ds.client_id;
  ev.route_counts = {{"gate_high", 0}, {"gate_zero", 0}, {"vae_branch", 0}};
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  auto run = [&](const std::vector<std::size_t>& idx, bool expect_attack) {
    for (std::size_t i : idx) {
      Verdict v = classify(g, m, th, ds.samples[i].features, eps_zero);
      ev.route_counts[route_name(v.route)]++;
      bool correct = (v.anomalous == expect_attack);
      if (v.route == Route::VaeBranch) {
        ev.ae_part_total++;
        ev.ae_part_correct += correct ? 1 : 0;
      }
      if (expect_attack) {
        v.anomalous ? ++tp : ++fn;
      } else {
        v.anomalous ? ++fp : ++tn;
      }
    }
  };
  run(ds.benign_test, false);
  run(ds.attack_test, true);

  ev.metrics = metrics_from_counts(tp, fp, tn, fn);
  if (ev.ae_part_total > 0) {
    ev.ae_part_defined = true;
    ev.ae_part_accuracy =
        static_cast<double>(ev.ae_part_correct) / static_cast<double>(ev.ae_part_total);
  }
  return ev;
}

/// Unweighted means of the per-client ratios plus the pooled confusion matrix.
struct GroupEvaluation {
  MetricsReport pooled;
  double mean_accuracy = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  double mean_ae_part_accuracy = 0.0;
  bool ae_part_defined = false;
  std::size_t n_clients = 0;
};

inline GroupEvaluation evaluate_group(const std::vector<ClientEvaluation>& clients) {
  require(!clients.empty(), "EmptyInput: evaluate_group");
  GroupEvaluation g;
  g.n_clients = clients.size();
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t ae_defined = 0;
  for (const auto& c : clients) {
    g.mean_accuracy += c.metrics.accuracy;
    g.mean_precision += c.metrics.precision;
    g.mean_recall += c.metrics.recall;
    g.mean_f1 += c.metrics.f1;
    tp += c.metrics.tp;
    fp += c.metrics.fp;
    tn += c.metrics.tn;
    fn += c.metrics.fn;
    if (c.ae_part_defined) {
      g.mean_ae_part_accuracy += c.ae_part_accuracy;
      ++ae_defined;
    }
  }
  double inv = 1.0 / static_cast<double>(clients.size());
  g.mean_accuracy *= inv;
  g.mean_precision *= inv;
  g.mean_recall *= inv;
  g.mean_f1 *= inv;
  if (ae_defined > 0) {
    g.ae_part_defined = true;
    g.mean_ae_part_accuracy /= static_cast<double>(ae_defined);
  }
  g.pooled = metrics_from_counts(tp, fp, tn, fn);
  return g;
}

}  // namespace fedmd

#endif  // FEDMD_DETECTION_HPP
