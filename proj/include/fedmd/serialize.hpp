#ifndef FEDMD_SERIALIZE_HPP
#define FEDMD_SERIALIZE_HPP

#include <fstream>
#include <string>

#include <json.hpp>

#include "fedmd/common.hpp"
#include "fedmd/detection.hpp"
#include "fedmd/federation.hpp"
#include "fedmd/gmm.hpp"
#include "fedmd/preprocess.hpp"

namespace fedmd {

using Json = nlohmann::json;

inline void to_json(Json& j, const Matrix& m) {
  j = Json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline void from_json(const Json& j, Matrix& m) {
  m = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  j.at("data").get_to(m.data);
  require(m.data.size() == m.rows * m.cols, "MalformedJson: matrix data length");
}

inline void to_json(Json& j, const GmmModel& g) {
  j = Json{{"weights", g.weights},
           {"means", g.means},
           {"variances", g.variances},
           {"cluster_stds", g.cluster_stds},
           {"log_likelihood_trace", g.log_likelihood_trace}};
}

inline void from_json(const Json& j, GmmModel& g) {
  j.at("weights").get_to(g.weights);
  j.at("means").get_to(g.means);
  j.at("variances").get_to(g.variances);
  j.at("cluster_stds").get_to(g.cluster_stds);
  j.at("log_likelihood_trace").get_to(g.log_likelihood_trace);
}

inline void to_json(Json& j, const NormalizationParams& p) {
  j = Json{{"mean", p.mean}, {"stddev", p.stddev}};
}

inline void from_json(const Json& j, NormalizationParams& p) {
  j.at("mean").get_to(p.mean);
  j.at("stddev").get_to(p.stddev);
}

inline void to_json(Json& j, const ShapiroResult& r) {
  j = Json{{"w", r.w}, {"p_value", r.p_value}, {"n_used", r.n_used}};
}

inline void to_json(Json& j, const NormalityReport& r) {
  j = Json{{"per_feature", r.per_feature}, {"median_w", r.median_w}, {"median_p", r.median_p}};
}

inline void to_json(Json& j, const ComponentSelection& s) {
  j = Json{{"tested_ks", s.tested_ks},
           {"scores", s.scores},
           {"seconds", s.seconds},
           {"best_k", s.best_k}};
}

inline void to_json(Json& j, const DetectionThreshold& t) {
  j = Json{{"value", t.value},
           {"mean", t.mean},
           {"stddev", t.stddev},
           {"multiplier", t.multiplier}};
}

inline void from_json(const Json& j, DetectionThreshold& t) {
  j.at("value").get_to(t.value);
  j.at("mean").get_to(t.mean);
  j.at("stddev").get_to(t.stddev);
  j.at("multiplier").get_to(t.multiplier);
}

inline void to_json(Json& j, const MetricsReport& m) {
  j = Json{{"tp", m.tp},
           {"fp", m.fp},
           {"tn", m.tn},
           {"fn", m.fn},
           {"accuracy", m.accuracy},
           {"precision", m.precision},
           {"recall", m.recall},
           {"f1", m.f1},
           {"precision_defined", m.precision_defined},
           {"recall_defined", m.recall_defined},
           {"f1_defined", m.f1_defined}};
}

inline void to_json(Json& j, const ClientEvaluation& e) {
  j = Json{{"client_id", e.client_id},
           {"metrics", e.metrics},
           {"route_counts", e.route_counts},
           {"ae_part_accuracy", e.ae_part_accuracy},
           {"ae_part_defined", e.ae_part_defined},
           {"ae_part_total", e.ae_part_total},
           {"ae_part_correct", e.ae_part_correct}};
}

inline void to_json(Json& j, const GroupEvaluation& g) {
  j = Json{{"pooled", g.pooled},
           {"mean_accuracy", g.mean_accuracy},
           {"mean_precision", g.mean_precision},
           {"mean_recall", g.mean_recall},
           {"mean_f1", g.mean_f1},
           {"mean_ae_part_accuracy", g.mean_ae_part_accuracy},
           {"ae_part_defined", g.ae_part_defined},
           {"n_clients", g.n_clients}};
}

inline void to_json(Json& j, const FederationConfig& c) {
  j = Json{{"rounds", c.rounds},
           {"epochs_per_round", c.epochs_per_round},
           {"lr", c.lr},
           {"theta", c.theta},
           {"aggregation", aggregation_name(c.aggregation)},
           {"batch_size", c.batch_size},
           {"seed", c.seed}};
}

inline void from_json(const Json& j, FederationConfig& c) {
  if (j.contains("rounds")) j.at("rounds").get_to(c.rounds);
  if (j.contains("epochs_per_round")) j.at("epochs_per_round").get_to(c.epochs_per_round);
  if (j.contains("lr")) j.at("lr").get_to(c.lr);
  if (j.contains("theta")) j.at("theta").get_to(c.theta);
  if (j.contains("aggregation")) {
    std::string name = j.at("aggregation").get<std::string>();
    if (name == "fedplus") {
      c.aggregation = Aggregation::FedPlus;
    } else if (name == "fedavg") {
      c.aggregation = Aggregation::FedAvg;
    } else {
      fail("MalformedConfig: unknown aggregation '" + name + "'");
    }
  }
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

inline void to_json(Json& j, const RoundLog& r) {
  j = Json{{"round", r.round},
           {"client_loss", r.client_loss},
           {"z_checksum", r.z_checksum},
           {"seconds", r.seconds}};
}

/// Removes every timing field ("seconds" values and "timings" subtrees) so
/// two reports can be compared byte for byte.
inline void strip_timings(Json& j) {
  if (j.is_object()) {
    j.erase("seconds");
    j.erase("timings");
    for (auto& [key, value] : j.items()) {
      (void)key;
      strip_timings(value);
    }
  } else if (j.is_array()) {
    for (auto& value : j) strip_timings(value);
  }
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("FileNotFound: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    fail("MalformedJson: " + path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("FileWriteError: " + path);
  out << j.dump(2) << "\n";
  if (!out) fail("FileWriteError: " + path);
}

}  // namespace fedmd

#endif  // FEDMD_SERIALIZE_HPP
