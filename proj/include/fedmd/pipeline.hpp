#ifndef FEDMD_PIPELINE_HPP
#define FEDMD_PIPELINE_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/dataio.hpp"
#include "fedmd/detection.hpp"
#include "fedmd/features.hpp"
#include "fedmd/federation.hpp"
#include "fedmd/gmm.hpp"
#include "fedmd/neural.hpp"
#include "fedmd/parallel.hpp"
#include "fedmd/preprocess.hpp"
#include "fedmd/serialize.hpp"

namespace fedmd {

// ============================================================
// scenario configuration
// ============================================================

struct SyntheticSpec {
  int n_clients = 6;
  int benign_per_client = 400;
  double attack_fraction = 0.2;
  int dim = 4;
  SyntheticOptions options;
};

struct GmmSettings {
  std::vector<int> grid;  // empty: sized from the training set per client
  int max_iters = 100;
  double tol = 1e-6;
  std::size_t silhouette_cap = 2000;
  std::size_t min_group_size = 1;
};

struct ModelSettings {
  ModelKind kind = ModelKind::Vae;
  bool use_rbm_init = true;
  int rbm_epochs = 10;
  double rbm_lr = 0.05;
};

/// Everything one experiment needs; a JSON config file maps onto this
/// one-to-one and the resolved values are echoed into every report.
struct ScenarioConfig {
  std::string csv_dir;  // exactly one data source: a CSV directory ...
  bool use_synthetic = false;  // ... or the synthetic generator
  SyntheticSpec synthetic;

  bool balance = true;  // SMOTE oversampling plus Tomek link cleaning
  int smote_neighbors = 5;
  bool normalize = true;
  bool shapiro_check = false;
  double test_fraction = 0.2;

  GmmSettings gmm;
  ModelSettings model;
  FederationConfig federation;  // its seed field is ignored; `seed` rules all
  std::vector<double> lr_grid = {0.001, 0.005, 0.01, 0.05, 0.1};

  double eps_zero = kDefaultEpsZero;
  double threshold_multiplier = kDefaultThresholdMultiplier;

  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool deterministic = false;
  int max_threads = 0;  // 0: FEDMD_THREADS or hardware concurrency

  int threads() const {
    if (deterministic) return 1;
    return max_threads > 0 ? max_threads : thread_cap();
  }
};

namespace detail {

inline void check_keys(const Json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      fail("MalformedConfig: unknown key '" + key + "' in " + where);
  }
}

inline AttackKind attack_kind_from_name(const std::string& name) {
  for (int c = 1; c <= 5; ++c) {
    auto k = static_cast<AttackKind>(c);
    if (name == attack_kind_name(k)) return k;
  }
  fail("MalformedConfig: unknown attack kind '" + name + "'");
}

}  // namespace detail

inline void to_json(Json& j, const SyntheticOptions& o) {
  std::vector<std::string> kinds;
  for (auto k : o.kinds) kinds.push_back(attack_kind_name(k));
  j = Json{{"min_regimes", o.min_regimes},
           {"max_regimes", o.max_regimes},
           {"box_lo", o.box_lo},
           {"box_hi", o.box_hi},
           {"regime_mean_lo", o.regime_mean_lo},
           {"regime_mean_hi", o.regime_mean_hi},
           {"regime_pos_sigma_lo", o.regime_pos_sigma_lo},
           {"regime_pos_sigma_hi", o.regime_pos_sigma_hi},
           {"other_mean_lo", o.other_mean_lo},
           {"other_mean_hi", o.other_mean_hi},
           {"other_sigma_lo", o.other_sigma_lo},
           {"other_sigma_hi", o.other_sigma_hi},
           {"offset_lo", o.offset_lo},
           {"offset_hi", o.offset_hi},
           {"attack_kinds", kinds}};
}

inline void from_json(const Json& j, SyntheticOptions& o) {
  detail::check_keys(j,
                     {"min_regimes", "max_regimes", "box_lo", "box_hi", "regime_mean_lo",
                      "regime_mean_hi", "regime_pos_sigma_lo", "regime_pos_sigma_hi",
                      "other_mean_lo", "other_mean_hi", "other_sigma_lo", "other_sigma_hi",
                      "offset_lo", "offset_hi", "attack_kinds"},
                     "data.synthetic");
  if (j.contains("min_regimes")) j.at("min_regimes").get_to(o.min_regimes);
  if (j.contains("max_regimes")) j.at("max_regimes").get_to(o.max_regimes);
  if (j.contains("box_lo")) j.at("box_lo").get_to(o.box_lo);
  if (j.contains("box_hi")) j.at("box_hi").get_to(o.box_hi);
  if (j.contains("regime_mean_lo")) j.at("regime_mean_lo").get_to(o.regime_mean_lo);
  if (j.contains("regime_mean_hi")) j.at("regime_mean_hi").get_to(o.regime_mean_hi);
  if (j.contains("regime_pos_sigma_lo")) j.at("regime_pos_sigma_lo").get_to(o.regime_pos_sigma_lo);
  if (j.contains("regime_pos_sigma_hi")) j.at("regime_pos_sigma_hi").get_to(o.regime_pos_sigma_hi);
  if (j.contains("other_mean_lo")) j.at("other_mean_lo").get_to(o.other_mean_lo);
  if (j.contains("other_mean_hi")) j.at("other_mean_hi").get_to(o.other_mean_hi);
  if (j.contains("other_sigma_lo")) j.at("other_sigma_lo").get_to(o.other_sigma_lo);
  if (j.contains("other_sigma_hi")) j.at("other_sigma_hi").get_to(o.other_sigma_hi);
  if (j.contains("offset_lo")) j.at("offset_lo").get_to(o.offset_lo);
  if (j.contains("offset_hi")) j.at("offset_hi").get_to(o.offset_hi);
  if (j.contains("attack_kinds")) {
    o.kinds.clear();
    for (const auto& name : j.at("attack_kinds"))
      o.kinds.push_back(detail::attack_kind_from_name(name.get<std::string>()));
    require(!o.kinds.empty(), "MalformedConfig: attack_kinds must not be empty");
  }
}

inline void to_json(Json& j, const SyntheticSpec& s) {
  Json opts = s.options;
  opts["n_clients"] = s.n_clients;
  opts["benign_per_client"] = s.benign_per_client;
  opts["attack_fraction"] = s.attack_fraction;
  opts["dim"] = s.dim;
  j = opts;
}

inline void from_json(const Json& j, SyntheticSpec& s) {
  Json opts = j;
  if (opts.contains("n_clients")) {
    opts.at("n_clients").get_to(s.n_clients);
    opts.erase("n_clients");
  }
  if (opts.contains("benign_per_client")) {
    opts.at("benign_per_client").get_to(s.benign_per_client);
    opts.erase("benign_per_client");
  }
  if (opts.contains("attack_fraction")) {
    opts.at("attack_fraction").get_to(s.attack_fraction);
    opts.erase("attack_fraction");
  }
  if (opts.contains("dim")) {
    opts.at("dim").get_to(s.dim);
    opts.erase("dim");
  }
  opts.get_to(s.options);
}

inline void to_json(Json& j, const GmmSettings& g) {
  j = Json{{"grid", g.grid},
           {"max_iters", g.max_iters},
           {"tol", g.tol},
           {"silhouette_cap", g.silhouette_cap},
           {"min_group_size", g.min_group_size}};
}

inline void from_json(const Json& j, GmmSettings& g) {
  detail::check_keys(j, {"grid", "max_iters", "tol", "silhouette_cap", "min_group_size"},
                     "gmm");
  if (j.contains("grid")) j.at("grid").get_to(g.grid);
  if (j.contains("max_iters")) j.at("max_iters").get_to(g.max_iters);
  if (j.contains("tol")) j.at("tol").get_to(g.tol);
  if (j.contains("silhouette_cap")) j.at("silhouette_cap").get_to(g.silhouette_cap);
  if (j.contains("min_group_size")) j.at("min_group_size").get_to(g.min_group_size);
}

inline void to_json(Json& j, const ModelSettings& m) {
  j = Json{{"kind", model_kind_name(m.kind)},
           {"use_rbm_init", m.use_rbm_init},
           {"rbm_epochs", m.rbm_epochs},
           {"rbm_lr", m.rbm_lr}};
}

inline void from_json(const Json& j, ModelSettings& m) {
  detail::check_keys(j, {"kind", "use_rbm_init", "rbm_epochs", "rbm_lr"}, "model");
  if (j.contains("kind")) {
    std::string name = j.at("kind").get<std::string>();
    if (name == "vae") {
      m.kind = ModelKind::Vae;
    } else if (name == "ae") {
      m.kind = ModelKind::Ae;
    } else {
      fail("MalformedConfig: unknown model kind '" + name + "'");
    }
  }
  if (j.contains("use_rbm_init")) j.at("use_rbm_init").get_to(m.use_rbm_init);
  if (j.contains("rbm_epochs")) j.at("rbm_epochs").get_to(m.rbm_epochs);
  if (j.contains("rbm_lr")) j.at("rbm_lr").get_to(m.rbm_lr);
}

inline void to_json(Json& j, const ScenarioConfig& c) {
  Json data;
  if (c.use_synthetic) {
    data["synthetic"] = c.synthetic;
  } else {
    data["csv_dir"] = c.csv_dir;
  }
  Json fed = c.federation;
  fed.erase("seed");  // the scenario seed is the only seed
  j = Json{{"data", data},
           {"balance", c.balance},
           {"smote_neighbors", c.smote_neighbors},
           {"normalize", c.normalize},
           {"shapiro_check", c.shapiro_check},
           {"test_fraction", c.test_fraction},
           {"gmm", c.gmm},
           {"model", c.model},
           {"federation", fed},
           {"lr_grid", c.lr_grid},
           {"eps_zero", c.eps_zero},
           {"threshold_multiplier", c.threshold_multiplier},
           {"out_dir", c.out_dir},
           {"seed", c.seed},
           {"deterministic", c.deterministic},
           {"max_threads", c.max_threads}};
}

inline void from_json(const Json& j, ScenarioConfig& c) {
  detail::check_keys(j,
                     {"data", "balance", "smote_neighbors", "normalize", "shapiro_check",
                      "test_fraction", "gmm", "model", "federation", "lr_grid", "eps_zero",
                      "threshold_multiplier", "out_dir", "seed", "deterministic",
                      "max_threads"},
                     "config");
  require(j.contains("data"), "MalformedConfig: missing 'data' section");
  const Json& data = j.at("data");
  detail::check_keys(data, {"csv_dir", "synthetic"}, "data");
  bool has_csv = data.contains("csv_dir");
  bool has_syn = data.contains("synthetic");
  require(has_csv != has_syn,
          "MalformedConfig: specify exactly one of data.csv_dir or data.synthetic");
  if (has_csv) {
    data.at("csv_dir").get_to(c.csv_dir);
    c.use_synthetic = false;
  } else {
    data.at("synthetic").get_to(c.synthetic);
    c.use_synthetic = true;
  }
  if (j.contains("balance")) j.at("balance").get_to(c.balance);
  if (j.contains("smote_neighbors")) j.at("smote_neighbors").get_to(c.smote_neighbors);
  if (j.contains("normalize")) j.at("normalize").get_to(c.normalize);
  if (j.contains("shapiro_check")) j.at("shapiro_check").get_to(c.shapiro_check);
  if (j.contains("test_fraction")) j.at("test_fraction").get_to(c.test_fraction);
  if (j.contains("gmm")) j.at("gmm").get_to(c.gmm);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("federation")) {
    detail::check_keys(j.at("federation"),
                       {"rounds", "epochs_per_round", "lr", "theta", "aggregation",
                        "batch_size"},
                       "federation");
    j.at("federation").get_to(c.federation);
  }
  if (j.contains("lr_grid")) {
    j.at("lr_grid").get_to(c.lr_grid);
    require(!c.lr_grid.empty(), "MalformedConfig: lr_grid must not be empty");
  }
  if (j.contains("eps_zero")) j.at("eps_zero").get_to(c.eps_zero);
  if (j.contains("threshold_multiplier"))
    j.at("threshold_multiplier").get_to(c.threshold_multiplier);
  if (j.contains("out_dir")) j.at("out_dir").get_to(c.out_dir);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("deterministic")) j.at("deterministic").get_to(c.deterministic);
  if (j.contains("max_threads")) j.at("max_threads").get_to(c.max_threads);
}

inline ScenarioConfig load_config(const std::string& path) {
  return load_json_file(path).get<ScenarioConfig>();
}

// ============================================================
// prepared per-client state (stages up to and including GMM)
// ============================================================

struct ClientState {
  ClientDataset data;  // balanced, normalized, split
  bool balance_applied = false;
  ComponentSelection selection;
  GmmModel gmm;
  Matrix train_hist;  // benign training histograms, n_train x K
  NormalityReport normality;
  bool has_normality = false;
};

struct PreparedData {
  std::vector<std::string> ids;     // sorted; aligns with clients
  std::vector<ClientState> clients;
  std::vector<ClientGroup> groups;  // bucketed by selected K
  std::map<std::string, double> stage_seconds;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// stream tags keeping the per-stage random streams disjoint
constexpr std::uint64_t kSeedBalance = 0xba1a;
constexpr std::uint64_t kSeedSplit = 0x5171;
constexpr std::uint64_t kSeedGmm = 0x6e4e;
constexpr std::uint64_t kSeedShapiro = 0x54ac;
constexpr std::uint64_t kSeedRbm = 0x4b30;
constexpr std::uint64_t kSeedRandomInit = 0xae00;
constexpr std::uint64_t kSeedFederation = 0xfed0;

inline std::vector<ClientDataset> load_clients(const ScenarioConfig& cfg) {
  if (cfg.use_synthetic) {
    const auto& s = cfg.synthetic;
    return generate_synthetic(s.n_clients, s.benign_per_client, s.attack_fraction, s.dim,
                              cfg.seed, s.options);
  }
  namespace fs = std::filesystem;
  require(fs::is_directory(cfg.csv_dir), "FileNotFound: csv_dir " + cfg.csv_dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(cfg.csv_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  require(!paths.empty(), "EmptyDataset: no .csv files in " + cfg.csv_dir);
  std::vector<ClientDataset> clients;
  for (const auto& p : paths) {
    ClientDataset ds = load_csv(p);
    ds.client_id = fs::path(p).stem().string();
    clients.push_back(std::move(ds));
  }
  return clients;
}

/// SMOTE + Tomek with the neighbor count clamped to what the minority class
/// can support; clients where balancing is impossible are passed through.
inline bool balance_client(ClientDataset& ds, int smote_neighbors, std::uint64_t seed) {
  std::size_t n_min = std::min(ds.count_benign(), ds.count_attack());
  if (n_min < 2) return false;  // single-class or degenerate minority
  int k = std::min<int>(smote_neighbors, static_cast<int>(n_min) - 1);
  ds.samples = smote_tomek(ds.samples, k, seed);
  return true;
}

}  // namespace detail

/// Runs the model-independent pipeline stages in their fixed order:
/// balance, normalize, split, component selection, GMM fit, histograms.
inline PreparedData prepare_clients(const ScenarioConfig& cfg) {
  PreparedData prep;
  auto t_load = std::chrono::steady_clock::now();
  std::vector<ClientDataset> datasets = detail::load_clients(cfg);
  std::sort(datasets.begin(), datasets.end(),
            [](const ClientDataset& a, const ClientDataset& b) {
              return a.client_id < b.client_id;
            });
  prep.stage_seconds["load"] = detail::seconds_since(t_load);

  prep.clients.resize(datasets.size());
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    prep.ids.push_back(datasets[i].client_id);
    prep.clients[i].data = std::move(datasets[i]);
  }

  auto t_balance = std::chrono::steady_clock::now();
  if (cfg.balance) {
    for (std::size_t i = 0; i < prep.clients.size(); ++i)
      prep.clients[i].balance_applied = detail::balance_client(
          prep.clients[i].data, cfg.smote_neighbors,
          derive_seed(cfg.seed, detail::kSeedBalance, i));
  }
  prep.stage_seconds["balance"] = detail::seconds_since(t_balance);

  auto t_norm = std::chrono::steady_clock::now();
  if (cfg.normalize) {
    for (auto& c : prep.clients) {
      auto params = fit_normalizer(c.data.all_features());
      normalize_in_place(params, c.data.samples);
    }
  }
  prep.stage_seconds["normalize"] = detail::seconds_since(t_norm);

  auto t_split = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < prep.clients.size(); ++i)
    split_client(prep.clients[i].data, cfg.test_fraction,
                 derive_seed(cfg.seed, detail::kSeedSplit, i));
  prep.stage_seconds["split"] = detail::seconds_since(t_split);

  auto t_shapiro = std::chrono::steady_clock::now();
  if (cfg.shapiro_check) {
    for (std::size_t i = 0; i < prep.clients.size(); ++i) {
      auto& c = prep.clients[i];
      c.normality = shapiro_features(c.data.feature_matrix(c.data.benign_train), 5000,
                                     derive_seed(cfg.seed, detail::kSeedShapiro, i));
      c.has_normality = true;
    }
  }
  prep.stage_seconds["shapiro"] = detail::seconds_since(t_shapiro);

  auto t_gmm = std::chrono::steady_clock::now();
  parallel_for(prep.clients.size(), cfg.threads(), [&](std::size_t i) {
    auto& c = prep.clients[i];
    Matrix train = c.data.feature_matrix(c.data.benign_train);
    std::vector<int> grid =
        cfg.gmm.grid.empty() ? default_component_grid(train.rows) : cfg.gmm.grid;
    std::uint64_t sel_seed = derive_seed(cfg.seed, detail::kSeedGmm, i);
    c.selection = select_components(train, grid, cfg.gmm.max_iters, cfg.gmm.tol,
                                    cfg.gmm.silhouette_cap, sel_seed);
    // the sweep already fitted this K with this derived seed; refit reproduces
    // that exact model
    c.gmm = fit_em(train, c.selection.best_k, cfg.gmm.max_iters, cfg.gmm.tol,
                   derive_seed(sel_seed, static_cast<std::uint64_t>(c.selection.best_k)));
  });
  prep.stage_seconds["gmm"] = detail::seconds_since(t_gmm);

  auto t_hist = std::chrono::steady_clock::now();
  for (auto& c : prep.clients)
    c.train_hist = histogram_batch(c.gmm, c.data.feature_matrix(c.data.benign_train));
  prep.stage_seconds["histograms"] = detail::seconds_since(t_hist);

  std::map<std::string, int> best_k;
  for (std::size_t i = 0; i < prep.clients.size(); ++i)
    best_k[prep.ids[i]] = prep.clients[i].selection.best_k;
  prep.groups = group_clients(best_k, cfg.gmm.min_group_size);
  return prep;
}

// ============================================================
// training and evaluation over prepared data
// ============================================================

struct GroupRun {
  int k = 0;
  std::vector<std::string> client_ids;
  bool undersized = false;
  FederationResult fed;
  std::map<std::string, DetectionThreshold> thresholds;
  std::vector<ClientEvaluation> evaluations;  // aligned with client_ids
  GroupEvaluation group_eval;
};

struct TrainedScenario {
  ModelKind kind = ModelKind::Vae;
  double lr = 0.0;
  double theta = 0.0;
  std::vector<GroupRun> groups;
  GroupEvaluation overall;  // unweighted over every client in every group
  double rbm_seconds = 0.0;
  double federation_seconds = 0.0;
  double threshold_seconds = 0.0;
  double detect_seconds = 0.0;
};

namespace detail {

inline std::size_t client_index(const PreparedData& prep, const std::string& id) {
  auto it = std::lower_bound(prep.ids.begin(), prep.ids.end(), id);
  require(it != prep.ids.end() && *it == id, "MissingClient: " + id);
  return static_cast<std::size_t>(it - prep.ids.begin());
}

}  // namespace detail

/// Trains one (model kind, lr, theta, aggregation) combination over every
/// client group of the prepared scenario and evaluates the gated detector.
inline TrainedScenario run_training(const PreparedData& prep, const ScenarioConfig& cfg,
                                    ModelKind kind, double lr, double theta,
                                    Aggregation aggregation) {
  TrainedScenario out;
  out.kind = kind;
  out.lr = lr;
  out.theta = theta;

  std::vector<ClientEvaluation> all_evals;
  for (std::size_t gi = 0; gi < prep.groups.size(); ++gi) {
    const ClientGroup& group = prep.groups[gi];
    GroupRun run;
    run.k = group.k;
    run.client_ids = group.client_ids;
    run.undersized = group.undersized;

    std::map<std::string, Matrix> hists;
    std::map<std::string, Autoencoder> initial;
    auto t_rbm = std::chrono::steady_clock::now();
    for (const auto& id : group.client_ids) {
      std::size_t ci = detail::client_index(prep, id);
      const auto& c = prep.clients[ci];
      hists.emplace(id, c.train_hist);
      if (cfg.model.use_rbm_init) {
        initial.emplace(id, init_from_rbms(kind, c.train_hist, cfg.model.rbm_epochs,
                                           cfg.model.rbm_lr,
                                           derive_seed(cfg.seed, detail::kSeedRbm, ci)));
      } else {
        initial.emplace(id, make_autoencoder(kind, static_cast<int>(c.gmm.k()),
                                             derive_seed(cfg.seed, detail::kSeedRandomInit,
                                                         ci)));
      }
    }
    out.rbm_seconds += detail::seconds_since(t_rbm);

    FederationConfig fed = cfg.federation;
    fed.lr = lr;
    fed.theta = theta;
    fed.aggregation = aggregation;
    fed.seed = derive_seed(cfg.seed, detail::kSeedFederation,
                           static_cast<std::uint64_t>(group.k));
    auto t_fl = std::chrono::steady_clock::now();
    run.fed = run_federation(group, hists, initial, fed, cfg.threads());
    out.federation_seconds += detail::seconds_since(t_fl);

    auto t_th = std::chrono::steady_clock::now();
    for (const auto& id : group.client_ids) {
      std::size_t ci = detail::client_index(prep, id);
      run.thresholds[id] = compute_threshold(run.fed.models.at(id),
                                             prep.clients[ci].train_hist,
                                             cfg.threshold_multiplier);
    }
    out.threshold_seconds += detail::seconds_since(t_th);

    auto t_detect = std::chrono::steady_clock::now();
    for (const auto& id : group.client_ids) {
      std::size_t ci = detail::client_index(prep, id);
      const auto& c = prep.clients[ci];
      run.evaluations.push_back(evaluate_client(c.gmm, run.fed.models.at(id),
                                                run.thresholds.at(id), c.data,
                                                cfg.eps_zero));
      all_evals.push_back(run.evaluations.back());
    }
    out.detect_seconds += detail::seconds_since(t_detect);

    run.group_eval = evaluate_group(run.evaluations);
    out.groups.push_back(std::move(run));
  }
  out.overall = evaluate_group(all_evals);
  return out;
}

// ============================================================
// reports
// ============================================================

namespace detail {

inline Json client_section(const PreparedData& prep) {
  Json clients = Json::object();
  for (std::size_t i = 0; i < prep.ids.size(); ++i) {
    const auto& c = prep.clients[i];
    Json entry{{"best_k", c.selection.best_k},
               {"selection", c.selection},
               {"n_samples", c.data.samples.size()},
               {"n_benign_train", c.data.benign_train.size()},
               {"n_benign_test", c.data.benign_test.size()},
               {"n_attack_test", c.data.attack_test.size()},
               {"attack_shortfall", c.data.attack_shortfall},
               {"balance_applied", c.balance_applied}};
    if (c.has_normality) entry["normality"] = c.normality;
    clients[prep.ids[i]] = std::move(entry);
  }
  return clients;
}

inline Json trained_section(const TrainedScenario& t) {
  Json groups = Json::array();
  for (const auto& g : t.groups) {
    Json per_client = Json::object();
    for (std::size_t i = 0; i < g.client_ids.size(); ++i) {
      Json entry = g.evaluations[i];
      entry["threshold"] = g.thresholds.at(g.client_ids[i]);
      per_client[g.client_ids[i]] = std::move(entry);
    }
    groups.push_back(Json{{"k", g.k},
                          {"client_ids", g.client_ids},
                          {"undersized", g.undersized},
                          {"evaluation", g.group_eval},
                          {"clients", per_client}});
  }
  return Json{{"kind", model_kind_name(t.kind)},
              {"lr", t.lr},
              {"theta", t.theta},
              {"groups", groups},
              {"overall", t.overall}};
}

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace detail

/// Renders the human-readable tables for a run report.
inline std::string render_run_text(const Json& report) {
  std::string out;
  const Json& cfg = report.at("config");
  const Json& trained = report.at("trained");
  out += "scenario: kind=" + trained.at("kind").get<std::string>() +
         " lr=" + detail::format_metric(trained.at("lr").get<double>()) +
         " theta=" + detail::format_metric(trained.at("theta").get<double>()) +
         " rounds=" + std::to_string(cfg.at("federation").at("rounds").get<int>()) +
         " seed=" + std::to_string(cfg.at("seed").get<std::uint64_t>()) + "\n\n";

  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %5s %9s %9s %9s %9s %9s\n", "scope", "k", "acc",
                "prec", "rec", "f1", "ae_part");
  out += line;
  for (const auto& g : trained.at("groups")) {
    const Json& ev = g.at("evaluation");
    std::snprintf(line, sizeof(line), "%-16s %5d %9.4f %9.4f %9.4f %9.4f %9.4f\n", "group",
                  g.at("k").get<int>(), ev.at("mean_accuracy").get<double>(),
                  ev.at("mean_precision").get<double>(), ev.at("mean_recall").get<double>(),
                  ev.at("mean_f1").get<double>(),
                  ev.at("mean_ae_part_accuracy").get<double>());
    out += line;
    for (const auto& [id, cev] : g.at("clients").items()) {
      const Json& m = cev.at("metrics");
      std::snprintf(line, sizeof(line), "  %-14s %5s %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                    id.c_str(), "", m.at("accuracy").get<double>(),
                    m.at("precision").get<double>(), m.at("recall").get<double>(),
                    m.at("f1").get<double>(), cev.at("ae_part_accuracy").get<double>());
      out += line;
    }
  }
  const Json& overall = trained.at("overall");
  std::snprintf(line, sizeof(line), "%-16s %5s %9.4f %9.4f %9.4f %9.4f %9.4f\n", "overall", "",
                overall.at("mean_accuracy").get<double>(),
                overall.at("mean_precision").get<double>(),
                overall.at("mean_recall").get<double>(), overall.at("mean_f1").get<double>(),
                overall.at("mean_ae_part_accuracy").get<double>());
  out += line;

  if (report.contains("timings")) {
    out += "\ntimings (seconds):\n";
    for (const auto& [stage, secs] : report.at("timings").items()) {
      std::snprintf(line, sizeof(line), "  %-12s %10.4f\n", stage.c_str(),
                    secs.get<double>());
      out += line;
    }
  }
  return out;
}

inline std::string render_table_text(const Json& report) {
  std::string out;
  char line[256];
  bool has_mode = report.at("rows").size() > 0 && report.at("rows")[0].contains("mode");
  if (has_mode) {
    std::snprintf(line, sizeof(line), "%-12s %-5s %8s %9s %9s %9s %9s %9s\n", "mode", "kind",
                  "lr", "acc", "prec", "rec", "f1", "ae_part");
  } else {
    std::snprintf(line, sizeof(line), "%-5s %8s %9s %9s %9s %9s %9s\n", "kind", "lr", "acc",
                  "prec", "rec", "f1", "ae_part");
  }
  out += line;
  for (const auto& row : report.at("rows")) {
    const Json& ev = row.at("overall");
    if (has_mode) {
      std::snprintf(line, sizeof(line), "%-12s %-5s %8.3f %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                    row.at("mode").get<std::string>().c_str(),
                    row.at("kind").get<std::string>().c_str(), row.at("lr").get<double>(),
                    ev.at("mean_accuracy").get<double>(),
                    ev.at("mean_precision").get<double>(),
                    ev.at("mean_recall").get<double>(), ev.at("mean_f1").get<double>(),
                    ev.at("mean_ae_part_accuracy").get<double>());
    } else {
      std::snprintf(line, sizeof(line), "%-5s %8.3f %9.4f %9.4f %9.4f %9.4f %9.4f\n",
                    row.at("kind").get<std::string>().c_str(), row.at("lr").get<double>(),
                    ev.at("mean_accuracy").get<double>(),
                    ev.at("mean_precision").get<double>(),
                    ev.at("mean_recall").get<double>(), ev.at("mean_f1").get<double>(),
                    ev.at("mean_ae_part_accuracy").get<double>());
    }
    out += line;
  }
  return out;
}

/// Renders whatever report kind the JSON declares.
inline std::string render_report(const Json& report) {
  std::string command = report.value("command", std::string("run"));
  if (command == "run") return render_run_text(report);
  return render_table_text(report);
}

// ============================================================
// commands
// ============================================================

namespace detail {

inline void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("FileWriteError: " + path);
  out << text;
  if (!out) fail("FileWriteError: " + path);
}

inline void write_run_artifacts(const PreparedData& prep, const TrainedScenario& trained,
                                const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "gmm");
  fs::create_directories(fs::path(out_dir) / "weights");

  for (std::size_t i = 0; i < prep.ids.size(); ++i) {
    Json g = prep.clients[i].gmm;
    write_json_file(g, (fs::path(out_dir) / "gmm" / (prep.ids[i] + ".json")).string());
  }
  std::ofstream rounds((fs::path(out_dir) / "rounds.jsonl").string());
  if (!rounds) fail("FileWriteError: rounds.jsonl");
  for (const auto& g : trained.groups) {
    for (const auto& r : g.fed.rounds) {
      Json line = r;
      line["group_k"] = g.k;
      rounds << line.dump() << "\n";
    }
    for (const auto& id : g.client_ids)
      save_weights(g.fed.models.at(id).net,
                   (fs::path(out_dir) / "weights" / (id + ".bin")).string());
  }
}

}  // namespace detail

/// Generates the synthetic datasets of a config into per-client CSV files.
inline Json cmd_generate(const ScenarioConfig& cfg) {
  require(cfg.use_synthetic, "MalformedConfig: generate needs a data.synthetic section");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto clients = detail::load_clients(cfg);
  Json manifest;
  manifest["command"] = "generate";
  manifest["config"] = cfg;
  Json files = Json::object();
  for (const auto& ds : clients) {
    std::string path = (fs::path(cfg.out_dir) / (ds.client_id + ".csv")).string();
    save_csv(ds, path);
    files[ds.client_id] = Json{{"path", path},
                               {"n_benign", ds.count_benign()},
                               {"n_attack", ds.count_attack()}};
  }
  manifest["files"] = files;
  write_json_file(manifest, (fs::path(cfg.out_dir) / "generate_manifest.json").string());
  return manifest;
}

/// Full pipeline run: prepare, train one configuration, evaluate, and write
/// report.json, metrics.txt, rounds.jsonl, gmm/ and weights/ artifacts.
inline Json cmd_run(const ScenarioConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto t0 = std::chrono::steady_clock::now();
  PreparedData prep = prepare_clients(cfg);
  TrainedScenario trained = run_training(prep, cfg, cfg.model.kind, cfg.federation.lr,
                                         cfg.federation.theta, cfg.federation.aggregation);

  Json report;
  report["command"] = "run";
  report["config"] = cfg;
  report["clients"] = detail::client_section(prep);
  report["trained"] = detail::trained_section(trained);
  Json timings = prep.stage_seconds;
  timings["rbm"] = trained.rbm_seconds;
  timings["federation"] = trained.federation_seconds;
  timings["threshold"] = trained.threshold_seconds;
  timings["detect"] = trained.detect_seconds;
  timings["total"] = detail::seconds_since(t0);
  report["timings"] = timings;
  report["artifacts"] = Json{{"report", "report.json"},
                             {"metrics", "metrics.txt"},
                             {"rounds", "rounds.jsonl"},
                             {"gmm_dir", "gmm"},
                             {"weights_dir", "weights"}};

  detail::write_run_artifacts(prep, trained, cfg.out_dir);
  write_json_file(report, (fs::path(cfg.out_dir) / "report.json").string());
  detail::write_text_file(render_run_text(report),
                          (fs::path(cfg.out_dir) / "metrics.txt").string());
  return report;
}

/// Federated runs over the whole lr grid for both model kinds; one row per
/// (kind, lr) combination.
inline Json cmd_sweep_lr(const ScenarioConfig& cfg) {
  require(!cfg.lr_grid.empty(), "MalformedConfig: lr_grid must not be empty");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  PreparedData prep = prepare_clients(cfg);

  Json rows = Json::array();
  for (ModelKind kind : {ModelKind::Vae, ModelKind::Ae}) {
    for (double lr : cfg.lr_grid) {
      TrainedScenario t = run_training(prep, cfg, kind, lr, cfg.federation.theta,
                                       cfg.federation.aggregation);
      rows.push_back(Json{{"kind", model_kind_name(kind)},
                          {"lr", lr},
                          {"overall", t.overall},
                          {"trained", detail::trained_section(t)}});
    }
  }
  Json report;
  report["command"] = "sweep-lr";
  report["config"] = cfg;
  report["clients"] = detail::client_section(prep);
  report["rows"] = rows;
  write_json_file(report, (fs::path(cfg.out_dir) / "sweep.json").string());
  detail::write_text_file(render_table_text(report),
                          (fs::path(cfg.out_dir) / "sweep.txt").string());
  return report;
}

/// The four-way comparison: {federated, distributed} x {vae, ae} over the lr
/// grid. Distributed means no weight exchange (theta = 1 keeps every client
/// on its own trajectory).
inline Json cmd_compare(const ScenarioConfig& cfg) {
  require(!cfg.lr_grid.empty(), "MalformedConfig: lr_grid must not be empty");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  PreparedData prep = prepare_clients(cfg);

  Json rows = Json::array();
  for (const char* mode : {"federated", "distributed"}) {
    bool distributed = std::string(mode) == "distributed";
    for (ModelKind kind : {ModelKind::Vae, ModelKind::Ae}) {
      for (double lr : cfg.lr_grid) {
        double theta = distributed ? 1.0 : cfg.federation.theta;
        TrainedScenario t = run_training(prep, cfg, kind, lr, theta,
                                         cfg.federation.aggregation);
        rows.push_back(Json{{"mode", mode},
                            {"kind", model_kind_name(kind)},
                            {"lr", lr},
                            {"overall", t.overall}});
      }
    }
  }
  Json report;
  report["command"] = "compare";
  report["config"] = cfg;
  report["clients"] = detail::client_section(prep);
  report["rows"] = rows;
  write_json_file(report, (fs::path(cfg.out_dir) / "compare.json").string());
  detail::write_text_file(render_table_text(report),
                          (fs::path(cfg.out_dir) / "compare.txt").string());
  return report;
}

}  // namespace fedmd

#endif  // FEDMD_PIPELINE_HPP
