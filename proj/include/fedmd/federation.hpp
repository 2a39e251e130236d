#ifndef FEDMD_FEDERATION_HPP
#define FEDMD_FEDERATION_HPP

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/neural.hpp"
#include "fedmd/parallel.hpp"
#include "fedmd/rng.hpp"

namespace fedmd {

enum class Aggregation { FedPlus, FedAvg };

inline const char* aggregation_name(Aggregation a) {
  return a == Aggregation::FedPlus ? "fedplus" : "fedavg";
}

struct FederationConfig {
  int rounds = 30;
  int epochs_per_round = 1;
  double lr = 0.001;
  double theta = 0.5;  // blend weight on the local model; 1 disables read-back
  Aggregation aggregation = Aggregation::FedPlus;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// Clients sharing one component count K train one federated model together.
struct ClientGroup {
  int k = 0;
  std::vector<std::string> client_ids;
  bool undersized = false;
};

/// Buckets clients by their selected K, ascending; groups smaller than
/// min_size are flagged but still returned.
inline std::vector<ClientGroup> group_clients(const std::map<std::string, int>& best_k,
                                              std::size_t min_size) {
  std::map<int, std::vector<std::string>> buckets;
  for (const auto& [id, k] : best_k) buckets[k].push_back(id);
  std::vector<ClientGroup> groups;
  for (auto& [k, ids] : buckets) {
    ClientGroup g;
    g.k = k;
    g.client_ids = std::move(ids);  // map iteration is already sorted by id
    g.undersized = g.client_ids.size() < min_size;
    groups.push_back(std::move(g));
  }
  return groups;
}

/// Fed+ client update: theta * local + (1 - theta) * z. The endpoints return
/// the corresponding operand bitwise.
inline NetworkWeights fedplus_update(const NetworkWeights& local, const NetworkWeights& z,
                                     double theta) {
  require(theta >= 0.0 && theta <= 1.0, "BadArgument: fedplus theta must be in [0, 1]");
  require(local.same_shape(z), "DimensionMismatch: fedplus_update");
  if (theta == 1.0) return local;
  if (theta == 0.0) return z;
  NetworkWeights out = local;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    for (std::size_t i = 0; i < out.layers[l].w.data.size(); ++i)
      out.layers[l].w.data[i] =
          theta * local.layers[l].w.data[i] + (1.0 - theta) * z.layers[l].w.data[i];
    for (std::size_t i = 0; i < out.layers[l].b.size(); ++i)
      out.layers[l].b[i] = theta * local.layers[l].b[i] + (1.0 - theta) * z.layers[l].b[i];
  }
  return out;
}

/// Unweighted elementwise mean of client weights.
inline NetworkWeights central_mean(const std::vector<NetworkWeights>& clients) {
  require(!clients.empty(), "EmptyInput: central_mean");
  for (const auto& c : clients)
    require(c.same_shape(clients[0]), "DimensionMismatch: central_mean");
  NetworkWeights out = zeros_like(clients[0]);
  double inv = 1.0 / static_cast<double>(clients.size());
  for (const auto& c : clients) {
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      for (std::size_t i = 0; i < out.layers[l].w.data.size(); ++i)
        out.layers[l].w.data[i] += c.layers[l].w.data[i] * inv;
      for (std::size_t i = 0; i < out.layers[l].b.size(); ++i)
        out.layers[l].b[i] += c.layers[l].b[i] * inv;
    }
  }
  return out;
}

/// Dataset-size weighted mean, sum_k (n_k / n) W_k.
inline NetworkWeights fedavg_aggregate(const std::vector<NetworkWeights>& clients,
                                       const std::vector<std::size_t>& sizes) {
  require(!clients.empty(), "EmptyInput: fedavg_aggregate");
  require(clients.size() == sizes.size(), "DimensionMismatch: fedavg_aggregate sizes");
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  require(total > 0, "BadArgument: fedavg_aggregate total size is zero");
  for (const auto& c : clients)
    require(c.same_shape(clients[0]), "DimensionMismatch: fedavg_aggregate");
  NetworkWeights out = zeros_like(clients[0]);
  for (std::size_t ci = 0; ci < clients.size(); ++ci) {
    double wgt = static_cast<double>(sizes[ci]) / static_cast<double>(total);
    const auto& c = clients[ci];
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      for (std::size_t i = 0; i < out.layers[l].w.data.size(); ++i)
        out.layers[l].w.data[i] += c.layers[l].w.data[i] * wgt;
      for (std::size_t i = 0; i < out.layers[l].b.size(); ++i)
        out.layers[l].b[i] += c.layers[l].b[i] * wgt;
    }
  }
  return out;
}

/// Seed for one client's local pass in one round; the same schedule is used
/// by federated runs and by isolated baselines so theta = 1 reproduces local
/// training bit for bit.
inline std::uint64_t round_seed(std::uint64_t base, std::size_t client_index, int round,
                                int epoch = 0) {
  return derive_seed(base, 0xf3d0000u + client_index,
                     static_cast<std::uint64_t>(round) * 1000 + static_cast<std::uint64_t>(epoch));
}

struct RoundLog {
  int round = 0;
  std::map<std::string, double> client_loss;  // mean epoch loss, last local epoch
  std::string z_checksum;                     // FNV-1a over the aggregate weights
  double seconds = 0.0;
};

struct FederationResult {
  std::map<std::string, Autoencoder> models;
  NetworkWeights aggregate;
  std::vector<RoundLog> rounds;
};

/// Runs the federated training loop over one group. Every round each client
/// trains locally; under Fed+ it then blends its weights with the previous
/// aggregate (skipped in round 1, when no aggregate exists yet) and the server
/// averages the blended weights. Under FedAvg clients start each later round
/// from the aggregate, which is size-weighted and installed into every client
/// after the final round.
inline FederationResult run_federation(const ClientGroup& group,
                                       const std::map<std::string, Matrix>& histograms,
                                       const std::map<std::string, Autoencoder>& initial,
                                       const FederationConfig& cfg, int max_threads = 1) {
  require(!group.client_ids.empty(), "EmptyInput: run_federation group");
  require(cfg.rounds >= 1, "BadArgument: run_federation rounds must be >= 1");
  require(cfg.theta >= 0.0 && cfg.theta <= 1.0, "BadArgument: theta must be in [0, 1]");

  std::vector<std::string> ids = group.client_ids;
  std::vector<Autoencoder> models;
  std::vector<const Matrix*> data;
  std::vector<std::size_t> sizes;
  for (const auto& id : ids) {
    auto mit = initial.find(id);
    auto hit = histograms.find(id);
    require(mit != initial.end(), "MissingClient: no initial weights for " + id);
    require(hit != histograms.end(), "MissingClient: no histograms for " + id);
    require(static_cast<int>(hit->second.cols) == mit->second.input_dim,
            "DimensionMismatch: histograms vs model input for " + id);
    models.push_back(mit->second);
    data.push_back(&hit->second);
    sizes.push_back(hit->second.rows);
  }
  for (std::size_t c = 1; c < models.size(); ++c)
    require(models[c].net.same_shape(models[0].net),
            "DimensionMismatch: client models must share one architecture");

  std::vector<RmsProp> opts;
  for (const auto& m : models) opts.push_back(make_rmsprop(m, cfg.lr));

  FederationResult result;
  NetworkWeights z;
  bool have_z = false;

  for (int r = 1; r <= cfg.rounds; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    RoundLog log;
    log.round = r;

    if (cfg.aggregation == Aggregation::FedAvg && have_z) {
      for (auto& m : models) m.net = z;
    }

    std::vector<double> losses(models.size(), 0.0);
    parallel_for(models.size(), max_threads, [&](std::size_t c) {
      double loss = 0.0;
      for (int e = 0; e < cfg.epochs_per_round; ++e)
        loss = train_epoch(models[c], *data[c], opts[c], cfg.batch_size,
                           round_seed(cfg.seed, c, r, e));
      losses[c] = loss;
    });

    if (cfg.aggregation == Aggregation::FedPlus && have_z) {
      for (auto& m : models) m.net = fedplus_update(m.net, z, cfg.theta);
    }

    std::vector<NetworkWeights> submitted;
    submitted.reserve(models.size());
    for (const auto& m : models) submitted.push_back(m.net);
    z = (cfg.aggregation == Aggregation::FedAvg) ? fedavg_aggregate(submitted, sizes)
                                                 : central_mean(submitted);
    have_z = true;

    for (std::size_t c = 0; c < ids.size(); ++c) log.client_loss[ids[c]] = losses[c];
    {
      char buf[20];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(fnv1a_hash(flatten(z))));
      log.z_checksum = buf;
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rounds.push_back(std::move(log));
  }

  if (cfg.aggregation == Aggregation::FedAvg) {
    for (auto& m : models) m.net = z;
  }

  result.aggregate = z;
  for (std::size_t c = 0; c < ids.size(); ++c) result.models.emplace(ids[c], std::move(models[c]));
  return result;
}

}  // namespace fedmd

#endif  // FEDMD_FEDERATION_HPP
