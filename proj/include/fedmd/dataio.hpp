#ifndef FEDMD_DATAIO_HPP
#define FEDMD_DATAIO_HPP

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedmd/common.hpp"
#include "fedmd/rng.hpp"

namespace fedmd {

/// Misbehavior categories carried by labeled samples. Codes 1..5 in CSV files.
enum class AttackKind : int {
  Constant = 1,
  ConstantOffset = 2,
  Random = 3,
  RandomOffset = 4,
  EventualStop = 5,
};

inline const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::Constant: return "constant";
    case AttackKind::ConstantOffset: return "constant_offset";
    case AttackKind::Random: return "random";
    case AttackKind::RandomOffset: return "random_offset";
    case AttackKind::EventualStop: return "eventual_stop";
  }
  return "unknown";
}

enum class LabelKind { Benign, Attack, Unlabeled };

struct Label {
  LabelKind kind = LabelKind::Unlabeled;
  AttackKind attack = AttackKind::Constant;  // meaningful only when kind == Attack

  static Label benign() { return {LabelKind::Benign, AttackKind::Constant}; }
  static Label attacked(AttackKind a) { return {LabelKind::Attack, a}; }
  static Label unlabeled() { return {LabelKind::Unlabeled, AttackKind::Constant}; }

  bool is_benign() const { return kind == LabelKind::Benign; }
  bool is_attack() const { return kind == LabelKind::Attack; }

  /// CSV code: 0 benign, 1..5 attack kind, -1 unlabeled.
  int code() const {
    if (kind == LabelKind::Benign) return 0;
    if (kind == LabelKind::Attack) return static_cast<int>(attack);
    return -1;
  }

  static Label from_code(int c) {
    if (c == 0) return benign();
    if (c >= 1 && c <= 5) return attacked(static_cast<AttackKind>(c));
    if (c == -1) return unlabeled();
    fail("UnknownLabelCode: " + std::to_string(c));
  }

  bool operator==(const Label& o) const {
    if (kind != o.kind) return false;
    if (kind == LabelKind::Attack) return attack == o.attack;
    return true;
  }
};

struct Sample {
  Vec features;
  Label label;

  bool operator==(const Sample& o) const {
    return features == o.features && label == o.label;
  }
};

/// One client's data plus the index lists produced by split_client.
/// Index lists refer into `samples` and stay empty until the split runs.
struct ClientDataset {
  std::string client_id;
  std::vector<Sample> samples;
  std::vector<std::size_t> benign_train;
  std::vector<std::size_t> benign_test;
  std::vector<std::size_t> attack_test;
  bool attack_shortfall = false;  // fewer attacks than benign_test slots

  std::size_t dim() const { return samples.empty() ? 0 : samples[0].features.size(); }

  std::size_t count_benign() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.label.is_benign() ? 1 : 0;
    return n;
  }

  std::size_t count_attack() const {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.label.is_attack() ? 1 : 0;
    return n;
  }

  Matrix feature_matrix(const std::vector<std::size_t>& idx) const {
    Matrix m(idx.size(), dim());
    for (std::size_t i = 0; i < idx.size(); ++i) m.set_row(i, samples[idx[i]].features);
    return m;
  }

  Matrix all_features() const {
    Matrix m(samples.size(), dim());
    for (std::size_t i = 0; i < samples.size(); ++i) m.set_row(i, samples[i].features);
    return m;
  }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
  if (b == e) return false;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

}  // namespace detail

/// Loads one client's samples from a headed CSV file. Every column except
/// `label_column` and an optional `client_id` column is a feature, in header
/// order. The label column holds 0 (benign) or 1..5 (attack kind).
inline ClientDataset load_csv(const std::string& path, const std::string& label_column = "label") {
  std::ifstream in(path);
  if (!in) fail("FileNotFound: " + path);

  std::string line;
  if (!std::getline(in, line)) fail("EmptyDataset: " + path + " has no header");
  std::vector<std::string> header = detail::split_line(line);

  std::size_t label_idx = header.size();
  std::size_t client_idx = header.size();
  std::vector<std::size_t> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = i;
    } else if (header[i] == "client_id") {
      client_idx = i;
    } else {
      feature_cols.push_back(i);
    }
  }
  if (label_idx == header.size())
    fail("MissingLabelColumn: no column named '" + label_column + "' in " + path);
  if (feature_cols.empty()) fail("EmptyDataset: " + path + " has no feature columns");

  ClientDataset ds;
  ds.client_id = std::filesystem::path(path).stem().string();

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size())
      fail("MalformedRow: line " + std::to_string(line_no) + " has " +
           std::to_string(cells.size()) + " cells, expected " + std::to_string(header.size()));

    Sample s;
    s.features.reserve(feature_cols.size());
    for (std::size_t col : feature_cols) {
      double v;
      if (!detail::parse_double(cells[col], v))
        fail("MalformedRow: line " + std::to_string(line_no) + " non-numeric cell '" +
             cells[col] + "' in column '" + header[col] + "'");
      if (!std::isfinite(v))
        fail("MalformedRow: line " + std::to_string(line_no) + " non-finite value in column '" +
             header[col] + "'");
      s.features.push_back(v);
    }
    double code_raw;
    if (!detail::parse_double(cells[label_idx], code_raw) ||
        code_raw != std::floor(code_raw))
      fail("MalformedRow: line " + std::to_string(line_no) + " bad label cell '" +
           cells[label_idx] + "'");
    int code = static_cast<int>(code_raw);
    if (code < 0 || code > 5)
      fail("UnknownLabelCode: line " + std::to_string(line_no) + " label " + std::to_string(code));
    s.label = Label::from_code(code);
    ds.samples.push_back(std::move(s));
  }
  (void)client_idx;
  if (ds.samples.empty()) fail("EmptyDataset: " + path + " has no data rows");
  return ds;
}

/// Writes samples as f0..f{d-1},label with full double round-trip precision.
inline void save_csv(const ClientDataset& ds, const std::string& path,
                     const std::string& label_column = "label") {
  std::ofstream out(path);
  if (!out) fail("FileWriteError: " + path);
  std::size_t d = ds.dim();
  for (std::size_t j = 0; j < d; ++j) out << "f" << j << ",";
  out << label_column << "\n";
  char buf[40];
  for (const auto& s : ds.samples) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.features[j]);
      out << buf << ",";
    }
    out << s.label.code() << "\n";
  }
  if (!out) fail("FileWriteError: " + path);
}

/// Knobs for the synthetic generator. The first two feature dimensions are
/// positions inside [box_lo, box_hi]^2; remaining dimensions are unconstrained.
struct SyntheticOptions {
  int min_regimes = 2;
  int max_regimes = 5;
  double box_lo = 0.0;
  double box_hi = 1000.0;
  double regime_mean_lo = 300.0;  // position regime centers stay well inside the box
  double regime_mean_hi = 700.0;
  double regime_pos_sigma_lo = 8.0;
  double regime_pos_sigma_hi = 15.0;
  double other_mean_lo = -10.0;
  double other_mean_hi = 10.0;
  double other_sigma_lo = 0.5;
  double other_sigma_hi = 2.0;
  double offset_lo = 150.0;  // per-axis magnitude for the offset attack kinds
  double offset_hi = 300.0;
  std::vector<AttackKind> kinds = {AttackKind::Constant, AttackKind::ConstantOffset,
                                   AttackKind::Random, AttackKind::RandomOffset,
                                   AttackKind::EventualStop};
};

/// Generates per-client datasets. Benign traffic is a mixture of 2..5
/// Gaussian driving regimes per client; attack samples are benign samples
/// with transformed position coordinates, labeled by kind.
inline std::vector<ClientDataset> generate_synthetic(int n_clients, int benign_per_client,
                                                     double attack_fraction, int d,
                                                     std::uint64_t seed,
                                                     const SyntheticOptions& opts = {}) {
  require(n_clients >= 1, "BadArgument: n_clients must be >= 1");
  require(benign_per_client >= 2, "BadArgument: benign_per_client must be >= 2");
  require(d >= 2, "BadArgument: d must be >= 2 (first two dims are position)");
  require(attack_fraction >= 0.0 && attack_fraction < 1.0,
          "BadArgument: attack_fraction must be in [0, 1)");
  require(!opts.kinds.empty() || attack_fraction == 0.0,
          "BadArgument: attack kinds list is empty");

  std::vector<ClientDataset> clients;
  clients.reserve(static_cast<std::size_t>(n_clients));

  for (int c = 0; c < n_clients; ++c) {
    Rng rng(derive_seed(seed, 0x5c1e47u, static_cast<std::uint64_t>(c)));
    ClientDataset ds;
    {
      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "client_%03d", c);
      ds.client_id = idbuf;
    }

    int n_regimes = rng.uniform_int(opts.min_regimes, opts.max_regimes);
    Matrix means(static_cast<std::size_t>(n_regimes), static_cast<std::size_t>(d));
    Matrix sigmas(static_cast<std::size_t>(n_regimes), static_cast<std::size_t>(d));
    for (int r = 0; r < n_regimes; ++r) {
      for (int j = 0; j < d; ++j) {
        if (j < 2) {
          means(r, j) = rng.uniform(opts.regime_mean_lo, opts.regime_mean_hi);
          sigmas(r, j) = rng.uniform(opts.regime_pos_sigma_lo, opts.regime_pos_sigma_hi);
        } else {
          means(r, j) = rng.uniform(opts.other_mean_lo, opts.other_mean_hi);
          sigmas(r, j) = rng.uniform(opts.other_sigma_lo, opts.other_sigma_hi);
        }
      }
    }

    for (int i = 0; i < benign_per_client; ++i) {
      int r = rng.uniform_int(0, n_regimes - 1);
      Sample s;
      s.features.resize(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) s.features[j] = rng.normal(means(r, j), sigmas(r, j));
      s.label = Label::benign();
      ds.samples.push_back(std::move(s));
    }

    // attacks/(attacks+benign) == attack_fraction, to within one sample
    int n_attacks = static_cast<int>(
        std::llround(attack_fraction / (1.0 - attack_fraction) * benign_per_client));
    if (n_attacks > 0) {
      // shared per-client attack parameters
      Vec const_pos(2), const_offset(2);
      for (int j = 0; j < 2; ++j) {
        double margin = 0.1 * (opts.box_hi - opts.box_lo);
        const_pos[j] = rng.bernoulli(0.5) ? rng.uniform(opts.box_lo, opts.box_lo + margin)
                                          : rng.uniform(opts.box_hi - margin, opts.box_hi);
        const_offset[j] = (rng.bernoulli(0.5) ? 1.0 : -1.0) *
                          rng.uniform(opts.offset_lo, opts.offset_hi);
      }
      // position an EventualStop vehicle freezes at: benign sample ceil(n/2), 1-based
      std::size_t stop_idx = static_cast<std::size_t>((benign_per_client + 1) / 2) - 1;
      Vec stop_pos = {ds.samples[stop_idx].features[0], ds.samples[stop_idx].features[1]};

      for (int i = 0; i < n_attacks; ++i) {
        AttackKind kind = opts.kinds[static_cast<std::size_t>(i) % opts.kinds.size()];
        std::size_t base = static_cast<std::size_t>(rng.index(static_cast<std::uint64_t>(benign_per_client)));
        Sample s = ds.samples[base];
        s.label = Label::attacked(kind);
        switch (kind) {
          case AttackKind::Constant:
            s.features[0] = const_pos[0];
            s.features[1] = const_pos[1];
            break;
          case AttackKind::ConstantOffset:
            s.features[0] += const_offset[0];
            s.features[1] += const_offset[1];
            break;
          case AttackKind::Random:
            s.features[0] = rng.uniform(opts.box_lo, opts.box_hi);
            s.features[1] = rng.uniform(opts.box_lo, opts.box_hi);
            break;
          case AttackKind::RandomOffset:
            for (int j = 0; j < 2; ++j)
              s.features[j] += (rng.bernoulli(0.5) ? 1.0 : -1.0) *
                               rng.uniform(opts.offset_lo, opts.offset_hi);
            break;
          case AttackKind::EventualStop:
            s.features[0] = stop_pos[0];
            s.features[1] = stop_pos[1];
            break;
        }
        ds.samples.push_back(std::move(s));
      }
    }
    clients.push_back(std::move(ds));
  }
  return clients;
}

/// Splits benign samples (1 - test_fraction)/test_fraction into train/test and
/// fills attack_test with at most |benign_test| attack indices, sampled when
/// there are more. Sets attack_shortfall when there are fewer.
inline void split_client(ClientDataset& ds, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0,
          "BadArgument: test_fraction must be in (0, 1)");
  std::vector<std::size_t> benign, attacks;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (ds.samples[i].label.is_benign()) benign.push_back(i);
    else if (ds.samples[i].label.is_attack()) attacks.push_back(i);
  }
  if (benign.size() < 5)
    fail("InsufficientData: client " + ds.client_id + " has " +
         std::to_string(benign.size()) + " benign samples, need at least 5 to split");

  std::size_t n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(benign.size())));
  if (n_test < 1) n_test = 1;
  if (n_test >= benign.size()) n_test = benign.size() - 1;

  Rng rng(derive_seed(seed, 0x511fu));
  rng.shuffle(benign);
  ds.benign_train.assign(benign.begin(), benign.end() - static_cast<std::ptrdiff_t>(n_test));
  ds.benign_test.assign(benign.end() - static_cast<std::ptrdiff_t>(n_test), benign.end());

  ds.attack_shortfall = attacks.size() < n_test;
  if (attacks.size() > n_test) {
    auto pick = rng.sample_without_replacement(attacks.size(), n_test);
    ds.attack_test.clear();
    for (std::size_t p : pick) ds.attack_test.push_back(attacks[p]);
  } else {
    ds.attack_test = attacks;
  }
}

}  // namespace fedmd

#endif  // FEDMD_DATAIO_HPP
