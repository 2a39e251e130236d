#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedmd/detection.hpp"
#include "fedmd/rng.hpp"

using namespace fedmd;
using Catch::Approx;

namespace {

GmmModel gaussian_1d(double mean, double var) {
  GmmModel g;
  g.weights = {1.0};
  g.means = Matrix(1, 1);
  g.means(0, 0) = mean;
  g.variances = Matrix(1, 1);
  g.variances(0, 0) = var;
  g.cluster_stds = Matrix(1, 1);
  g.cluster_stds(0, 0) = std::sqrt(var);
  return g;
}

/// VAE with all weights zero: every reconstruction is 0.5 in every dimension,
/// so 1-D histogram inputs (0 or 1) always reconstruct with error 0.5.
Autoencoder half_decoder(int input_dim) {
  auto m = make_autoencoder(ModelKind::Vae, input_dim, 0);
  m.net = zeros_like(m.net);
  return m;
}

DetectionThreshold fixed_threshold(double value) {
  DetectionThreshold th;
  th.value = value;
  th.mean = value;
  th.stddev = 0.0;
  return th;
}

Sample benign_at(double x) { return {Vec{x}, Label::benign()}; }
Sample attack_at(double x) { return {Vec{x}, Label::attacked(AttackKind::Random)}; }

}  // namespace

// ============================================================
// thresholds
// ============================================================

TEST_CASE("threshold is the error mean plus a small deviation margin", "[detection]") {
  auto th = threshold_from_errors({0.0, 2.0});
  CHECK(th.mean == Approx(1.0));
  CHECK(th.stddev == Approx(1.0));  // population std
  CHECK(th.multiplier == Approx(0.01));
  CHECK(th.value == Approx(1.01));

  auto same = threshold_from_errors({0.3, 0.3, 0.3});
  CHECK(same.value == Approx(0.3));

  auto wide = threshold_from_errors({0.0, 2.0}, 1.5);
  CHECK(wide.value == Approx(2.5));

  CHECK_THROWS_WITH(threshold_from_errors({0.5}),
                    Catch::Matchers::StartsWith("InsufficientData"));
}

TEST_CASE("threshold matches a direct computation on seeded errors", "[detection]") {
  Rng rng(20);
  Vec errors(1000);
  for (auto& e : errors) e = std::fabs(rng.normal(0.2, 0.05));
  auto th = threshold_from_errors(errors);
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= 1000.0;
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  double sd = std::sqrt(var / 1000.0);
  CHECK(th.value == Approx(mean + 0.01 * sd).margin(1e-12));
}

TEST_CASE("compute_threshold scores the training histograms", "[detection]") {
  auto m = make_autoencoder(ModelKind::Vae, 3, 4);
  Matrix hist(4, 3);
  hist.data = {1.0, 0.0, 0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 1.0, 1.0 / 3.0, 1.0, 0.0, 0.0};
  Vec errors;
  for (std::size_t i = 0; i < 4; ++i)
    errors.push_back(reconstruction_error(m, hist.row_vec(i)));
  auto expected = threshold_from_errors(errors);
  auto th = compute_threshold(m, hist);
  CHECK(th.value == Approx(expected.value).margin(1e-15));
  CHECK(th.mean == Approx(expected.mean).margin(1e-15));
  Matrix tiny(1, 3);
  CHECK_THROWS_WITH(compute_threshold(m, tiny), Catch::Matchers::StartsWith("InsufficientData"));
}

// ============================================================
// gated classification
// ============================================================

TEST_CASE("high density short-circuits to benign", "[detection]") {
  auto g = gaussian_1d(0.0, 1e-4);  // peak density ~ 39.9
  auto m = half_decoder(1);
  auto v = classify(g, m, fixed_threshold(0.0), {0.0});
  CHECK(!v.anomalous);
  CHECK(v.route == Route::GateHigh);
  CHECK(v.density > 1.0);
  CHECK(std::isnan(v.recon_error));
}

TEST_CASE("vanishing density short-circuits to anomalous", "[detection]") {
  auto g = gaussian_1d(0.0, 1.0);
  auto m = half_decoder(1);
  auto v = classify(g, m, fixed_threshold(10.0), {100.0});
  CHECK(v.anomalous);
  CHECK(v.route == Route::GateZero);
  CHECK(v.density <= kDefaultEpsZero);
  CHECK(std::isnan(v.recon_error));
}

TEST_CASE("intermediate densities go through the autoencoder", "[detection]") {
  auto g = gaussian_1d(0.0, 1.0);  // density at 0 is ~0.399, between the gates
  auto m = half_decoder(1);
  // the 1-D histogram of x = 0 is {1}; the zero net reconstructs 0.5
  auto hit = classify(g, m, fixed_threshold(0.4), {0.0});
  CHECK(hit.route == Route::VaeBranch);
  CHECK(hit.recon_error == Approx(0.5));
  CHECK(hit.anomalous);  // 0.5 > 0.4
  auto miss = classify(g, m, fixed_threshold(0.6), {0.0});
  CHECK(!miss.anomalous);  // 0.5 < 0.6
  // exactly at the threshold stays benign: the rule is strict excess
  auto edge = classify(g, m, fixed_threshold(0.5), {0.0});
  CHECK(!edge.anomalous);
}

TEST_CASE("the zero gate width is configurable", "[detection]") {
  auto g = gaussian_1d(0.0, 1.0);
  auto m = half_decoder(1);
  Vec x = {11.0};  // density ~ 2e-27: positive but under the default gate
  auto strict = classify(g, m, fixed_threshold(10.0), x);
  CHECK(strict.route == Route::GateZero);
  CHECK(strict.anomalous);
  auto literal = classify(g, m, fixed_threshold(10.0), x, 0.0);
  CHECK(literal.route == Route::VaeBranch);  // only true underflow is gated
  auto far = classify(g, m, fixed_threshold(10.0), {800.0}, 0.0);
  CHECK(far.route == Route::GateZero);  // exp underflows to exactly 0
}

// ============================================================
// metrics
// ============================================================

TEST_CASE("metrics_from_counts derives the standard ratios", "[detection]") {
  auto m = metrics_from_counts(3, 1, 5, 1);
  CHECK(m.total() == 10);
  CHECK(m.accuracy == Approx(0.8));
  CHECK(m.precision == Approx(0.75));
  CHECK(m.recall == Approx(0.75));
  CHECK(m.f1 == Approx(0.75));
  CHECK(m.precision_defined);
  CHECK(m.recall_defined);
  CHECK(m.f1_defined);
}

TEST_CASE("metrics with empty denominators are flagged, not faked", "[detection]") {
  // all-benign test set, nothing flagged: no positives anywhere
  auto clean = metrics_from_counts(0, 0, 5, 0);
  CHECK(clean.accuracy == Approx(1.0));
  CHECK(!clean.precision_defined);
  CHECK(!clean.recall_defined);
  CHECK(!clean.f1_defined);
  CHECK(clean.precision == 0.0);
  CHECK(clean.recall == 0.0);

  // attacks exist but nothing was flagged: recall is a true zero
  auto blind = metrics_from_counts(0, 0, 0, 5);
  CHECK(blind.recall_defined);
  CHECK(blind.recall == 0.0);
  CHECK(!blind.precision_defined);
  CHECK(!blind.f1_defined);

  // both ratios defined but zero: f1's denominator vanishes
  auto zero = metrics_from_counts(0, 1, 1, 1);
  CHECK(zero.precision_defined);
  CHECK(zero.recall_defined);
  CHECK(!zero.f1_defined);

  CHECK_THROWS_WITH(metrics_from_counts(0, 0, 0, 0), Catch::Matchers::StartsWith("EmptyInput"));
}

// ============================================================
// client and group evaluation
// ============================================================

namespace {

ClientDataset crafted_client() {
  ClientDataset ds;
  ds.client_id = "crafted";
  ds.samples = {benign_at(0.0), benign_at(0.5), attack_at(100.0), attack_at(0.2)};
  ds.benign_test = {0, 1};
  ds.attack_test = {2, 3};
  return ds;
}

}  // namespace

TEST_CASE("evaluate_client tallies verdicts per route", "[detection]") {
  auto g = gaussian_1d(0.0, 1.0);
  auto m = half_decoder(1);
  auto ds = crafted_client();

  // benign at 0 and 0.5 and the attack at 0.2 all reconstruct at 0.5 through
  // the autoencoder branch; the attack at 100 hits the zero gate
  auto lenient = evaluate_client(g, m, fixed_threshold(0.6), ds);
  CHECK(lenient.client_id == "crafted");
  CHECK(lenient.metrics.tp == 1);
  CHECK(lenient.metrics.fn == 1);
  CHECK(lenient.metrics.tn == 2);
  CHECK(lenient.metrics.fp == 0);
  CHECK(lenient.metrics.accuracy == Approx(0.75));
  CHECK(lenient.metrics.precision == Approx(1.0));
  CHECK(lenient.metrics.recall == Approx(0.5));
  CHECK(lenient.route_counts.at("vae_branch") == 3);
  CHECK(lenient.route_counts.at("gate_zero") == 1);
  CHECK(lenient.route_counts.at("gate_high") == 0);
  CHECK(lenient.ae_part_defined);
  CHECK(lenient.ae_part_total == 3);
  CHECK(lenient.ae_part_correct == 2);  // both benign right, the routed attack missed
  CHECK(lenient.ae_part_accuracy == Approx(2.0 / 3.0));

  auto strict = evaluate_client(g, m, fixed_threshold(0.4), ds);
  CHECK(strict.metrics.tp == 2);
  CHECK(strict.metrics.fp == 2);
  CHECK(strict.metrics.accuracy == Approx(0.5));
  CHECK(strict.ae_part_correct == 1);

  ClientDataset empty;
  empty.client_id = "empty";
  empty.samples = {benign_at(0.0)};
  CHECK_THROWS_WITH(evaluate_client(g, m, fixed_threshold(0.5), empty),
                    Catch::Matchers::StartsWith("EmptyDataset"));
}

TEST_CASE("group evaluation averages clients and pools the confusion", "[detection]") {
  ClientEvaluation a;
  a.client_id = "a";
  a.metrics = metrics_from_counts(4, 0, 4, 2);  // acc 0.8, prec 1, rec 2/3
  a.ae_part_defined = true;
  a.ae_part_accuracy = 0.8;
  ClientEvaluation b;
  b.client_id = "b";
  b.metrics = metrics_from_counts(1, 1, 7, 1);  // acc 0.8, prec 0.5, rec 0.5
  b.ae_part_defined = false;

  auto grp = evaluate_group({a, b});
  CHECK(grp.n_clients == 2);
  CHECK(grp.mean_accuracy == Approx(0.8));
  CHECK(grp.mean_precision == Approx(0.75));
  CHECK(grp.mean_recall == Approx((2.0 / 3.0 + 0.5) / 2.0));
  CHECK(grp.pooled.tp == 5);
  CHECK(grp.pooled.fp == 1);
  CHECK(grp.pooled.tn == 11);
  CHECK(grp.pooled.fn == 3);
  CHECK(grp.pooled.accuracy == Approx(16.0 / 20.0));
  // the undefined client is left out of the branch-accuracy mean
  CHECK(grp.ae_part_defined);
  CHECK(grp.mean_ae_part_accuracy == Approx(0.8));

  CHECK_THROWS_WITH(evaluate_group({}), Catch::Matchers::StartsWith("EmptyInput"));
}

TEST_CASE("far outliers are caught by the zero gate alone", "[detection]") {
  // end to end on a fitted model: benign traffic near zero, attacks at such a
  // distance that the mixture density underflows
  Rng rng(60);
  Matrix train(50, 2);
  for (double& v : train.data) v = rng.normal(0.0, 1.0);
  auto g = fit_em(train, 2, 60, 1e-8, 14);
  Matrix train_hist = histogram_batch(g, train);
  auto m = half_decoder(static_cast<int>(g.k()));
  auto th = compute_threshold(m, train_hist);

  ClientDataset ds;
  ds.client_id = "outliers";
  for (int i = 0; i < 10; ++i) {
    ds.samples.push_back({Vec{rng.normal(), rng.normal()}, Label::benign()});
    ds.benign_test.push_back(ds.samples.size() - 1);
  }
  for (int i = 0; i < 10; ++i) {
    ds.samples.push_back(
        {Vec{rng.normal(500.0, 1.0), rng.normal(500.0, 1.0)},
         Label::attacked(AttackKind::ConstantOffset)});
    ds.attack_test.push_back(ds.samples.size() - 1);
  }
  auto ev = evaluate_client(g, m, th, ds);
  CHECK(ev.metrics.recall == 1.0);
  CHECK(ev.route_counts.at("gate_zero") >= 10);  // every attack under the gate
}
