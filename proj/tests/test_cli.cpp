#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "fedmd/pipeline.hpp"

using namespace fedmd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& sub) {
  fs::path p = fs::temp_directory_path() / "fedmd_cli_tests" / sub;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Json minimal_synthetic_config() {
  return Json{{"data", {{"synthetic", {{"n_clients", 2},
                                       {"benign_per_client", 60},
                                       {"attack_fraction", 0.25},
                                       {"dim", 3}}}}}};
}

/// Small enough to train in milliseconds but large enough that every stage
/// does real work.
ScenarioConfig tiny_scenario(const std::string& out_sub) {
  ScenarioConfig cfg = minimal_synthetic_config().get<ScenarioConfig>();
  cfg.gmm.grid = {2};
  cfg.gmm.max_iters = 30;
  cfg.federation.rounds = 3;
  cfg.federation.lr = 0.05;
  cfg.model.rbm_epochs = 3;
  cfg.seed = 11;
  cfg.deterministic = true;
  cfg.out_dir = temp_dir(out_sub).string();
  return cfg;
}

}  // namespace

TEST_CASE("config defaults fill every field the file omits", "[cli]") {
  ScenarioConfig cfg = minimal_synthetic_config().get<ScenarioConfig>();
  CHECK(cfg.use_synthetic);
  CHECK(cfg.synthetic.n_clients == 2);
  CHECK(cfg.synthetic.benign_per_client == 60);
  CHECK(cfg.synthetic.dim == 3);
  CHECK(cfg.balance);
  CHECK(cfg.smote_neighbors == 5);
  CHECK(cfg.normalize);
  CHECK_FALSE(cfg.shapiro_check);
  CHECK(cfg.test_fraction == 0.2);
  CHECK(cfg.gmm.grid.empty());
  CHECK(cfg.gmm.max_iters == 100);
  CHECK(cfg.model.kind == ModelKind::Vae);
  CHECK(cfg.model.use_rbm_init);
  CHECK(cfg.federation.rounds == 30);
  CHECK(cfg.federation.theta == 0.5);
  CHECK(cfg.federation.aggregation == Aggregation::FedPlus);
  CHECK(cfg.lr_grid == std::vector<double>{0.001, 0.005, 0.01, 0.05, 0.1});
  CHECK(cfg.eps_zero == 1e-12);
  CHECK(cfg.threshold_multiplier == 0.01);
  CHECK(cfg.seed == 0);
  CHECK_FALSE(cfg.deterministic);
}

TEST_CASE("config files override defaults", "[cli]") {
  Json j = minimal_synthetic_config();
  j["model"] = {{"kind", "ae"}, {"use_rbm_init", false}};
  j["federation"] = {{"rounds", 7}, {"theta", 0.25}, {"aggregation", "fedavg"}};
  j["gmm"] = {{"grid", {2, 4}}, {"tol", 1e-4}};
  j["lr_grid"] = {0.02};
  j["eps_zero"] = 0.0;
  j["seed"] = 99;
  j["data"]["synthetic"]["attack_kinds"] = {"constant", "random_offset"};
  ScenarioConfig cfg = j.get<ScenarioConfig>();
  CHECK(cfg.model.kind == ModelKind::Ae);
  CHECK_FALSE(cfg.model.use_rbm_init);
  CHECK(cfg.federation.rounds == 7);
  CHECK(cfg.federation.theta == 0.25);
  CHECK(cfg.federation.aggregation == Aggregation::FedAvg);
  CHECK(cfg.gmm.grid == std::vector<int>{2, 4});
  CHECK(cfg.gmm.tol == 1e-4);
  CHECK(cfg.lr_grid == std::vector<double>{0.02});
  CHECK(cfg.eps_zero == 0.0);
  CHECK(cfg.seed == 99);
  REQUIRE(cfg.synthetic.options.kinds.size() == 2);
  CHECK(cfg.synthetic.options.kinds[0] == AttackKind::Constant);
  CHECK(cfg.synthetic.options.kinds[1] == AttackKind::RandomOffset);
}

TEST_CASE("config validation rejects malformed input", "[cli]") {
  auto parse = [](Json j) { return j.get<ScenarioConfig>(); };

  SECTION("unknown top-level key") {
    Json j = minimal_synthetic_config();
    j["bogus"] = 1;
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("unknown key 'bogus'"));
  }
  SECTION("unknown nested key") {
    Json j = minimal_synthetic_config();
    j["gmm"] = {{"grdi", {2}}};
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("grdi"));
  }
  SECTION("missing data section") {
    CHECK_THROWS_WITH(parse(Json::object()),
                      Catch::Matchers::ContainsSubstring("missing 'data'"));
  }
  SECTION("both data sources") {
    Json j = minimal_synthetic_config();
    j["data"]["csv_dir"] = "/somewhere";
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("exactly one"));
  }
  SECTION("neither data source") {
    CHECK_THROWS_WITH(parse(Json{{"data", Json::object()}}),
                      Catch::Matchers::ContainsSubstring("exactly one"));
  }
  SECTION("federation seed is not configurable") {
    Json j = minimal_synthetic_config();
    j["federation"] = {{"seed", 5}};
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("unknown key 'seed'"));
  }
  SECTION("bad aggregation name") {
    Json j = minimal_synthetic_config();
    j["federation"] = {{"aggregation", "fancy"}};
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("fancy"));
  }
  SECTION("bad model kind") {
    Json j = minimal_synthetic_config();
    j["model"] = {{"kind", "gan"}};
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("gan"));
  }
  SECTION("bad attack kind") {
    Json j = minimal_synthetic_config();
    j["data"]["synthetic"]["attack_kinds"] = {"teleport"};
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("teleport"));
  }
  SECTION("empty lr grid") {
    Json j = minimal_synthetic_config();
    j["lr_grid"] = Json::array();
    CHECK_THROWS_WITH(parse(j), Catch::Matchers::ContainsSubstring("lr_grid"));
  }
}

TEST_CASE("config round-trips through its JSON form", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("roundtrip");
  cfg.shapiro_check = true;
  cfg.synthetic.options.kinds = {AttackKind::ConstantOffset, AttackKind::EventualStop};
  Json once = cfg;
  ScenarioConfig back = once.get<ScenarioConfig>();
  Json twice = back;
  CHECK(once.dump() == twice.dump());
  CHECK_FALSE(once.at("federation").contains("seed"));
}

TEST_CASE("matrix and model serialization round-trips", "[cli]") {
  SECTION("matrix") {
    Matrix m(2, 3);
    m.data = {1.5, -2.0, 0.0, 3.25, 1e-300, 7.0};
    Json j = m;
    Matrix back = j.get<Matrix>();
    CHECK(back == m);
    j["data"] = {1.0};
    CHECK_THROWS_WITH(j.get<Matrix>(),
                      Catch::Matchers::ContainsSubstring("matrix data length"));
  }
  SECTION("gmm") {
    Rng rng(3);
    Matrix data(40, 2);
    for (auto& v : data.data) v = rng.uniform();
    GmmModel g = fit_em(data, 2, 20, 1e-6, 5);
    Json j = g;
    GmmModel back = j.get<GmmModel>();
    CHECK(back.weights == g.weights);
    CHECK(back.means == g.means);
    CHECK(back.variances == g.variances);
    CHECK(back.cluster_stds == g.cluster_stds);
    CHECK(back.log_likelihood_trace == g.log_likelihood_trace);
  }
  SECTION("federation config carries the aggregation by name") {
    FederationConfig f;
    f.aggregation = Aggregation::FedAvg;
    Json j = f;
    CHECK(j.at("aggregation") == "fedavg");
    FederationConfig back = j.get<FederationConfig>();
    CHECK(back.aggregation == Aggregation::FedAvg);
  }
}

TEST_CASE("strip_timings removes timing fields everywhere", "[cli]") {
  Json j = {{"seconds", 1.5},
            {"timings", {{"gmm", 0.1}}},
            {"keep", 1},
            {"nested", {{"seconds", 2.0}, {"list", {Json{{"seconds", 3.0}, {"x", 4}}}}}}};
  strip_timings(j);
  CHECK_FALSE(j.contains("seconds"));
  CHECK_FALSE(j.contains("timings"));
  CHECK(j.at("keep") == 1);
  CHECK_FALSE(j.at("nested").contains("seconds"));
  CHECK_FALSE(j.at("nested").at("list")[0].contains("seconds"));
  CHECK(j.at("nested").at("list")[0].at("x") == 4);
}

TEST_CASE("generate writes loadable per-client csv files", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("generate");
  Json manifest = cmd_generate(cfg);
  CHECK(manifest.at("command") == "generate");
  REQUIRE(manifest.at("files").size() == 2);
  for (const auto& [id, entry] : manifest.at("files").items()) {
    ClientDataset ds = load_csv(entry.at("path").get<std::string>());
    CHECK(ds.count_benign() == entry.at("n_benign").get<std::size_t>());
    CHECK(ds.count_attack() == entry.at("n_attack").get<std::size_t>());
    CHECK(ds.dim() == 3);
    CHECK(id.substr(0, 7) == "client_");
  }
  CHECK(fs::exists(fs::path(cfg.out_dir) / "generate_manifest.json"));
}

TEST_CASE("run writes the full artifact set", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("artifacts");
  Json report = cmd_run(cfg);
  fs::path out(cfg.out_dir);

  CHECK(report.at("command") == "run");
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "metrics.txt"));
  CHECK(fs::exists(out / "rounds.jsonl"));

  // the echoed config reproduces the run; the federation seed is derived
  // from the scenario seed, never configured
  const Json& echoed = report.at("config");
  CHECK(echoed.at("seed") == 11);
  CHECK_FALSE(echoed.at("federation").contains("seed"));
  CHECK(echoed.at("federation").at("rounds") == 3);

  // one gmm json and one weights blob per client
  std::vector<std::string> ids;
  for (const auto& [id, entry] : report.at("clients").items()) {
    ids.push_back(id);
    CHECK(fs::exists(out / "gmm" / (id + ".json")));
    CHECK(fs::exists(out / "weights" / (id + ".bin")));
    CHECK(entry.at("best_k") == 2);
    GmmModel g = load_json_file((out / "gmm" / (id + ".json")).string()).get<GmmModel>();
    CHECK(g.k() == 2);
    CHECK(g.dim() == 3);
    NetworkWeights net = load_weights((out / "weights" / (id + ".bin")).string());
    CHECK(net.layers.size() == 5);  // vae layer stack
  }
  REQUIRE(ids.size() == 2);

  // rounds.jsonl holds rounds x groups lines tagged with the group k
  std::ifstream rounds(out / "rounds.jsonl");
  std::string line;
  std::size_t n_lines = 0;
  while (std::getline(rounds, line)) {
    Json r = Json::parse(line);
    CHECK(r.at("group_k") == 2);
    CHECK(r.at("z_checksum").get<std::string>().size() == 16);
    ++n_lines;
  }
  CHECK(n_lines == 3);  // both clients share k=2, so a single group

  // saved report matches the returned one
  CHECK(load_json_file((out / "report.json").string()) == report);

  // every pipeline stage reports its wall clock
  for (const char* stage : {"balance", "normalize", "split", "gmm", "histograms", "rbm",
                            "federation", "threshold", "detect", "total"}) {
    REQUIRE(report.at("timings").contains(stage));
    CHECK(report.at("timings").at(stage).get<double>() >= 0.0);
  }

  // the text rendering shows every client and the timing table
  std::string text = read_file(out / "metrics.txt");
  for (const auto& id : ids) CHECK(text.find(id) != std::string::npos);
  CHECK(text.find("overall") != std::string::npos);
  CHECK(text.find("timings") != std::string::npos);
}

TEST_CASE("turning rbm pretraining off changes only the model init", "[cli]") {
  ScenarioConfig with = tiny_scenario("rbm_on");
  ScenarioConfig without = tiny_scenario("rbm_off");
  without.model.use_rbm_init = false;

  Json ra = cmd_run(with);
  Json rb = cmd_run(without);

  // clustering artifacts are byte-identical because the stages before model
  // init never see the model settings
  for (const auto& [id, entry] : ra.at("clients").items()) {
    (void)entry;
    CHECK(read_file(fs::path(with.out_dir) / "gmm" / (id + ".json")) ==
          read_file(fs::path(without.out_dir) / "gmm" / (id + ".json")));
  }
  Json ca = ra.at("clients");
  Json cb = rb.at("clients");
  strip_timings(ca);
  strip_timings(cb);
  CHECK(ca == cb);

  // training starts from different weights, so the trajectories differ
  CHECK(ra.at("trained").at("groups") != rb.at("trained").at("groups"));
}

TEST_CASE("deterministic runs reproduce the report byte for byte", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("determinism");
  Json first = cmd_run(cfg);
  Json second = cmd_run(cfg);  // same out_dir: artifacts overwritten in place
  strip_timings(first);
  strip_timings(second);
  REQUIRE(first.dump(2) == second.dump(2));
}

TEST_CASE("sweep-lr emits one row per kind and learning rate", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("sweep");
  cfg.lr_grid = {0.01, 0.05};
  Json report = cmd_sweep_lr(cfg);
  CHECK(report.at("command") == "sweep-lr");
  const Json& rows = report.at("rows");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].at("kind") == "vae");
  CHECK(rows[0].at("lr") == 0.01);
  CHECK(rows[1].at("kind") == "vae");
  CHECK(rows[1].at("lr") == 0.05);
  CHECK(rows[2].at("kind") == "ae");
  CHECK(rows[3].at("kind") == "ae");
  for (const auto& row : rows) {
    double acc = row.at("overall").at("mean_accuracy").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  CHECK(fs::exists(fs::path(cfg.out_dir) / "sweep.json"));
  std::string text = read_file(fs::path(cfg.out_dir) / "sweep.txt");
  CHECK(text.find("kind") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);  // header + 4 rows

  // the default grid holds five learning rates, giving the full ten rows
  ScenarioConfig full = tiny_scenario("sweep_default");
  Json wide = cmd_sweep_lr(full);
  CHECK(wide.at("rows").size() == 10);
}

TEST_CASE("compare crosses training mode, model kind and learning rate", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("compare");
  cfg.lr_grid = {0.05};
  Json report = cmd_compare(cfg);
  CHECK(report.at("command") == "compare");
  const Json& rows = report.at("rows");
  REQUIRE(rows.size() == 4);  // 2 modes x 2 kinds x 1 lr
  CHECK(rows[0].at("mode") == "federated");
  CHECK(rows[0].at("kind") == "vae");
  CHECK(rows[1].at("mode") == "federated");
  CHECK(rows[1].at("kind") == "ae");
  CHECK(rows[2].at("mode") == "distributed");
  CHECK(rows[3].at("mode") == "distributed");
  CHECK(fs::exists(fs::path(cfg.out_dir) / "compare.json"));
  std::string text = read_file(fs::path(cfg.out_dir) / "compare.txt");
  CHECK(text.find("federated") != std::string::npos);
  CHECK(text.find("distributed") != std::string::npos);
}

TEST_CASE("render_report dispatches on the command field", "[cli]") {
  ScenarioConfig cfg = tiny_scenario("render");
  cfg.lr_grid = {0.05};
  Json run_report = cmd_run(cfg);
  CHECK(render_report(run_report).find("scenario:") == 0);
  Json sweep_report = cmd_sweep_lr(cfg);
  std::string table = render_report(sweep_report);
  CHECK(table.find("scenario:") == std::string::npos);
  CHECK(table.find("ae_part") != std::string::npos);
}

TEST_CASE("thread cap follows the FEDMD_THREADS variable", "[cli]") {
  setenv("FEDMD_THREADS", "3", 1);
  CHECK(thread_cap() == 3);
  unsetenv("FEDMD_THREADS");
  CHECK(thread_cap() >= 1);

  // a deterministic scenario always trains single-threaded
  ScenarioConfig cfg;
  cfg.deterministic = true;
  cfg.max_threads = 8;
  CHECK(cfg.threads() == 1);
  cfg.deterministic = false;
  CHECK(cfg.threads() == 8);
}
