#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pdd/config.hpp"
#include "pdd/runner.hpp"

using namespace pdd;

namespace {

const char * kConfig = R"json({
  "run": {"length": 16, "steps": 8, "chains": 4, "seed": 42},
  "schedule": {"kind": "linear"},
  "backend": {"kind": "unigram", "vocab": 12, "base": {"kind": "zipf", "s": 1.0}},
  "constraints": [
    {"scorer": {"kind": "lexical", "targets": [3, 5]}, "target": 2.0,
     "eta": 1.5, "lambda0": 0.25, "lambda_max": 500.0,
     "slack": "instantaneous", "scope": "scalar", "frontload_kappa": 0.0}
  ],
  "baselines": {"unconstrained": true, "static_alpha": 1.0},
  "metrics": ["pass_rate", "unigram_kl", "dist2"],
  "output": {"dir": "out", "write_run_traces": false, "record_logits": false}
})json";

std::string temp_file(const char * name, const std::string & contents) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << contents;
    return path;
}

} // namespace

TEST_CASE("config round trip: parse -> serialise -> parse is identical") {
    auto cfg = experiment_config::from_json(nlohmann::json::parse(kConfig));
    const std::string canon = cfg.canonical();
    auto cfg2 = experiment_config::from_json(nlohmann::json::parse(canon));
    CHECK(cfg2.canonical() == canon);
    CHECK(cfg2.hash() == cfg.hash());
    CHECK(cfg2.length == 16);
    CHECK(cfg2.constraints[0].eta == 1.5);
    CHECK(cfg2.static_alpha.has_value());
}

TEST_CASE("config hash changes with any parameter") {
    auto cfg = experiment_config::from_json(nlohmann::json::parse(kConfig));
    auto cfg2 = cfg;
    cfg2.constraints[0].eta = 2.0;
    CHECK(cfg.hash() != cfg2.hash());
}

TEST_CASE("config validation failures") {
    auto j = nlohmann::json::parse(kConfig);
    SUBCASE("bad chains") {
        j["run"]["chains"] = 0;
        CHECK_THROWS_AS(experiment_config::from_json(j), config_error);
    }
    SUBCASE("bad slack mode") {
        j["constraints"][0]["slack"] = "sometimes";
        CHECK_THROWS_AS(experiment_config::from_json(j), config_error);
    }
    SUBCASE("lambda0 above the clamp") {
        j["constraints"][0]["lambda0"] = 1e6;
        CHECK_THROWS_AS(experiment_config::from_json(j), config_error);
    }
    SUBCASE("missing scorer file") {
        j["constraints"][0]["scorer"] = {{"kind", "additive"}, {"file", "/nonexistent/scores.txt"}};
        CHECK_THROWS_AS(experiment_config::from_json(j), config_error);
    }
}

TEST_CASE("config builds a working backend and constraints") {
    auto cfg = experiment_config::from_json(nlohmann::json::parse(kConfig));
    auto model = cfg.build_backend();
    CHECK(model->vocab() == 12);
    CHECK(model->length() == 16);
    auto cons = cfg.build_constraints();
    REQUIRE(cons.size() == 1);
    CHECK(cons[0].scores.value(0, 3) == 1.0);
    CHECK(cons[0].scores.value(0, 4) == 0.0);
    CHECK(cons[0].slack == slack_mode::instantaneous);
}

TEST_CASE("token score and cluster files parse and validate") {
    const auto scores = temp_file("pdd_scores.txt", "0 1.5\n1 2.0\n2 0.0\n");
    auto values = load_token_values(scores, 3);
    CHECK(values[1] == 2.0);
    CHECK_THROWS_AS(load_token_values(scores, 4), config_error); // token 3 missing

    const auto clusters = temp_file("pdd_clusters.txt", "0 50 1\n1 10 10\n2 4 0\n");
    auto entries = load_cluster_entries(clusters);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].tagged_count == 1);
    const auto vocab = vocabulary::of_size(3);
    auto table = cluster_fraction_scores(vocab, entries);
    CHECK(table.value(0, 0) == doctest::Approx(0.02));
}

TEST_CASE("grid sweep of one cell matches cmd_sample numbers") {
    auto cfg = experiment_config::from_json(nlohmann::json::parse(kConfig));
    cfg.chains = 32;
    const std::string csv = sweep_csv(cfg, "eta=1.5");
    // exactly one data row, and eta column carries the grid value
    const auto first_nl = csv.find('\n');
    const auto second_nl = csv.find('\n', first_nl + 1);
    CHECK(second_nl == csv.size() - 1);
    CHECK(csv.substr(first_nl + 1, 4) == "1.5,");

    // byte stability across repeated runs
    const std::string csv2 = sweep_csv(cfg, "eta=1.5");
    CHECK(csv == csv2);
}

TEST_CASE("grid parsing rejects malformed specs") {
    auto cfg = experiment_config::from_json(nlohmann::json::parse(kConfig));
    CHECK_THROWS_AS(sweep_csv(cfg, ""), config_error);
    CHECK_THROWS_AS(sweep_csv(cfg, "nonsense"), config_error);
    CHECK_THROWS_AS(sweep_csv(cfg, "gamma=1,2"), config_error);
}

TEST_CASE("run trace jsonl round trip") {
    auto cfg = experiment_config::from_json(nlohmann::json::parse(kConfig));
    auto model = cfg.build_backend();
    auto cons = cfg.build_constraints();
    run_config rc;
    rc.length = cfg.length;
    rc.steps = cfg.steps;
    rc.seed = 9;
    auto trace = run_reverse(*model, cons, rc, cfg.build_schedule());
    const auto path = (std::filesystem::temp_directory_path() / "pdd_runtrace.jsonl").string();
    {
        std::ofstream out(path);
        trace.write_jsonl(out);
    }
    auto loaded = load_run_trace(path);
    CHECK(loaded.steps.size() == trace.steps.size());
    CHECK(loaded.final_tokens == trace.final_tokens);
    for (size_t i = 0; i < trace.steps.size(); ++i) {
        CHECK(loaded.steps[i].t == trace.steps[i].t);
        CHECK(loaded.steps[i].pi_t == trace.steps[i].pi_t);
        CHECK(loaded.steps[i].bound_t == trace.steps[i].bound_t);
        CHECK(loaded.steps[i].lambda == trace.steps[i].lambda);
        CHECK(loaded.steps[i].slack == trace.steps[i].slack);
    }
}
