#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdd/backend.hpp"
#include "pdd/guidance.hpp"
#include "pdd/schedule.hpp"

namespace pdd {

struct base_spec {
    std::string kind = "uniform"; // uniform | zipf | explicit
    double zipf_s = 1.0;
    std::vector<double> probs;    // explicit

    std::vector<double> resolve(int vocab) const;
};

struct backend_config {
    std::string kind = "unigram"; // unigram | markov | drifting | trace
    int vocab = 2;
    base_spec base;
    std::vector<std::vector<double>> transitions; // markov
    double mu_bar = 0.0, sigma = 0.0, rho = 0.0;  // drifting
    std::string path;                             // trace
};

struct scorer_config {
    std::string kind; // lexical | additive | cluster | subsequence
    std::vector<token_id> targets;  // lexical
    std::vector<double>   values;   // additive inline
    std::string           file;     // additive / cluster file
    std::vector<token_id> pattern;  // subsequence
};

struct constraint_config {
    scorer_config scorer;
    double target = 0.0;
    double eta = 1.0;
    double lambda0 = 0.0;
    double lambda_max = 1e3;
    std::string slack = "accumulated";
    std::string scope = "scalar";
    double frontload_kappa = 0.0;
    std::string name;
};

struct experiment_config {
    int length = 1;
    int steps  = 1;
    int chains = 1;
    uint64_t seed = 0;

    std::string schedule_kind = "linear";
    double schedule_ratio = 0.8;
    std::vector<double> schedule_alpha;

    backend_config backend_cfg;
    std::vector<constraint_config> constraints;

    bool baseline_unconstrained = false;
    std::optional<double> static_alpha;

    std::vector<std::string> metrics = {"pass_rate"};
    std::string out_dir = "out";
    bool write_run_traces = false;
    bool record_logits = false;

    double bound_mu_bar = 0.0, bound_sigma = 0.0, bound_rho = 0.0, bound_delta = 0.05;

    static experiment_config from_json(const nlohmann::json & j);
    static experiment_config load(const std::string & path);
    nlohmann::json to_json() const;
    std::string canonical() const { return to_json().dump(); }
    std::string hash() const; // fnv-1a of the canonical form, hex

    void validate() const;

    mask_schedule            build_schedule() const;
    std::unique_ptr<backend> build_backend() const;
    std::vector<constraint>  build_constraints() const;
};

score_table build_scorer(const scorer_config & sc, const vocabulary & vocab, int length);

// token-score file: `token_index value` per line
std::vector<double> load_token_values(const std::string & path, int vocab);
// cluster metadata file: `token_index member_count tagged_count` per line
std::vector<cluster_entry> load_cluster_entries(const std::string & path);

} // namespace pdd
