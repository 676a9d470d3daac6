#pragma once

#include <string>
#include <vector>

#include "pdd/config.hpp"
#include "pdd/engine.hpp"
#include "pdd/metrics.hpp"
#include "pdd/oracle.hpp"

namespace pdd {

// N chains of one configuration, paired-seed discipline: chain k uses seed
// base_seed + k for both its sampler and backend streams.
struct batch_result {
    std::vector<std::vector<token_id>> sequences;
    std::vector<std::vector<double>> totals; // [constraint][chain]
    std::vector<run_trace> traces;           // kept when requested
};

batch_result run_chains(const backend & model, const std::vector<constraint> & constraints,
                        const experiment_config & cfg, bool keep_traces, int n_threads = 0);

metric_report compute_metrics(const experiment_config & cfg, const batch_result & run,
                              const batch_result * reference, const constraint * c0);

// sample subcommand: runs the configured chains (plus requested baselines),
// writes sequences, metrics, and optional traces under cfg.out_dir.
int cmd_sample(const experiment_config & cfg);

// sweep subcommand: grid like "eta=0.1,0.5,1;slack=accumulated,instantaneous;target=4".
// Returns the CSV text (also written to <out>/sweep.csv).
std::string sweep_csv(const experiment_config & cfg, const std::string & grid_spec);
int cmd_sweep(const experiment_config & cfg, const std::string & grid_spec);

struct oracle_report {
    tilt_solution solution;
    double empirical_expectation = 0.0;
    double expectation_gap = 0.0;   // |E_hat[B] - R|
    double tv_distance = 0.0;       // empirical vs tilted distribution
    double empirical_kl = 0.0;      // KL(empirical || q)
    double kl_excess = 0.0;         // empirical_kl / kl_star - 1 (0 when kl_star = 0)
    long   chains = 0;

    std::string to_text() const;
};

oracle_report run_oracle(const experiment_config & cfg, long chains);
int cmd_oracle(const experiment_config & cfg, long chains);

run_trace load_run_trace(const std::string & path);

int cmd_analyze_consistency(const std::vector<std::string> & trace_paths, const std::string & out_dir,
                            double mu_bar = -1.0);
int cmd_analyze_bound(const std::vector<std::string> & trace_paths, const std::string & out_dir);

} // namespace pdd
