#pragma once

#include <map>
#include <string>
#include <vector>

#include "pdd/types.hpp"

namespace pdd {

struct pass_result {
    double fraction = 0.0;
    double std_error = 0.0;
};

// Fraction of sample totals meeting the target, with binomial SE.
pass_result pass_rate(const std::vector<double> & totals, double target);

// KL(P_hat || Q_hat) over add-epsilon smoothed unigram frequencies.
// epsilon < 0 selects the per-side Jeffreys default 0.5/N. The mask token
// is excluded by construction (samples hold data tokens only).
double unigram_kl(const std::vector<std::vector<token_id>> & samples_p,
                  const std::vector<std::vector<token_id>> & samples_q,
                  int vocab, double epsilon = -1.0);

struct dist_n_result {
    double ratio = 0.0;
    long   skipped_samples = 0; // shorter than n
};
// distinct n-grams / total n-grams, pooled over samples.
dist_n_result dist_n(const std::vector<std::vector<token_id>> & samples, int n);

// Mean pairwise Jaccard distance between the samples' token sets.
double jaccard_diversity(const std::vector<std::vector<token_id>> & samples);

struct metric_report {
    double pass_fraction = 0.0;
    double pass_std_error = 0.0;
    double mean_contribution = 0.0; // c-bar
    double overshoot_ratio = 0.0;   // c-bar / R
    double kl_nats = -1.0;          // vs reference samples, -1 when not computed
    double dist2 = -1.0;
    double jaccard = -1.0;
    double mean_violation = 0.0;    // mean of max(0, R - c)

    std::string to_text() const;
};

// Recorded per-chain logit rows, keyed by (step, position). One entry per
// chain; produced by trace files or in-memory recording.
struct chain_rows {
    int vocab = 0;
    std::map<std::pair<int, int>, std::vector<double>> rows;
};

struct consistency_report {
    std::vector<double> sigma_t;   // per-step increment std, indexed from t = T-2 down
    std::vector<int>    step_ids;
    double sigma_mean = 0.0;       // RMS-pooled
    double mean_drift = 0.0;       // pooled mean of centred increments
    double rho_mean = 0.0;         // mean cross-position covariance of residuals
    double excess_kurtosis = 0.0;
    long   increment_count = 0;
    double mu_bar_ref = -1.0;      // supplied drift bound; < 0 when unset
    bool   drift_within_bound = true; // |mean_drift| <= mu_bar_ref when set

    std::string to_text() const;
};

// Assumption-style estimator on recorded rows: increments are taken only at
// positions masked at both consecutive steps, mean-centred over tokens to
// remove the per-row normalisation shift (variances rescaled by V/(V-1)),
// then residualised against the per-(t,j,l) mean across chains. Needs at
// least two chains covering some (t,l). A non-negative mu_bar enables the
// drift-bound check.
consistency_report temporal_consistency(const std::vector<chain_rows> & chains,
                                        double mu_bar = -1.0);

chain_rows load_chain_rows(const std::string & trace_path);

} // namespace pdd
