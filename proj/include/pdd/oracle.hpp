#pragma once

#include <cstdint>
#include <vector>

#include "pdd/backend.hpp"
#include "pdd/engine.hpp"
#include "pdd/scores.hpp"

namespace pdd {

// log sum_i exp(logp_i + lambda * (b_i - r_over_l)), max-shifted.
double log_partition(std::span<const double> logp_row, std::span<const double> b_row,
                     double lambda, double r_over_l);

// Exact KL projection of q onto {r : E_r[B] >= R} — the exponential tilt
// r_lambda(x) ∝ q(x) e^{lambda B(x)} with lambda solved by bisection.
struct tilt_solution {
    double lambda_star = 0.0;
    std::vector<double> distribution; // over the enumerated outcome space
    double expected_score = 0.0;      // E_r[B]
    double kl_nats = 0.0;             // KL(r || q)
};

// q and scores are parallel arrays over an enumerated outcome space
// (V^L sequences). Bisection is run in extended precision to
// |E - R| <= 1e-10. Throws infeasible_error when max B < R.
tilt_solution exact_tilt_projection(const std::vector<double> & q,
                                    const std::vector<double> & scores, double target);

// Enumeration helpers for small instances (V^L limited by the caller).
std::vector<std::vector<token_id>> enumerate_sequences(int vocab, int length);
std::vector<double> sequence_scores(const score_table & table,
                                    const std::vector<std::vector<token_id>> & seqs);
// Product distribution from a unigram backend's base row.
std::vector<double> product_distribution(std::span<const double> base_logp, int length);

// Unconstrained final-sequence distribution induced by the reverse process
// for backends with deterministic rows (unigram, markov). Exact dynamic
// program over partially masked states; state count is capped.
std::vector<double> exact_unconstrained_distribution(const backend & model,
                                                     const mask_schedule & schedule,
                                                     size_t max_states = 200000);

// Closed-form violation bound (1/eta) log[(eta+1) (Pi_max - Pi_min) / (b_max - R/L)].
struct bound_inputs {
    double eta    = 1.0;
    double target = 0.0;   // R
    int    length = 1;     // L
    double b_max  = 1.0;   // max score entry
    double logit_width = 1.0; // Pi_max - Pi_min over base rows
};
double statement1_bound(const bound_inputs & in);
bound_inputs bound_inputs_for(const backend & model, const constraint & c, double eta);

// Per-step reward / lower-bound comparison over a recorded run.
struct bound_trace {
    std::vector<double> pi;
    std::vector<double> bound;
    std::vector<double> correction;
    double hold_fraction = 0.0; // share of steps with pi >= bound - 1e-9
    double total_pi      = 0.0;
    double total_bound   = 0.0;
};
bound_trace evaluate_bound_trace(const run_trace & trace);

} // namespace pdd
