#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pdd/backend.hpp"
#include "pdd/guidance.hpp"
#include "pdd/schedule.hpp"

namespace pdd {

struct run_config {
    int      length = 1;  // L
    int      steps  = 1;  // T
    uint64_t seed   = 0;
    // record per-step reward / leading-term lower bound (single scalar
    // constraint; zero otherwise)
    bool record_reward_bound = true;
    // optional stochastic correction parameters for the bound term
    double bound_mu_bar = 0.0;
    double bound_sigma  = 0.0;
    double bound_rho    = 0.0;
    double bound_delta  = 0.05;
};

struct step_record {
    int t = 0;
    std::vector<commit> commits;
    std::vector<double> lambda;       // per constraint, value in effect this step
    std::vector<double> slack;        // per constraint, slack after this step
    double pi_t    = 0.0;             // empirical per-step reward
    double bound_t = 0.0;             // leading-term lower bound
    double bound_correction = 0.0;    // stochastic correction (reported separately)
};

struct run_trace {
    std::vector<step_record> steps;   // exactly T records, t = T-1 .. 0
    std::vector<token_id> final_tokens;
    int elapsed_steps = 0;

    double total_contribution(const constraint & c) const;
    void   write_jsonl(std::ostream & out) const;
};

// Forward corruption: each position of a fully revealed x0 is masked
// independently with probability 1 - alpha_t. Analysis/testing helper.
sequence_state forward_mask(const sequence_state & x0, int t, const mask_schedule & schedule,
                            const vocabulary & vocab, rng_stream & rng);

// One reverse step: unmasked positions are copied verbatim; each masked
// position unmasks with the schedule probability and, if it does, draws its
// token from its (already biased) probability row. Rows must be normalised
// within 1e-9. RNG order: position 0..L-1, Bernoulli then categorical.
sequence_state reverse_step(const sequence_state & x_next,
                            const std::vector<std::vector<double>> & probs,
                            const mask_schedule & schedule, const vocabulary & vocab,
                            rng_stream & rng, std::vector<commit> * out_commits = nullptr);

// Full guided reverse loop. Constraints may be empty (unconstrained mode);
// a run with constraints whose eta = 0 and lambda0 = 0 is bit-identical to
// the unconstrained run at the same seed.
run_trace run_reverse(const backend & model, std::vector<constraint> constraints,
                      const run_config & config, const mask_schedule & schedule);

// Same loop against an externally created session (trace replay / recording).
run_trace run_reverse_with_session(const backend & model, backend_session & session,
                                   std::vector<constraint> constraints,
                                   const run_config & config, const mask_schedule & schedule);

} // namespace pdd
