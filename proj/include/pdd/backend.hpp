#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pdd/rng.hpp"
#include "pdd/types.hpp"

namespace pdd {

// Per-chain view of a backend. Sessions hold whatever evolves during one
// chain (drift accumulators, nothing for the stateless families).
class backend_session {
  public:
    virtual ~backend_session() = default;
    // Fill log-probability rows for every position masked in x. Called once
    // per step with t = T-1 .. 0; x is the state before this step's commits.
    virtual void rows(int t, const sequence_state & x, rng_stream & rng, logit_matrix & out) = 0;
};

// Immutable source of per-step log-probabilities p(x_t^l = j | x_{t+1}).
class backend {
  public:
    virtual ~backend() = default;
    virtual int vocab() const  = 0;
    virtual int length() const = 0;
    virtual std::string kind() const = 0;
    // Prior row at the fully masked start; used by bound evaluators.
    virtual std::span<const double> base_row(int pos) const = 0;
    virtual std::unique_ptr<backend_session> make_session() const = 0;
    // True when rows are a pure function of (t, x): eligible for exact
    // enumeration oracles.
    virtual bool deterministic_rows() const { return false; }

    // min/max finite base log-probabilities (bound evaluator inputs)
    double base_logp_min() const;
    double base_logp_max() const;
};

std::unique_ptr<backend> make_unigram_backend(int length, std::vector<double> base_probs);

// Masked rows condition on the nearest committed left neighbour; the base
// row is used when there is none.
std::unique_ptr<backend> make_markov_backend(int length, std::vector<double> base_probs,
                                             std::vector<std::vector<double>> transition_rows);

// Assumption-style generative process: raw row logits follow
// base + accumulated Gaussian increments, renormalised per row. Increments
// have mean mu_bar, variance sigma^2, and cross-position covariance rho
// realised via one shared per-token factor per step.
std::unique_ptr<backend> make_drifting_backend(int length, std::vector<double> base_probs,
                                               double mu_bar, double sigma, double rho);

// Replays rows recorded with trace_recorder; bit-exact. Missing (t, pos)
// lookups raise replay_error.
std::unique_ptr<backend> load_trace_backend(const std::string & path);

// Streams every row a wrapped session produces to a line-oriented text file
// with 17-significant-digit values (round-trips doubles exactly).
class trace_recorder {
  public:
    trace_recorder(std::string path, const backend & source, int steps, uint64_t seed);
    ~trace_recorder();
    trace_recorder(const trace_recorder &) = delete;
    trace_recorder & operator=(const trace_recorder &) = delete;

    // Wrap a session; rows pass through unchanged and are written out.
    std::unique_ptr<backend_session> wrap(std::unique_ptr<backend_session> inner);
    void flush();

  private:
    struct impl;
    std::unique_ptr<impl> impl_;
};

// Convenience helpers shared by backends and tests.
std::vector<double> normalized_log_probs(const std::vector<double> & probs);
std::vector<double> zipf_distribution(int vocab, double exponent);

} // namespace pdd
