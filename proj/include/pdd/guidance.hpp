#pragma once

#include <span>
#include <string>
#include <vector>

#include "pdd/scores.hpp"
#include "pdd/types.hpp"

namespace pdd {

enum class slack_mode { accumulated, instantaneous, early, optimistic };
enum class multiplier_scope { scalar, per_position };

slack_mode       slack_mode_from_string(const std::string & s);
multiplier_scope scope_from_string(const std::string & s);
std::string      to_string(slack_mode m);
std::string      to_string(multiplier_scope s);

// One soft at-least constraint: expected total contribution of the final
// sequence should reach `target`.
struct constraint {
    score_table scores;
    double target     = 0.0;  // R
    double eta        = 1.0;  // dual step size (>= 0; 0 freezes the multiplier)
    double lambda0    = 0.0;  // initial multiplier
    double lambda_max = 1e3;  // clamp ceiling
    slack_mode       slack = slack_mode::accumulated;
    multiplier_scope scope = multiplier_scope::scalar;
    // static-bias baseline: multiplier pinned at lambda0, no feedback
    bool pin_multiplier = false;
    std::string name;

    void validate(const vocabulary & vocab, int length);
};

// Mutable dual state of one constraint within one chain.
struct guidance_state {
    std::vector<double> lambda;      // size 1 (scalar) or L (per_position)
    double g_accumulated  = 0.0;     // running sum of (b - R/L) over commits
    double committed_total = 0.0;    // c, running sum of committed contributions
    double omd_prev  = 0.0;          // previous annealed prediction (optimistic)
    bool   omd_ready = false;
    std::vector<double> g_position;  // own-commit slack per position (per_position scope)
    std::vector<uint8_t> committed;  // per-position commit flags (double-commit check)

    void init(const constraint & c, int length);
    double lambda_at(int pos) const {
        return lambda.size() == 1 ? lambda[0] : lambda[static_cast<size_t>(pos)];
    }
};

struct commit {
    int      position;
    token_id token;
};

// a_j = p_j e^{lam b_j} / sum_i p_i e^{lam b_i}, computed in log space with
// a max shift. -inf log-probabilities yield exactly zero output mass.
// Throws contract_error when no token has support.
void apply_bias(std::span<const double> logp_row, std::span<const double> b_row,
                double lambda, std::span<double> out_probs);

std::vector<double> apply_bias(std::span<const double> logp_row,
                               std::span<const double> b_row, double lambda);

// Feedback-free baseline: softmax(logp + alpha * b). Same functional form
// as apply_bias at lambda = alpha.
std::vector<double> static_bias(std::span<const double> logp_row, double alpha,
                                std::span<const double> b_row);

// Multi-constraint composition: total exponent logp_j + sum_i lambda_i b_{i,j}.
struct bias_term {
    std::span<const double> b_row;
    double lambda;
};
void compose_bias(std::span<const double> logp_row, std::span<const bias_term> terms,
                  std::span<double> out_probs);

// Effective dual step size; ranges are rescaled only when composing two or
// more constraints (cross-scale balancing). Zero range leaves eta as is
// (constant scores make the constraint inert anyway).
double effective_eta(const constraint & c, size_t n_constraints);

// Sum over newly committed pairs of (b_{l,token} - R/L).
double slack_increment(std::span<const commit> commits, const constraint & c, int length);

// lambda = min(lambda_max, lambda0 * exp(-eta * g)); one-shot closed form.
double update_multiplier(double lambda0, double eta, double g, double lambda_max);

// Expected future contribution from masked positions and the implied
// shortfall prediction.
struct shortfall_prediction {
    double expected_future = 0.0;  // E-hat
    double shortfall       = 0.0;  // M = R - (c + E-hat)
    double annealed        = 0.0;  // (1 - unmasked_fraction) * M
};
shortfall_prediction optimistic_prediction(const sequence_state & x, const vocabulary & vocab,
                                           const logit_matrix & rows, const constraint & c,
                                           double committed_total);

struct slack_context {
    double unmasked_fraction = 0.0;     // after this step's commits
    double annealed_prediction = 0.0;   // current-step annealed M (optimistic)
};

// Slack fed to update_multiplier; also advances OMD memory for optimistic.
double compute_slack(slack_mode mode, guidance_state & state, const constraint & c,
                     const slack_context & ctx);

} // namespace pdd
