#include "pdd/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdd {

slack_mode slack_mode_from_string(const std::string & s) {
    if (s == "accumulated")   return slack_mode::accumulated;
    if (s == "instantaneous") return slack_mode::instantaneous;
    if (s == "early")         return slack_mode::early;
    if (s == "optimistic")    return slack_mode::optimistic;
    throw config_error("unknown slack mode: " + s);
}

multiplier_scope scope_from_string(const std::string & s) {
    if (s == "scalar")       return multiplier_scope::scalar;
    if (s == "per_position") return multiplier_scope::per_position;
    throw config_error("unknown multiplier scope: " + s);
}

std::string to_string(slack_mode m) {
    switch (m) {
        case slack_mode::accumulated:   return "accumulated";
        case slack_mode::instantaneous: return "instantaneous";
        case slack_mode::early:         return "early";
        case slack_mode::optimistic:    return "optimistic";
    }
    return "?";
}

std::string to_string(multiplier_scope s) {
    return s == multiplier_scope::scalar ? "scalar" : "per_position";
}

void constraint::validate(const vocabulary & vocab, int length) {
    scores.check_compatible(vocab, length);
    if (!(target >= 0.0)) throw config_error("constraint: target R must be >= 0");
    if (!(eta >= 0.0))    throw config_error("constraint: eta must be >= 0");
    if (!(lambda_max > 0.0)) throw config_error("constraint: lambda_max must be > 0");
    if (!(lambda0 >= 0.0) || lambda0 > lambda_max)
        throw config_error("constraint: need 0 <= lambda0 <= lambda_max");
}

void guidance_state::init(const constraint & c, int length) {
    const size_t n = c.scope == multiplier_scope::per_position ? static_cast<size_t>(length) : 1;
    lambda.assign(n, c.lambda0);
    g_accumulated   = 0.0;
    committed_total = 0.0;
    omd_prev  = 0.0;
    omd_ready = false;
    g_position.assign(static_cast<size_t>(length), 0.0);
    committed.assign(static_cast<size_t>(length), 0);
}

namespace {

void normalize_exponents(std::span<double> s, std::span<double> out) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : s) m = std::max(m, v);
    if (!(m > -std::numeric_limits<double>::infinity()))
        throw contract_error("biased row has empty support (all -inf)");
    double z = 0.0;
    for (size_t j = 0; j < s.size(); ++j) {
        const double e = std::exp(s[j] - m);
        out[j] = e;
        z += e;
    }
    for (size_t j = 0; j < s.size(); ++j) out[j] /= z;
}

} // namespace

void apply_bias(std::span<const double> logp_row, std::span<const double> b_row,
                double lambda, std::span<double> out_probs) {
    const size_t V = logp_row.size();
    std::vector<double> s(V);
    for (size_t j = 0; j < V; ++j) s[j] = logp_row[j] + lambda * b_row[j];
    normalize_exponents(s, out_probs);
}

std::vector<double> apply_bias(std::span<const double> logp_row,
                               std::span<const double> b_row, double lambda) {
    std::vector<double> out(logp_row.size());
    apply_bias(logp_row, b_row, lambda, out);
    return out;
}

std::vector<double> static_bias(std::span<const double> logp_row, double alpha,
                                std::span<const double> b_row) {
    return apply_bias(logp_row, b_row, alpha);
}

void compose_bias(std::span<const double> logp_row, std::span<const bias_term> terms,
                  std::span<double> out_probs) {
    const size_t V = logp_row.size();
    std::vector<double> s(logp_row.begin(), logp_row.end());
    for (const auto & term : terms) {
        if (term.b_row.size() != V)
            throw config_error("composed constraints disagree on vocabulary size");
        for (size_t j = 0; j < V; ++j) s[j] += term.lambda * term.b_row[j];
    }
    normalize_exponents(s, out_probs);
}

double effective_eta(const constraint & c, size_t n_constraints) {
    if (n_constraints < 2) return c.eta;
    const double r = c.scores.range();
    return r > 0.0 ? c.eta / r : c.eta;
}

double slack_increment(std::span<const commit> commits, const constraint & c, int length) {
    const double per_pos_target = c.target / length;
    double delta = 0.0;
    for (const auto & cm : commits)
        delta += c.scores.value(cm.position, cm.token) - per_pos_target;
    return delta;
}

double update_multiplier(double lambda0, double eta, double g, double lambda_max) {
    const double raw = lambda0 * std::exp(-eta * g);
    return std::min(lambda_max, raw); // overflow saturates at the clamp
}

shortfall_prediction optimistic_prediction(const sequence_state & x, const vocabulary & vocab,
                                           const logit_matrix & rows, const constraint & c,
                                           double committed_total) {
    shortfall_prediction p;
    const int L = x.length();
    std::vector<double> probs(static_cast<size_t>(rows.vocab));
    for (int l = 0; l < L; ++l) {
        if (!x.is_masked(l, vocab)) continue;
        if (!rows.row_set[static_cast<size_t>(l)])
            throw contract_error("optimistic prediction: missing row for masked position");
        auto logp = rows.row(l);
        double m = -std::numeric_limits<double>::infinity();
        for (double v : logp) m = std::max(m, v);
        double z = 0.0;
        for (size_t j = 0; j < probs.size(); ++j) {
            probs[j] = std::exp(logp[j] - m);
            z += probs[j];
        }
        auto b = c.scores.row(l);
        double e = 0.0;
        for (size_t j = 0; j < probs.size(); ++j) e += (probs[j] / z) * b[j];
        p.expected_future += e;
    }
    p.shortfall = c.target - (committed_total + p.expected_future);
    const double unmasked = 1.0 - static_cast<double>(x.masked_count(vocab)) / L;
    p.annealed = (1.0 - unmasked) * p.shortfall;
    return p;
}

double compute_slack(slack_mode mode, guidance_state & state, const constraint & c,
                     const slack_context & ctx) {
    switch (mode) {
        case slack_mode::accumulated:
            return state.g_accumulated;
        case slack_mode::instantaneous:
            return state.committed_total - c.target;
        case slack_mode::early:
            // instantaneous slack scaled by the masked fraction: pressure
            // concentrates while most of the sequence is still open
            return (state.committed_total - c.target) * (1.0 - ctx.unmasked_fraction);
        case slack_mode::optimistic: {
            if (!state.omd_ready)
                throw contract_error("optimistic slack used before prediction was seeded");
            const double g = (state.committed_total - c.target) +
                             (state.omd_prev - ctx.annealed_prediction);
            state.omd_prev = ctx.annealed_prediction;
            return g;
        }
    }
    throw config_error("unknown slack mode");
}

} // namespace pdd
