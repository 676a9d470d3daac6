#include "pdd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace pdd {

double log_partition(std::span<const double> logp_row, std::span<const double> b_row,
                     double lambda, double r_over_l) {
    double m = -std::numeric_limits<double>::infinity();
    const size_t V = logp_row.size();
    for (size_t j = 0; j < V; ++j) {
        const double s = logp_row[j] + lambda * (b_row[j] - r_over_l);
        m = std::max(m, s);
    }
    if (!(m > -std::numeric_limits<double>::infinity()))
        throw contract_error("log_partition: empty support");
    double z = 0.0;
    for (size_t j = 0; j < V; ++j)
        z += std::exp(logp_row[j] + lambda * (b_row[j] - r_over_l) - m);
    return m + std::log(z);
}

namespace {

// Tilted expectation E_{r_lambda}[B] in extended precision.
long double tilted_expectation(const std::vector<double> & q, const std::vector<double> & b,
                               long double lambda) {
    long double m = -std::numeric_limits<long double>::infinity();
    for (size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0.0) continue;
        m = std::max(m, lambda * static_cast<long double>(b[i]));
    }
    long double z = 0.0L, num = 0.0L;
    for (size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0.0) continue;
        const long double w = static_cast<long double>(q[i]) *
                              std::exp(lambda * static_cast<long double>(b[i]) - m);
        z += w;
        num += w * static_cast<long double>(b[i]);
    }
    return num / z;
}

} // namespace

tilt_solution exact_tilt_projection(const std::vector<double> & q,
                                    const std::vector<double> & scores, double target) {
    if (q.size() != scores.size() || q.empty())
        throw config_error("tilt projection: q and scores must be parallel and non-empty");
    long double qsum = 0.0L;
    double bmax_support = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < q.size(); ++i) {
        if (q[i] < 0.0) throw config_error("tilt projection: negative probability");
        qsum += q[i];
        if (q[i] > 0.0) bmax_support = std::max(bmax_support, scores[i]);
    }
    if (std::fabs(static_cast<double>(qsum) - 1.0) > 1e-8)
        throw config_error("tilt projection: q does not sum to one");
    if (bmax_support < target)
        throw infeasible_error("tilt projection: max B on the support is below the target");

    tilt_solution sol;
    const long double e0 = tilted_expectation(q, scores, 0.0L);
    long double lam = 0.0L;
    if (static_cast<double>(e0) < target) {
        long double lo = 0.0L, hi = 1.0L;
        int guard = 0;
        while (tilted_expectation(q, scores, hi) < target) {
            hi *= 2.0L;
            if (++guard > 200)
                throw infeasible_error("tilt projection: target not reachable by tilting");
        }
        for (int it = 0; it < 200; ++it) {
            const long double mid = 0.5L * (lo + hi);
            const long double e = tilted_expectation(q, scores, mid);
            if (std::fabs(static_cast<double>(e - target)) <= 1e-10) { lo = hi = mid; break; }
            if (e < target) lo = mid; else hi = mid;
        }
        lam = 0.5L * (lo + hi);
    }
    sol.lambda_star = static_cast<double>(lam);

    // tilted distribution and KL in extended precision
    long double m = -std::numeric_limits<long double>::infinity();
    for (size_t i = 0; i < q.size(); ++i)
        if (q[i] > 0.0) m = std::max(m, lam * static_cast<long double>(scores[i]));
    long double z = 0.0L;
    std::vector<long double> w(q.size(), 0.0L);
    for (size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0.0) continue;
        w[i] = static_cast<long double>(q[i]) * std::exp(lam * static_cast<long double>(scores[i]) - m);
        z += w[i];
    }
    sol.distribution.resize(q.size());
    long double eb = 0.0L, kl = 0.0L;
    for (size_t i = 0; i < q.size(); ++i) {
        const long double r = w[i] / z;
        sol.distribution[i] = static_cast<double>(r);
        if (r > 0.0L) {
            eb += r * static_cast<long double>(scores[i]);
            kl += r * std::log(r / static_cast<long double>(q[i]));
        }
    }
    sol.expected_score = static_cast<double>(eb);
    sol.kl_nats        = std::max(0.0, static_cast<double>(kl));
    return sol;
}

std::vector<std::vector<token_id>> enumerate_sequences(int vocab, int length) {
    double count = std::pow(static_cast<double>(vocab), length);
    if (count > 1e6 + 0.5)
        throw config_error("enumeration limit exceeded: V^L > 1e6");
    const size_t n = static_cast<size_t>(count + 0.5);
    std::vector<std::vector<token_id>> seqs;
    seqs.reserve(n);
    std::vector<token_id> cur(static_cast<size_t>(length), 0);
    for (size_t i = 0; i < n; ++i) {
        seqs.push_back(cur);
        for (int l = length - 1; l >= 0; --l) {
            if (++cur[static_cast<size_t>(l)] < vocab) break;
            cur[static_cast<size_t>(l)] = 0;
        }
    }
    return seqs;
}

std::vector<double> sequence_scores(const score_table & table,
                                    const std::vector<std::vector<token_id>> & seqs) {
    std::vector<double> out;
    out.reserve(seqs.size());
    for (const auto & s : seqs) {
        double total = 0.0;
        for (size_t l = 0; l < s.size(); ++l)
            total += table.value(static_cast<int>(l), s[l]);
        out.push_back(total);
    }
    return out;
}

std::vector<double> product_distribution(std::span<const double> base_logp, int length) {
    const int V = static_cast<int>(base_logp.size());
    auto seqs = enumerate_sequences(V, length);
    std::vector<double> q;
    q.reserve(seqs.size());
    for (const auto & s : seqs) {
        long double lp = 0.0L;
        for (token_id t : s) lp += base_logp[static_cast<size_t>(t)];
        q.push_back(static_cast<double>(std::exp(lp)));
    }
    return q;
}

std::vector<double> exact_unconstrained_distribution(const backend & model,
                                                     const mask_schedule & schedule,
                                                     size_t max_states) {
    if (!model.deterministic_rows())
        throw config_error("exact distribution needs a backend with deterministic rows");
    const int L = model.length();
    const int V = model.vocab();
    const int T = schedule.steps;
    const vocabulary vocab = vocabulary::of_size(V);
    auto session = model.make_session();
    rng_stream dummy(0); // deterministic-row sessions never consume rng

    using state_key = std::vector<token_id>;
    std::map<state_key, double> dist;
    dist[sequence_state::fully_masked(L, vocab, T).tokens] = 1.0;

    logit_matrix rows;
    for (int t = T - 1; t >= 0; --t) {
        const double p_un = schedule.unmask_prob(t);
        std::map<state_key, double> next;
        for (const auto & [key, prob] : dist) {
            sequence_state x;
            x.tokens = key;
            x.step   = t + 1;
            session->rows(t, x, dummy, rows);
            // expand masked positions one at a time
            std::vector<std::pair<state_key, double>> frontier{{key, prob}};
            for (int l = 0; l < L; ++l) {
                if (key[static_cast<size_t>(l)] != vocab.mask_id) continue;
                auto row = rows.row(l);
                std::vector<std::pair<state_key, double>> expanded;
                expanded.reserve(frontier.size() * (static_cast<size_t>(V) + 1));
                for (auto & [s, p] : frontier) {
                    if (p_un < 1.0) {
                        expanded.emplace_back(s, p * (1.0 - p_un));
                    }
                    for (int j = 0; j < V; ++j) {
                        const double pj = std::exp(row[static_cast<size_t>(j)]);
                        if (pj <= 0.0) continue;
                        auto s2 = s;
                        s2[static_cast<size_t>(l)] = static_cast<token_id>(j);
                        expanded.emplace_back(std::move(s2), p * p_un * pj);
                    }
                }
                frontier = std::move(expanded);
            }
            for (auto & [s, p] : frontier) next[s] += p;
            if (next.size() > max_states)
                throw config_error("exact distribution: state limit exceeded");
        }
        dist = std::move(next);
    }

    auto seqs = enumerate_sequences(V, L);
    std::vector<double> out;
    out.reserve(seqs.size());
    for (const auto & s : seqs) {
        auto it = dist.find(s);
        out.push_back(it == dist.end() ? 0.0 : it->second);
    }
    return out;
}

double statement1_bound(const bound_inputs & in) {
    if (!(in.eta > 0.0)) throw std::domain_error("bound: eta must be > 0");
    if (!(in.logit_width > 0.0)) throw std::domain_error("bound: logit width must be > 0");
    const double denom = in.b_max - in.target / in.length;
    if (!(denom > 0.0)) throw std::domain_error("bound: need b_max > R/L");
    return (1.0 / in.eta) * std::log((in.eta + 1.0) * in.logit_width / denom);
}

bound_inputs bound_inputs_for(const backend & model, const constraint & c, double eta) {
    bound_inputs in;
    in.eta    = eta;
    in.target = c.target;
    in.length = model.length();
    in.logit_width = model.base_logp_max() - model.base_logp_min();
    double bmax = 0.0;
    if (c.scores.is_dynamic()) {
        bmax = c.scores.range();
    } else {
        for (int l = 0; l < (c.scores.layout() == score_layout::per_token ? 1 : model.length()); ++l)
            for (double v : c.scores.row(l)) bmax = std::max(bmax, v);
    }
    in.b_max = bmax;
    return in;
}

bound_trace evaluate_bound_trace(const run_trace & trace) {
    if (trace.steps.empty()) throw analysis_error("bound trace: empty run trace");
    bound_trace bt;
    size_t holds = 0;
    for (const auto & s : trace.steps) {
        bt.pi.push_back(s.pi_t);
        bt.bound.push_back(s.bound_t);
        bt.correction.push_back(s.bound_correction);
        bt.total_pi    += s.pi_t;
        bt.total_bound += s.bound_t;
        holds += (s.pi_t >= s.bound_t - 1e-9);
    }
    bt.hold_fraction = static_cast<double>(holds) / trace.steps.size();
    return bt;
}

} // namespace pdd
