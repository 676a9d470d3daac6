#include "pdd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "pdd/oracle.hpp"

namespace pdd {

sequence_state forward_mask(const sequence_state & x0, int t, const mask_schedule & schedule,
                            const vocabulary & vocab, rng_stream & rng) {
    for (token_id tok : x0.tokens) {
        if (!vocab.is_data_token(tok))
            throw contract_error("forward_mask: x0 must be fully unmasked");
    }
    const double keep = schedule.alpha(t);
    sequence_state out = x0;
    out.step = t;
    for (auto & tok : out.tokens) {
        if (rng.uniform() >= keep) tok = vocab.mask_id;
    }
    return out;
}

sequence_state reverse_step(const sequence_state & x_next,
                            const std::vector<std::vector<double>> & probs,
                            const mask_schedule & schedule, const vocabulary & vocab,
                            rng_stream & rng, std::vector<commit> * out_commits) {
    const int t = x_next.step - 1;
    const double p_un = schedule.unmask_prob(t);
    sequence_state out = x_next;
    out.step = t;
    for (int l = 0; l < x_next.length(); ++l) {
        if (!x_next.is_masked(l, vocab)) continue;
        const auto & row = probs[static_cast<size_t>(l)];
        double sum = 0.0;
        for (double p : row) sum += p;
        if (std::fabs(sum - 1.0) > 1e-9)
            throw contract_error("reverse_step: probability row not normalised");
        const double u1 = rng.uniform();
        if (u1 < p_un) {
            const double u2 = rng.uniform();
            const int tok = sample_categorical(row, u2);
            if (tok < 0) throw contract_error("reverse_step: empty categorical row");
            out.tokens[static_cast<size_t>(l)] = static_cast<token_id>(tok);
            if (out_commits) out_commits->push_back({l, static_cast<token_id>(tok)});
        }
    }
    return out;
}

double run_trace::total_contribution(const constraint & c) const {
    if (c.scores.is_dynamic()) {
        // completed-sequence satisfaction for a subsequence constraint:
        // number of window placements fully matching the target
        const auto & s = c.scores.target_sequence();
        if (s.empty()) return 0.0;
        long count = 0;
        const int L = static_cast<int>(final_tokens.size());
        const int n = static_cast<int>(s.size());
        for (int off = 0; off + n <= L; ++off) {
            bool match = true;
            for (int m = 0; m < n && match; ++m)
                match = final_tokens[static_cast<size_t>(off + m)] == s[static_cast<size_t>(m)];
            count += match;
        }
        return static_cast<double>(count);
    }
    double total = 0.0;
    for (size_t l = 0; l < final_tokens.size(); ++l)
        total += c.scores.value(static_cast<int>(l), final_tokens[l]);
    return total;
}

void run_trace::write_jsonl(std::ostream & out) const {
    for (const auto & s : steps) {
        nlohmann::json j;
        j["t"] = s.t;
        auto commits = nlohmann::json::array();
        for (const auto & cm : s.commits) commits.push_back({cm.position, cm.token});
        j["commits"] = std::move(commits);
        j["lambda"]  = s.lambda;
        j["slack"]   = s.slack;
        j["pi_t"]    = s.pi_t;
        j["bound"]   = s.bound_t;
        if (s.bound_correction != 0.0) j["bound_correction"] = s.bound_correction;
        out << j.dump() << '\n';
    }
    nlohmann::json fin;
    fin["final"] = final_tokens;
    fin["elapsed_steps"] = elapsed_steps;
    out << fin.dump() << '\n';
}

namespace {

// Per-step stochastic correction from the regret analysis; zero when the
// deviation parameters are unset.
double bound_correction_term(const run_config & cfg, int t, int length, int vocab) {
    if (cfg.bound_mu_bar == 0.0 && cfg.bound_sigma == 0.0) return 0.0;
    const double steps_left = static_cast<double>(cfg.steps - t);
    const double var = cfg.bound_sigma * cfg.bound_sigma + (steps_left - 1.0) * cfg.bound_rho;
    const double logterm =
        std::log(static_cast<double>(length) * vocab * cfg.steps / cfg.bound_delta);
    return length * steps_left * cfg.bound_mu_bar +
           length * std::sqrt(std::max(0.0, 2.0 * logterm * steps_left * var));
}

struct reward_accumulator {
    bool   active = false;
    double log_partition_cur  = 0.0;
    double log_partition_base = 0.0;
};

} // namespace

run_trace run_reverse_with_session(const backend & model, backend_session & session,
                                   std::vector<constraint> constraints,
                                   const run_config & config, const mask_schedule & schedule) {
    const int L = config.length;
    const int T = config.steps;
    const int V = model.vocab();
    if (L < 1 || T < 1) throw config_error("run config: need L >= 1 and T >= 1");
    if (model.length() != L)
        throw config_error("backend/run length mismatch");
    if (schedule.steps != T)
        throw config_error("schedule/run step count mismatch");
    const vocabulary vocab = vocabulary::of_size(V);
    for (auto & c : constraints) c.validate(vocab, L);

    std::vector<guidance_state> states(constraints.size());
    for (size_t i = 0; i < constraints.size(); ++i) states[i].init(constraints[i], L);

    rng_stream sampler_rng(chain_stream_seed(config.seed, 0, stream_tag::sampler));
    rng_stream backend_rng(chain_stream_seed(config.seed, 0, stream_tag::backend));

    sequence_state x = sequence_state::fully_masked(L, vocab, T);
    logit_matrix logits;
    run_trace trace;
    trace.steps.reserve(static_cast<size_t>(T));

    // reward/bound recording applies to single scalar-scope constraints
    const bool record_rb = config.record_reward_bound && constraints.size() == 1 &&
                           constraints[0].scope == multiplier_scope::scalar;

    std::vector<double> biased(static_cast<size_t>(V));
    std::vector<bias_term> terms(constraints.size());
    std::vector<double> shared_row;

    for (int t = T - 1; t >= 0; --t) {
        session.rows(t, x, backend_rng, logits);
        for (auto & c : constraints) c.scores.refresh(x, vocab);
        for (size_t i = 0; i < constraints.size(); ++i) {
            if (constraints[i].slack == slack_mode::optimistic && !states[i].omd_ready) {
                // seed OMD memory from the fully masked state before the
                // first sampling step
                auto pred = optimistic_prediction(x, vocab, logits, constraints[i], 0.0);
                states[i].omd_prev  = pred.annealed;
                states[i].omd_ready = true;
            }
        }

        step_record rec;
        rec.t = t;
        rec.lambda.reserve(constraints.size());
        for (size_t i = 0; i < constraints.size(); ++i) {
            const auto & lam = states[i].lambda;
            if (lam.size() == 1) {
                rec.lambda.push_back(lam[0]);
            } else {
                double m = 0.0;
                for (double v : lam) m += v;
                rec.lambda.push_back(m / static_cast<double>(lam.size()));
            }
        }

        // reward partitions (pure math on this step's rows; no rng)
        reward_accumulator rb;
        if (record_rb) {
            const auto & c0 = constraints[0];
            const double lam = states[0].lambda[0];
            if (lam != 0.0) {
                rb.active = true;
                const double rl = c0.target / L;
                if (logits.shared_rows && c0.scores.layout() == score_layout::per_token) {
                    int first = -1, nmasked = 0;
                    for (int l = 0; l < L; ++l) {
                        if (!x.is_masked(l, vocab)) continue;
                        if (first < 0) first = l;
                        ++nmasked;
                    }
                    if (first >= 0) {
                        const double cur =
                            log_partition(logits.row(first), c0.scores.row(first), lam, rl);
                        const double base =
                            log_partition(model.base_row(first), c0.scores.row(first), lam, rl);
                        rb.log_partition_cur  = nmasked * cur;
                        rb.log_partition_base = nmasked * base;
                    }
                } else {
                    for (int l = 0; l < L; ++l) {
                        if (!x.is_masked(l, vocab)) continue;
                        rb.log_partition_cur +=
                            log_partition(logits.row(l), c0.scores.row(l), lam, rl);
                        rb.log_partition_base +=
                            log_partition(model.base_row(l), c0.scores.row(l), lam, rl);
                    }
                }
            }
        }

        // biased rows shared across positions whenever nothing is
        // position-dependent: unigram rows + per_token tables + scalar scope
        bool can_share = logits.shared_rows;
        for (size_t i = 0; i < constraints.size() && can_share; ++i) {
            can_share = constraints[i].scores.layout() == score_layout::per_token &&
                        constraints[i].scope == multiplier_scope::scalar;
        }
        bool shared_ready = false;

        const double p_un = schedule.unmask_prob(t);
        for (int l = 0; l < L; ++l) {
            if (!x.is_masked(l, vocab)) continue;
            const double u1 = sampler_rng.uniform();
            if (u1 >= p_un) continue;
            const double u2 = sampler_rng.uniform();
            const double * row_probs;
            if (can_share) {
                if (!shared_ready) {
                    for (size_t i = 0; i < constraints.size(); ++i)
                        terms[i] = {constraints[i].scores.row(l), states[i].lambda_at(l)};
                    shared_row.resize(static_cast<size_t>(V));
                    compose_bias(logits.row(l), terms, shared_row);
                    shared_ready = true;
                }
                row_probs = shared_row.data();
            } else {
                for (size_t i = 0; i < constraints.size(); ++i)
                    terms[i] = {constraints[i].scores.row(l), states[i].lambda_at(l)};
                compose_bias(logits.row(l), terms, biased);
                row_probs = biased.data();
            }
            const int tok = sample_categorical({row_probs, static_cast<size_t>(V)}, u2);
            if (tok < 0) throw contract_error("sampler: empty categorical row");
            x.tokens[static_cast<size_t>(l)] = static_cast<token_id>(tok);
            rec.commits.push_back({l, static_cast<token_id>(tok)});
        }
        x.step = t;

        // slack and multiplier updates (after sampling)
        const double unmasked_fraction =
            1.0 - static_cast<double>(x.masked_count(vocab)) / L;
        for (size_t i = 0; i < constraints.size(); ++i) {
            auto & c  = constraints[i];
            auto & st = states[i];
            double commit_delta = 0.0;
            for (const auto & cm : rec.commits) {
                if (st.committed[static_cast<size_t>(cm.position)])
                    throw contract_error("position committed twice in one run");
                const double b = c.scores.value(cm.position, cm.token);
                commit_delta += b - c.target / L;
                st.committed_total += b;
                st.g_position[static_cast<size_t>(cm.position)] = b - c.target / L;
            }
            for (const auto & cm : rec.commits)
                st.committed[static_cast<size_t>(cm.position)] = 1;
            st.g_accumulated += commit_delta;

            slack_context ctx;
            ctx.unmasked_fraction = unmasked_fraction;
            if (c.slack == slack_mode::optimistic) {
                auto pred = optimistic_prediction(x, vocab, logits, c, st.committed_total);
                ctx.annealed_prediction = pred.annealed;
            }
            const double g = compute_slack(c.slack, st, c, ctx);
            rec.slack.push_back(g);
            if (!c.pin_multiplier) {
                const double eta = effective_eta(c, constraints.size());
                if (c.scope == multiplier_scope::scalar) {
                    st.lambda[0] = update_multiplier(c.lambda0, eta, g, c.lambda_max);
                } else {
                    for (int l = 0; l < L; ++l) {
                        st.lambda[static_cast<size_t>(l)] = update_multiplier(
                            c.lambda0, eta, st.g_position[static_cast<size_t>(l)], c.lambda_max);
                    }
                }
            }
        }

        if (rb.active) {
            const double lam  = rec.lambda[0];
            const double dual = lam * slack_increment(rec.commits, constraints[0], L);
            rec.pi_t    = rb.log_partition_cur - dual;
            rec.bound_correction = bound_correction_term(config, t, L, V);
            rec.bound_t = rb.log_partition_base - dual - rec.bound_correction;
        }

        trace.steps.push_back(std::move(rec));
    }

    for (token_id tok : x.tokens) {
        if (!vocab.is_data_token(tok))
            throw contract_error("reverse loop finished with masked positions");
    }
    trace.final_tokens  = x.tokens;
    trace.elapsed_steps = T;
    return trace;
}

run_trace run_reverse(const backend & model, std::vector<constraint> constraints,
                      const run_config & config, const mask_schedule & schedule) {
    auto session = model.make_session();
    return run_reverse_with_session(model, *session, std::move(constraints), config, schedule);
}

} // namespace pdd
