#include "pdd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pdd/errors.hpp"

namespace pdd {

pass_result pass_rate(const std::vector<double> & totals, double target) {
    if (totals.empty()) throw analysis_error("pass_rate: no samples");
    long n_pass = 0;
    for (double c : totals) n_pass += (c >= target);
    const double n = static_cast<double>(totals.size());
    const double p = static_cast<double>(n_pass) / n;
    return {p, std::sqrt(p * (1.0 - p) / n)};
}

namespace {

std::vector<double> smoothed_unigram(const std::vector<std::vector<token_id>> & samples,
                                     int vocab, double epsilon) {
    std::vector<double> counts(static_cast<size_t>(vocab), 0.0);
    double n = 0.0;
    for (const auto & s : samples) {
        for (token_id t : s) {
            if (t < 0 || t >= vocab)
                throw analysis_error("unigram: token outside vocabulary");
            counts[static_cast<size_t>(t)] += 1.0;
            n += 1.0;
        }
    }
    if (n == 0.0) throw analysis_error("unigram: empty sample set");
    const double eps = epsilon < 0.0 ? 0.5 / n : epsilon;
    std::vector<double> freq(static_cast<size_t>(vocab));
    const double denom = n + eps * vocab;
    for (int j = 0; j < vocab; ++j)
        freq[static_cast<size_t>(j)] = (counts[static_cast<size_t>(j)] + eps) / denom;
    return freq;
}

} // namespace

double unigram_kl(const std::vector<std::vector<token_id>> & samples_p,
                  const std::vector<std::vector<token_id>> & samples_q,
                  int vocab, double epsilon) {
    const auto P = smoothed_unigram(samples_p, vocab, epsilon);
    const auto Q = smoothed_unigram(samples_q, vocab, epsilon);
    double kl = 0.0;
    for (int j = 0; j < vocab; ++j) {
        const double p = P[static_cast<size_t>(j)];
        const double q = Q[static_cast<size_t>(j)];
        if (p > 0.0) {
            if (q <= 0.0) throw analysis_error("unigram KL: unsmoothed zero in Q");
            kl += p * std::log(p / q);
        }
    }
    return kl;
}

dist_n_result dist_n(const std::vector<std::vector<token_id>> & samples, int n) {
    if (n < 1) throw analysis_error("dist_n: n must be >= 1");
    dist_n_result res;
    std::set<std::vector<token_id>> distinct;
    long total = 0;
    for (const auto & s : samples) {
        if (static_cast<int>(s.size()) < n) {
            ++res.skipped_samples;
            continue;
        }
        for (size_t i = 0; i + n <= s.size(); ++i) {
            distinct.insert(std::vector<token_id>(s.begin() + static_cast<long>(i),
                                                  s.begin() + static_cast<long>(i) + n));
            ++total;
        }
    }
    if (total == 0) throw analysis_error("dist_n: no n-grams (all samples shorter than n)");
    res.ratio = static_cast<double>(distinct.size()) / static_cast<double>(total);
    return res;
}

double jaccard_diversity(const std::vector<std::vector<token_id>> & samples) {
    if (samples.size() < 2) throw analysis_error("jaccard: need at least 2 samples");
    std::vector<std::set<token_id>> sets;
    sets.reserve(samples.size());
    for (const auto & s : samples) sets.emplace_back(s.begin(), s.end());
    double sum = 0.0;
    long pairs = 0;
    for (size_t a = 0; a < sets.size(); ++a) {
        for (size_t b = a + 1; b < sets.size(); ++b) {
            std::vector<token_id> inter;
            std::set_intersection(sets[a].begin(), sets[a].end(), sets[b].begin(), sets[b].end(),
                                  std::back_inserter(inter));
            const size_t uni = sets[a].size() + sets[b].size() - inter.size();
            sum += uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter.size()) / static_cast<double>(uni);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

std::string metric_report::to_text() const {
    std::ostringstream out;
    char buf[64];
    auto kv = [&](const char * k, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << k << ' ' << buf << '\n';
    };
    kv("pass_rate", pass_fraction);
    kv("pass_se", pass_std_error);
    kv("mean_contribution", mean_contribution);
    kv("overshoot_ratio", overshoot_ratio);
    kv("mean_violation", mean_violation);
    if (kl_nats >= 0.0) kv("unigram_kl", kl_nats);
    if (dist2 >= 0.0) kv("dist2", dist2);
    if (jaccard >= 0.0) kv("jaccard_diversity", jaccard);
    return out.str();
}

// ------------------------------------------------------- consistency

chain_rows load_chain_rows(const std::string & trace_path) {
    std::ifstream in(trace_path);
    if (!in) throw analysis_error("cannot open trace file: " + trace_path);
    chain_rows cr;
    std::string line;
    long lineno = 0;
    int length = 0, steps = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            ss >> cr.vocab >> length >> steps;
            if (!ss) throw analysis_error(trace_path + ":" + std::to_string(lineno) + ": bad meta");
        } else if (tag == "row") {
            int t = 0, pos = 0;
            ss >> t >> pos;
            std::vector<double> row(static_cast<size_t>(cr.vocab));
            for (int j = 0; j < cr.vocab; ++j) ss >> row[static_cast<size_t>(j)];
            if (!ss) throw analysis_error(trace_path + ":" + std::to_string(lineno) + ": bad row");
            cr.rows[{t, pos}] = std::move(row);
        } else {
            throw analysis_error(trace_path + ":" + std::to_string(lineno) + ": unknown record");
        }
    }
    if (cr.vocab == 0) throw analysis_error(trace_path + ": missing meta record");
    return cr;
}

consistency_report temporal_consistency(const std::vector<chain_rows> & chains, double mu_bar) {
    if (chains.empty()) throw analysis_error("consistency: no chains");
    const int V = chains[0].vocab;
    for (const auto & c : chains) {
        if (c.vocab != V) throw analysis_error("consistency: vocabulary mismatch across chains");
    }
    const double gauge_corr = static_cast<double>(V) / (V - 1.0);

    // (t,pos) -> list of (chain index, centred increment row)
    std::map<std::pair<int, int>, std::vector<std::pair<int, std::vector<double>>>> incs;
    for (size_t ci = 0; ci < chains.size(); ++ci) {
        for (const auto & [key, row_t] : chains[ci].rows) {
            const auto & [t, pos] = key;
            auto it_prev = chains[ci].rows.find({t + 1, pos});
            if (it_prev == chains[ci].rows.end()) continue;
            std::vector<double> inc(static_cast<size_t>(V));
            double mean = 0.0;
            for (int j = 0; j < V; ++j) {
                inc[static_cast<size_t>(j)] = row_t[static_cast<size_t>(j)] -
                                              it_prev->second[static_cast<size_t>(j)];
                mean += inc[static_cast<size_t>(j)];
            }
            mean /= V;
            for (double & v : inc) v -= mean; // remove normalisation gauge
            incs[key].emplace_back(static_cast<int>(ci), std::move(inc));
        }
    }
    if (incs.empty())
        throw analysis_error("consistency: no consecutive-step increments (need >= 2 recorded steps)");

    consistency_report rep;
    std::map<int, std::pair<double, long>> per_step_var; // t -> (sum var, count)
    double drift_sum = 0.0;
    long   drift_n = 0;
    double m2 = 0.0, m4 = 0.0;
    long   mn = 0;
    double cov_sum = 0.0;
    long   cov_n = 0;

    // residuals against the per-(t,pos,token) mean across chains
    std::map<std::pair<int, int>, std::vector<std::vector<double>>> residuals;
    for (auto & [key, list] : incs) {
        const int n = static_cast<int>(list.size());
        for (const auto & [ci, inc] : list) {
            for (double v : inc) { drift_sum += v; ++drift_n; }
        }
        if (n < 2) continue;
        std::vector<double> mu(static_cast<size_t>(V), 0.0);
        for (const auto & [ci, inc] : list)
            for (int j = 0; j < V; ++j) mu[static_cast<size_t>(j)] += inc[static_cast<size_t>(j)];
        for (double & v : mu) v /= n;
        auto & res_list = residuals[key];
        double var = 0.0;
        for (const auto & [ci, inc] : list) {
            std::vector<double> r(static_cast<size_t>(V));
            for (int j = 0; j < V; ++j) {
                r[static_cast<size_t>(j)] = inc[static_cast<size_t>(j)] - mu[static_cast<size_t>(j)];
                var += r[static_cast<size_t>(j)] * r[static_cast<size_t>(j)];
            }
            res_list.push_back(std::move(r));
        }
        // unbiased over chains, gauge-corrected
        const double v_unbiased = var / (static_cast<double>(n - 1) * V) * gauge_corr;
        auto & acc = per_step_var[key.first];
        acc.first += v_unbiased;
        acc.second += 1;
        // pooled moments for kurtosis (scaled residuals)
        const double bessel = std::sqrt(static_cast<double>(n) / (n - 1) * gauge_corr);
        for (const auto & r : res_list) {
            for (double v : r) {
                const double z = v * bessel;
                m2 += z * z;
                m4 += z * z * z * z;
                ++mn;
            }
        }
    }

    // cross-position covariance of residuals: adjacent pairs aligned on
    // common chains. Residual means were taken over each key's own chain
    // set, so the product expectation carries the factor
    // (1 - 1/n_a - 1/n_b + m/(n_a n_b)); divide it back out.
    for (const auto & [key, res_list] : residuals) {
        const auto & [t, pos] = key;
        auto it = residuals.find({t, pos + 1});
        if (it == residuals.end()) continue;
        const auto & la = incs[key];
        const auto & lb = incs[{t, pos + 1}];
        const double n_a = static_cast<double>(la.size());
        const double n_b = static_cast<double>(lb.size());
        std::vector<double> prod(static_cast<size_t>(V), 0.0);
        long m_common = 0;
        for (size_t a = 0; a < la.size(); ++a) {
            for (size_t b = 0; b < lb.size(); ++b) {
                if (la[a].first != lb[b].first) continue;
                const auto & ra = res_list[a];
                const auto & rb = it->second[b];
                for (int j = 0; j < V; ++j)
                    prod[static_cast<size_t>(j)] += ra[static_cast<size_t>(j)] * rb[static_cast<size_t>(j)];
                ++m_common;
            }
        }
        if (m_common < 1) continue;
        const double factor = 1.0 - 1.0 / n_a - 1.0 / n_b + static_cast<double>(m_common) / (n_a * n_b);
        if (!(factor > 0.0)) continue;
        for (int j = 0; j < V; ++j) {
            cov_sum += prod[static_cast<size_t>(j)] * gauge_corr / (static_cast<double>(m_common) * factor);
            ++cov_n;
        }
    }

    rep.increment_count = drift_n;
    rep.mean_drift = drift_n ? drift_sum / drift_n : 0.0;
    rep.mu_bar_ref = mu_bar;
    if (mu_bar >= 0.0) rep.drift_within_bound = std::fabs(rep.mean_drift) <= mu_bar;
    double pooled = 0.0;
    long   pooled_n = 0;
    for (const auto & [t, acc] : per_step_var) {
        const double v = acc.first / acc.second;
        rep.step_ids.push_back(t);
        rep.sigma_t.push_back(std::sqrt(std::max(0.0, v)));
        pooled += acc.first;
        pooled_n += acc.second;
    }
    rep.sigma_mean = pooled_n ? std::sqrt(std::max(0.0, pooled / pooled_n)) : 0.0;
    if (cov_n) rep.rho_mean = cov_sum / cov_n;
    if (mn && m2 > 0.0) {
        const double s2 = m2 / mn;
        rep.excess_kurtosis = (m4 / mn) / (s2 * s2) - 3.0;
    }
    return rep;
}

std::string consistency_report::to_text() const {
    std::ostringstream out;
    char buf[64];
    auto kv = [&](const char * k, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << k << ' ' << buf << '\n';
    };
    kv("sigma_mean", sigma_mean);
    kv("mean_drift", mean_drift);
    if (mu_bar_ref >= 0.0) {
        kv("mu_bar_ref", mu_bar_ref);
        out << "drift_within_bound " << (drift_within_bound ? 1 : 0) << '\n';
    }
    kv("rho_mean", rho_mean);
    kv("excess_kurtosis", excess_kurtosis);
    out << "increments " << increment_count << '\n';
    for (size_t i = 0; i < sigma_t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", sigma_t[i]);
        out << "sigma_t " << step_ids[i] << ' ' << buf << '\n';
    }
    return out.str();
}

} // namespace pdd
