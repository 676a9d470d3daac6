#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdd/backend.hpp"
#include "pdd/metrics.hpp"
#include "pdd/rng.hpp"

using namespace pdd;

TEST_CASE("pass_rate") {
    CHECK(pass_rate({5, 6, 7}, 4.0).fraction == 1.0);
    CHECK(pass_rate({5, 6, 7}, 4.0).std_error == 0.0);
    CHECK(pass_rate({1, 2, 3}, 4.0).fraction == 0.0);
    auto r = pass_rate(std::vector<double>(1000, 0.0), 1.0); // none pass
    CHECK(r.std_error == 0.0);
    // 921 of 1000
    std::vector<double> totals(1000, 0.0);
    for (int i = 0; i < 921; ++i) totals[static_cast<size_t>(i)] = 2.0;
    auto p = pass_rate(totals, 1.0);
    CHECK(p.fraction == doctest::Approx(0.921));
    CHECK(p.std_error == doctest::Approx(0.00853).epsilon(1e-3));
}

TEST_CASE("pass rate and violation fraction are complementary") {
    std::vector<double> totals{1, 5, 2, 8, 3, 9};
    const double R = 4.0;
    auto p = pass_rate(totals, R);
    long violations = 0;
    for (double t : totals) violations += (t < R);
    CHECK(p.fraction + static_cast<double>(violations) / totals.size() == doctest::Approx(1.0));
}

TEST_CASE("unigram_kl on identical samples is exactly zero") {
    std::vector<std::vector<token_id>> s{{0, 1, 2, 1}, {2, 2, 0, 1}};
    CHECK(unigram_kl(s, s, 3) == 0.0);
    CHECK(unigram_kl(s, s, 3, 0.0) == 0.0);
}

TEST_CASE("unigram_kl forced example, epsilon = 0") {
    std::vector<std::vector<token_id>> p{{0, 0, 1, 1}};
    std::vector<std::vector<token_id>> q{{0, 1, 1, 1}};
    const double want = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    CHECK(unigram_kl(p, q, 2, 0.0) == doctest::Approx(want).epsilon(1e-12));
    CHECK(unigram_kl(p, q, 2, 0.0) == doctest::Approx(0.14384).epsilon(1e-4));
}

TEST_CASE("unigram_kl split-halves stays within sampling noise") {
    // oracle: two halves of one corpus have tiny KL for >= 1e5 tokens
    rng_stream rng(3);
    const int V = 50;
    auto base = zipf_distribution(V, 1.0);
    std::vector<double> cdf(base.size());
    double acc = 0.0;
    for (size_t j = 0; j < base.size(); ++j) {
        acc += base[j];
        cdf[j] = acc;
    }
    auto draw = [&] {
        const double u = rng.uniform();
        for (size_t j = 0; j < cdf.size(); ++j)
            if (u < cdf[j]) return static_cast<token_id>(j);
        return static_cast<token_id>(V - 1);
    };
    std::vector<std::vector<token_id>> a(1), b(1);
    for (int i = 0; i < 120000; ++i) a[0].push_back(draw());
    for (int i = 0; i < 120000; ++i) b[0].push_back(draw());
    CHECK(unigram_kl(a, b, V) < 0.01);
}

TEST_CASE("dist_n") {
    std::vector<std::vector<token_id>> rep{{7, 7, 7, 7}};
    CHECK(dist_n(rep, 2).ratio == doctest::Approx(1.0 / 3.0));
    std::vector<std::vector<token_id>> uniq{{0, 1, 2, 3}};
    CHECK(dist_n(uniq, 2).ratio == 1.0);
    // repeated-token sequence of length L has 1 distinct bigram of L-1
    std::vector<std::vector<token_id>> rep9{std::vector<token_id>(9, 4)};
    CHECK(dist_n(rep9, 2).ratio == doctest::Approx(1.0 / 8.0));
    std::vector<std::vector<token_id>> mixed{{0, 1}, {5}};
    auto r = dist_n(mixed, 2);
    CHECK(r.skipped_samples == 1);
    CHECK(dist_n(mixed, 1).skipped_samples == 0);
    // permutation invariance over the sample list
    std::vector<std::vector<token_id>> ab{{0, 1, 0}, {2, 2, 2}};
    std::vector<std::vector<token_id>> ba{{2, 2, 2}, {0, 1, 0}};
    CHECK(dist_n(ab, 2).ratio == dist_n(ba, 2).ratio);
}

TEST_CASE("jaccard diversity") {
    std::vector<std::vector<token_id>> same{{1, 2}, {2, 1, 1}};
    CHECK(jaccard_diversity(same) == 0.0);
    std::vector<std::vector<token_id>> disjoint{{1, 2}, {3, 4}};
    CHECK(jaccard_diversity(disjoint) == 1.0);
    std::vector<std::vector<token_id>> partial{{1, 2}, {2, 3}};
    CHECK(jaccard_diversity(partial) == doctest::Approx(1.0 - 1.0 / 3.0).epsilon(1e-12));
    std::vector<std::vector<token_id>> rev{{2, 3}, {1, 2}};
    CHECK(jaccard_diversity(partial) == jaccard_diversity(rev));
}

namespace {

// drive a drifting session over fully masked states: balanced row coverage
std::vector<chain_rows> synth_chains(int n_chains, int V, int L, int T, double mu, double sigma,
                                     double rho, uint64_t seed0) {
    auto b = make_drifting_backend(L, zipf_distribution(V, 0.5), mu, sigma, rho);
    const auto vocab = vocabulary::of_size(V);
    std::vector<chain_rows> chains;
    for (int c = 0; c < n_chains; ++c) {
        auto session = b->make_session();
        rng_stream rng(seed0 + static_cast<uint64_t>(c));
        chain_rows cr;
        cr.vocab = V;
        sequence_state x = sequence_state::fully_masked(L, vocab, T);
        logit_matrix rows;
        for (int t = T - 1; t >= 0; --t) {
            session->rows(t, x, rng, rows);
            for (int l = 0; l < L; ++l) {
                auto r = rows.row(l);
                cr.rows[{t, l}] = std::vector<double>(r.begin(), r.end());
            }
        }
        chains.push_back(std::move(cr));
    }
    return chains;
}

} // namespace

TEST_CASE("temporal consistency: sigma = 0 backend yields an exactly zero report") {
    auto chains = synth_chains(3, 8, 4, 5, 0.0, 0.0, 0.0, 40);
    auto rep = temporal_consistency(chains);
    CHECK(rep.sigma_mean == 0.0);
    CHECK(rep.rho_mean == 0.0);
    CHECK(rep.mean_drift == 0.0);
    for (double s : rep.sigma_t) CHECK(s == 0.0);
}

TEST_CASE("temporal consistency recovers planted sigma and rho") {
    auto chains = synth_chains(6, 24, 12, 10, 0.05, 0.5, 0.1, 90);
    auto rep = temporal_consistency(chains);
    CHECK(rep.increment_count >= 10000);
    CHECK(std::fabs(rep.sigma_mean - 0.5) / 0.5 <= 0.10);
    CHECK(std::fabs(rep.rho_mean - 0.1) / 0.1 <= 0.25);
    CHECK(std::fabs(rep.excess_kurtosis) < 1.0);
}

TEST_CASE("temporal consistency needs consecutive steps") {
    chain_rows only_one;
    only_one.vocab = 4;
    only_one.rows[{3, 0}] = {0.0, -1.0, -2.0, -3.0};
    CHECK_THROWS_AS(temporal_consistency({only_one, only_one}), analysis_error);
}

TEST_CASE("consistency drift-bound check against a supplied mu_bar") {
    auto chains = synth_chains(4, 16, 8, 8, 0.05, 0.4, 0.0, 140);
    auto rep = temporal_consistency(chains, 0.1);
    CHECK(rep.mu_bar_ref == 0.1);
    CHECK(rep.drift_within_bound); // renormalised rows centre the drift near zero
    auto rep2 = temporal_consistency(chains);
    CHECK(rep2.mu_bar_ref < 0.0);
}
