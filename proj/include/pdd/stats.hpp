#pragma once

#include <cstdint>
#include <vector>

namespace pdd {

// P(Bin(n, 1/2) >= k), exact via log binomial coefficients.
double binomial_tail_half(long k, long n);

struct sign_test_result {
    long   n_positive = 0;
    long   n_negative = 0;
    double p_value    = 1.0; // one-sided, H1: first tends to exceed second
};

// Paired one-sided sign test on (first - second); ties are dropped.
sign_test_result sign_test_greater(const std::vector<double> & first,
                                   const std::vector<double> & second);

// Bootstrap standard error of a mean-like statistic over per-chain values.
double bootstrap_se_mean(const std::vector<double> & values, int resamples, uint64_t seed);

} // namespace pdd
