#include "pdd/stats.hpp"

#include <cmath>

#include "pdd/errors.hpp"
#include "pdd/rng.hpp"

namespace pdd {

double binomial_tail_half(long k, long n) {
    if (n <= 0) return 1.0;
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    const double ln2 = std::log(2.0);
    double tail = 0.0;
    for (long i = k; i <= n; ++i) {
        const double lc = std::lgamma(static_cast<double>(n) + 1.0) -
                          std::lgamma(static_cast<double>(i) + 1.0) -
                          std::lgamma(static_cast<double>(n - i) + 1.0);
        tail += std::exp(lc - static_cast<double>(n) * ln2);
    }
    return tail > 1.0 ? 1.0 : tail;
}

sign_test_result sign_test_greater(const std::vector<double> & first,
                                   const std::vector<double> & second) {
    if (first.size() != second.size())
        throw analysis_error("sign test: unpaired inputs");
    sign_test_result r;
    for (size_t i = 0; i < first.size(); ++i) {
        if (first[i] > second[i]) ++r.n_positive;
        else if (second[i] > first[i]) ++r.n_negative;
    }
    r.p_value = binomial_tail_half(r.n_positive, r.n_positive + r.n_negative);
    return r;
}

double bootstrap_se_mean(const std::vector<double> & values, int resamples, uint64_t seed) {
    if (values.size() < 2 || resamples < 2) return 0.0;
    rng_stream rng(splitmix64(seed));
    const size_t n = values.size();
    double sum = 0.0, sum2 = 0.0;
    for (int b = 0; b < resamples; ++b) {
        double m = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const size_t idx = static_cast<size_t>(rng.uniform() * static_cast<double>(n));
            m += values[idx >= n ? n - 1 : idx];
        }
        m /= static_cast<double>(n);
        sum += m;
        sum2 += m * m;
    }
    const double mean = sum / resamples;
    return std::sqrt(std::max(0.0, sum2 / resamples - mean * mean));
}

} // namespace pdd
