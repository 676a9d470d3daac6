#include "pdd/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include "pdd/errors.hpp"

namespace pdd {

mask_schedule mask_schedule::linear(int T) {
    mask_schedule s;
    s.kind  = schedule_kind::linear;
    s.steps = T;
    s.validate();
    return s;
}

mask_schedule mask_schedule::geometric(int T, double ratio) {
    mask_schedule s;
    s.kind  = schedule_kind::geometric;
    s.steps = T;
    s.geometric_ratio = ratio;
    s.validate();
    return s;
}

mask_schedule mask_schedule::custom(std::vector<double> alpha) {
    mask_schedule s;
    s.kind  = schedule_kind::custom;
    s.steps = static_cast<int>(alpha.size()) - 1;
    s.table = std::move(alpha);
    s.validate();
    return s;
}

void mask_schedule::validate() const {
    if (steps < 1) throw config_error("schedule: T must be >= 1");
    if (kind == schedule_kind::geometric &&
        !(geometric_ratio > 0.0 && geometric_ratio < 1.0)) {
        throw config_error("schedule: geometric ratio must be in (0,1)");
    }
    if (kind == schedule_kind::custom) {
        if (static_cast<int>(table.size()) != steps + 1)
            throw config_error("schedule: custom table needs T+1 values");
        if (table.front() != 1.0 || table.back() != 0.0)
            throw config_error("schedule: custom table must have alpha_0=1, alpha_T=0");
        for (int t = 0; t < steps; ++t) {
            if (!(table[static_cast<size_t>(t)] > table[static_cast<size_t>(t) + 1]))
                throw config_error("schedule: alpha must strictly increase as t decreases");
        }
    }
}

double mask_schedule::alpha(int t) const {
    if (t < 0 || t > steps) throw std::out_of_range("schedule: step out of range");
    switch (kind) {
        case schedule_kind::linear:
            return 1.0 - static_cast<double>(t) / steps;
        case schedule_kind::geometric: {
            // masked fraction decays geometrically: 1 - alpha_t = (r^{T-t} - r^T) / (1 - r^T)
            const double r  = geometric_ratio;
            const double rT = std::pow(r, steps);
            const double m  = (std::pow(r, steps - t) - rT) / (1.0 - rT);
            return 1.0 - m;
        }
        case schedule_kind::custom:
            return table[static_cast<size_t>(t)];
    }
    return 0.0;
}

double mask_schedule::unmask_prob(int t) const {
    if (t < 0 || t >= steps) throw std::out_of_range("schedule: step out of range");
    const double a_t  = alpha(t);
    const double a_t1 = alpha(t + 1);
    const double denom = 1.0 - a_t1;
    if (denom <= 0.0) return 1.0;
    double p = (a_t - a_t1) / denom;
    if (p < 0.0) p = 0.0;
    if (p > 1.0) p = 1.0;
    return p;
}

schedule_kind schedule_kind_from_string(const std::string & s) {
    if (s == "linear")    return schedule_kind::linear;
    if (s == "geometric") return schedule_kind::geometric;
    if (s == "custom")    return schedule_kind::custom;
    throw config_error("unknown schedule kind: " + s);
}

std::string to_string(schedule_kind k) {
    switch (k) {
        case schedule_kind::linear:    return "linear";
        case schedule_kind::geometric: return "geometric";
        case schedule_kind::custom:    return "custom";
    }
    return "?";
}

} // namespace pdd
