#pragma once

#include <string>
#include <vector>

namespace pdd {

enum class schedule_kind { linear, geometric, custom };

// Unmasking schedule alpha_t: fraction of positions revealed at step t.
// alpha_T = 0 (fully masked start), alpha_0 = 1 (fully revealed end),
// strictly increasing as t decreases.
struct mask_schedule {
    schedule_kind kind  = schedule_kind::linear;
    int           steps = 1; // T
    double        geometric_ratio = 0.8;
    std::vector<double> table;   // custom: alpha_t for t = 0..T

    static mask_schedule linear(int T);
    static mask_schedule geometric(int T, double ratio);
    static mask_schedule custom(std::vector<double> alpha);

    double alpha(int t) const;       // range-checked
    // P(position unmasks at step t | still masked), (a_t - a_{t+1}) / (1 - a_{t+1})
    double unmask_prob(int t) const;
    void   validate() const;
};

schedule_kind schedule_kind_from_string(const std::string & s);
std::string   to_string(schedule_kind k);

} // namespace pdd
