#pragma once

#include <stdexcept>
#include <string>

namespace pdd {

// Exit-code contract: 0 success, 2 config error, 3 runtime contract
// violation, 4 analysis error.

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Trace replay asked for a step/position that was never recorded.
struct replay_error : contract_error {
    using contract_error::contract_error;
};

// Constraint target unreachable for the given score table.
struct infeasible_error : contract_error {
    using contract_error::contract_error;
};

struct analysis_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception & e) {
    if (dynamic_cast<const config_error *>(&e))   return 2;
    if (dynamic_cast<const analysis_error *>(&e)) return 4;
    return 3;
}

} // namespace pdd
