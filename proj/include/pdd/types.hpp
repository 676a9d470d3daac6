#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdd/errors.hpp"

namespace pdd {

using token_id = int32_t;

// Data tokens live in [0, size); the mask symbol sits just past them.
struct vocabulary {
    int      size    = 0;
    token_id mask_id = 0;

    static vocabulary of_size(int v) {
        if (v < 2) throw config_error("vocabulary size must be >= 2");
        return vocabulary{v, static_cast<token_id>(v)};
    }

    bool is_data_token(token_id t) const { return t >= 0 && t < size; }
};

// Partially masked sequence at reverse-process step `step` (T = fully
// masked start, 0 = fully revealed end).
struct sequence_state {
    std::vector<token_id> tokens;
    int step = 0;

    static sequence_state fully_masked(int length, const vocabulary & vocab, int step) {
        sequence_state s;
        s.tokens.assign(static_cast<size_t>(length), vocab.mask_id);
        s.step = step;
        return s;
    }

    int length() const { return static_cast<int>(tokens.size()); }

    bool is_masked(int pos, const vocabulary & vocab) const {
        return tokens[static_cast<size_t>(pos)] == vocab.mask_id;
    }

    int masked_count(const vocabulary & vocab) const {
        int n = 0;
        for (token_id t : tokens) n += (t == vocab.mask_id);
        return n;
    }
};

// L x V natural-log probability rows; rows are filled only for positions
// masked in the conditioning state, flagged via row_set.
struct logit_matrix {
    int length = 0;
    int vocab  = 0;
    std::vector<double>  values;  // length * vocab
    std::vector<uint8_t> row_set;
    bool shared_rows = false;     // all set rows are identical (unigram case)

    void reset(int l, int v) {
        length = l;
        vocab  = v;
        values.assign(static_cast<size_t>(l) * v, 0.0);
        row_set.assign(static_cast<size_t>(l), 0);
        shared_rows = false;
    }

    std::span<double> row(int pos) {
        return {values.data() + static_cast<size_t>(pos) * vocab, static_cast<size_t>(vocab)};
    }
    std::span<const double> row(int pos) const {
        return {values.data() + static_cast<size_t>(pos) * vocab, static_cast<size_t>(vocab)};
    }
};

} // namespace pdd
