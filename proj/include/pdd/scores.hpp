#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdd/types.hpp"

namespace pdd {

enum class score_layout { per_token, per_position, dynamic };

// Non-negative per-token / per-position contribution table b.
//
// per_token    broadcasts one row of V values to every position.
// per_position stores an explicit L x V table.
// dynamic      recomputes an L x V table from the current partial sequence
//              each denoising step (subsequence scorer).
//
// Positional weights (front-loading) are folded into static tables at
// construction and applied after materialisation for dynamic ones.
class score_table {
  public:
    score_table() = default;

    static score_table per_token(std::vector<double> values, std::string provenance = "");
    static score_table per_position(int length, int vocab, std::vector<double> values,
                                    std::string provenance = "");
    static score_table subsequence(std::vector<token_id> target, std::string provenance = "");

    score_layout layout() const { return layout_; }
    bool is_dynamic() const { return layout_ == score_layout::dynamic; }
    int  vocab() const { return vocab_; }
    // -1 when the table is position-independent
    int  length() const { return length_; }
    const std::string & provenance() const { return provenance_; }
    const std::vector<token_id> & target_sequence() const { return target_; }
    const std::vector<double> & positional_weights() const { return pos_weights_; }

    // Recompute the dynamic table for the current sequence; no-op for
    // static layouts. Must be called once per step before row().
    void refresh(const sequence_state & x, const vocabulary & vocab);

    // Row of V scores for a position. For per_token tables without
    // positional weights every position aliases the same storage.
    std::span<const double> row(int pos) const;
    double value(int pos, token_id j) const { return row(pos)[static_cast<size_t>(j)]; }

    // max - min over all table entries (dynamic: over the binary range
    // scaled by the largest positional weight). Used for per-objective
    // step-size rescaling; a zero range marks an inert constraint.
    double range() const;

    // Validates against the run's vocabulary/length; binds dynamic tables.
    void check_compatible(const vocabulary & vocab, int length);

    friend score_table frontload_weights(const score_table & base, double kappa, int length);

  private:
    score_layout layout_ = score_layout::per_token;
    int vocab_  = 0;
    int length_ = -1;
    std::vector<double> values_;       // V or L*V
    std::vector<double> pos_weights_;  // empty = all ones
    std::vector<token_id> target_;     // dynamic only
    mutable std::vector<double> dyn_buffer_; // L*V, rebuilt by refresh()
    std::string provenance_;

    void validate_values() const;
};

// b_j = 1 if j is in the target set, else 0.
score_table lexical_count_scores(const vocabulary & vocab, const std::vector<token_id> & targets);

// b_j = value(j); every data token must be present.
score_table additive_property_scores(const vocabulary & vocab, const std::vector<double> & values);

struct cluster_entry {
    token_id token;
    long     member_count;
    long     tagged_count;
};

// b_j = tagged members / members, in [0,1].
score_table cluster_fraction_scores(const vocabulary & vocab, const std::vector<cluster_entry> & entries);

// Dynamic table: b_{l,j} = 1 iff some placement of `target` over a window
// containing l agrees with every already-committed token in the window and
// puts symbol j at l. Rows for committed positions are zero.
score_table subsequence_scores(const vocabulary & vocab, const std::vector<token_id> & target, int length);

// b'_{l,j} = b_{l,j} * (1 + kappa * (1 - l/(L-1))). L = 1 uses weight 1+kappa.
score_table frontload_weights(const score_table & base, double kappa, int length);

} // namespace pdd
