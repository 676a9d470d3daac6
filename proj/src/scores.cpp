#include "pdd/scores.hpp"

#include <algorithm>
#include <cmath>

namespace pdd {

void score_table::validate_values() const {
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw config_error("score table entries must be finite and >= 0");
    }
}

score_table score_table::per_token(std::vector<double> values, std::string provenance) {
    score_table t;
    t.layout_ = score_layout::per_token;
    t.vocab_  = static_cast<int>(values.size());
    t.values_ = std::move(values);
    t.provenance_ = std::move(provenance);
    t.validate_values();
    return t;
}

score_table score_table::per_position(int length, int vocab, std::vector<double> values,
                                      std::string provenance) {
    if (static_cast<long>(length) * vocab != static_cast<long>(values.size()))
        throw config_error("per_position score table: values size != L*V");
    score_table t;
    t.layout_ = score_layout::per_position;
    t.vocab_  = vocab;
    t.length_ = length;
    t.values_ = std::move(values);
    t.provenance_ = std::move(provenance);
    t.validate_values();
    return t;
}

score_table score_table::subsequence(std::vector<token_id> target, std::string provenance) {
    score_table t;
    t.layout_ = score_layout::dynamic;
    t.target_ = std::move(target);
    t.provenance_ = std::move(provenance);
    return t;
}

void score_table::refresh(const sequence_state & x, const vocabulary & vocab) {
    if (layout_ != score_layout::dynamic) return;
    const int L = x.length();
    const int V = vocab.size;
    vocab_  = V;
    length_ = L;
    const int n = static_cast<int>(target_.size());
    dyn_buffer_.assign(static_cast<size_t>(L) * V, 0.0);
    if (n == 0 || n > L) return;
    for (int off = 0; off + n <= L; ++off) {
        bool compatible = true;
        for (int m = 0; m < n && compatible; ++m) {
            const token_id cur = x.tokens[static_cast<size_t>(off + m)];
            if (cur != vocab.mask_id && cur != target_[static_cast<size_t>(m)]) compatible = false;
        }
        if (!compatible) continue;
        for (int m = 0; m < n; ++m) {
            const int pos = off + m;
            if (x.tokens[static_cast<size_t>(pos)] != vocab.mask_id) continue;
            const token_id j = target_[static_cast<size_t>(m)];
            double w = pos_weights_.empty() ? 1.0 : pos_weights_[static_cast<size_t>(pos)];
            dyn_buffer_[static_cast<size_t>(pos) * V + static_cast<size_t>(j)] = w;
        }
    }
}

std::span<const double> score_table::row(int pos) const {
    switch (layout_) {
        case score_layout::per_token:
            return {values_.data(), static_cast<size_t>(vocab_)};
        case score_layout::per_position:
            return {values_.data() + static_cast<size_t>(pos) * vocab_, static_cast<size_t>(vocab_)};
        case score_layout::dynamic:
            if (dyn_buffer_.empty())
                throw contract_error("dynamic score table used before refresh()");
            return {dyn_buffer_.data() + static_cast<size_t>(pos) * vocab_, static_cast<size_t>(vocab_)};
    }
    return {};
}

double score_table::range() const {
    if (layout_ == score_layout::dynamic) {
        if (target_.empty()) return 0.0;
        double wmax = 1.0;
        for (double w : pos_weights_) wmax = std::max(wmax, w);
        return pos_weights_.empty() ? 1.0 : wmax;
    }
    if (values_.empty()) return 0.0;
    auto [mn, mx] = std::minmax_element(values_.begin(), values_.end());
    return *mx - *mn;
}

void score_table::check_compatible(const vocabulary & vocab, int length) {
    if (layout_ == score_layout::dynamic) {
        vocab_  = vocab.size;
        length_ = length;
        for (token_id t : target_) {
            if (!vocab.is_data_token(t))
                throw config_error("subsequence target token out of vocabulary");
        }
        if (static_cast<int>(target_.size()) > length)
            throw config_error("subsequence target longer than sequence");
        if (!pos_weights_.empty() && static_cast<int>(pos_weights_.size()) != length)
            throw config_error("positional weights length mismatch");
        return;
    }
    if (vocab_ != vocab.size)
        throw config_error("score table vocabulary size mismatch");
    if (layout_ == score_layout::per_position && length_ != length)
        throw config_error("per_position score table length mismatch");
}

score_table lexical_count_scores(const vocabulary & vocab, const std::vector<token_id> & targets) {
    std::vector<double> v(static_cast<size_t>(vocab.size), 0.0);
    for (token_id t : targets) {
        if (!vocab.is_data_token(t))
            throw config_error("lexical target token out of vocabulary");
        v[static_cast<size_t>(t)] = 1.0;
    }
    return score_table::per_token(std::move(v), "lexical_count");
}

score_table additive_property_scores(const vocabulary & vocab, const std::vector<double> & values) {
    if (static_cast<int>(values.size()) != vocab.size)
        throw config_error("additive scores: need one value per data token");
    return score_table::per_token(values, "additive_property");
}

score_table cluster_fraction_scores(const vocabulary & vocab, const std::vector<cluster_entry> & entries) {
    std::vector<double> v(static_cast<size_t>(vocab.size), 0.0);
    std::vector<uint8_t> seen(static_cast<size_t>(vocab.size), 0);
    for (const auto & e : entries) {
        if (!vocab.is_data_token(e.token))
            throw config_error("cluster entry token out of vocabulary");
        if (e.member_count <= 0)
            throw config_error("cluster entry with empty member list");
        if (e.tagged_count < 0 || e.tagged_count > e.member_count)
            throw config_error("cluster entry tagged count out of range");
        v[static_cast<size_t>(e.token)] = static_cast<double>(e.tagged_count) / e.member_count;
        seen[static_cast<size_t>(e.token)] = 1;
    }
    for (int j = 0; j < vocab.size; ++j) {
        if (!seen[static_cast<size_t>(j)])
            throw config_error("cluster metadata missing token " + std::to_string(j));
    }
    return score_table::per_token(std::move(v), "cluster_fraction");
}

score_table subsequence_scores(const vocabulary & vocab, const std::vector<token_id> & target, int length) {
    if (static_cast<int>(target.size()) > length)
        throw config_error("subsequence target longer than sequence");
    for (token_id t : target) {
        if (!vocab.is_data_token(t))
            throw config_error("subsequence target token out of vocabulary");
    }
    return score_table::subsequence(target, "subsequence");
}

score_table frontload_weights(const score_table & base, double kappa, int length) {
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw config_error("frontload kappa must be finite and >= 0");
    std::vector<double> w(static_cast<size_t>(length));
    for (int l = 0; l < length; ++l) {
        double frac = (length > 1) ? static_cast<double>(l) / (length - 1) : 0.0;
        w[static_cast<size_t>(l)] = 1.0 + kappa * (1.0 - frac);
    }
    if (base.layout_ == score_layout::dynamic) {
        score_table t = base;
        t.pos_weights_ = std::move(w);
        t.dyn_buffer_.clear();
        return t;
    }
    const int V = base.vocab_;
    std::vector<double> values(static_cast<size_t>(length) * V);
    for (int l = 0; l < length; ++l) {
        auto src = base.layout_ == score_layout::per_token
                       ? std::span<const double>(base.values_.data(), static_cast<size_t>(V))
                       : base.row(l);
        for (int j = 0; j < V; ++j)
            values[static_cast<size_t>(l) * V + j] = src[static_cast<size_t>(j)] * w[static_cast<size_t>(l)];
    }
    return score_table::per_position(length, V, std::move(values), base.provenance_ + "+frontload");
}

} // namespace pdd
