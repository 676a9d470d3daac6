#include "pdd/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pdd/errors.hpp"

namespace pdd {

std::vector<double> normalized_log_probs(const std::vector<double> & probs) {
    double z = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw config_error("probability entries must be finite and >= 0");
        z += p;
    }
    if (!(z > 0.0)) throw config_error("probability row sums to zero");
    std::vector<double> out(probs.size());
    for (size_t j = 0; j < probs.size(); ++j) {
        out[j] = probs[j] > 0.0 ? std::log(probs[j] / z)
                                : -std::numeric_limits<double>::infinity();
    }
    return out;
}

std::vector<double> zipf_distribution(int vocab, double exponent) {
    std::vector<double> w(static_cast<size_t>(vocab));
    double z = 0.0;
    for (int j = 0; j < vocab; ++j) {
        w[static_cast<size_t>(j)] = std::pow(static_cast<double>(j) + 1.0, -exponent);
        z += w[static_cast<size_t>(j)];
    }
    for (double & v : w) v /= z;
    return w;
}

double backend::base_logp_min() const {
    double m = std::numeric_limits<double>::infinity();
    for (int l = 0; l < length(); ++l) {
        for (double v : base_row(l))
            if (std::isfinite(v)) m = std::min(m, v);
    }
    return m;
}

double backend::base_logp_max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < length(); ++l) {
        for (double v : base_row(l))
            if (std::isfinite(v)) m = std::max(m, v);
    }
    return m;
}

// ---------------------------------------------------------------- unigram

namespace {

class unigram_backend_t;

class unigram_session : public backend_session {
  public:
    explicit unigram_session(const std::vector<double> & logp) : logp_(logp) {}
    void rows(int, const sequence_state & x, rng_stream &, logit_matrix & out) override;

  private:
    const std::vector<double> & logp_;
};

class unigram_backend_t : public backend {
  public:
    unigram_backend_t(int length, std::vector<double> base_probs)
        : length_(length), logp_(normalized_log_probs(base_probs)) {}

    int vocab() const override { return static_cast<int>(logp_.size()); }
    int length() const override { return length_; }
    std::string kind() const override { return "unigram"; }
    std::span<const double> base_row(int) const override { return logp_; }
    std::unique_ptr<backend_session> make_session() const override {
        return std::make_unique<unigram_session>(logp_);
    }
    bool deterministic_rows() const override { return true; }

  private:
    int length_;
    std::vector<double> logp_;
};

void unigram_session::rows(int, const sequence_state & x, rng_stream &, logit_matrix & out) {
    const int V = static_cast<int>(logp_.size());
    const vocabulary voc{V, static_cast<token_id>(V)};
    out.reset(x.length(), V);
    out.shared_rows = true;
    for (int l = 0; l < x.length(); ++l) {
        if (!x.is_masked(l, voc)) continue;
        std::copy(logp_.begin(), logp_.end(), out.row(l).begin());
        out.row_set[static_cast<size_t>(l)] = 1;
    }
}

// ---------------------------------------------------------------- markov

class markov_backend_t : public backend {
  public:
    markov_backend_t(int length, std::vector<double> base_probs,
                     std::vector<std::vector<double>> transition_rows)
        : length_(length), logp_(normalized_log_probs(base_probs)) {
        const int V = vocab();
        if (static_cast<int>(transition_rows.size()) != V)
            throw config_error("markov backend: need V transition rows");
        for (auto & r : transition_rows) {
            if (static_cast<int>(r.size()) != V)
                throw config_error("markov backend: transition row size mismatch");
            trans_.push_back(normalized_log_probs(r));
        }
    }

    int vocab() const override { return static_cast<int>(logp_.size()); }
    int length() const override { return length_; }
    std::string kind() const override { return "markov"; }
    std::span<const double> base_row(int) const override { return logp_; }
    std::unique_ptr<backend_session> make_session() const override;
    bool deterministic_rows() const override { return true; }

    std::span<const double> row_for(const sequence_state & x, int pos, const vocabulary & voc) const {
        for (int k = pos - 1; k >= 0; --k) {
            const token_id t = x.tokens[static_cast<size_t>(k)];
            if (t != voc.mask_id) return trans_[static_cast<size_t>(t)];
        }
        return logp_;
    }

  private:
    int length_;
    std::vector<double> logp_;
    std::vector<std::vector<double>> trans_;
};

class markov_session : public backend_session {
  public:
    explicit markov_session(const markov_backend_t & b) : b_(b) {}
    void rows(int, const sequence_state & x, rng_stream &, logit_matrix & out) override {
        const vocabulary voc{b_.vocab(), static_cast<token_id>(b_.vocab())};
        out.reset(x.length(), b_.vocab());
        for (int l = 0; l < x.length(); ++l) {
            if (!x.is_masked(l, voc)) continue;
            auto src = b_.row_for(x, l, voc);
            std::copy(src.begin(), src.end(), out.row(l).begin());
            out.row_set[static_cast<size_t>(l)] = 1;
        }
    }

  private:
    const markov_backend_t & b_;
};

std::unique_ptr<backend_session> markov_backend_t::make_session() const {
    return std::make_unique<markov_session>(*this);
}

// ---------------------------------------------------------------- drifting

class drifting_backend_t : public backend {
  public:
    drifting_backend_t(int length, std::vector<double> base_probs,
                       double mu_bar, double sigma, double rho)
        : length_(length), logp_(normalized_log_probs(base_probs)),
          mu_bar_(mu_bar), sigma_(sigma), rho_(rho) {
        if (!(sigma >= 0.0)) throw config_error("drifting backend: sigma must be >= 0");
        if (rho < 0.0 || rho > sigma * sigma)
            throw config_error("drifting backend: need 0 <= rho <= sigma^2");
    }

    int vocab() const override { return static_cast<int>(logp_.size()); }
    int length() const override { return length_; }
    std::string kind() const override { return "drifting"; }
    std::span<const double> base_row(int) const override { return logp_; }
    std::unique_ptr<backend_session> make_session() const override;

    double mu_bar() const { return mu_bar_; }
    double sigma() const { return sigma_; }
    double rho() const { return rho_; }
    const std::vector<double> & base_logp() const { return logp_; }

  private:
    int length_;
    std::vector<double> logp_;
    double mu_bar_, sigma_, rho_;
};

class drifting_session : public backend_session {
  public:
    explicit drifting_session(const drifting_backend_t & b)
        : b_(b), cum_(static_cast<size_t>(b.length()) * b.vocab(), 0.0) {}

    void rows(int, const sequence_state & x, rng_stream & rng, logit_matrix & out) override {
        const int L = b_.length();
        const int V = b_.vocab();
        const double sigma = b_.sigma();
        const double rho   = b_.rho();
        // Increments are drawn for every (position, token) regardless of
        // mask state, so backend rng consumption is independent of the
        // sampler's choices. A zero-variance spec is a no-op: the common
        // mu_bar shift cancels under per-row renormalisation.
        if (sigma > 0.0) {
            const double shared_sd = std::sqrt(rho);
            const double indep_sd  = std::sqrt(sigma * sigma - rho);
            std::vector<double> shared(static_cast<size_t>(V), 0.0);
            if (rho > 0.0) {
                for (int j = 0; j < V; ++j) shared[static_cast<size_t>(j)] = shared_sd * rng.normal();
            }
            for (int l = 0; l < L; ++l) {
                double * c = cum_.data() + static_cast<size_t>(l) * V;
                for (int j = 0; j < V; ++j)
                    c[j] += b_.mu_bar() + shared[static_cast<size_t>(j)] + indep_sd * rng.normal();
            }
        }
        const vocabulary voc{V, static_cast<token_id>(V)};
        out.reset(L, V);
        const auto & base = b_.base_logp();
        std::vector<double> raw(static_cast<size_t>(V));
        for (int l = 0; l < L; ++l) {
            if (!x.is_masked(l, voc)) continue;
            const double * c = cum_.data() + static_cast<size_t>(l) * V;
            double m = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < V; ++j) {
                raw[static_cast<size_t>(j)] = base[static_cast<size_t>(j)] + c[j];
                m = std::max(m, raw[static_cast<size_t>(j)]);
            }
            double z = 0.0;
            for (int j = 0; j < V; ++j) z += std::exp(raw[static_cast<size_t>(j)] - m);
            const double lse = m + std::log(z);
            auto dst = out.row(l);
            for (int j = 0; j < V; ++j) dst[static_cast<size_t>(j)] = raw[static_cast<size_t>(j)] - lse;
            out.row_set[static_cast<size_t>(l)] = 1;
        }
    }

  private:
    const drifting_backend_t & b_;
    std::vector<double> cum_;
};

std::unique_ptr<backend_session> drifting_backend_t::make_session() const {
    return std::make_unique<drifting_session>(*this);
}

// ---------------------------------------------------------------- trace

struct trace_data {
    int vocab = 0, length = 0, steps = 0;
    std::map<std::pair<int, int>, std::vector<double>> rows; // (t, pos) -> row
};

class trace_backend_t : public backend {
  public:
    explicit trace_backend_t(trace_data data) : data_(std::move(data)) {
        // earliest recorded step doubles as the prior row
        base_.assign(static_cast<size_t>(data_.length) * data_.vocab, 0.0);
        base_set_.assign(static_cast<size_t>(data_.length), 0);
        for (const auto & [key, row] : data_.rows) {
            const auto & [t, pos] = key;
            if (t == data_.steps - 1) {
                std::copy(row.begin(), row.end(),
                          base_.begin() + static_cast<size_t>(pos) * data_.vocab);
                base_set_[static_cast<size_t>(pos)] = 1;
            }
        }
    }

    int vocab() const override { return data_.vocab; }
    int length() const override { return data_.length; }
    std::string kind() const override { return "trace"; }
    std::span<const double> base_row(int pos) const override {
        if (!base_set_[static_cast<size_t>(pos)])
            throw replay_error("trace backend: no base row recorded for position " + std::to_string(pos));
        return {base_.data() + static_cast<size_t>(pos) * data_.vocab, static_cast<size_t>(data_.vocab)};
    }
    std::unique_ptr<backend_session> make_session() const override;

    const trace_data & data() const { return data_; }

  private:
    trace_data data_;
    std::vector<double> base_;
    std::vector<uint8_t> base_set_;
};

class trace_session : public backend_session {
  public:
    explicit trace_session(const trace_backend_t & b) : b_(b) {}
    void rows(int t, const sequence_state & x, rng_stream &, logit_matrix & out) override {
        const auto & data = b_.data();
        if (t < 0 || t >= data.steps)
            throw replay_error("trace replay: step " + std::to_string(t) + " outside recorded range");
        const vocabulary voc{data.vocab, static_cast<token_id>(data.vocab)};
        out.reset(x.length(), data.vocab);
        for (int l = 0; l < x.length(); ++l) {
            if (!x.is_masked(l, voc)) continue;
            auto it = data.rows.find({t, l});
            if (it == data.rows.end())
                throw replay_error("trace replay: no row recorded for step " + std::to_string(t) +
                                   " position " + std::to_string(l));
            std::copy(it->second.begin(), it->second.end(), out.row(l).begin());
            out.row_set[static_cast<size_t>(l)] = 1;
        }
    }

  private:
    const trace_backend_t & b_;
};

std::unique_ptr<backend_session> trace_backend_t::make_session() const {
    return std::make_unique<trace_session>(*this);
}

} // namespace

std::unique_ptr<backend> make_unigram_backend(int length, std::vector<double> base_probs) {
    if (length < 1) throw config_error("backend length must be >= 1");
    return std::make_unique<unigram_backend_t>(length, std::move(base_probs));
}

std::unique_ptr<backend> make_markov_backend(int length, std::vector<double> base_probs,
                                             std::vector<std::vector<double>> transition_rows) {
    if (length < 1) throw config_error("backend length must be >= 1");
    return std::make_unique<markov_backend_t>(length, std::move(base_probs), std::move(transition_rows));
}

std::unique_ptr<backend> make_drifting_backend(int length, std::vector<double> base_probs,
                                               double mu_bar, double sigma, double rho) {
    if (length < 1) throw config_error("backend length must be >= 1");
    return std::make_unique<drifting_backend_t>(length, std::move(base_probs), mu_bar, sigma, rho);
}

std::unique_ptr<backend> load_trace_backend(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw analysis_error("cannot open trace file: " + path);
    trace_data data;
    std::string line;
    bool have_meta = false;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            ss >> data.vocab >> data.length >> data.steps;
            if (!ss || data.vocab < 2 || data.length < 1 || data.steps < 1)
                throw analysis_error(path + ":" + std::to_string(lineno) + ": malformed meta record");
            have_meta = true;
        } else if (tag == "row") {
            if (!have_meta)
                throw analysis_error(path + ": row record before meta");
            int t = 0, pos = 0;
            ss >> t >> pos;
            std::vector<double> row(static_cast<size_t>(data.vocab));
            for (int j = 0; j < data.vocab; ++j) ss >> row[static_cast<size_t>(j)];
            if (!ss || t < 0 || t >= data.steps || pos < 0 || pos >= data.length)
                throw analysis_error(path + ":" + std::to_string(lineno) + ": malformed row record");
            data.rows[{t, pos}] = std::move(row);
        } else {
            throw analysis_error(path + ":" + std::to_string(lineno) + ": unknown record '" + tag + "'");
        }
    }
    if (!have_meta) throw analysis_error(path + ": missing meta record");
    return std::make_unique<trace_backend_t>(std::move(data));
}

// ------------------------------------------------------------- recorder

struct trace_recorder::impl {
    std::ofstream out;
    std::string path;
};

namespace {

class recording_session : public backend_session {
  public:
    recording_session(std::unique_ptr<backend_session> inner, std::ofstream & out)
        : inner_(std::move(inner)), out_(out) {}

    void rows(int t, const sequence_state & x, rng_stream & rng, logit_matrix & out) override {
        inner_->rows(t, x, rng, out);
        char buf[40];
        for (int l = 0; l < out.length; ++l) {
            if (!out.row_set[static_cast<size_t>(l)]) continue;
            out_ << "row " << t << ' ' << l;
            for (double v : out.row(l)) {
                std::snprintf(buf, sizeof buf, " %.17g", v);
                out_ << buf;
            }
            out_ << '\n';
        }
    }

  private:
    std::unique_ptr<backend_session> inner_;
    std::ofstream & out_;
};

} // namespace

trace_recorder::trace_recorder(std::string path, const backend & source, int steps, uint64_t seed)
    : impl_(std::make_unique<impl>()) {
    impl_->path = path;
    impl_->out.open(path);
    if (!impl_->out) throw contract_error("cannot open trace file for writing: " + path);
    impl_->out << "# logit trace v1 (" << source.kind() << ")\n";
    impl_->out << "meta " << source.vocab() << ' ' << source.length() << ' ' << steps
               << " seed " << seed << '\n';
}

trace_recorder::~trace_recorder() = default;

std::unique_ptr<backend_session> trace_recorder::wrap(std::unique_ptr<backend_session> inner) {
    return std::make_unique<recording_session>(std::move(inner), impl_->out);
}

void trace_recorder::flush() {
    impl_->out.flush();
    if (!impl_->out) throw contract_error("trace write failed: " + impl_->path);
}

} // namespace pdd
