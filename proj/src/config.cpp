#include "pdd/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pdd {

using nlohmann::json;

std::vector<double> base_spec::resolve(int vocab) const {
    if (kind == "explicit") {
        if (static_cast<int>(probs.size()) != vocab)
            throw config_error("backend base: explicit row size != vocab");
        return probs;
    }
    if (kind == "uniform") {
        return std::vector<double>(static_cast<size_t>(vocab), 1.0 / vocab);
    }
    if (kind == "zipf") {
        if (!(zipf_s >= 0.0)) throw config_error("backend base: zipf exponent must be >= 0");
        return zipf_distribution(vocab, zipf_s);
    }
    throw config_error("unknown base distribution kind: " + kind);
}

namespace {

base_spec base_from_json(const json & j) {
    base_spec b;
    if (j.is_array()) {
        b.kind  = "explicit";
        b.probs = j.get<std::vector<double>>();
        return b;
    }
    b.kind = j.value("kind", "uniform");
    if (j.contains("s")) b.zipf_s = j.at("s").get<double>();
    if (j.contains("probs")) b.probs = j.at("probs").get<std::vector<double>>();
    return b;
}

json base_to_json(const base_spec & b) {
    json j;
    j["kind"] = b.kind;
    if (b.kind == "zipf") j["s"] = b.zipf_s;
    if (b.kind == "explicit") j["probs"] = b.probs;
    return j;
}

} // namespace

experiment_config experiment_config::from_json(const json & j) {
    experiment_config c;
    const auto & run = j.at("run");
    c.length = run.at("length").get<int>();
    c.steps  = run.at("steps").get<int>();
    c.chains = run.value("chains", 1);
    c.seed   = run.value("seed", 0ULL);
    if (run.contains("bound")) {
        const auto & b = run.at("bound");
        c.bound_mu_bar = b.value("mu_bar", 0.0);
        c.bound_sigma  = b.value("sigma", 0.0);
        c.bound_rho    = b.value("rho", 0.0);
        c.bound_delta  = b.value("delta", 0.05);
    }
    if (j.contains("schedule")) {
        const auto & s = j.at("schedule");
        c.schedule_kind = s.value("kind", "linear");
        c.schedule_ratio = s.value("ratio", 0.8);
        if (s.contains("alpha")) c.schedule_alpha = s.at("alpha").get<std::vector<double>>();
    }
    const auto & bk = j.at("backend");
    c.backend_cfg.kind  = bk.at("kind").get<std::string>();
    c.backend_cfg.vocab = bk.value("vocab", 0);
    if (bk.contains("base")) c.backend_cfg.base = base_from_json(bk.at("base"));
    if (bk.contains("transitions"))
        c.backend_cfg.transitions = bk.at("transitions").get<std::vector<std::vector<double>>>();
    c.backend_cfg.mu_bar = bk.value("mu_bar", 0.0);
    c.backend_cfg.sigma  = bk.value("sigma", 0.0);
    c.backend_cfg.rho    = bk.value("rho", 0.0);
    c.backend_cfg.path   = bk.value("path", std::string());
    if (j.contains("constraints")) {
        for (const auto & jc : j.at("constraints")) {
            constraint_config cc;
            const auto & sc = jc.at("scorer");
            cc.scorer.kind = sc.at("kind").get<std::string>();
            if (sc.contains("targets")) cc.scorer.targets = sc.at("targets").get<std::vector<token_id>>();
            if (sc.contains("values"))  cc.scorer.values  = sc.at("values").get<std::vector<double>>();
            if (sc.contains("file"))    cc.scorer.file    = sc.at("file").get<std::string>();
            if (sc.contains("pattern")) cc.scorer.pattern = sc.at("pattern").get<std::vector<token_id>>();
            cc.target     = jc.at("target").get<double>();
            cc.eta        = jc.value("eta", 1.0);
            cc.lambda0    = jc.value("lambda0", 0.0);
            cc.lambda_max = jc.value("lambda_max", 1e3);
            cc.slack      = jc.value("slack", "accumulated");
            cc.scope      = jc.value("scope", "scalar");
            cc.frontload_kappa = jc.value("frontload_kappa", 0.0);
            cc.name       = jc.value("name", std::string());
            c.constraints.push_back(std::move(cc));
        }
    }
    if (j.contains("baselines")) {
        const auto & b = j.at("baselines");
        c.baseline_unconstrained = b.value("unconstrained", false);
        if (b.contains("static_alpha") && !b.at("static_alpha").is_null())
            c.static_alpha = b.at("static_alpha").get<double>();
    }
    if (j.contains("metrics")) c.metrics = j.at("metrics").get<std::vector<std::string>>();
    if (j.contains("output")) {
        const auto & o = j.at("output");
        c.out_dir          = o.value("dir", "out");
        c.write_run_traces = o.value("write_run_traces", false);
        c.record_logits    = o.value("record_logits", false);
    }
    c.validate();
    return c;
}

experiment_config experiment_config::load(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception & e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
    try {
        return from_json(j);
    } catch (const json::exception & e) {
        throw config_error(std::string("config field error: ") + e.what());
    }
}

json experiment_config::to_json() const {
    json j;
    j["run"] = {{"length", length}, {"steps", steps}, {"chains", chains}, {"seed", seed}};
    if (bound_mu_bar != 0.0 || bound_sigma != 0.0 || bound_rho != 0.0) {
        j["run"]["bound"] = {{"mu_bar", bound_mu_bar}, {"sigma", bound_sigma},
                             {"rho", bound_rho}, {"delta", bound_delta}};
    }
    j["schedule"] = {{"kind", schedule_kind}};
    if (schedule_kind == "geometric") j["schedule"]["ratio"] = schedule_ratio;
    if (schedule_kind == "custom")    j["schedule"]["alpha"] = schedule_alpha;
    json bk;
    bk["kind"]  = backend_cfg.kind;
    bk["vocab"] = backend_cfg.vocab;
    if (backend_cfg.kind != "trace") bk["base"] = base_to_json(backend_cfg.base);
    if (backend_cfg.kind == "markov") bk["transitions"] = backend_cfg.transitions;
    if (backend_cfg.kind == "drifting") {
        bk["mu_bar"] = backend_cfg.mu_bar;
        bk["sigma"]  = backend_cfg.sigma;
        bk["rho"]    = backend_cfg.rho;
    }
    if (backend_cfg.kind == "trace") bk["path"] = backend_cfg.path;
    j["backend"] = std::move(bk);
    auto jcs = json::array();
    for (const auto & cc : constraints) {
        json jc;
        json sc;
        sc["kind"] = cc.scorer.kind;
        if (!cc.scorer.targets.empty()) sc["targets"] = cc.scorer.targets;
        if (!cc.scorer.values.empty())  sc["values"]  = cc.scorer.values;
        if (!cc.scorer.file.empty())    sc["file"]    = cc.scorer.file;
        if (!cc.scorer.pattern.empty()) sc["pattern"] = cc.scorer.pattern;
        jc["scorer"]     = std::move(sc);
        jc["target"]     = cc.target;
        jc["eta"]        = cc.eta;
        jc["lambda0"]    = cc.lambda0;
        jc["lambda_max"] = cc.lambda_max;
        jc["slack"]      = cc.slack;
        jc["scope"]      = cc.scope;
        jc["frontload_kappa"] = cc.frontload_kappa;
        if (!cc.name.empty()) jc["name"] = cc.name;
        jcs.push_back(std::move(jc));
    }
    j["constraints"] = std::move(jcs);
    j["baselines"] = {{"unconstrained", baseline_unconstrained}};
    if (static_alpha) j["baselines"]["static_alpha"] = *static_alpha;
    j["metrics"] = metrics;
    j["output"]  = {{"dir", out_dir}, {"write_run_traces", write_run_traces},
                    {"record_logits", record_logits}};
    return j;
}

std::string experiment_config::hash() const {
    // provenance hash over the resolved experiment; output paths excluded
    json j = to_json();
    j.erase("output");
    const std::string s = j.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void experiment_config::validate() const {
    if (length < 1) throw config_error("run.length must be >= 1");
    if (steps < 1) throw config_error("run.steps must be >= 1");
    if (chains < 1) throw config_error("run.chains must be >= 1");
    if (backend_cfg.kind != "trace" && backend_cfg.vocab < 2)
        throw config_error("backend.vocab must be >= 2");
    build_schedule();
    for (const auto & cc : constraints) {
        slack_mode_from_string(cc.slack);
        scope_from_string(cc.scope);
        if (!(cc.target >= 0.0)) throw config_error("constraint target must be >= 0");
        if (!(cc.eta >= 0.0)) throw config_error("constraint eta must be >= 0");
        if (!(cc.lambda_max > 0.0)) throw config_error("constraint lambda_max must be > 0");
        if (cc.lambda0 < 0.0 || cc.lambda0 > cc.lambda_max)
            throw config_error("constraint lambda0 out of [0, lambda_max]");
        if (!(cc.frontload_kappa >= 0.0)) throw config_error("frontload_kappa must be >= 0");
        if (!cc.scorer.file.empty()) {
            std::ifstream f(cc.scorer.file);
            if (!f) throw config_error("scorer file not found: " + cc.scorer.file);
        }
    }
}

mask_schedule experiment_config::build_schedule() const {
    const auto kind = schedule_kind_from_string(schedule_kind);
    switch (kind) {
        case schedule_kind::linear:    return mask_schedule::linear(steps);
        case schedule_kind::geometric: return mask_schedule::geometric(steps, schedule_ratio);
        case schedule_kind::custom:    return mask_schedule::custom(schedule_alpha);
    }
    throw config_error("unknown schedule kind");
}

std::unique_ptr<backend> experiment_config::build_backend() const {
    const auto & b = backend_cfg;
    if (b.kind == "unigram")
        return make_unigram_backend(length, b.base.resolve(b.vocab));
    if (b.kind == "markov")
        return make_markov_backend(length, b.base.resolve(b.vocab), b.transitions);
    if (b.kind == "drifting")
        return make_drifting_backend(length, b.base.resolve(b.vocab), b.mu_bar, b.sigma, b.rho);
    if (b.kind == "trace") {
        auto t = load_trace_backend(b.path);
        if (t->length() != length)
            throw config_error("trace backend length does not match run.length");
        return t;
    }
    throw config_error("unknown backend kind: " + b.kind);
}

std::vector<double> load_token_values(const std::string & path, int vocab) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open token-score file: " + path);
    std::vector<double> values(static_cast<size_t>(vocab), 0.0);
    std::vector<uint8_t> seen(static_cast<size_t>(vocab), 0);
    long tok = 0;
    double v = 0.0;
    while (in >> tok >> v) {
        if (tok < 0 || tok >= vocab)
            throw config_error("token-score file: token index out of range");
        values[static_cast<size_t>(tok)] = v;
        seen[static_cast<size_t>(tok)] = 1;
    }
    for (int j = 0; j < vocab; ++j) {
        if (!seen[static_cast<size_t>(j)])
            throw config_error("token-score file: missing value for token " + std::to_string(j));
    }
    return values;
}

std::vector<cluster_entry> load_cluster_entries(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open cluster metadata file: " + path);
    std::vector<cluster_entry> entries;
    long tok = 0, members = 0, tagged = 0;
    while (in >> tok >> members >> tagged)
        entries.push_back({static_cast<token_id>(tok), members, tagged});
    return entries;
}

score_table build_scorer(const scorer_config & sc, const vocabulary & vocab, int length) {
    if (sc.kind == "lexical") return lexical_count_scores(vocab, sc.targets);
    if (sc.kind == "additive") {
        if (!sc.file.empty()) return additive_property_scores(vocab, load_token_values(sc.file, vocab.size));
        return additive_property_scores(vocab, sc.values);
    }
    if (sc.kind == "cluster") {
        if (sc.file.empty()) throw config_error("cluster scorer needs a metadata file");
        return cluster_fraction_scores(vocab, load_cluster_entries(sc.file));
    }
    if (sc.kind == "subsequence") return subsequence_scores(vocab, sc.pattern, length);
    throw config_error("unknown scorer kind: " + sc.kind);
}

std::vector<constraint> experiment_config::build_constraints() const {
    const vocabulary vocab = vocabulary::of_size(backend_cfg.kind == "trace"
                                                     ? build_backend()->vocab()
                                                     : backend_cfg.vocab);
    std::vector<constraint> out;
    for (const auto & cc : constraints) {
        constraint c;
        c.scores = build_scorer(cc.scorer, vocab, length);
        if (cc.frontload_kappa > 0.0)
            c.scores = frontload_weights(c.scores, cc.frontload_kappa, length);
        c.target     = cc.target;
        c.eta        = cc.eta;
        c.lambda0    = cc.lambda0;
        c.lambda_max = cc.lambda_max;
        c.slack      = slack_mode_from_string(cc.slack);
        c.scope      = scope_from_string(cc.scope);
        c.name       = cc.name.empty() ? cc.scorer.kind : cc.name;
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace pdd
