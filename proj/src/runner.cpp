#include "pdd/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace pdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

run_config base_run_config(const experiment_config & cfg) {
    run_config rc;
    rc.length = cfg.length;
    rc.steps  = cfg.steps;
    rc.record_reward_bound = true;
    rc.bound_mu_bar = cfg.bound_mu_bar;
    rc.bound_sigma  = cfg.bound_sigma;
    rc.bound_rho    = cfg.bound_rho;
    rc.bound_delta  = cfg.bound_delta;
    return rc;
}

} // namespace

batch_result run_chains(const backend & model, const std::vector<constraint> & constraints,
                        const experiment_config & cfg, bool keep_traces, int n_threads) {
    const int n = cfg.chains;
    batch_result out;
    out.sequences.resize(static_cast<size_t>(n));
    out.totals.assign(constraints.size(), std::vector<double>(static_cast<size_t>(n), 0.0));
    if (keep_traces) out.traces.resize(static_cast<size_t>(n));

    const mask_schedule schedule = cfg.build_schedule();
    run_config rc = base_run_config(cfg);

    auto work = [&](int k) {
        run_config chain_rc = rc;
        chain_rc.seed = cfg.seed + static_cast<uint64_t>(k);
        run_trace trace = run_reverse(model, constraints, chain_rc, schedule);
        out.sequences[static_cast<size_t>(k)] = trace.final_tokens;
        for (size_t i = 0; i < constraints.size(); ++i)
            out.totals[i][static_cast<size_t>(k)] = trace.total_contribution(constraints[i]);
        if (keep_traces) out.traces[static_cast<size_t>(k)] = std::move(trace);
    };

    int workers = n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    workers = std::min(workers, n);
    if (workers == 1) {
        for (int k = 0; k < n; ++k) work(k);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) work(k);
            });
        }
        for (auto & th : pool) th.join();
    }
    return out;
}

metric_report compute_metrics(const experiment_config & cfg, const batch_result & run,
                              const batch_result * reference, const constraint * c0) {
    metric_report rep;
    if (c0 && !run.totals.empty()) {
        const auto & totals = run.totals[0];
        auto pr = pass_rate(totals, c0->target);
        rep.pass_fraction  = pr.fraction;
        rep.pass_std_error = pr.std_error;
        double sum = 0.0, viol = 0.0;
        for (double c : totals) {
            sum  += c;
            viol += std::max(0.0, c0->target - c);
        }
        rep.mean_contribution = sum / static_cast<double>(totals.size());
        rep.overshoot_ratio   = c0->target > 0.0 ? rep.mean_contribution / c0->target : 0.0;
        rep.mean_violation    = viol / static_cast<double>(totals.size());
    }
    const auto wants = [&](const char * name) {
        return std::find(cfg.metrics.begin(), cfg.metrics.end(), name) != cfg.metrics.end();
    };
    const int vocab = cfg.backend_cfg.vocab;
    if (wants("unigram_kl") && reference)
        rep.kl_nats = unigram_kl(run.sequences, reference->sequences, vocab);
    if (wants("dist2")) rep.dist2 = dist_n(run.sequences, 2).ratio;
    if (wants("jaccard") && run.sequences.size() >= 2)
        rep.jaccard = jaccard_diversity(run.sequences);
    return rep;
}

namespace {

void write_sequences(const fs::path & path, const std::vector<std::vector<token_id>> & seqs) {
    std::ofstream out(path);
    for (const auto & s : seqs) {
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) out << ' ';
            out << s[i];
        }
        out << '\n';
    }
}

void write_metrics_files(const fs::path & dir, const std::string & tag,
                         const metric_report & rep, const experiment_config & cfg) {
    {
        std::ofstream out(dir / ("metrics" + tag + ".txt"));
        out << "# config_hash " << cfg.hash() << '\n';
        out << "# conventions: unigram stats exclude the mask token; KL smoothing"
               " epsilon = 0.5/N per side\n";
        out << rep.to_text();
    }
    {
        std::ofstream out(dir / ("metrics" + tag + ".csv"));
        out << "pass,pass_se,cbar,overshoot,violation,kl,dist2,jaccard,config_hash\n";
        out << fmt17(rep.pass_fraction) << ',' << fmt17(rep.pass_std_error) << ','
            << fmt17(rep.mean_contribution) << ',' << fmt17(rep.overshoot_ratio) << ','
            << fmt17(rep.mean_violation) << ',' << fmt17(rep.kl_nats) << ','
            << fmt17(rep.dist2) << ',' << fmt17(rep.jaccard) << ',' << cfg.hash() << '\n';
    }
}

// Chains re-run with logit recording; one trace file per chain.
void record_logit_traces(const experiment_config & cfg, const backend & model,
                         const std::vector<constraint> & constraints, const fs::path & dir) {
    const mask_schedule schedule = cfg.build_schedule();
    run_config rc = base_run_config(cfg);
    for (int k = 0; k < cfg.chains; ++k) {
        rc.seed = cfg.seed + static_cast<uint64_t>(k);
        const std::string path = (dir / ("logits_chain" + std::to_string(k) + ".txt")).string();
        trace_recorder recorder(path, model, cfg.steps, rc.seed);
        auto session = recorder.wrap(model.make_session());
        run_reverse_with_session(model, *session, constraints, rc, schedule);
        recorder.flush();
    }
}

} // namespace

int cmd_sample(const experiment_config & cfg) {
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    auto model = cfg.build_backend();
    auto constraints = cfg.build_constraints();

    // soft feasibility pre-check on small instances
    if (!constraints.empty() && !constraints[0].scores.is_dynamic() &&
        std::pow(static_cast<double>(model->vocab()), cfg.length) <= 4096.0) {
        try {
            auto seqs = enumerate_sequences(model->vocab(), cfg.length);
            auto b = sequence_scores(constraints[0].scores, seqs);
            if (*std::max_element(b.begin(), b.end()) < constraints[0].target)
                std::cerr << "warning: constraint '" << constraints[0].name
                          << "' is infeasible (max B < R); guidance stays soft\n";
        } catch (const config_error &) {
            // enumeration not possible; skip the pre-check
        }
    }

    const bool keep_traces = cfg.write_run_traces;
    batch_result run = run_chains(*model, constraints, cfg, keep_traces);
    write_sequences(dir / "sequences.txt", run.sequences);
    if (keep_traces) {
        for (int k = 0; k < cfg.chains; ++k) {
            std::ofstream out(dir / ("trace_chain" + std::to_string(k) + ".jsonl"));
            run.traces[static_cast<size_t>(k)].write_jsonl(out);
        }
    }
    if (cfg.record_logits) record_logit_traces(cfg, *model, constraints, dir);

    const bool wants_kl = std::find(cfg.metrics.begin(), cfg.metrics.end(), "unigram_kl") !=
                          cfg.metrics.end();
    batch_result unconstrained;
    const bool need_reference = (wants_kl && !constraints.empty()) || cfg.baseline_unconstrained;
    if (need_reference) {
        unconstrained = run_chains(*model, {}, cfg, false);
        write_sequences(dir / "sequences_unconstrained.txt", unconstrained.sequences);
    }
    const constraint * c0 = constraints.empty() ? nullptr : &constraints[0];
    metric_report rep =
        compute_metrics(cfg, run, need_reference ? &unconstrained : nullptr, c0);
    write_metrics_files(dir, "", rep, cfg);

    if (cfg.static_alpha && !constraints.empty()) {
        auto pinned = constraints;
        for (auto & c : pinned) {
            c.lambda0 = std::min(*cfg.static_alpha, c.lambda_max);
            c.pin_multiplier = true;
        }
        batch_result stat = run_chains(*model, pinned, cfg, false);
        write_sequences(dir / "sequences_static.txt", stat.sequences);
        metric_report srep =
            compute_metrics(cfg, stat, need_reference ? &unconstrained : nullptr, &pinned[0]);
        write_metrics_files(dir, "_static", srep, cfg);
    }
    return 0;
}

// ------------------------------------------------------------------ sweep

namespace {

struct grid_axis {
    std::string key; // eta | slack | target
    std::vector<std::string> values;
};

std::vector<grid_axis> parse_grid(const std::string & spec) {
    std::vector<grid_axis> axes;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ';')) {
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw config_error("grid: expected key=v1,v2,...");
        grid_axis ax;
        ax.key = part.substr(0, eq);
        if (ax.key != "eta" && ax.key != "slack" && ax.key != "target")
            throw config_error("grid: unknown axis '" + ax.key + "'");
        std::stringstream vs(part.substr(eq + 1));
        std::string v;
        while (std::getline(vs, v, ',')) {
            if (!v.empty()) ax.values.push_back(v);
        }
        if (ax.values.empty()) throw config_error("grid: axis '" + ax.key + "' has no values");
        axes.push_back(std::move(ax));
    }
    if (axes.empty()) throw config_error("grid: empty specification");
    return axes;
}

} // namespace

std::string sweep_csv(const experiment_config & cfg, const std::string & grid_spec) {
    if (cfg.constraints.empty())
        throw config_error("sweep needs at least one constraint");
    auto axes = parse_grid(grid_spec);

    std::vector<size_t> idx(axes.size(), 0);
    std::ostringstream csv;
    csv << "eta,slack,target,pass,pass_se,cbar,overshoot,violation,kl,dist2,lambda_mean,config_hash\n";

    auto model = cfg.build_backend();
    batch_result unconstrained = run_chains(*model, {}, cfg, false);

    bool done = false;
    while (!done) {
        experiment_config cell = cfg;
        for (size_t a = 0; a < axes.size(); ++a) {
            const std::string & v = axes[a].values[idx[a]];
            for (auto & cc : cell.constraints) {
                if (axes[a].key == "eta")    cc.eta = std::stod(v);
                if (axes[a].key == "slack")  cc.slack = v;
                if (axes[a].key == "target") cc.target = std::stod(v);
            }
        }
        cell.validate();
        auto constraints = cell.build_constraints();
        batch_result run = run_chains(*model, constraints, cell, true);
        metric_report rep = compute_metrics(cell, run, &unconstrained, &constraints[0]);

        double lambda_mean = 0.0;
        long   lambda_n = 0;
        for (const auto & tr : run.traces) {
            for (const auto & st : tr.steps) {
                if (!st.lambda.empty()) {
                    lambda_mean += st.lambda[0];
                    ++lambda_n;
                }
            }
        }
        if (lambda_n) lambda_mean /= static_cast<double>(lambda_n);

        csv << fmt17(constraints[0].eta) << ',' << to_string(constraints[0].slack) << ','
            << fmt17(constraints[0].target) << ',' << fmt17(rep.pass_fraction) << ','
            << fmt17(rep.pass_std_error) << ',' << fmt17(rep.mean_contribution) << ','
            << fmt17(rep.overshoot_ratio) << ',' << fmt17(rep.mean_violation) << ','
            << fmt17(rep.kl_nats) << ',' << fmt17(rep.dist2) << ','
            << fmt17(lambda_mean) << ',' << cell.hash() << '\n';

        // advance the mixed-radix counter
        size_t a = 0;
        for (; a < axes.size(); ++a) {
            if (++idx[a] < axes[a].values.size()) break;
            idx[a] = 0;
        }
        done = a == axes.size();
    }
    return csv.str();
}

int cmd_sweep(const experiment_config & cfg, const std::string & grid_spec) {
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    const std::string csv = sweep_csv(cfg, grid_spec);
    std::ofstream out(dir / "sweep.csv");
    out << csv;
    return 0;
}

// ------------------------------------------------------------------ oracle

std::string oracle_report::to_text() const {
    std::ostringstream out;
    out << "lambda_star " << fmt17(solution.lambda_star) << '\n'
        << "kl_star " << fmt17(solution.kl_nats) << '\n'
        << "oracle_expectation " << fmt17(solution.expected_score) << '\n'
        << "empirical_expectation " << fmt17(empirical_expectation) << '\n'
        << "expectation_gap " << fmt17(expectation_gap) << '\n'
        << "tv_distance " << fmt17(tv_distance) << '\n'
        << "empirical_kl " << fmt17(empirical_kl) << '\n'
        << "kl_excess " << fmt17(kl_excess) << '\n'
        << "chains " << chains << '\n';
    return out.str();
}

oracle_report run_oracle(const experiment_config & cfg, long chains) {
    auto model = cfg.build_backend();
    if (!model->deterministic_rows())
        throw config_error("oracle comparison needs a unigram or markov backend");
    if (cfg.constraints.empty())
        throw config_error("oracle comparison needs one constraint");
    auto constraints = cfg.build_constraints();
    if (constraints[0].scores.is_dynamic())
        throw config_error("oracle comparison needs a static score table");
    const int V = model->vocab();
    const int L = cfg.length;
    const double n_seq = std::pow(static_cast<double>(V), L);
    if (n_seq > 1e6)
        throw config_error("enumeration limit exceeded: V^L > 1e6");

    const mask_schedule schedule = cfg.build_schedule();
    auto seqs = enumerate_sequences(V, L);
    std::vector<double> q;
    if (model->kind() == "unigram") {
        q = product_distribution(model->base_row(0), L);
    } else {
        q = exact_unconstrained_distribution(*model, schedule);
    }
    auto scores = sequence_scores(constraints[0].scores, seqs);
    oracle_report rep;
    rep.solution = exact_tilt_projection(q, scores, constraints[0].target);

    // index final sequences into the enumeration order
    std::vector<double> counts(seqs.size(), 0.0);
    run_config rc = base_run_config(cfg);
    rc.record_reward_bound = false;
    double total_b = 0.0;
    for (long k = 0; k < chains; ++k) {
        rc.seed = cfg.seed + static_cast<uint64_t>(k);
        run_trace tr = run_reverse(*model, constraints, rc, schedule);
        size_t idx = 0;
        for (token_id t : tr.final_tokens) idx = idx * static_cast<size_t>(V) + static_cast<size_t>(t);
        counts[idx] += 1.0;
        total_b += tr.total_contribution(constraints[0]);
    }
    rep.chains = chains;
    rep.empirical_expectation = total_b / static_cast<double>(chains);
    rep.expectation_gap = std::fabs(rep.empirical_expectation - constraints[0].target);
    double tv = 0.0, kl = 0.0;
    for (size_t i = 0; i < counts.size(); ++i) {
        const double p_hat = counts[i] / static_cast<double>(chains);
        tv += std::fabs(p_hat - rep.solution.distribution[i]);
        if (p_hat > 0.0) {
            if (q[i] <= 0.0) throw analysis_error("oracle: sampler reached a zero-probability sequence");
            kl += p_hat * std::log(p_hat / q[i]);
        }
    }
    rep.tv_distance = 0.5 * tv;
    rep.empirical_kl = kl;
    rep.kl_excess = rep.solution.kl_nats > 0.0 ? kl / rep.solution.kl_nats - 1.0 : 0.0;
    return rep;
}

int cmd_oracle(const experiment_config & cfg, long chains) {
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    oracle_report rep = run_oracle(cfg, chains);
    std::ofstream out(dir / "oracle.txt");
    out << "# config_hash " << cfg.hash() << '\n' << rep.to_text();
    std::cout << rep.to_text();
    return 0;
}

// ----------------------------------------------------------------- analyze

run_trace load_run_trace(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw analysis_error("cannot open run trace: " + path);
    run_trace tr;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception & e) {
            throw analysis_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("final")) {
            tr.final_tokens  = j.at("final").get<std::vector<token_id>>();
            tr.elapsed_steps = j.value("elapsed_steps", 0);
            continue;
        }
        step_record rec;
        try {
            rec.t = j.at("t").get<int>();
            for (const auto & c : j.at("commits"))
                rec.commits.push_back({c.at(0).get<int>(), c.at(1).get<token_id>()});
            rec.lambda  = j.at("lambda").get<std::vector<double>>();
            rec.slack   = j.at("slack").get<std::vector<double>>();
            rec.pi_t    = j.at("pi_t").get<double>();
            rec.bound_t = j.at("bound").get<double>();
            rec.bound_correction = j.value("bound_correction", 0.0);
        } catch (const json::exception & e) {
            throw analysis_error(path + ":" + std::to_string(lineno) + ": missing trace field: " + e.what());
        }
        tr.steps.push_back(std::move(rec));
    }
    if (tr.steps.empty()) throw analysis_error(path + ": no step records");
    return tr;
}

int cmd_analyze_consistency(const std::vector<std::string> & trace_paths, const std::string & out_dir,
                            double mu_bar) {
    if (trace_paths.size() < 2)
        throw analysis_error("consistency analysis needs at least 2 chain traces");
    std::vector<chain_rows> chains;
    chains.reserve(trace_paths.size());
    for (const auto & p : trace_paths) chains.push_back(load_chain_rows(p));
    consistency_report rep = temporal_consistency(chains, mu_bar);
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "consistency.txt");
    out << rep.to_text();
    std::cout << rep.to_text();
    return 0;
}

int cmd_analyze_bound(const std::vector<std::string> & trace_paths, const std::string & out_dir) {
    if (trace_paths.empty()) throw analysis_error("bound analysis needs at least 1 run trace");
    double total_pi = 0.0, total_bound = 0.0;
    long   held = 0, steps = 0;
    for (const auto & p : trace_paths) {
        run_trace tr = load_run_trace(p);
        bound_trace bt = evaluate_bound_trace(tr);
        total_pi    += bt.total_pi;
        total_bound += bt.total_bound;
        for (size_t i = 0; i < bt.pi.size(); ++i) held += (bt.pi[i] >= bt.bound[i] - 1e-9);
        steps += static_cast<long>(bt.pi.size());
    }
    std::ostringstream rep;
    rep << "hold_fraction " << fmt17(static_cast<double>(held) / static_cast<double>(steps)) << '\n'
        << "total_reward " << fmt17(total_pi) << '\n'
        << "total_bound " << fmt17(total_bound) << '\n'
        << "steps " << steps << '\n';
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "bound.txt");
    out << rep.str();
    std::cout << rep.str();
    return 0;
}

} // namespace pdd
