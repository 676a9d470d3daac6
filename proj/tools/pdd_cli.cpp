#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdd/errors.hpp"
#include "pdd/runner.hpp"

int main(int argc, char ** argv) {
    CLI::App app{"primal-dual guided sampler for masked discrete diffusion"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string grid_spec;
    std::string mode;
    long chains_override = -1;
    long long seed_override = -1;
    long oracle_chains = 100000;
    double mu_bar = -1.0;
    std::vector<std::string> trace_paths;

    auto add_common = [&](CLI::App * cmd) {
        cmd->add_option("--config", config_path, "experiment config (json)")->required();
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--chains", chains_override, "chain count override");
        cmd->add_option("--seed", seed_override, "base seed override");
    };

    auto * sample = app.add_subcommand("sample", "run guided chains and write sequences + metrics");
    add_common(sample);

    auto * sweep = app.add_subcommand("sweep", "grid sweep over eta / slack / target");
    add_common(sweep);
    sweep->add_option("--grid", grid_spec, "grid, e.g. eta=0.5,1,2;slack=accumulated,instantaneous")
        ->required();

    auto * oracle = app.add_subcommand("oracle", "exact tilt projection vs guided sampler");
    add_common(oracle);
    oracle->add_option("--oracle-chains", oracle_chains, "sampler chains for the comparison");

    auto * analyze = app.add_subcommand("analyze", "consistency / bound analysis of traces");
    analyze->add_option("--mode", mode, "consistency | bound")->required();
    analyze->add_option("--trace", trace_paths, "trace files")->required()->expected(-1);
    analyze->add_option("--out", out_dir, "output directory")->default_val("out");
    analyze->add_option("--mu-bar", mu_bar, "drift bound for the consistency check");

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) {
            if (mode == "consistency")
                return pdd::cmd_analyze_consistency(trace_paths, out_dir, mu_bar);
            if (mode == "bound")       return pdd::cmd_analyze_bound(trace_paths, out_dir);
            throw pdd::config_error("unknown analyze mode: " + mode);
        }
        pdd::experiment_config cfg = pdd::experiment_config::load(config_path);
        if (!out_dir.empty())     cfg.out_dir = out_dir;
        if (chains_override > 0)  cfg.chains = static_cast<int>(chains_override);
        if (seed_override >= 0)   cfg.seed = static_cast<uint64_t>(seed_override);
        cfg.validate();
        if (sample->parsed()) return pdd::cmd_sample(cfg);
        if (sweep->parsed())  return pdd::cmd_sweep(cfg, grid_spec);
        if (oracle->parsed()) return pdd::cmd_oracle(cfg, oracle_chains);
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << '\n';
        return pdd::exit_code_for(e);
    }
    return 0;
}
