// Command-line driver: config-file-driven reproducible runs of the
// generation, training, comparison, statistics and sweep pipelines.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nlt/commands.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;

    nlt::RunConfig load() const {
        nlt::RunConfig cfg = nlt::load_run_config(config_path);
        if (seed >= 0) {
            cfg.seed = static_cast<std::uint32_t>(seed);
            cfg.train.seed = cfg.seed;
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        return cfg;
    }
};

void add_common(CLI::App* cmd, GlobalArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file")->required();
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--out", args.out_dir, "output directory override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neuron-level linear transformation crowd-counting testbed"};
    app.require_subcommand(1);

    GlobalArgs args;
    std::string checkpoint_path;
    std::vector<std::string> regime_names;
    std::vector<double> ratios;

    CLI::App* generate = app.add_subcommand("generate", "write both domains' datasets to disk");
    add_common(generate, args);

    CLI::App* train = app.add_subcommand("train", "train one regime, save best checkpoint, log and metrics");
    add_common(train, args);

    CLI::App* compare = app.add_subcommand("compare", "run several regimes on shared data and tabulate metrics");
    add_common(compare, args);
    compare->add_option("--regimes", regime_names, "comma-separated regime list (default from config)")
        ->delimiter(',');

    CLI::App* stats = app.add_subcommand("stats", "shift statistics and histograms from a checkpoint");
    add_common(stats, args);
    stats->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "nlt vs supervised across few-shot ratios");
    add_common(sweep, args);
    sweep->add_option("--ratios", ratios, "comma-separated few-shot ratios (default from config)")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        nlt::RunConfig cfg = args.load();
        if (generate->parsed()) {
            nlt::cmd_generate(cfg);
            std::cout << "datasets written to " << nlt::resolve_out_dir(cfg.out_dir).string() << "\n";
        } else if (train->parsed()) {
            const nlt::MetricsReport r = nlt::cmd_train(cfg);
            std::printf("%s: test mae=%.3f mse=%.3f psnr=%.3f ssim=%.4f\n", nlt::regime_name(cfg.regime), r.mae,
                        r.mse, r.psnr, r.ssim);
        } else if (compare->parsed()) {
            std::vector<nlt::Regime> regimes = cfg.regimes;
            if (!regime_names.empty()) {
                regimes.clear();
                for (const std::string& name : regime_names) regimes.push_back(nlt::regime_from_name(name));
            }
            for (const nlt::RegimeRow& row : nlt::cmd_compare(cfg, regimes))
                std::printf("%-18s mae=%.3f mse=%.3f psnr=%.3f ssim=%.4f\n", row.regime.c_str(), row.report.mae,
                            row.report.mse, row.report.psnr, row.report.ssim);
        } else if (stats->parsed()) {
            nlt::cmd_stats(cfg, checkpoint_path);
            std::cout << "shift statistics written to " << nlt::resolve_out_dir(cfg.out_dir).string() << "\n";
        } else if (sweep->parsed()) {
            const std::vector<double> use_ratios = ratios.empty() ? cfg.sweep_ratios : ratios;
            for (const nlt::SweepRow& row : nlt::cmd_sweep(cfg, use_ratios))
                std::printf("ratio=%.3g %-12s mae=%.3f mse=%.3f\n", row.ratio, row.regime.c_str(), row.mae, row.mse);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
