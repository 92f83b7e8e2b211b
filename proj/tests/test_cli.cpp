#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlt/commands.hpp"
#include "nlt/config.hpp"

using namespace nlt;
namespace fs = std::filesystem;

namespace {

// Small-everything config so command tests run in seconds.
RunConfig tiny_run_config(const fs::path& out) {
    RunConfig cfg;
    cfg.source.height = cfg.source.width = 16;
    cfg.source.count_min = 1;
    cfg.source.count_max = 4;
    cfg.target.height = cfg.target.width = 16;
    cfg.target.count_min = 1;
    cfg.target.count_max = 3;
    cfg.source_sizes = {12, 3, 4};
    cfg.target_sizes = {8, 3, 4};
    cfg.train.iterations = 12;
    cfg.train.val_interval = 4;
    cfg.train.source_batch = 4;
    cfg.train.target_batch = 2;
    cfg.fewshot_ratio = 0.5;
    cfg.out_dir = out.string();
    cfg.stats_layers = {0, 2};
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("nlt_cli_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter++))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

}  // namespace

TEST(Config, ParseOverridesAndUnknownKeyRejection) {
    std::istringstream in(
        "[source]\n"
        "count_min = 3\n"
        "count_max = 9\n"
        "# a comment line\n"
        "[train]\n"
        "iterations = 42\n"
        "[run]\n"
        "seed = 77\n"
        "regime = finetune_all\n");
    RunConfig cfg = parse_run_config(in);
    EXPECT_EQ(cfg.source.count_min, 3);
    EXPECT_EQ(cfg.source.count_max, 9);
    EXPECT_EQ(cfg.train.iterations, 42);
    EXPECT_EQ(cfg.seed, 77u);
    EXPECT_EQ(cfg.train.seed, 77u);
    EXPECT_EQ(cfg.regime, Regime::finetune_all);

    std::istringstream bad("[run]\nfrobnicate = 1\n");
    EXPECT_THROW(parse_run_config(bad), std::invalid_argument);
    std::istringstream bad_section("[nonsense]\nx = 1\n");
    EXPECT_THROW(parse_run_config(bad_section), std::invalid_argument);
    std::istringstream orphan("x = 1\n");
    EXPECT_THROW(parse_run_config(orphan), std::invalid_argument);
}

TEST(Config, InvalidCountRangeFailsAtParseTime) {
    std::istringstream in("[source]\ncount_min = 9\ncount_max = 3\n");
    EXPECT_THROW(parse_run_config(in), std::invalid_argument);
}

TEST(Config, ResolvedEchoRoundTrips) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "x");
    cfg.seed = 123;
    cfg.train.seed = 123;
    cfg.regime = Regime::nlt_bias_only;
    cfg.sweep_ratios = {0.25, 0.75};
    const std::string text = resolved_config_text(cfg);
    std::istringstream in(text);
    RunConfig again = parse_run_config(in);
    EXPECT_EQ(resolved_config_text(again), text);
    EXPECT_EQ(again.seed, cfg.seed);
    EXPECT_EQ(again.regime, cfg.regime);
    EXPECT_EQ(again.sweep_ratios, cfg.sweep_ratios);
    EXPECT_EQ(again.out_dir, cfg.out_dir);
}

TEST(CmdGenerate, WritesSixSplitsDeterministically) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "gen");
    cmd_generate(cfg);

    for (const char* domain : {"source", "target"})
        for (const char* split : {"train", "val", "test"})
            EXPECT_TRUE(fs::is_directory(tmp.path / "gen" / domain / split)) << domain << "/" << split;

    // sample 0 of target/train: image + density + points with the right sizes
    const fs::path base = tmp.path / "gen" / "target" / "train";
    EXPECT_TRUE(fs::exists(base / "00000.img"));
    const std::vector<float> img = read_raw_floats(base / "00000.img", 16 * 16);
    const std::vector<float> den = read_raw_floats(base / "00000.den", 16 * 16);
    EXPECT_EQ(img.size(), 256u);
    EXPECT_EQ(den.size(), 256u);
    const auto pts = read_points_text(base / "00000.pts");
    EXPECT_FALSE(pts.empty());

    // rerun into another directory: byte-identical files
    RunConfig cfg2 = tiny_run_config(tmp.path / "gen2");
    cmd_generate(cfg2);
    EXPECT_EQ(slurp(base / "00000.img"), slurp(tmp.path / "gen2" / "target" / "train" / "00000.img"));
    EXPECT_EQ(slurp(base / "00000.pts"), slurp(tmp.path / "gen2" / "target" / "train" / "00000.pts"));

    // echoed configs agree except for the differing out_dir line
    auto strip_out_dir = [](std::string text) {
        const std::size_t pos = text.find("out_dir = ");
        const std::size_t end = text.find('\n', pos);
        return text.substr(0, pos) + text.substr(end + 1);
    };
    EXPECT_EQ(strip_out_dir(slurp(tmp.path / "gen" / "config.resolved.ini")),
              strip_out_dir(slurp(tmp.path / "gen2" / "config.resolved.ini")));
}

TEST(CmdTrain, WritesCheckpointLogAndMetrics) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "train");
    cfg.regime = Regime::nlt;
    const MetricsReport report = cmd_train(cfg);
    EXPECT_GT(report.n_images, 0);

    EXPECT_TRUE(fs::exists(tmp.path / "train" / "checkpoint.ckpt"));
    EXPECT_TRUE(fs::exists(tmp.path / "train" / "config.resolved.ini"));
    const std::string log = slurp(tmp.path / "train" / "train_log.csv");
    EXPECT_NE(log.find("iter,source_loss,target_loss,val_mae"), std::string::npos);

    const std::string metrics = slurp(tmp.path / "train" / "metrics.txt");
    EXPECT_NE(metrics.find("mae="), std::string::npos);
    EXPECT_NE(metrics.find("ssim="), std::string::npos);

    Checkpoint ckpt = load_checkpoint(tmp.path / "train" / "checkpoint.ckpt");
    EXPECT_EQ(ckpt.regime, "nlt");
    EXPECT_TRUE(ckpt.bank.has_value());
}

TEST(CmdTrain, NoAdaptLogHasEmptyTargetColumn) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "na");
    cfg.regime = Regime::no_adapt;
    cmd_train(cfg);
    std::istringstream log(slurp(tmp.path / "na" / "train_log.csv"));
    std::string line;
    std::getline(log, line);  // header
    bool saw_row = false;
    while (std::getline(log, line)) {
        if (line.empty()) continue;
        saw_row = true;
        // iter,source_loss,target_loss,val_mae -> target field empty
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = line.find(',', c1 + 1);
        const std::size_t c3 = line.find(',', c2 + 1);
        EXPECT_EQ(c3, c2 + 1) << "target_loss column not empty in: " << line;
    }
    EXPECT_TRUE(saw_row);
}

TEST(CmdTrain, RerunFromEchoedConfigIsBitwiseIdentical) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "a");
    cfg.regime = Regime::nlt;
    cmd_train(cfg);

    RunConfig echoed = load_run_config(tmp.path / "a" / "config.resolved.ini");
    echoed.out_dir = (tmp.path / "b").string();
    cmd_train(echoed);

    EXPECT_EQ(slurp(tmp.path / "a" / "checkpoint.ckpt"), slurp(tmp.path / "b" / "checkpoint.ckpt"));
    EXPECT_EQ(slurp(tmp.path / "a" / "train_log.csv"), slurp(tmp.path / "b" / "train_log.csv"));
    EXPECT_EQ(slurp(tmp.path / "a" / "metrics.txt"), slurp(tmp.path / "b" / "metrics.txt"));
}

TEST(CmdTrain, ZeroIterationNltEqualsNoAdaptAtInit) {
    TempDir tmp;
    RunConfig nlt_cfg = tiny_run_config(tmp.path / "nlt0");
    nlt_cfg.regime = Regime::nlt;
    nlt_cfg.train.iterations = 0;
    const MetricsReport r_nlt = cmd_train(nlt_cfg);

    RunConfig na_cfg = tiny_run_config(tmp.path / "na0");
    na_cfg.regime = Regime::no_adapt;
    na_cfg.train.iterations = 0;
    const MetricsReport r_na = cmd_train(na_cfg);

    EXPECT_DOUBLE_EQ(r_nlt.mae, r_na.mae);
    EXPECT_DOUBLE_EQ(r_nlt.mse, r_na.mse);
    EXPECT_DOUBLE_EQ(r_nlt.psnr, r_na.psnr);
    EXPECT_DOUBLE_EQ(r_nlt.ssim, r_na.ssim);
}

TEST(CmdCompare, RowsInRequestOrderWithSharedHash) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "cmp");
    std::vector<RegimeRow> rows = cmd_compare(cfg, {Regime::no_adapt, Regime::nlt});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].regime, "no_adapt");
    EXPECT_EQ(rows[1].regime, "nlt");

    const std::string tsv = slurp(tmp.path / "cmp" / "comparison.tsv");
    EXPECT_NE(tsv.find("test_split_hash="), std::string::npos);
    EXPECT_NE(tsv.find("regime\tmae\tmse\tpsnr\tssim"), std::string::npos);

    EXPECT_THROW(cmd_compare(cfg, {Regime::nlt, Regime::nlt}), std::invalid_argument);
    EXPECT_THROW(cmd_compare(cfg, {Regime::nlt}), std::invalid_argument);
}

TEST(CmdStats, OutputsAndBankMissingError) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "st");
    cfg.regime = Regime::nlt;
    cfg.plots = true;
    cmd_train(cfg);
    cfg.out_dir = (tmp.path / "stats_out").string();
    cmd_stats(cfg, tmp.path / "st" / "checkpoint.ckpt");

    const std::string stats = slurp(tmp.path / "stats_out" / "shift_stats.txt");
    EXPECT_NE(stats.find("layer=0"), std::string::npos);
    EXPECT_NE(stats.find("category="), std::string::npos);
    EXPECT_TRUE(fs::exists(tmp.path / "stats_out" / "hist_layer0.txt"));
    EXPECT_TRUE(fs::exists(tmp.path / "stats_out" / "hist_layer2.txt"));
    EXPECT_TRUE(fs::exists(tmp.path / "stats_out" / "hist_layer0.pgm"));

    // histogram counts sum to the layer's neuron count
    std::istringstream hist(slurp(tmp.path / "stats_out" / "hist_layer0.txt"));
    double lo, hi;
    int count, total = 0;
    while (hist >> lo >> hi >> count) total += count;
    Checkpoint ckpt = load_checkpoint(tmp.path / "st" / "checkpoint.ckpt");
    EXPECT_EQ(total, ckpt.source_params[0].weight.dim(0));

    // a no_adapt checkpoint has no bank
    RunConfig na = tiny_run_config(tmp.path / "na_ck");
    na.regime = Regime::no_adapt;
    cmd_train(na);
    na.out_dir = (tmp.path / "na_stats").string();
    try {
        cmd_stats(na, tmp.path / "na_ck" / "checkpoint.ckpt");
        FAIL() << "expected bank-missing error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("no shift parameters"), std::string::npos) << e.what();
    }
}

TEST(CmdStats, CraftedAllNegativeBankReportsDown) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "craft");
    cfg.regime = Regime::nlt;
    cfg.train.iterations = 0;
    cmd_train(cfg);
    Checkpoint ckpt = load_checkpoint(tmp.path / "craft" / "checkpoint.ckpt");
    ASSERT_TRUE(ckpt.bank.has_value());

    // fresh bank first: all means zero -> the degenerate up_down category
    {
        cfg.out_dir = (tmp.path / "fresh_stats").string();
        cmd_stats(cfg, tmp.path / "craft" / "checkpoint.ckpt");
        const std::string stats = slurp(tmp.path / "fresh_stats" / "shift_stats.txt");
        EXPECT_NE(stats.find("category=up_down"), std::string::npos);
    }

    for (ShiftLayer& l : ckpt.bank->layers) {
        for (float& f : l.factor) f = 0.9f;
        for (float& b : l.bias) b = -0.05f;
    }
    save_checkpoint(ckpt, tmp.path / "craft" / "down.ckpt");
    cfg.out_dir = (tmp.path / "down_stats").string();
    cmd_stats(cfg, tmp.path / "craft" / "down.ckpt");
    const std::string stats = slurp(tmp.path / "down_stats" / "shift_stats.txt");
    EXPECT_NE(stats.find("category=down"), std::string::npos);
}

TEST(CmdSweep, TableShapeAndRoundTrip) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "sw");
    std::vector<SweepRow> rows = cmd_sweep(cfg, {0.25, 0.5, 1.0});
    ASSERT_EQ(rows.size(), 6u);  // 2 regimes x 3 ratios
    EXPECT_EQ(rows[0].regime, "nlt");
    EXPECT_EQ(rows[1].regime, "supervised");

    std::vector<SweepRow> parsed = parse_sweep_table(tmp.path / "sw" / "sweep.tsv");
    ASSERT_EQ(parsed.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(parsed[i].regime, rows[i].regime);
        EXPECT_DOUBLE_EQ(parsed[i].ratio, rows[i].ratio);
        EXPECT_DOUBLE_EQ(parsed[i].mae, rows[i].mae);
        EXPECT_DOUBLE_EQ(parsed[i].mse, rows[i].mse);
    }
    EXPECT_THROW(cmd_sweep(cfg, {0.0}), std::invalid_argument);
    EXPECT_THROW(cmd_sweep(cfg, {1.5}), std::invalid_argument);
}

TEST(CmdSweep, FullRatioUsesWholeTargetTrainSet) {
    TempDir tmp;
    RunConfig cfg = tiny_run_config(tmp.path / "sw1");
    std::vector<SweepRow> rows = cmd_sweep(cfg, {1.0});
    ASSERT_EQ(rows.size(), 2u);
    // equivalent direct run: supervised on the full shuffled train set
    Datasets data = build_datasets(cfg);
    CounterNet net = make_net(cfg);
    std::vector<Sample> full = select_few_shot(data.target.train, 1.0, cfg.seed);
    EXPECT_EQ(full.size(), data.target.train.size());
    Checkpoint sup = run_regime(Regime::supervised, net, data.source.train, full, data.target.val, cfg.train);
    MetricsReport r = evaluate(net, sup.source_params, data.target.test);
    EXPECT_DOUBLE_EQ(rows[1].mae, r.mae);
}
