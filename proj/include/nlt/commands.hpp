#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "nlt/analysis.hpp"
#include "nlt/checkpoint.hpp"
#include "nlt/config.hpp"
#include "nlt/image_io.hpp"
#include "nlt/metrics.hpp"
#include "nlt/train.hpp"

namespace nlt {

namespace detail {

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t hash_samples(const std::vector<Sample>& samples) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Sample& s : samples) {
        h = fnv1a(h, s.image.data.data(), s.image.data.size() * sizeof(float));
        h = fnv1a(h, s.density.data.data(), s.density.data.size() * sizeof(float));
    }
    return h;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// Exact float64 round-trip, for the machine-readable tables.
inline std::string fmt_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string metrics_text(const MetricsReport& r) {
    std::ostringstream os;
    os << "mae=" << fmt(r.mae) << "\n";
    os << "mse=" << fmt(r.mse) << "\n";
    os << "psnr=" << fmt(r.psnr) << "\n";
    os << "ssim=" << fmt(r.ssim) << "\n";
    os << "n_images=" << r.n_images << "\n";
    return os.str();
}

}  // namespace detail

/// Output root: the NLT_OUT_ROOT environment variable when set, else the
/// working directory. Relative out_dir values resolve against it.
inline std::filesystem::path resolve_out_dir(const std::string& out_dir) {
    std::filesystem::path p(out_dir);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("NLT_OUT_ROOT")) return std::filesystem::path(root) / p;
    return p;
}

struct Datasets {
    DatasetSplit source;
    DatasetSplit target;
};

/// Deterministic dataset assembly: sub-seeds are derived from the master
/// seed, and scene regularization clips the source training set to the
/// target count range.
inline Datasets build_datasets(const RunConfig& cfg) {
    Datasets d;
    d.source = build_split(cfg.source, cfg.source_sizes, mix_seed(cfg.seed, 0xa11));
    d.target = build_split(cfg.target, cfg.target_sizes, mix_seed(cfg.seed, 0xb22));
    if (cfg.scene_reg && !d.source.train.empty())
        d.source.train = scene_regularization(d.source.train, cfg.target.count_min, cfg.target.count_max);
    return d;
}

inline CounterNet make_net(const RunConfig& cfg) {
    return build_counter(cfg.net_config, static_cast<unsigned>(mix_seed(cfg.seed, 0xc33)), cfg.input_channels);
}

inline void echo_config(const RunConfig& cfg, const std::filesystem::path& dir) {
    detail::atomic_write(dir / "config.resolved.ini", resolved_config_text(cfg));
}

/// generate: writes both domains' splits. Per sample: a raw little-endian
/// float32 image, a density file of the same format, and a text sidecar of
/// "row col" point lines, all sharing a zero-padded index stem.
inline void cmd_generate(const RunConfig& cfg) {
    const std::filesystem::path out = resolve_out_dir(cfg.out_dir);
    std::filesystem::create_directories(out);
    Datasets data = build_datasets(cfg);
    auto dump_split = [&](const std::filesystem::path& dir, const std::vector<Sample>& samples) {
        std::filesystem::create_directories(dir);
        char stem[16];
        for (std::size_t i = 0; i < samples.size(); ++i) {
            std::snprintf(stem, sizeof(stem), "%05zu", i);
            write_raw_floats(dir / (std::string(stem) + ".img"), samples[i].image.data);
            write_raw_floats(dir / (std::string(stem) + ".den"), samples[i].density.data);
            write_points_text(dir / (std::string(stem) + ".pts"), samples[i].points);
        }
    };
    dump_split(out / "source" / "train", data.source.train);
    dump_split(out / "source" / "val", data.source.val);
    dump_split(out / "source" / "test", data.source.test);
    dump_split(out / "target" / "train", data.target.train);
    dump_split(out / "target" / "val", data.target.val);
    dump_split(out / "target" / "test", data.target.test);
    echo_config(cfg, out);
}

/// train: one regime end to end. Writes the best checkpoint, a fixed-column
/// training log and the final metrics on the target test split.
inline MetricsReport cmd_train(const RunConfig& cfg) {
    const std::filesystem::path out = resolve_out_dir(cfg.out_dir);
    std::filesystem::create_directories(out);
    Datasets data = build_datasets(cfg);
    CounterNet net = make_net(cfg);
    std::vector<Sample> fewshot;
    if (cfg.regime != Regime::no_adapt) fewshot = select_few_shot(data.target.train, cfg.fewshot_ratio, cfg.seed);

    std::ostringstream log;
    log << "iter,source_loss,target_loss,val_mae\n";
    auto log_fn = [&](const TrainLogRow& row) {
        log << row.iteration << ",";
        if (row.has_source_loss) log << detail::fmt(row.source_loss);
        log << ",";
        if (row.has_target_loss) log << detail::fmt(row.target_loss);
        log << "," << detail::fmt(row.val_mae) << "\n";
    };

    Checkpoint ckpt = run_regime(cfg.regime, net, data.source.train, fewshot, data.target.val, cfg.train, nullptr,
                                 log_fn);
    save_checkpoint(ckpt, out / "checkpoint.tmp");
    std::filesystem::rename(out / "checkpoint.tmp", out / "checkpoint.ckpt");
    detail::atomic_write(out / "train_log.csv", log.str());

    const ParamSet eval_params = ckpt.bank ? apply_nlt(ckpt.source_params, *ckpt.bank) : ckpt.source_params;
    const MetricsReport report = evaluate(net, eval_params, data.target.test);
    detail::atomic_write(out / "metrics.txt", detail::metrics_text(report));
    echo_config(cfg, out);
    return report;
}

struct RegimeRow {
    std::string regime;
    MetricsReport report;
};

/// compare: several regimes over identical data and seeds; one metrics row
/// per regime in request order, as aligned text plus tab-separated values.
inline std::vector<RegimeRow> cmd_compare(const RunConfig& cfg, const std::vector<Regime>& regimes) {
    if (regimes.size() < 2) throw std::invalid_argument("compare: need at least 2 regimes");
    for (std::size_t i = 0; i < regimes.size(); ++i)
        for (std::size_t j = i + 1; j < regimes.size(); ++j)
            if (regimes[i] == regimes[j])
                throw std::invalid_argument("compare: duplicate regime '" + std::string(regime_name(regimes[i])) + "'");
    const std::filesystem::path out = resolve_out_dir(cfg.out_dir);
    std::filesystem::create_directories(out);
    Datasets data = build_datasets(cfg);
    CounterNet net = make_net(cfg);
    const std::vector<Sample> fewshot = select_few_shot(data.target.train, cfg.fewshot_ratio, cfg.seed);
    const std::uint64_t test_hash = detail::hash_samples(data.target.test);

    SourceTrainCache cache;
    std::vector<RegimeRow> rows;
    for (Regime regime : regimes) {
        Checkpoint ckpt = run_regime(regime, net, data.source.train,
                                     regime == Regime::no_adapt ? std::vector<Sample>{} : fewshot, data.target.val,
                                     cfg.train, &cache);
        const ParamSet eval_params = ckpt.bank ? apply_nlt(ckpt.source_params, *ckpt.bank) : ckpt.source_params;
        rows.push_back({regime_name(regime), evaluate(net, eval_params, data.target.test)});
    }

    char hash_buf[24];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx", static_cast<unsigned long long>(test_hash));
    std::ostringstream tsv, txt;
    tsv << "# test_split_hash=" << hash_buf << "\n";
    tsv << "regime\tmae\tmse\tpsnr\tssim\n";
    txt << "test split hash: " << hash_buf << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %10s %10s %10s %10s\n", "regime", "mae", "mse", "psnr", "ssim");
    txt << line;
    for (const RegimeRow& r : rows) {
        tsv << r.regime << "\t" << detail::fmt_exact(r.report.mae) << "\t" << detail::fmt_exact(r.report.mse) << "\t"
            << detail::fmt_exact(r.report.psnr) << "\t" << detail::fmt_exact(r.report.ssim) << "\n";
        std::snprintf(line, sizeof(line), "%-18s %10.3f %10.3f %10.3f %10.4f\n", r.regime.c_str(), r.report.mae,
                      r.report.mse, r.report.psnr, r.report.ssim);
        txt << line;
    }
    detail::atomic_write(out / "comparison.tsv", tsv.str());
    detail::atomic_write(out / "comparison.txt", txt.str());
    echo_config(cfg, out);
    return rows;
}

/// stats: parameter-level shift statistics from an nlt-regime checkpoint.
inline void cmd_stats(const RunConfig& cfg, const std::filesystem::path& checkpoint_path) {
    const std::filesystem::path out = resolve_out_dir(cfg.out_dir);
    std::filesystem::create_directories(out);
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (!ckpt.bank)
        throw std::runtime_error("checkpoint '" + checkpoint_path.string() + "': regime '" + ckpt.regime +
                                 "' has no shift parameters");

    const std::vector<LayerShiftStats> stats = layer_shift_means(*ckpt.bank);
    const ShiftCategory category = classify_shift(stats);
    std::ostringstream os;
    for (const LayerShiftStats& s : stats)
        os << "layer=" << s.layer_index << " mean_factor_minus_one=" << detail::fmt(s.mean_factor_minus_one)
           << " mean_bias=" << detail::fmt(s.mean_bias) << " n_scalars=" << s.n_scalars << "\n";
    os << "category=" << shift_category_name(category) << "\n";
    detail::atomic_write(out / "shift_stats.txt", os.str());

    for (int layer : cfg.stats_layers) {
        if (layer < 0 || layer >= static_cast<int>(ckpt.source_params.size()))
            throw std::invalid_argument("stats: layer " + std::to_string(layer) + " out of range (checkpoint has " +
                                        std::to_string(ckpt.source_params.size()) + " conv layers)");
        const Histogram h = kernel_mean_histogram(ckpt.source_params[static_cast<std::size_t>(layer)].weight, 32,
                                                  -0.5, 0.5);
        std::ostringstream hs;
        for (std::size_t b = 0; b < h.counts.size(); ++b)
            hs << detail::fmt(h.edges[b]) << " " << detail::fmt(h.edges[b + 1]) << " " << h.counts[b] << "\n";
        detail::atomic_write(out / ("hist_layer" + std::to_string(layer) + ".txt"), hs.str());
        if (cfg.plots) {
            // bar chart as a portable raster image
            const int bar_w = 8, height = 96;
            const int width = bar_w * static_cast<int>(h.counts.size());
            int max_count = 1;
            for (int c : h.counts) max_count = std::max(max_count, c);
            std::vector<float> img(static_cast<std::size_t>(height) * width, 0.0f);
            for (std::size_t b = 0; b < h.counts.size(); ++b) {
                const int bar_h = static_cast<int>(static_cast<double>(h.counts[b]) / max_count * (height - 1));
                for (int y = height - bar_h; y < height; ++y)
                    for (int x = 0; x < bar_w - 1; ++x)
                        img[static_cast<std::size_t>(y) * width + b * bar_w + x] = 1.0f;
            }
            write_pgm(out / ("hist_layer" + std::to_string(layer) + ".pgm"), img, height, width);
        }
    }
    echo_config(cfg, out);
}

struct SweepRow {
    double ratio = 0.0;
    std::string regime;
    double mae = 0.0;
    double mse = 0.0;
};

/// sweep: nlt and supervised per few-shot ratio under shared seeds. The nlt
/// runs share one source stream in lockstep, which is bitwise identical to
/// independent runs.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, const std::vector<double>& ratios) {
    if (ratios.empty()) throw std::invalid_argument("sweep: no ratios given");
    for (double r : ratios)
        if (!(r > 0.0) || r > 1.0)
            throw std::invalid_argument("sweep: ratio " + std::to_string(r) + " outside (0, 1]");
    const std::filesystem::path out = resolve_out_dir(cfg.out_dir);
    std::filesystem::create_directories(out);
    Datasets data = build_datasets(cfg);
    CounterNet net = make_net(cfg);

    std::vector<std::vector<Sample>> subsets;
    subsets.reserve(ratios.size());
    for (double r : ratios) subsets.push_back(select_few_shot(data.target.train, r, cfg.seed));

    std::vector<Checkpoint> nlt_ckpts = run_joint_loop_multi(net, data.source.train, subsets, data.target.val,
                                                             cfg.train);
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        {
            const ParamSet params = apply_nlt(nlt_ckpts[i].source_params, *nlt_ckpts[i].bank);
            const MetricsReport r = evaluate(net, params, data.target.test);
            rows.push_back({ratios[i], "nlt", r.mae, r.mse});
        }
        {
            Checkpoint sup = run_regime(Regime::supervised, net, data.source.train, subsets[i], data.target.val,
                                        cfg.train);
            const MetricsReport r = evaluate(net, sup.source_params, data.target.test);
            rows.push_back({ratios[i], "supervised", r.mae, r.mse});
        }
    }

    std::ostringstream tsv;
    tsv << "ratio\tregime\tmae\tmse\n";
    for (const SweepRow& r : rows)
        tsv << detail::fmt_exact(r.ratio) << "\t" << r.regime << "\t" << detail::fmt_exact(r.mae) << "\t"
            << detail::fmt_exact(r.mse) << "\n";
    detail::atomic_write(out / "sweep.tsv", tsv.str());
    echo_config(cfg, out);
    return rows;
}

/// Parses a sweep.tsv back into rows (round-trip counterpart of cmd_sweep).
inline std::vector<SweepRow> parse_sweep_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::vector<SweepRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        SweepRow r;
        std::string ratio, mae, mse;
        if (!std::getline(ss, ratio, '\t') || !std::getline(ss, r.regime, '\t') || !std::getline(ss, mae, '\t') ||
            !std::getline(ss, mse, '\t'))
            throw std::runtime_error("malformed sweep row: " + line);
        r.ratio = std::stod(ratio);
        r.mae = std::stod(mae);
        r.mse = std::stod(mse);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace nlt
