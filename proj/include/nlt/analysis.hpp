#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nlt/counter.hpp"
#include "nlt/shift.hpp"

namespace nlt {

struct Histogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<int> counts;
};

/// One mean per neuron (per output channel, averaged over its c*kh*kw
/// weights), binned over [lo, hi]; out-of-range means land in the edge bins.
inline Histogram kernel_mean_histogram(const Tensor& weight, int bins, double lo, double hi) {
    if (weight.rank() != 4)
        throw std::invalid_argument("kernel_mean_histogram: weight must be [O,C,kh,kw], got " + shape_str(weight.shape));
    if (bins < 1) throw std::invalid_argument("kernel_mean_histogram: bins must be >= 1");
    if (!(lo < hi)) throw std::invalid_argument("kernel_mean_histogram: need lo < hi");
    Histogram h;
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const int neurons = weight.dim(0);
    const std::size_t per_neuron = weight.numel() / static_cast<std::size_t>(neurons);
    for (int n = 0; n < neurons; ++n) {
        double s = 0.0;
        const float* w = weight.data.data() + static_cast<std::size_t>(n) * per_neuron;
        for (std::size_t i = 0; i < per_neuron; ++i) s += w[i];
        const double mean = s / static_cast<double>(per_neuron);
        int bin = static_cast<int>(std::floor((mean - lo) / (hi - lo) * bins));
        bin = std::clamp(bin, 0, bins - 1);
        h.counts[static_cast<std::size_t>(bin)] += 1;
    }
    return h;
}

struct LayerShiftStats {
    int layer_index = 0;
    double mean_factor_minus_one = 0.0;
    double mean_bias = 0.0;
    long long n_scalars = 0;  // per component, i.e. in_channels * out_channels
};

/// Per-layer arithmetic means over all scalar entries; the factor mean is
/// reported relative to its initial value 1.
inline std::vector<LayerShiftStats> layer_shift_means(const ShiftBank& bank) {
    std::vector<LayerShiftStats> stats;
    stats.reserve(bank.layers.size());
    for (std::size_t l = 0; l < bank.layers.size(); ++l) {
        const ShiftLayer& layer = bank.layers[l];
        LayerShiftStats s;
        s.layer_index = static_cast<int>(l);
        s.n_scalars = static_cast<long long>(layer.factor.size());
        double fsum = 0.0, bsum = 0.0;
        for (float f : layer.factor) fsum += static_cast<double>(f) - 1.0;
        for (float b : layer.bias) bsum += b;
        s.mean_factor_minus_one = layer.factor.empty() ? 0.0 : fsum / static_cast<double>(layer.factor.size());
        s.mean_bias = layer.bias.empty() ? 0.0 : bsum / static_cast<double>(layer.bias.size());
        stats.push_back(s);
    }
    return stats;
}

enum class ShiftCategory { down, up, up_down };

inline const char* shift_category_name(ShiftCategory c) {
    switch (c) {
        case ShiftCategory::down: return "down";
        case ShiftCategory::up: return "up";
        case ShiftCategory::up_down: return "up_down";
    }
    return "?";
}

/// Layer-majority sign pattern: `down` when at least threshold_ratio of the
/// layers have both means below zero, `up` when above, otherwise `up_down`.
inline ShiftCategory classify_shift(const std::vector<LayerShiftStats>& stats, double threshold_ratio = 0.7) {
    if (stats.empty()) throw std::invalid_argument("classify_shift: empty stats");
    if (!(threshold_ratio > 0.0) || threshold_ratio > 1.0)
        throw std::invalid_argument("classify_shift: threshold_ratio must lie in (0, 1]");
    int down = 0, up = 0;
    for (const LayerShiftStats& s : stats) {
        if (s.mean_factor_minus_one < 0.0 && s.mean_bias < 0.0) ++down;
        if (s.mean_factor_minus_one > 0.0 && s.mean_bias > 0.0) ++up;
    }
    const double n = static_cast<double>(stats.size());
    if (down >= threshold_ratio * n) return ShiftCategory::down;
    if (up >= threshold_ratio * n) return ShiftCategory::up;
    return ShiftCategory::up_down;
}

/// Pairwise cosine similarities of concatenated (factor - 1, bias) vectors.
/// Two identical zero banks count as similarity 1, a single zero side as 0.
inline std::vector<std::vector<double>> shift_stability_report(const std::vector<ShiftBank>& banks) {
    if (banks.empty()) throw std::invalid_argument("shift_stability_report: no banks given");
    for (std::size_t i = 1; i < banks.size(); ++i) {
        if (banks[i].layers.size() != banks[0].layers.size())
            throw std::invalid_argument("shift_stability_report: bank " + std::to_string(i) +
                                        " has a different layer count");
        for (std::size_t l = 0; l < banks[i].layers.size(); ++l)
            if (banks[i].layers[l].factor.size() != banks[0].layers[l].factor.size())
                throw std::invalid_argument("shift_stability_report: bank " + std::to_string(i) + " layer " +
                                            std::to_string(l) + " differs in size");
    }
    auto flatten = [](const ShiftBank& b) {
        std::vector<double> v;
        v.reserve(b.scalar_count());
        for (const ShiftLayer& l : b.layers) {
            for (float f : l.factor) v.push_back(static_cast<double>(f) - 1.0);
            for (float bias : l.bias) v.push_back(bias);
        }
        return v;
    };
    std::vector<std::vector<double>> vecs;
    vecs.reserve(banks.size());
    for (const ShiftBank& b : banks) vecs.push_back(flatten(b));

    const std::size_t n = banks.size();
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (std::size_t k = 0; k < vecs[i].size(); ++k) {
                dot += vecs[i][k] * vecs[j][k];
                ni += vecs[i][k] * vecs[i][k];
                nj += vecs[j][k] * vecs[j][k];
            }
            double value;
            if (ni == 0.0 && nj == 0.0)
                value = 1.0;
            else if (ni == 0.0 || nj == 0.0)
                value = 0.0;
            else
                value = dot / (std::sqrt(ni) * std::sqrt(nj));
            sim[i][j] = value;
            sim[j][i] = value;
        }
    }
    return sim;
}

}  // namespace nlt
