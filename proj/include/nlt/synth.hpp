#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nlt/rng.hpp"
#include "nlt/tensor.hpp"

namespace nlt {

/// Procedural dot-scene domain. Two instances with different blob scale,
/// brightness, background and noise stand in for a synthetic source dataset
/// and a real-scene target dataset.
struct DomainSpec {
    std::string name = "domain";
    int count_min = 5;
    int count_max = 40;
    float blob_sigma_px = 2.0f;
    enum class Background { flat, gradient } background = Background::flat;
    float brightness = 0.9f;
    float noise_std = 0.01f;
    int height = 64;
    int width = 64;

    void validate() const {
        if (count_min < 0 || count_max < count_min)
            throw std::invalid_argument("domain '" + name + "': need 0 <= count_min <= count_max, got [" +
                                        std::to_string(count_min) + "," + std::to_string(count_max) + "]");
        if (height % 8 != 0 || width % 8 != 0)
            throw std::invalid_argument("domain '" + name + "': image size " + std::to_string(height) + "x" +
                                        std::to_string(width) + " must be divisible by 8");
        if (noise_std < 0.0f) throw std::invalid_argument("domain '" + name + "': noise_std must be >= 0");
        if (blob_sigma_px <= 0.0f) throw std::invalid_argument("domain '" + name + "': blob_sigma_px must be > 0");
        if (brightness < 0.0f || brightness > 1.0f)
            throw std::invalid_argument("domain '" + name + "': brightness must lie in [0,1]");
    }
};

struct Sample {
    Tensor image;    // [1,1,H,W], values in [0,1]
    std::vector<std::pair<float, float>> points;  // (row, col)
    Tensor density;  // [1,1,H,W]
    int count = 0;
};

struct SplitSizes {
    int train = 0;
    int val = 0;
    int test = 0;
};

struct DatasetSplit {
    std::vector<Sample> train, val, test;
};

/// Ground-truth density: unit-mass Gaussian kernels truncated at radius
/// 3*sigma and renormalized to mass 1 after truncation. Kernels clipped by
/// the image border lose the clipped mass.
inline Tensor density_from_points(const std::vector<std::pair<float, float>>& points, float sigma, int height,
                                  int width) {
    if (sigma <= 0.0f) throw std::invalid_argument("density_from_points: sigma must be > 0");
    std::vector<double> acc(static_cast<std::size_t>(height) * width, 0.0);
    const double r = 3.0 * sigma;
    const double r2 = r * r;
    const double inv2s2 = 1.0 / (2.0 * static_cast<double>(sigma) * sigma);
    for (const auto& [pr, pc] : points) {
        const int y_lo = static_cast<int>(std::floor(pr - r));
        const int y_hi = static_cast<int>(std::ceil(pr + r));
        const int x_lo = static_cast<int>(std::floor(pc - r));
        const int x_hi = static_cast<int>(std::ceil(pc + r));
        double mass = 0.0;
        for (int y = y_lo; y <= y_hi; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                const double dy = y - pr, dx = x - pc;
                const double d2 = dy * dy + dx * dx;
                if (d2 <= r2) mass += std::exp(-d2 * inv2s2);
            }
        if (mass <= 0.0) continue;
        const double inv_mass = 1.0 / mass;
        for (int y = std::max(0, y_lo); y <= std::min(height - 1, y_hi); ++y)
            for (int x = std::max(0, x_lo); x <= std::min(width - 1, x_hi); ++x) {
                const double dy = y - pr, dx = x - pc;
                const double d2 = dy * dy + dx * dx;
                if (d2 <= r2) acc[static_cast<std::size_t>(y) * width + x] += std::exp(-d2 * inv2s2) * inv_mass;
            }
    }
    Tensor out({1, 1, height, width});
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
    return out;
}

/// Sigma of the ground-truth kernels; fixed so the density-mass invariant is
/// exact and independent of crowd layout.
inline constexpr float kGroundTruthSigma = 4.0f;

/// Fully determined by (spec, seed): head count uniform over the spec range,
/// positions uniform over the image, isotropic bright blobs over the
/// background plus Gaussian pixel noise, clamped to [0,1].
inline Sample generate_scene(const DomainSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, 0x5ce7e));
    Sample s;
    s.count = spec.count_min + rng.uniform_int(spec.count_max - spec.count_min + 1);
    s.points.reserve(static_cast<std::size_t>(s.count));
    for (int i = 0; i < s.count; ++i) {
        const float r = rng.uniform() * static_cast<float>(spec.height);
        const float c = rng.uniform() * static_cast<float>(spec.width);
        s.points.emplace_back(r, c);
    }

    const int h = spec.height, w = spec.width;
    std::vector<double> img(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        double bg = 0.10;
        if (spec.background == DomainSpec::Background::gradient)
            bg = 0.05 + 0.30 * (h > 1 ? static_cast<double>(y) / (h - 1) : 0.0);
        for (int x = 0; x < w; ++x) img[static_cast<std::size_t>(y) * w + x] = bg;
    }

    const double sig = spec.blob_sigma_px;
    const double rad = 4.0 * sig;
    const double inv2s2 = 1.0 / (2.0 * sig * sig);
    for (const auto& [pr, pc] : s.points) {
        const int y_lo = std::max(0, static_cast<int>(std::floor(pr - rad)));
        const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(pr + rad)));
        const int x_lo = std::max(0, static_cast<int>(std::floor(pc - rad)));
        const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(pc + rad)));
        for (int y = y_lo; y <= y_hi; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                const double dy = y - pr, dx = x - pc;
                img[static_cast<std::size_t>(y) * w + x] += spec.brightness * std::exp(-(dy * dy + dx * dx) * inv2s2);
            }
    }

    s.image = Tensor({1, 1, h, w});
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img[i];
        if (spec.noise_std > 0.0f) v += spec.noise_std * rng.normal();
        s.image.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    s.density = density_from_points(s.points, kGroundTruthSigma, h, w);
    return s;
}

/// Disjoint deterministic splits; sample i of the whole run uses seed+i, with
/// the index continuing across train/val/test.
inline DatasetSplit build_split(const DomainSpec& spec, const SplitSizes& sizes, std::uint64_t seed) {
    if (sizes.train < 0 || sizes.val < 0 || sizes.test < 0)
        throw std::invalid_argument("build_split: sizes must be >= 0");
    DatasetSplit split;
    std::uint64_t index = 0;
    auto fill = [&](std::vector<Sample>& dst, int n) {
        dst.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) dst.push_back(generate_scene(spec, seed + index++));
    };
    fill(split.train, sizes.train);
    fill(split.val, sizes.val);
    fill(split.test, sizes.test);
    return split;
}

/// Keeps exactly the samples whose count lies in [min, max], order preserved.
inline std::vector<Sample> scene_regularization(const std::vector<Sample>& source, int count_min, int count_max) {
    if (count_min > count_max)
        throw std::invalid_argument("scene_regularization: need min <= max, got [" + std::to_string(count_min) + "," +
                                    std::to_string(count_max) + "]");
    std::vector<Sample> kept;
    for (const Sample& s : source)
        if (s.count >= count_min && s.count <= count_max) kept.push_back(s);
    if (kept.empty())
        throw std::runtime_error("scene_regularization: no source sample has a count in [" + std::to_string(count_min) +
                                 "," + std::to_string(count_max) +
                                 "]; widen the range to avoid negative adaptation from disjoint density ranges");
    return kept;
}

/// Default two-domain pair. The gap (brightness, blob scale, background,
/// noise) is what adaptation has to bridge.
inline DomainSpec default_source_spec() {
    DomainSpec s;
    s.name = "source";
    s.count_min = 5;
    s.count_max = 40;
    s.blob_sigma_px = 2.0f;
    s.background = DomainSpec::Background::gradient;
    s.brightness = 0.9f;
    s.noise_std = 0.01f;
    return s;
}

inline DomainSpec default_target_spec() {
    DomainSpec s;
    s.name = "target";
    s.count_min = 5;
    s.count_max = 25;
    s.blob_sigma_px = 3.0f;
    s.background = DomainSpec::Background::flat;
    s.brightness = 0.45f;
    s.noise_std = 0.05f;
    return s;
}

}  // namespace nlt
