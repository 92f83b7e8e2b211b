#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "nlt/counter.hpp"
#include "nlt/synth.hpp"
#include "nlt/tensor.hpp"

namespace nlt {

struct MetricsReport {
    double mae = 0.0;
    double mse = 0.0;   // root of the mean squared counting error
    double psnr = 0.0;  // dB
    double ssim = 0.0;
    int n_images = 0;
};

/// MAE = mean |y - y_hat|; MSE = sqrt(mean |y - y_hat|^2). The root form is
/// reported under the MSE name to match how counting benchmarks tabulate it.
inline std::pair<double, double> mae_mse(std::span<const double> pred_counts, std::span<const double> gt_counts) {
    if (pred_counts.size() != gt_counts.size())
        throw std::invalid_argument("mae_mse: length mismatch (" + std::to_string(pred_counts.size()) + " vs " +
                                    std::to_string(gt_counts.size()) + ")");
    if (pred_counts.empty()) throw std::invalid_argument("mae_mse: empty input");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < pred_counts.size(); ++i) {
        const double d = gt_counts[i] - pred_counts[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    const double n = static_cast<double>(pred_counts.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

inline constexpr double kPsnrCap = 100.0;

/// Both maps are scaled by 1/max(gt) so the data range is 1, then
/// PSNR = 10*log10(1 / pixel mse), capped at 100 dB.
inline double psnr(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument("psnr: shape mismatch " + shape_str(pred.shape) + " vs " + shape_str(gt.shape));
    double max_gt = 0.0;
    for (float v : gt.data) max_gt = std::max(max_gt, static_cast<double>(v));
    if (max_gt <= 0.0) throw std::invalid_argument("psnr: ground-truth map is all zero, data range undefined");
    const double inv = 1.0 / max_gt;
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = (static_cast<double>(pred.data[i]) - gt.data[i]) * inv;
        sq += d * d;
    }
    const double mse_pixel = sq / static_cast<double>(pred.data.size());
    if (mse_pixel <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse_pixel));
}

namespace detail {

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
    std::vector<double> win(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double s = 0.0;
    for (int i = 0; i < size; ++i) {
        win[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        s += win[static_cast<std::size_t>(i)];
    }
    for (double& v : win) v /= s;
    return win;
}

// Separable valid-mode filter on an H x W plane; output (H-size+1) x (W-size+1).
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                        const std::vector<double>& win) {
    const int k = static_cast<int>(win.size());
    const int w2 = w - k + 1;
    const int h2 = h - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w2; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += win[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * w2 + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(h2) * w2);
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += win[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * w2 + x];
            out[static_cast<std::size_t>(y) * w2 + x] = s;
        }
    return out;
}

}  // namespace detail

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, evaluated at valid window positions over maps sharing the
/// given data range.
inline double ssim_with_range(const Tensor& a, const Tensor& b, double data_range, int window = 11,
                              double window_sigma = 1.5) {
    if (!a.same_shape(b))
        throw std::invalid_argument("ssim: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    if (data_range <= 0.0) throw std::invalid_argument("ssim: data range must be positive");
    const int h = a.dim(a.rank() - 2);
    const int w = a.dim(a.rank() - 1);
    if (h < window || w < window)
        throw std::invalid_argument("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                                    " is smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
                                    " window");
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t planes = a.numel() / plane;
    const std::vector<double> win = detail::gaussian_window_1d(window, window_sigma);
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < planes; ++p) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = a.data[p * plane + i];
            y[i] = b.data[p * plane + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const std::vector<double> mx = detail::filter_valid(x, h, w, win);
        const std::vector<double> my = detail::filter_valid(y, h, w, win);
        const std::vector<double> mxx = detail::filter_valid(xx, h, w, win);
        const std::vector<double> myy = detail::filter_valid(yy, h, w, win);
        const std::vector<double> mxy = detail::filter_valid(xy, h, w, win);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = mxx[i] - mx[i] * mx[i];
            const double vy = myy[i] - my[i] * my[i];
            const double cov = mxy[i] - mx[i] * my[i];
            const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
            const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

/// SSIM between a prediction and a ground truth map, both scaled by
/// 1/max(gt) like psnr(); the shared data range is then 1.
inline double ssim(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt))
        throw std::invalid_argument("ssim: shape mismatch " + shape_str(pred.shape) + " vs " + shape_str(gt.shape));
    double max_gt = 0.0;
    for (float v : gt.data) max_gt = std::max(max_gt, static_cast<double>(v));
    if (max_gt <= 0.0) throw std::invalid_argument("ssim: ground-truth map is all zero, data range undefined");
    const float inv = static_cast<float>(1.0 / max_gt);
    Tensor ps(pred.shape), gs(gt.shape);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        ps.data[i] = pred.data[i] * inv;
        gs.data[i] = gt.data[i] * inv;
    }
    return ssim_with_range(ps, gs, 1.0);
}

/// All four metrics over a sample list. Ground-truth counts are the
/// annotated point counts; predicted counts sum the predicted density.
/// Samples with an all-zero ground-truth map are skipped for PSNR/SSIM
/// (their data range is undefined) but still count toward MAE/MSE.
inline MetricsReport evaluate(const CounterNet& net, const ParamSet& params, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty sample list");
    std::vector<double> pred_counts, gt_counts;
    pred_counts.reserve(samples.size());
    gt_counts.reserve(samples.size());
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int quality_n = 0;
    for (const Sample& s : samples) {
        const Tensor pred = forward(net, params, s.image);
        pred_counts.push_back(count_from_density(pred));
        gt_counts.push_back(static_cast<double>(s.count));
        double max_gt = 0.0;
        for (float v : s.density.data) max_gt = std::max(max_gt, static_cast<double>(v));
        if (max_gt > 0.0) {
            psnr_sum += psnr(pred, s.density);
            ssim_sum += ssim(pred, s.density);
            ++quality_n;
        }
    }
    MetricsReport r;
    auto [mae, mse] = mae_mse(pred_counts, gt_counts);
    r.mae = mae;
    r.mse = mse;
    r.psnr = quality_n > 0 ? psnr_sum / quality_n : 0.0;
    r.ssim = quality_n > 0 ? ssim_sum / quality_n : 0.0;
    r.n_images = static_cast<int>(samples.size());
    return r;
}

/// MAE only; used for validation-time model selection where the full report
/// would be wasted work.
inline double validation_mae(const CounterNet& net, const ParamSet& params, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("validation_mae: empty sample list");
    double abs_sum = 0.0;
    for (const Sample& s : samples) {
        const Tensor pred = forward(net, params, s.image);
        abs_sum += std::abs(static_cast<double>(s.count) - count_from_density(pred));
    }
    return abs_sum / static_cast<double>(samples.size());
}

}  // namespace nlt
