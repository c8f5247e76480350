#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "smogcast/tensor.hpp"

namespace smogcast {

/// Mean binary cross entropy over all elements. Targets must lie in [0,1];
/// predictions are clamped to [1e-7, 1-1e-7] before the logs (float sigmoid
/// can saturate to exact 0/1).
template <typename S>
double bce(const TensorT<S>& y, const TensorT<S>& y_hat) {
    require_same_shape(y, y_hat, "bce");
    if (y.empty()) throw std::invalid_argument("bce: empty input");
    constexpr double kClamp = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double t = static_cast<double>(y[i]);
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("bce: target outside [0,1]");
        const double p = std::clamp(static_cast<double>(y_hat[i]), kClamp, 1.0 - kClamp);
        sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    return sum / static_cast<double>(y.size());
}

/// Mean of the squared differences.
template <typename S>
double mse(const TensorT<S>& y, const TensorT<S>& y_hat) {
    require_same_shape(y, y_hat, "mse");
    if (y.empty()) throw std::invalid_argument("mse: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y[i]) - static_cast<double>(y_hat[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(y.size());
}

enum class SsimWindow { Global, Gaussian };

struct SsimConfig {
    double dynamic_range = 1.0;
    double c1 = 0.01 * 0.01;  // (0.01 * L)^2
    double c2 = 0.03 * 0.03;  // (0.03 * L)^2
    SsimWindow window = SsimWindow::Global;
    int window_size = 11;
    double window_sigma = 1.5;

    static SsimConfig for_range(double range) {
        SsimConfig cfg;
        cfg.dynamic_range = range;
        cfg.c1 = (0.01 * range) * (0.01 * range);
        cfg.c2 = (0.03 * range) * (0.03 * range);
        return cfg;
    }
};

namespace detail {

struct ImageStats {
    double mean_x, mean_y, var_x, var_y, cov;
};

inline double ssim_formula(const ImageStats& s, const SsimConfig& cfg) {
    const double lum = (2.0 * s.mean_x * s.mean_y + cfg.c1) / (s.mean_x * s.mean_x + s.mean_y * s.mean_y + cfg.c1);
    const double str = (2.0 * s.cov + cfg.c2) / (s.var_x + s.var_y + cfg.c2);
    return lum * str;
}

template <typename S>
double ssim_global(const TensorT<S>& x, const TensorT<S>& y, const SsimConfig& cfg) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += static_cast<double>(x[i]);
        my += static_cast<double>(y[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(x[i]) - mx;
        const double dy = static_cast<double>(y[i]) - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx /= static_cast<double>(n);
    vy /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    return ssim_formula({mx, my, vx, vy, cov}, cfg);
}

template <typename S>
double ssim_gaussian(const TensorT<S>& x, const TensorT<S>& y, const SsimConfig& cfg) {
    const int h = x.dim(0), w = x.dim(1);
    const int win = cfg.window_size;
    if (h < win || w < win)
        throw std::invalid_argument("ssim: image smaller than the gaussian window");

    std::vector<double> kernel(static_cast<std::size_t>(win) * win);
    const int half = win / 2;
    double ksum = 0.0;
    for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
            const double ry = dy - half, rx = dx - half;
            const double v = std::exp(-(ry * ry + rx * rx) / (2.0 * cfg.window_sigma * cfg.window_sigma));
            kernel[static_cast<std::size_t>(dy) * win + dx] = v;
            ksum += v;
        }
    for (double& v : kernel) v /= ksum;

    double total = 0.0;
    int count = 0;
    for (int cy = half; cy < h - half; ++cy) {
        for (int cx = half; cx < w - half; ++cx) {
            double mx = 0.0, my = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    const double k = kernel[static_cast<std::size_t>(dy) * win + dx];
                    mx += k * static_cast<double>(x[static_cast<std::size_t>(cy + dy - half) * w + (cx + dx - half)]);
                    my += k * static_cast<double>(y[static_cast<std::size_t>(cy + dy - half) * w + (cx + dx - half)]);
                }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    const double k = kernel[static_cast<std::size_t>(dy) * win + dx];
                    const double ex = static_cast<double>(x[static_cast<std::size_t>(cy + dy - half) * w + (cx + dx - half)]) - mx;
                    const double ey = static_cast<double>(y[static_cast<std::size_t>(cy + dy - half) * w + (cx + dx - half)]) - my;
                    vx += k * ex * ex;
                    vy += k * ey * ey;
                    cov += k * ex * ey;
                }
            total += ssim_formula({mx, my, vx, vy, cov}, cfg);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace detail

/// Structural similarity of two single-channel images [H,W]. Global mode
/// applies the formula once with whole-image statistics (population
/// variance); gaussian mode averages a windowed SSIM map.
template <typename S>
double ssim(const TensorT<S>& x, const TensorT<S>& y, const SsimConfig& cfg = SsimConfig{}) {
    require_same_shape(x, y, "ssim");
    if (x.rank() != 2) throw std::invalid_argument("ssim: images must be [H,W]");
    if (x.empty()) throw std::invalid_argument("ssim: empty image");
    x.require_finite("ssim x");
    y.require_finite("ssim y");
    if (cfg.window == SsimWindow::Global) return detail::ssim_global(x, y, cfg);
    return detail::ssim_gaussian(x, y, cfg);
}

struct SsimSeriesResult {
    std::vector<double> per_step;
    double mean = 0.0;
};

/// Per-timestep SSIM over [T,H,W] stacks plus the series mean.
template <typename S>
SsimSeriesResult ssim_series(const TensorT<S>& pred, const TensorT<S>& truth,
                             const SsimConfig& cfg = SsimConfig{}) {
    require_same_shape(pred, truth, "ssim_series");
    if (pred.rank() != 3) throw std::invalid_argument("ssim_series: input must be [T,H,W]");
    const int t_n = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
    const std::size_t frame = static_cast<std::size_t>(h) * w;

    SsimSeriesResult result;
    result.per_step.reserve(static_cast<std::size_t>(t_n));
    for (int t = 0; t < t_n; ++t) {
        TensorT<S> a({h, w});
        TensorT<S> b({h, w});
        std::copy(pred.data() + t * frame, pred.data() + (t + 1) * frame, a.data());
        std::copy(truth.data() + t * frame, truth.data() + (t + 1) * frame, b.data());
        result.per_step.push_back(ssim(a, b, cfg));
    }
    double sum = 0.0;
    for (double v : result.per_step) sum += v;
    result.mean = sum / static_cast<double>(t_n);
    return result;
}

}  // namespace smogcast
