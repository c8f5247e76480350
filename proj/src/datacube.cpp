#include "smogcast/datacube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "smogcast/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "SMGD/SMGC payloads are little-endian; big-endian hosts are unsupported");

namespace smogcast {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'G', 'D'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw std::runtime_error(std::string("SMGD: truncated ") + what);
    return v;
}

}  // namespace

std::int64_t DatasetCube::cadence_days() const {
    if (time_days.size() < 2) return 0;
    return time_days[1] - time_days[0];
}

void DatasetCube::validate() const {
    if (values.rank() != 4)
        throw std::invalid_argument("dataset cube must be [T,H,W,C], got " + shape_str(values.shape()));
    if (static_cast<int>(time_days.size()) != frames())
        throw std::invalid_argument("dataset cube: time axis length does not match frame count");
    if (static_cast<int>(feature_names.size()) != features())
        throw std::invalid_argument("dataset cube: feature name count does not match channel count");
    if (!units.empty() && units.size() != feature_names.size())
        throw std::invalid_argument("dataset cube: unit count does not match feature count");
    const std::int64_t cadence = cadence_days();
    for (std::size_t i = 1; i < time_days.size(); ++i) {
        const std::int64_t step = time_days[i] - time_days[i - 1];
        if (step <= 0) throw std::invalid_argument("dataset cube: time axis must be strictly increasing");
        if (step != cadence) throw std::invalid_argument("dataset cube: non-uniform time cadence");
    }
}

void write_smgd(const std::string& path, const DatasetCube& cube) {
    cube.validate();
    nlohmann::json header;
    header["dims"] = cube.values.shape();
    header["feature_names"] = cube.feature_names;
    header["units"] = cube.units;
    header["time_axis"] = cube.time_days;
    header["bbox"] = cube.bbox;
    header["missing_value"] = "NaN";
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("SMGD: cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(cube.values.data()),
              static_cast<std::streamsize>(cube.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("SMGD: write failed: " + path);
}

DatasetCube read_smgd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("SMGD: cannot open: " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("SMGD: bad magic in " + path);
    const std::uint32_t version = read_u32(in, "version");
    if (version != kVersion)
        throw std::runtime_error("SMGD: unknown version " + std::to_string(version));
    const std::uint32_t header_len = read_u32(in, "header length");

    std::string text(header_len, '\0');
    if (!in.read(text.data(), header_len)) throw std::runtime_error("SMGD: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("SMGD: invalid header: ") + e.what());
    }

    DatasetCube cube;
    const std::vector<int> dims = header.at("dims").get<std::vector<int>>();
    if (dims.size() != 4) throw std::runtime_error("SMGD: header must declare 4 axes [T,H,W,C]");
    cube.feature_names = header.at("feature_names").get<std::vector<std::string>>();
    cube.units = header.at("units").get<std::vector<std::string>>();
    cube.time_days = header.at("time_axis").get<std::vector<std::int64_t>>();
    const auto bbox = header.at("bbox").get<std::vector<double>>();
    if (bbox.size() != 4) throw std::runtime_error("SMGD: bbox must have 4 entries");
    std::copy(bbox.begin(), bbox.end(), cube.bbox.begin());

    cube.values = Tensor(Shape(dims.begin(), dims.end()));
    if (!in.read(reinterpret_cast<char*>(cube.values.data()),
                 static_cast<std::streamsize>(cube.values.size() * sizeof(float))))
        throw std::runtime_error("SMGD: payload truncated (header declares more values than present)");
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("SMGD: trailing bytes after declared payload");

    cube.validate();
    return cube;
}

DatasetCube impute(const DatasetCube& cube) {
    cube.validate();
    const int t_n = cube.frames(), h = cube.height(), w = cube.width(), c_n = cube.features();

    // Global per-feature means over valid entries, the fallback for pixels
    // with no observation at all.
    std::vector<double> mean(static_cast<std::size_t>(c_n), 0.0);
    std::vector<std::size_t> valid(static_cast<std::size_t>(c_n), 0);
    for (int t = 0; t < t_n; ++t)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < c_n; ++c) {
                    const float v = cube.values.at({t, y, x, c});
                    if (!std::isnan(v)) {
                        mean[static_cast<std::size_t>(c)] += v;
                        ++valid[static_cast<std::size_t>(c)];
                    }
                }
    for (int c = 0; c < c_n; ++c) {
        if (valid[static_cast<std::size_t>(c)] == 0)
            throw std::runtime_error("impute: feature '" + cube.feature_names[static_cast<std::size_t>(c)] +
                                     "' has no valid observation in the cube");
        mean[static_cast<std::size_t>(c)] /= static_cast<double>(valid[static_cast<std::size_t>(c)]);
    }

    DatasetCube out = cube;
    const std::size_t frame = static_cast<std::size_t>(h) * w * c_n;
    std::vector<float> series(static_cast<std::size_t>(t_n));
    std::vector<int> valid_idx;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < c_n; ++c) {
                const std::size_t base = (static_cast<std::size_t>(y) * w + x) * c_n + c;
                valid_idx.clear();
                for (int t = 0; t < t_n; ++t) {
                    series[static_cast<std::size_t>(t)] = cube.values[base + frame * t];
                    if (!std::isnan(series[static_cast<std::size_t>(t)])) valid_idx.push_back(t);
                }
                if (static_cast<int>(valid_idx.size()) == t_n) continue;

                if (valid_idx.empty()) {
                    const float fill = static_cast<float>(mean[static_cast<std::size_t>(c)]);
                    for (int t = 0; t < t_n; ++t) out.values[base + frame * t] = fill;
                    continue;
                }
                // leading and trailing gaps: nearest valid value
                for (int t = 0; t < valid_idx.front(); ++t)
                    out.values[base + frame * t] = series[static_cast<std::size_t>(valid_idx.front())];
                for (int t = valid_idx.back() + 1; t < t_n; ++t)
                    out.values[base + frame * t] = series[static_cast<std::size_t>(valid_idx.back())];
                // interior gaps: linear interpolation between neighbors
                for (std::size_t k = 0; k + 1 < valid_idx.size(); ++k) {
                    const int t0 = valid_idx[k], t1 = valid_idx[k + 1];
                    const double v0 = series[static_cast<std::size_t>(t0)];
                    const double v1 = series[static_cast<std::size_t>(t1)];
                    for (int t = t0 + 1; t < t1; ++t) {
                        const double alpha = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
                        out.values[base + frame * t] = static_cast<float>(v0 + alpha * (v1 - v0));
                    }
                }
            }
        }
    }
    out.values.require_finite("imputed cube");
    return out;
}

NormStats compute_stats(const DatasetCube& cube, const DateRange& range) {
    cube.validate();
    cube.values.require_finite("compute_stats input (impute first)");
    const int t_n = cube.frames(), c_n = cube.features();
    const std::size_t frame = cube.values.size() / static_cast<std::size_t>(t_n);

    NormStats stats(static_cast<std::size_t>(c_n));
    for (auto& s : stats) {
        s.min = std::numeric_limits<double>::infinity();
        s.max = -std::numeric_limits<double>::infinity();
    }
    bool any = false;
    for (int t = 0; t < t_n; ++t) {
        if (!range.contains(cube.time_days[static_cast<std::size_t>(t)])) continue;
        any = true;
        const float* p = cube.values.data() + frame * t;
        for (std::size_t i = 0; i < frame; ++i) {
            FeatureStats& s = stats[i % static_cast<std::size_t>(c_n)];
            const double v = p[i];
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
        }
    }
    if (!any) throw std::runtime_error("compute_stats: no frames fall inside the given date range");
    for (auto& s : stats) s.degenerate = (s.max == s.min);
    return stats;
}

DatasetCube apply_normalization(const DatasetCube& cube, const NormStats& stats) {
    if (static_cast<int>(stats.size()) != cube.features())
        throw std::invalid_argument("apply_normalization: stats count does not match feature count");
    cube.values.require_finite("apply_normalization input (impute first)");

    DatasetCube out = cube;
    const int c_n = cube.features();
    std::vector<float> scale(static_cast<std::size_t>(c_n)), offset(static_cast<std::size_t>(c_n));
    for (int c = 0; c < c_n; ++c) {
        const FeatureStats& s = stats[static_cast<std::size_t>(c)];
        scale[static_cast<std::size_t>(c)] = s.degenerate ? 0.0f : static_cast<float>(1.0 / (s.max - s.min));
        offset[static_cast<std::size_t>(c)] = static_cast<float>(s.min);
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const std::size_t c = i % static_cast<std::size_t>(c_n);
        out.values[i] = (out.values[i] - offset[c]) * scale[c];
    }
    return out;
}

std::pair<DatasetCube, NormStats> normalize(const DatasetCube& cube, const DateRange& train_range) {
    NormStats stats = compute_stats(cube, train_range);
    return {apply_normalization(cube, stats), std::move(stats)};
}

Tensor inverse_transform(const Tensor& normalized, const FeatureStats& stats) {
    Tensor out(normalized.shape());
    const float span = static_cast<float>(stats.max - stats.min);
    const float lo = static_cast<float>(stats.min);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = normalized[i] * span + lo;
    return out;
}

namespace {

float bilinear_sample(const float* frame, int h, int w, int c_n, int c, double sy, double sx) {
    const int y0 = static_cast<int>(sy);
    const int x0 = static_cast<int>(sx);
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - y0;
    const double fx = sx - x0;
    auto at = [&](int y, int x) {
        return static_cast<double>(frame[(static_cast<std::size_t>(y) * w + x) * c_n + c]);
    };
    const double top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    const double bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

}  // namespace

DatasetCube downsample_bilinear(const DatasetCube& cube, int target_h, int target_w) {
    cube.validate();
    cube.values.require_finite("downsample input (impute first)");
    const int t_n = cube.frames(), h = cube.height(), w = cube.width(), c_n = cube.features();
    if (target_h <= 0 || target_w <= 0)
        throw std::invalid_argument("downsample: target extents must be positive");
    if (target_h > h || target_w > w)
        throw std::invalid_argument("downsample: target larger than source (this op only reduces)");
    if (target_h == h && target_w == w) return cube;

    DatasetCube out = cube;
    out.values = Tensor({t_n, target_h, target_w, c_n});
    const std::size_t src_frame = static_cast<std::size_t>(h) * w * c_n;
    const std::size_t dst_frame = static_cast<std::size_t>(target_h) * target_w * c_n;

    // Corner-aligned mapping; a size-1 target samples the interpolant at the
    // source midpoint.
    auto coord = [](int i, int target, int source) {
        if (target == 1) return (source - 1) / 2.0;
        return static_cast<double>(i) * (source - 1) / static_cast<double>(target - 1);
    };

    for (int t = 0; t < t_n; ++t) {
        const float* src = cube.values.data() + src_frame * t;
        float* dst = out.values.data() + dst_frame * t;
        for (int ty = 0; ty < target_h; ++ty) {
            const double sy = coord(ty, target_h, h);
            for (int tx = 0; tx < target_w; ++tx) {
                const double sx = coord(tx, target_w, w);
                for (int c = 0; c < c_n; ++c)
                    dst[(static_cast<std::size_t>(ty) * target_w + tx) * c_n + c] =
                        bilinear_sample(src, h, w, c_n, c, sy, sx);
            }
        }
    }
    return out;
}

Tensor WindowedDataset::gather_samples(const std::vector<int>& idx) const {
    const std::size_t row = samples.size() / static_cast<std::size_t>(count());
    Tensor out({static_cast<int>(idx.size()), samples.dim(1), samples.dim(2), samples.dim(3), samples.dim(4)});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= count()) throw std::out_of_range("gather_samples: bad index");
        std::copy(samples.data() + row * idx[k], samples.data() + row * (idx[k] + 1), out.data() + row * k);
    }
    return out;
}

Tensor WindowedDataset::gather_targets(const std::vector<int>& idx) const {
    const std::size_t row = targets.size() / static_cast<std::size_t>(count());
    Tensor out({static_cast<int>(idx.size()), targets.dim(1), targets.dim(2), targets.dim(3), targets.dim(4)});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= count()) throw std::out_of_range("gather_targets: bad index");
        std::copy(targets.data() + row * idx[k], targets.data() + row * (idx[k] + 1), out.data() + row * k);
    }
    return out;
}

WindowedDataset make_windows(const DatasetCube& predictors, const DatasetCube& target,
                             int t_in, int lag) {
    predictors.validate();
    target.validate();
    if (t_in < 1) throw std::invalid_argument("make_windows: t_in must be >= 1");
    if (lag < 0) throw std::invalid_argument("make_windows: lag must be >= 0");
    if (target.features() != 1)
        throw std::invalid_argument("make_windows: target cube must have exactly one feature");
    if (predictors.time_days != target.time_days)
        throw std::invalid_argument("make_windows: predictor and target time axes differ");
    if (predictors.height() != target.height() || predictors.width() != target.width())
        throw std::invalid_argument("make_windows: predictor and target grids differ");

    const int t_total = predictors.frames();
    const int n = t_total - t_in - lag + 1;
    if (n < 1)
        throw std::invalid_argument("make_windows: insufficient frames (" + std::to_string(t_total) +
                                    ") for t_in=" + std::to_string(t_in) + ", lag=" + std::to_string(lag));

    const int h = predictors.height(), w = predictors.width(), c_n = predictors.features();
    WindowedDataset ds;
    ds.samples = Tensor({n, t_in, h, w, c_n});
    ds.targets = Tensor({n, t_in, h, w, 1});
    ds.sample_dates.resize(static_cast<std::size_t>(n));

    const std::size_t pred_frame = static_cast<std::size_t>(h) * w * c_n;
    const std::size_t targ_frame = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < t_in; ++t) {
            std::copy(predictors.values.data() + pred_frame * (i + t),
                      predictors.values.data() + pred_frame * (i + t + 1),
                      ds.samples.data() + pred_frame * (static_cast<std::size_t>(i) * t_in + t));
            std::copy(target.values.data() + targ_frame * (i + t + lag),
                      target.values.data() + targ_frame * (i + t + lag + 1),
                      ds.targets.data() + targ_frame * (static_cast<std::size_t>(i) * t_in + t));
        }
        ds.sample_dates[static_cast<std::size_t>(i)] =
            target.time_days[static_cast<std::size_t>(i + t_in - 1 + lag)];
    }
    return ds;
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& windows, const SplitSpec& spec) {
    if (spec.train.first_day > spec.train.last_day || spec.test.first_day > spec.test.last_day)
        throw std::invalid_argument("split: malformed date range");
    if (spec.train.last_day >= spec.test.first_day)
        throw std::invalid_argument("split: train range must precede the test range");

    std::vector<int> train_idx, test_idx;
    for (int i = 0; i < windows.count(); ++i) {
        const std::int64_t day = windows.sample_dates[static_cast<std::size_t>(i)];
        if (spec.train.contains(day)) train_idx.push_back(i);
        else if (spec.test.contains(day)) test_idx.push_back(i);
    }
    if (train_idx.empty()) throw std::runtime_error("split: train side is empty");
    if (test_idx.empty()) throw std::runtime_error("split: test side is empty");

    auto take = [&](const std::vector<int>& idx) {
        WindowedDataset part;
        part.samples = windows.gather_samples(idx);
        part.targets = windows.gather_targets(idx);
        part.predictor_stats = windows.predictor_stats;
        part.target_stats = windows.target_stats;
        part.sample_dates.reserve(idx.size());
        for (int i : idx) part.sample_dates.push_back(windows.sample_dates[static_cast<std::size_t>(i)]);
        return part;
    };
    return {take(train_idx), take(test_idx)};
}

std::pair<DatasetCube, DatasetCube> synth_advection(const SynthConfig& cfg) {
    if (cfg.height <= 0 || cfg.width <= 0 || cfg.frames <= 0 || cfg.n_blobs <= 0)
        throw std::invalid_argument("synth_advection: dimensions must be positive");

    Rng rng(cfg.seed);
    struct Blob {
        double y0, x0, sigma, amp;
    };
    std::vector<Blob> blobs(static_cast<std::size_t>(cfg.n_blobs));
    for (auto& b : blobs) {
        b.y0 = rng.uniform(0.0, cfg.height);
        b.x0 = rng.uniform(0.0, cfg.width);
        b.sigma = rng.uniform(1.2, 2.2);
        b.amp = rng.uniform(0.6, 1.0);
    }

    auto wrap = [](double v, int extent) {
        const double e = static_cast<double>(extent);
        v = std::fmod(v, e);
        return v < 0.0 ? v + e : v;
    };
    auto periodic_delta = [](double a, double b, int extent) {
        double d = std::abs(a - b);
        return std::min(d, static_cast<double>(extent) - d);
    };

    // latent field for every frame
    const std::size_t frame = static_cast<std::size_t>(cfg.height) * cfg.width;
    std::vector<double> latent(static_cast<std::size_t>(cfg.frames) * frame, 0.0);
    for (int t = 0; t < cfg.frames; ++t) {
        for (const Blob& b : blobs) {
            const double cy = wrap(b.y0 + cfg.velocity_y * t, cfg.height);
            const double cx = wrap(b.x0 + cfg.velocity_x * t, cfg.width);
            for (int y = 0; y < cfg.height; ++y) {
                const double dy = periodic_delta(static_cast<double>(y), cy, cfg.height);
                for (int x = 0; x < cfg.width; ++x) {
                    const double dx = periodic_delta(static_cast<double>(x), cx, cfg.width);
                    latent[frame * t + static_cast<std::size_t>(y) * cfg.width + x] +=
                        b.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
                }
            }
        }
    }
    auto latent_at = [&](int t, std::size_t pixel) {
        return latent[frame * static_cast<std::size_t>(std::max(t, 0)) + pixel];
    };

    DatasetCube predictors;
    predictors.values = Tensor({cfg.frames, cfg.height, cfg.width, 6});
    predictors.feature_names = kPredictorFeatures;
    predictors.units = kPredictorUnits;

    DatasetCube target;
    target.values = Tensor({cfg.frames, cfg.height, cfg.width, 1});
    target.feature_names = {"AER_AI"};
    target.units = {"1"};

    for (int t = 0; t < cfg.frames; ++t) {
        predictors.time_days.push_back(cfg.start_day + cfg.cadence_days * t);
        target.time_days.push_back(cfg.start_day + cfg.cadence_days * t);
        for (std::size_t p = 0; p < frame; ++p) {
            const double now = latent_at(t, p);
            const double lag1 = latent_at(t - 1, p);
            const double lag2 = latent_at(t - 2, p);
            const double f[6] = {now, lag1, lag2, 0.5 * now, 1.5 * lag1, 0.25 * lag2};
            for (int c = 0; c < 6; ++c)
                predictors.values[(frame * t + p) * 6 + static_cast<std::size_t>(c)] =
                    static_cast<float>(f[c] + cfg.noise_sigma * rng.normal());
            target.values[frame * t + p] = static_cast<float>(now);
        }
    }
    return {std::move(predictors), std::move(target)};
}

}  // namespace smogcast
