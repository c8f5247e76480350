#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "smogcast/dates.hpp"
#include "smogcast/tensor.hpp"

namespace smogcast {

/// The paper's study-area bounding box (WGS84 lon,lat,lon,lat).
inline constexpr std::array<double, 4> kDefaultBbox = {68.137207, 24.886436, 84.836426, 34.379713};

inline const std::vector<std::string> kPredictorFeatures = {"SO2", "NO2", "CH4", "O3", "CO", "HCHO"};
inline const std::vector<std::string> kPredictorUnits = {"mol/m2", "mol/m2", "ppb", "mol/m2", "mol/m2", "mol/m2"};

/// Time-ordered gridded cube [T,H,W,C] with a uniform-cadence calendar axis.
/// Missing values are NaN until impute() runs.
struct DatasetCube {
    Tensor values;  // [T,H,W,C]
    std::vector<std::int64_t> time_days;  // days since 1970-01-01, strictly increasing
    std::vector<std::string> feature_names;
    std::vector<std::string> units;
    std::array<double, 4> bbox = kDefaultBbox;

    int frames() const { return values.dim(0); }
    int height() const { return values.dim(1); }
    int width() const { return values.dim(2); }
    int features() const { return values.dim(3); }

    /// Uniform spacing of the time axis in days.
    std::int64_t cadence_days() const;

    void validate() const;
};

// --- SMGD container ---------------------------------------------------------
// magic "SMGD", u32 version=1, u32 header length, JSON header
// {dims, feature_names, units, time_axis, bbox, missing_value}, then
// row-major little-endian binary32 payload of exactly T*H*W*C values.

void write_smgd(const std::string& path, const DatasetCube& cube);
DatasetCube read_smgd(const std::string& path);

/// Per-pixel, per-feature temporal linear interpolation between nearest valid
/// neighbors; leading/trailing gaps take the nearest valid value; pixels with
/// no valid observation take the feature's global mean. Output has no NaNs.
DatasetCube impute(const DatasetCube& cube);

struct FeatureStats {
    double min = 0.0;
    double max = 0.0;
    bool degenerate = false;  // max == min; normalized values map to 0
};
using NormStats = std::vector<FeatureStats>;

/// Per-feature min/max over the frames whose date falls in `range`.
NormStats compute_stats(const DatasetCube& cube, const DateRange& range);

/// x' = (x - min) / (max - min) per feature; degenerate features map to 0.
DatasetCube apply_normalization(const DatasetCube& cube, const NormStats& stats);

/// Stats over the train range, then normalization of the full cube.
std::pair<DatasetCube, NormStats> normalize(const DatasetCube& cube, const DateRange& train_range);

/// x = x' * (max - min) + min.
Tensor inverse_transform(const Tensor& normalized, const FeatureStats& stats);

/// Bilinear reduction with corner-aligned sample mapping. Target extents must
/// not exceed the source. Run after impute (NaNs would poison interpolation).
DatasetCube downsample_bilinear(const DatasetCube& cube, int target_h, int target_w);

/// Sliding windows over aligned predictor/target cubes.
/// sample i = predictor frames [i .. i+t_in-1];
/// target step t of sample i = target frame (i + t + lag).
struct WindowedDataset {
    Tensor samples;  // [N, T_in, H, W, C_pred]
    Tensor targets;  // [N, T_in, H, W, 1]
    std::vector<std::int64_t> sample_dates;  // date of each sample's final target frame
    NormStats predictor_stats;
    NormStats target_stats;

    int count() const { return samples.empty() ? 0 : samples.dim(0); }

    /// Gathers the listed samples into one [B,T,H,W,C] batch (same order).
    Tensor gather_samples(const std::vector<int>& idx) const;
    Tensor gather_targets(const std::vector<int>& idx) const;
};

WindowedDataset make_windows(const DatasetCube& predictors, const DatasetCube& target,
                             int t_in, int lag);

struct SplitSpec {
    DateRange train;
    DateRange test;
};

/// Partition by each sample's target date. Samples outside both ranges are
/// dropped; an empty side is an error.
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& windows, const SplitSpec& spec);

// --- synthetic advection generator ------------------------------------------

struct SynthConfig {
    int height = 16;
    int width = 16;
    int frames = 200;
    int n_blobs = 3;
    double velocity_y = 3.0;  // pixels per frame, periodic wrap
    double velocity_x = 2.0;
    double noise_sigma = 0.02;
    std::uint64_t seed = 42;
    std::int64_t start_day = days_from_civil(2019, 1, 1);
    std::int64_t cadence_days = 5;
};

/// Gaussian blobs translating across a periodic grid. The target cube is the
/// latent field itself; the six predictor features are lagged/scaled copies
/// of the latent field plus seeded noise, so the one-step-ahead mapping is
/// learnable.
std::pair<DatasetCube, DatasetCube> synth_advection(const SynthConfig& cfg);

}  // namespace smogcast
