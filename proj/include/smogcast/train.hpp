#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smogcast/datacube.hpp"
#include "smogcast/network.hpp"
#include "smogcast/optim.hpp"

namespace smogcast {

struct EarlyStopConfig {
    int patience = 10;
    double min_delta = 0.0;  // val_loss must drop by more than this to count
};

struct PlateauConfig {
    double factor = 0.5;
    int patience = 5;
    double min_lr = 1e-7;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 1;
    double lr = 1e-5;
    double clipnorm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    EarlyStopConfig early_stop;
    PlateauConfig plateau;
    std::uint64_t seed = 42;
};

struct EpochRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
    bool plateau_triggered = false;
    bool stopped_early = false;
};

using TrainHistory = std::vector<EpochRow>;

inline constexpr const char* kHistoryHeader =
    "epoch,train_loss,val_loss,train_mse,val_mse,lr,plateau,stopped_early";

void write_history_csv(const std::string& path, const TrainHistory& history);

/// Epoch-ordered batch stream: every epoch is a fresh seeded permutation of
/// all sample indices, chunked into batches (remainder batch kept).
class DataGenerator {
public:
    DataGenerator(int sample_count, int batch_size, std::uint64_t seed);

    /// Batches for the given epoch (0-based). Deterministic in (seed, epoch).
    std::vector<std::vector<int>> epoch_batches(int epoch) const;

private:
    int sample_count_;
    int batch_size_;
    std::uint64_t seed_;
};

/// Tracks the best value of a monitored metric; wait() counts epochs since
/// the last improvement. Shared by early stopping and plateau reduction.
class ImprovementMonitor {
public:
    explicit ImprovementMonitor(double min_delta = 0.0) : min_delta_(min_delta) {}

    /// Returns true when the value improved (dropped by more than min_delta).
    bool update(double value);
    int wait() const { return wait_; }
    void reset_wait() { wait_ = 0; }
    double best() const { return best_; }

private:
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    int wait_ = 0;
};

/// Full training loop: per epoch, run the shuffled batch stream with
/// train-mode forward, BCE backward, global-norm clipping and an Adam step;
/// then evaluate the validation split in infer mode, apply the plateau and
/// early-stop rules, and append a history row. Params update in place.
TrainHistory train(NetworkParams& params, const WindowedDataset& train_set,
                   const WindowedDataset& val_set, const TrainConfig& cfg);

}  // namespace smogcast
