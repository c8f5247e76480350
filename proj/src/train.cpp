#include "smogcast/train.hpp"

#include <fstream>
#include <numeric>

#include "smogcast/csv.hpp"
#include "smogcast/metrics.hpp"
#include "smogcast/rng.hpp"

namespace smogcast {

void write_history_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write history: " + path);
    out << kHistoryHeader << "\n";
    for (const EpochRow& row : history) {
        out << row.epoch << ',' << format_double(row.train_loss) << ',' << format_double(row.val_loss)
            << ',' << format_double(row.train_mse) << ',' << format_double(row.val_mse) << ','
            << format_double(row.lr) << ',' << (row.plateau_triggered ? 1 : 0) << ','
            << (row.stopped_early ? 1 : 0) << "\n";
    }
    if (!out) throw std::runtime_error("history write failed: " + path);
}

DataGenerator::DataGenerator(int sample_count, int batch_size, std::uint64_t seed)
    : sample_count_(sample_count), batch_size_(batch_size), seed_(seed) {
    if (sample_count_ < 1) throw std::invalid_argument("data generator: empty dataset");
    if (batch_size_ < 1) throw std::invalid_argument("data generator: batch size must be >= 1");
}

std::vector<std::vector<int>> DataGenerator::epoch_batches(int epoch) const {
    std::vector<int> order(static_cast<std::size_t>(sample_count_));
    std::iota(order.begin(), order.end(), 0);
    // Distinct stream per epoch, reproducible for a fixed seed.
    Rng rng(seed_ * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch) + 1);
    deterministic_shuffle(order, rng);

    std::vector<std::vector<int>> batches;
    for (int start = 0; start < sample_count_; start += batch_size_) {
        const int end = std::min(start + batch_size_, sample_count_);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

bool ImprovementMonitor::update(double value) {
    if (value < best_ - min_delta_) {
        best_ = value;
        wait_ = 0;
        return true;
    }
    ++wait_;
    return false;
}

namespace {

struct EvalResult {
    double loss = 0.0;
    double mse_value = 0.0;
};

/// Infer-mode loss and MSE over a full split, one sample at a time.
EvalResult evaluate_split(const NetworkParams& params, const WindowedDataset& set) {
    double loss_sum = 0.0, mse_sum = 0.0;
    for (int i = 0; i < set.count(); ++i) {
        const Tensor x = set.gather_samples({i});
        const Tensor y = set.gather_targets({i});
        const Tensor pred = network_forward(x, params, BnMode::Infer);
        loss_sum += bce(y, pred);
        mse_sum += mse(y, pred);
    }
    return {loss_sum / set.count(), mse_sum / set.count()};
}

}  // namespace

TrainHistory train(NetworkParams& params, const WindowedDataset& train_set,
                   const WindowedDataset& val_set, const TrainConfig& cfg) {
    if (train_set.count() < 1 || val_set.count() < 1)
        throw std::invalid_argument("train: empty train or validation split");

    TrainHistory history;
    if (cfg.epochs <= 0) return history;

    auto trainables = params.trainable_tensors();
    AdamState adam = AdamState::for_params(trainables);
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.epsilon = cfg.adam_epsilon;
    adam.clipnorm = cfg.clipnorm;

    DataGenerator generator(train_set.count(), cfg.batch_size, cfg.seed);
    ImprovementMonitor stop_monitor(cfg.early_stop.min_delta);
    ImprovementMonitor plateau_monitor(0.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0, mse_sum = 0.0;
        const auto batches = generator.epoch_batches(epoch);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Tensor x = train_set.gather_samples(batches[b]);
            const Tensor y = train_set.gather_targets(batches[b]);

            NetworkCache cache;
            auto [loss, grads] = network_backward(x, y, params, &cache);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                         ", batch " + std::to_string(b));
            network_update_running_stats(params, cache);

            auto grad_tensors = grads.tensors();
            clip_by_global_norm(grad_tensors, adam.clipnorm);
            const std::vector<const Tensor*> grad_view(grad_tensors.begin(), grad_tensors.end());
            adam_step(trainables, grad_view, adam);

            loss_sum += loss;
            mse_sum += mse(y, cache.predictions);
        }

        const EvalResult val = evaluate_split(params, val_set);

        EpochRow row;
        row.epoch = epoch + 1;
        row.train_loss = loss_sum / static_cast<double>(batches.size());
        row.train_mse = mse_sum / static_cast<double>(batches.size());
        row.val_loss = val.loss;
        row.val_mse = val.mse_value;

        if (!plateau_monitor.update(val.loss) && plateau_monitor.wait() >= cfg.plateau.patience) {
            adam.lr = std::max(adam.lr * cfg.plateau.factor, cfg.plateau.min_lr);
            plateau_monitor.reset_wait();
            row.plateau_triggered = true;
        }
        row.lr = adam.lr;

        if (!stop_monitor.update(val.loss) && stop_monitor.wait() >= cfg.early_stop.patience)
            row.stopped_early = true;

        history.push_back(row);
        if (row.stopped_early) break;
    }
    return history;
}

}  // namespace smogcast
