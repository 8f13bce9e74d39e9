#pragma once

// Optimization loop: Adam over the canonical weight registry, mini-batches of
// whole sequences with sequentially accumulated gradients (deterministic under
// a fixed seed), per-epoch validation by aggregate angular error, strict
// early stopping, best-weight restore, and a JSON-lines metric log.
//
// Seeding contract: weight initialization consumes Rng(derive_seed(seed, 0));
// epoch e >= 1 consumes Rng(derive_seed(seed, e)) for both the shuffle and the
// dropout draws, in processing order. Validation runs in evaluation mode and
// consumes no draws, so the log is bit-reproducible (wall_ms aside).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sunattn/aggregate.hpp"
#include "sunattn/checkpoint.hpp"
#include "sunattn/common.hpp"
#include "sunattn/dataset_io.hpp"
#include "sunattn/losses.hpp"
#include "sunattn/model.hpp"
#include "sunattn/sample.hpp"
#include "sunattn/tensor.hpp"

namespace sunattn {

struct TrainConfig {
    double lr = 2e-5;
    int batch_size = 8;  // sequences per optimizer step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int max_epochs = 50;
    int patience = 5;
    std::uint64_t seed = 0;
    double aggregate_loss_weight = 0.0;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0))
            throw std::invalid_argument("train config: beta1 must lie in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("train config: beta2 must lie in [0, 1)");
        if (!(eps > 0.0)) throw std::invalid_argument("train config: eps must be positive");
        if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
        if (!(aggregate_loss_weight >= 0.0))
            throw std::invalid_argument("train config: aggregate_loss_weight must be >= 0");
    }
};

// One bias-corrected Adam update over a parameter registry. Gradients are
// read from each tensor's accumulated grad; callers zero them between steps.
template <typename T>
void adam_step(std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state,
               const TrainConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam: moment state does not match parameter registry");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, w] = params[i];
        if (state.m[i].size() != w.numel() || state.v[i].size() != w.numel())
            throw std::invalid_argument("adam: moment shape does not match section '" + name +
                                        "'");
        const auto& g = w.grad();
        auto& vals = w.values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double gj = static_cast<double>(g[j]);
            if (!std::isfinite(gj))
                throw NumericError("adam: non-finite gradient in section '" + name + "'");
            m[j] = static_cast<T>(cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj);
            v[j] = static_cast<T>(cfg.beta2 * static_cast<double>(v[j]) +
                                  (1.0 - cfg.beta2) * gj * gj);
            const double m_hat = static_cast<double>(m[j]) / bc1;
            const double v_hat = static_cast<double>(v[j]) / bc2;
            vals[j] = static_cast<T>(static_cast<double>(vals[j]) -
                                     cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
        }
    }
}

// Strict-improvement early stopping: stop once the metric has gone `patience`
// consecutive observations without beating the best value seen so far. The
// first observation always counts as an improvement.
class EarlyStopper {
  public:
    explicit EarlyStopper(int patience) : patience_(patience) {
        if (patience < 1) throw std::invalid_argument("early stopping: patience must be >= 1");
    }

    // Records one validation value; returns true when the run should stop.
    bool observe(double value) {
        if (!best_.has_value() || value < *best_) {
            best_ = value;
            streak_ = 0;
            improved_ = true;
        } else {
            ++streak_;
            improved_ = false;
        }
        return streak_ >= patience_;
    }

    bool improved() const { return improved_; }
    std::optional<double> best() const { return best_; }

  private:
    int patience_;
    std::optional<double> best_;
    int streak_ = 0;
    bool improved_ = false;
};

// One metric-log row. Epoch 0 is the pre-training validation pass, so it
// carries no train_loss.
struct EpochMetric {
    int epoch = 0;
    std::optional<double> train_loss;
    double val_mean_err_deg = 0.0;
    std::int64_t wall_ms = 0;
};

inline std::string metric_json_line(const EpochMetric& m) {
    nlohmann::json j;
    j["epoch"] = m.epoch;
    if (m.train_loss.has_value())
        j["train_loss"] = *m.train_loss;
    else
        j["train_loss"] = nullptr;
    j["val_mean_err_deg"] = m.val_mean_err_deg;
    j["wall_ms"] = m.wall_ms;
    return j.dump();
}

// Mean aggregate angular error over a dataset, in degrees: evaluation-mode
// inference, calibrate-and-average per sequence, error against ground truth.
template <typename T>
double validation_error_deg(const std::vector<SequenceSample>& samples,
                            const ModelWeights<T>& weights, const ModelConfig& cfg) {
    if (samples.empty()) throw DataError("validation: dataset is empty");
    Rng rng(0);  // evaluation mode consumes no draws
    double sum = 0.0;
    for (const auto& s : samples) {
        Tensor<T> out = forward_sequence(s, weights, cfg, Mode::eval, rng);
        Vec3 v = calibrate_and_average(estimates_from_output(s, out));
        sum += rad2deg(angular_error(v, s.gt_world));
    }
    return sum / static_cast<double>(samples.size());
}

struct TrainResult {
    ModelWeights<double> weights;  // best-validation weights
    std::vector<EpochMetric> history;
    int best_epoch = 0;
    double best_val_err_deg = 0.0;
};

// Mean training loss over one sequence; gradients scaled by `scale_factor`
// accumulate into the weight tensors via backward().
template <typename T>
double accumulate_sequence_gradient(const SequenceSample& s, const ModelWeights<T>& weights,
                                    const ModelConfig& mcfg, const TrainConfig& tcfg, Rng& rng,
                                    double scale_factor) {
    Tensor<T> out = forward_sequence(s, weights, mcfg, Mode::train, rng);
    Tensor<T> loss = sequence_loss(out, patch_targets<T>(s), tcfg.aggregate_loss_weight,
                                   patch_frame_rotations(s), s.gt_world);
    const double value = static_cast<double>(loss.values()[0]);
    if (!std::isfinite(value))
        throw NumericError("train: non-finite loss on sequence " +
                           std::to_string(s.sequence_id));
    scale(loss, static_cast<T>(scale_factor)).backward();
    return value;
}

inline TrainResult train_model(const std::vector<SequenceSample>& train_set,
                               const std::vector<SequenceSample>& val_set,
                               const ModelConfig& mcfg, const TrainConfig& tcfg,
                               const std::function<void(const EpochMetric&)>& on_epoch = {}) {
    mcfg.validate();
    tcfg.validate();
    if (train_set.empty()) throw DataError("train: training dataset is empty");
    if (val_set.empty()) throw DataError("train: validation dataset is empty");

    using clock = std::chrono::steady_clock;
    auto elapsed_ms = [](clock::time_point t0) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0).count();
    };

    Rng init_rng(derive_seed(tcfg.seed, 0));
    ModelWeights<double> weights = init_weights<double>(mcfg, init_rng);
    AdamState<double> state = AdamState<double>::init(weights);

    TrainResult result;
    auto record = [&](EpochMetric m) {
        if (on_epoch) on_epoch(m);
        result.history.push_back(std::move(m));
    };

    // Epoch 0: validation of the freshly initialized weights, the reference
    // point improvement is measured against.
    {
        auto t0 = clock::now();
        const double err = validation_error_deg(val_set, weights, mcfg);
        record({0, std::nullopt, err, elapsed_ms(t0)});
    }

    EarlyStopper stopper(tcfg.patience);
    ModelWeights<double> best = cast_weights<double>(weights);
    result.best_epoch = 0;
    result.best_val_err_deg = result.history.front().val_mean_err_deg;
    bool have_best = false;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        auto t0 = clock::now();
        Rng epoch_rng(derive_seed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
        // Fisher-Yates shuffle from the epoch stream.
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(epoch_rng.uniform() * static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(tcfg.batch_size));
            weights.zero_grad();
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            for (std::size_t i = begin; i < end; ++i)
                loss_sum += accumulate_sequence_gradient(train_set[order[i]], weights, mcfg,
                                                         tcfg, epoch_rng, inv_batch);
            auto reg = weights.registry();
            adam_step(reg, state, tcfg);
        }

        const double train_loss = loss_sum / static_cast<double>(train_set.size());
        const double val_err = validation_error_deg(val_set, weights, mcfg);
        record({epoch, train_loss, val_err, elapsed_ms(t0)});

        const bool stop = stopper.observe(val_err);
        if (stopper.improved()) {
            best = cast_weights<double>(weights);
            result.best_epoch = epoch;
            result.best_val_err_deg = val_err;
            have_best = true;
        }
        if (stop) break;
    }

    result.weights = have_best ? std::move(best) : std::move(weights);
    return result;
}

// Files-based wrapper: reads the two datasets, trains, then writes the best
// weights as a float32 checkpoint and the metric history as JSON lines.
inline TrainResult train_to_files(const std::string& train_dir, const std::string& val_dir,
                                  const ModelConfig& mcfg, const TrainConfig& tcfg,
                                  const std::string& checkpoint_path,
                                  const std::string& metrics_path,
                                  const std::function<void(const EpochMetric&)>& on_epoch = {}) {
    const std::vector<SequenceSample> train_set = read_dataset(train_dir);
    const std::vector<SequenceSample> val_set = read_dataset(val_dir);

    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw DataError("train: cannot open metric log for writing: " + metrics_path);
    auto log_line = [&](const EpochMetric& m) {
        metrics << metric_json_line(m) << '\n';
        metrics.flush();
        if (on_epoch) on_epoch(m);
    };

    TrainResult result = train_model(train_set, val_set, mcfg, tcfg, log_line);
    if (!metrics) throw DataError("train: metric log write failed: " + metrics_path);

    TrainMeta meta;
    meta.epoch = result.best_epoch;
    meta.val_mean_err_deg = result.best_val_err_deg;
    meta.seed = tcfg.seed;
    save_checkpoint(checkpoint_path, cast_weights<float>(result.weights), mcfg, meta);
    return result;
}

}  // namespace sunattn
