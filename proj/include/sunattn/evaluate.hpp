#pragma once

// Evaluation harness: per-sequence angular errors and dispersion for any
// estimator (joint transformer, per-patch independent, reference hooks),
// cumulative-error curves, and CSV/JSON report emission.
//
// Reports are deterministic for a fixed checkpoint and dataset; the
// sequence-parallel path writes into preallocated slots, so results are
// independent of the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sunattn/aggregate.hpp"
#include "sunattn/checkpoint.hpp"
#include "sunattn/common.hpp"
#include "sunattn/dataset_io.hpp"
#include "sunattn/geometry.hpp"
#include "sunattn/model.hpp"
#include "sunattn/sample.hpp"

namespace sunattn {

enum class Aggregator { mean, meanshift };

inline Aggregator aggregator_from_name(const std::string& name) {
    if (name == "mean") return Aggregator::mean;
    if (name == "meanshift") return Aggregator::meanshift;
    throw std::invalid_argument("aggregator must be 'mean' or 'meanshift', got '" + name + "'");
}

// Anything that turns a sequence into per-patch camera-frame estimates.
using Estimator = std::function<EstimateSet(const SequenceSample&)>;

// Joint inference: the whole sequence goes through the model at once, so
// attention couples the patches.
inline Estimator model_estimator(ModelWeights<float> weights, ModelConfig cfg) {
    cfg.validate();
    return [weights = std::move(weights), cfg](const SequenceSample& s) {
        Rng rng(0);  // evaluation mode consumes no draws
        return estimates_from_output(s, forward_sequence(s, weights, cfg, Mode::eval, rng));
    };
}

// Independent inference: each patch is pushed through the model as a
// length-one sequence, so no information flows between patches.
inline Estimator independent_estimator(ModelWeights<float> weights, ModelConfig cfg) {
    cfg.validate();
    return [weights = std::move(weights), cfg](const SequenceSample& s) {
        s.validate();
        EstimateSet est;
        est.items.reserve(s.patches.size());
        for (std::size_t i = 0; i < s.patches.size(); ++i) {
            SequenceSample solo;
            solo.sequence_id = s.sequence_id;
            solo.patch_size = s.patch_size;
            solo.gt_world = s.gt_world;
            solo.frames = {s.frames[s.patches[i].frame_index]};
            solo.patches = {s.patches[i]};
            solo.patches[0].frame_index = 0;
            Rng rng(0);
            Tensor<float> out = forward_sequence(solo, weights, cfg, Mode::eval, rng);
            est.items.push_back({static_cast<std::uint32_t>(i),
                                 s.frames[s.patches[i].frame_index],
                                 Vec3{out.at(0, 0), out.at(0, 1), out.at(0, 2)}});
        }
        return est;
    };
}

// Reference hook: emits the ground truth rotated into each patch's frame, so
// the downstream pipeline must return the ground truth exactly.
inline Estimator oracle_estimator() {
    return [](const SequenceSample& s) {
        s.validate();
        EstimateSet est;
        est.items.reserve(s.patches.size());
        for (std::size_t i = 0; i < s.patches.size(); ++i) {
            const CameraFrame& f = s.frames[s.patches[i].frame_index];
            est.items.push_back(
                {static_cast<std::uint32_t>(i), f, apply(f.rotation(), s.gt_world)});
        }
        return est;
    };
}

// Reference hook: always answers the same world direction (default zenith),
// regardless of the imagery.
inline Estimator constant_world_estimator(Vec3 v_world = Vec3{0.0, 0.0, 1.0}) {
    return [v_world](const SequenceSample& s) {
        s.validate();
        EstimateSet est;
        est.items.reserve(s.patches.size());
        for (std::size_t i = 0; i < s.patches.size(); ++i) {
            const CameraFrame& f = s.frames[s.patches[i].frame_index];
            est.items.push_back({static_cast<std::uint32_t>(i), f, apply(f.rotation(), v_world)});
        }
        return est;
    };
}

inline Vec3 aggregate_estimates(const EstimateSet& est, Aggregator agg) {
    return agg == Aggregator::mean ? calibrate_and_average(est) : meanshift_aggregate(est);
}

// Fraction of errors at or below each threshold. Thresholds must ascend.
inline std::vector<double> cumulative_curve(const std::vector<double>& errors_deg,
                                            const std::vector<double>& thresholds_deg) {
    for (std::size_t i = 1; i < thresholds_deg.size(); ++i)
        if (thresholds_deg[i] < thresholds_deg[i - 1])
            throw std::invalid_argument("cumulative_curve: thresholds must ascend");
    std::vector<double> fractions;
    fractions.reserve(thresholds_deg.size());
    if (errors_deg.empty()) {
        fractions.assign(thresholds_deg.size(), 0.0);
        return fractions;
    }
    std::vector<double> sorted = errors_deg;
    std::sort(sorted.begin(), sorted.end());
    for (double t : thresholds_deg) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        fractions.push_back(static_cast<double>(it - sorted.begin()) /
                            static_cast<double>(sorted.size()));
    }
    return fractions;
}

// Angular standard deviation (degrees) of unit directions about their
// spherical mean.
inline double dispersion_deg(const std::vector<Vec3>& dirs) {
    if (dirs.size() < 2)
        throw std::invalid_argument("dispersion: needs at least 2 estimates, got " +
                                    std::to_string(dirs.size()));
    return rad2deg(circular_dispersion(dirs));
}

// Every patch's own calibrated error against ground truth, flattened across
// the dataset — the "single estimate" reference aggregation is judged by.
inline std::vector<double> per_patch_errors_deg(const std::vector<SequenceSample>& samples,
                                                const Estimator& estimator) {
    std::vector<double> errors;
    for (const auto& s : samples) {
        for (const Vec3& v : calibrated_directions(estimator(s)))
            errors.push_back(rad2deg(angular_error(v, s.gt_world)));
    }
    return errors;
}

// Jitters every frame pose with zero-mean Gaussian noise on yaw and pitch
// (one per-sequence stream, yaw then pitch per frame in order). Ground truth
// is untouched, so the returned samples measure robustness to pose error.
inline std::vector<SequenceSample> perturb_poses(std::vector<SequenceSample> samples,
                                                 double std_dev_rad, std::uint64_t seed) {
    if (!(std_dev_rad >= 0.0))
        throw std::invalid_argument("perturb_poses: std deviation must be >= 0");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        for (auto& f : samples[i].frames) {
            f.yaw += rng.normal(0.0, std_dev_rad);
            f.pitch += rng.normal(0.0, std_dev_rad);
        }
    }
    return samples;
}

struct SequenceEval {
    std::uint64_t sequence_id = 0;
    double error_deg = 0.0;
    double dispersion_deg = 0.0;
};

struct EvalReport {
    std::string method;
    std::vector<SequenceEval> rows;  // sorted by sequence id
    double mean_deg = 0.0;
    double median_deg = 0.0;
    double max_deg = 0.0;
    double mean_dispersion_deg = 0.0;
    std::vector<double> thresholds_deg;
    std::vector<double> cdf;
};

struct EvalOptions {
    Aggregator aggregator = Aggregator::mean;
    std::string method;                  // free-form tag copied into the report
    int workers = 1;
    std::vector<double> thresholds_deg;  // empty -> 0..60 deg step 1, extended to cover max
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> default_thresholds(double max_error_deg) {
    std::vector<double> t;
    for (int d = 0; d <= 60; ++d) t.push_back(static_cast<double>(d));
    if (max_error_deg > t.back()) t.push_back(std::ceil(max_error_deg));
    return t;
}

inline std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline EvalReport evaluate_dataset(const std::vector<SequenceSample>& samples,
                                   const Estimator& estimator, const EvalOptions& opt = {}) {
    if (samples.empty()) throw DataError("evaluate: dataset is empty");
    if (opt.workers < 1) throw std::invalid_argument("evaluate: workers must be >= 1");
    if (!estimator) throw std::invalid_argument("evaluate: estimator is empty");

    std::vector<SequenceEval> rows(samples.size());
    const int workers = std::min<int>(opt.workers, static_cast<int>(samples.size()));
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto run_range = [&](int worker) {
        try {
            for (std::size_t i = static_cast<std::size_t>(worker); i < samples.size();
                 i += static_cast<std::size_t>(workers)) {
                const SequenceSample& s = samples[i];
                EstimateSet est = estimator(s);
                const Vec3 agg = aggregate_estimates(est, opt.aggregator);
                SequenceEval row;
                row.sequence_id = s.sequence_id;
                row.error_deg = rad2deg(angular_error(agg, s.gt_world));
                std::vector<Vec3> dirs = calibrated_directions(est);
                row.dispersion_deg = dirs.size() >= 2 ? dispersion_deg(dirs) : 0.0;
                rows[i] = row;
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };

    if (workers == 1) {
        run_range(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::stable_sort(rows.begin(), rows.end(),
                     [](const SequenceEval& a, const SequenceEval& b) {
                         return a.sequence_id < b.sequence_id;
                     });

    EvalReport report;
    report.method = opt.method;
    report.rows = std::move(rows);
    std::vector<double> errors;
    errors.reserve(report.rows.size());
    double disp_sum = 0.0;
    for (const auto& r : report.rows) {
        errors.push_back(r.error_deg);
        disp_sum += r.dispersion_deg;
        report.max_deg = std::max(report.max_deg, r.error_deg);
        report.mean_deg += r.error_deg;
    }
    report.mean_deg /= static_cast<double>(report.rows.size());
    report.median_deg = detail::median(errors);
    report.mean_dispersion_deg = disp_sum / static_cast<double>(report.rows.size());
    report.thresholds_deg =
        opt.thresholds_deg.empty() ? detail::default_thresholds(report.max_deg)
                                   : opt.thresholds_deg;
    report.cdf = cumulative_curve(errors, report.thresholds_deg);
    return report;
}

inline nlohmann::json report_json(const EvalReport& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["sequences"] = r.rows.size();
    j["mean_deg"] = r.mean_deg;
    j["median_deg"] = r.median_deg;
    j["max_deg"] = r.max_deg;
    j["mean_dispersion_deg"] = r.mean_dispersion_deg;
    j["cdf"] = {{"threshold_deg", r.thresholds_deg}, {"fraction", r.cdf}};
    for (const auto& row : r.rows)
        j["rows"].push_back({{"sequence_id", row.sequence_id},
                             {"error_deg", row.error_deg},
                             {"dispersion_deg", row.dispersion_deg}});
    return j;
}

// Writes report.csv, report.json, and cdf.csv under `dir`.
inline void write_report(const EvalReport& r, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream csv(fs::path(dir) / "report.csv", std::ios::trunc);
    if (!csv) throw DataError("report: cannot write report.csv under " + dir);
    csv << "sequence_id,error_deg,dispersion_deg\n";
    for (const auto& row : r.rows)
        csv << row.sequence_id << ',' << detail::csv_number(row.error_deg) << ','
            << detail::csv_number(row.dispersion_deg) << '\n';
    if (!csv.flush()) throw DataError("report: write failed for report.csv");

    std::ofstream cdf(fs::path(dir) / "cdf.csv", std::ios::trunc);
    if (!cdf) throw DataError("report: cannot write cdf.csv under " + dir);
    cdf << "threshold_deg,fraction\n";
    for (std::size_t i = 0; i < r.thresholds_deg.size(); ++i)
        cdf << detail::csv_number(r.thresholds_deg[i]) << ',' << detail::csv_number(r.cdf[i])
            << '\n';
    if (!cdf.flush()) throw DataError("report: write failed for cdf.csv");

    std::ofstream js(fs::path(dir) / "report.json", std::ios::trunc);
    if (!js) throw DataError("report: cannot write report.json under " + dir);
    js << report_json(r).dump(2) << '\n';
    if (!js.flush()) throw DataError("report: write failed for report.json");
}

// Loads a float32 checkpoint and a dataset, wires up the requested estimator,
// and evaluates. The checkpoint's stored patch size must match the dataset.
inline EvalReport evaluate_checkpoint(const std::string& checkpoint_path,
                                      const std::string& dataset_dir, const EvalOptions& opt = {},
                                      bool independent = false,
                                      double pose_noise_std_rad = 0.0,
                                      std::uint64_t pose_noise_seed = 0) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
    std::vector<SequenceSample> samples = read_dataset(dataset_dir);
    if (!samples.empty() && samples.front().patch_size != ck.config.patch_size)
        throw DataError("evaluate: checkpoint patch_size " +
                        std::to_string(ck.config.patch_size) + " does not match dataset (" +
                        std::to_string(samples.front().patch_size) + ")");
    if (pose_noise_std_rad > 0.0)
        samples = perturb_poses(std::move(samples), pose_noise_std_rad, pose_noise_seed);
    Estimator est = independent ? independent_estimator(ck.weights, ck.config)
                                : model_estimator(ck.weights, ck.config);
    return evaluate_dataset(samples, est, opt);
}

}  // namespace sunattn
