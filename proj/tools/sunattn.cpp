// sunattn — operator surface for the sun-direction pipeline.
//
// Subcommands: generate, train, eval, predict, baseline, gradcheck, solar.
// Exit codes: 0 success, 2 usage, 3 data/format problems, 4 numeric failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sunattn/aggregate.hpp"
#include "sunattn/common.hpp"
#include "sunattn/dataset_io.hpp"
#include "sunattn/evaluate.hpp"
#include "sunattn/gradsuite.hpp"
#include "sunattn/model.hpp"
#include "sunattn/solar.hpp"
#include "sunattn/synth.hpp"
#include "sunattn/train.hpp"

namespace {

using namespace sunattn;

void refuse_overwrite(const std::filesystem::path& path, bool force) {
    if (!force && std::filesystem::exists(path))
        throw DataError("refusing to overwrite existing " + path.string() +
                        " (pass --force to replace it)");
}

nlohmann::json direction_json(const Vec3& v) {
    auto [az, alt] = spherical_from_direction(v);
    nlohmann::json j;
    j["v"] = {v.x, v.y, v.z};
    j["azimuth_deg"] = rad2deg(az);
    j["altitude_deg"] = rad2deg(alt);
    return j;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string out;
    std::size_t sequences = 0;
    std::uint64_t seed = 0;
    double outlier_prob = 0.25;
    double noise = 0.05;
    int frames = 8;
    int crops = 4;
    int patch_size = 16;
    int workers = 1;
    bool force = false;
};

int run_generate(const GenerateArgs& a) {
    SceneSpec spec;
    // Placeholder; generate_dataset draws each sequence's sun from the master seed.
    spec.sun_world = direction_from_spherical(0.0, deg2rad(45.0));
    spec.k = a.frames;
    spec.n = a.crops;
    spec.p_out = a.outlier_prob;
    spec.sigma = a.noise;
    spec.patch_size = a.patch_size;
    spec.validate();
    refuse_overwrite(std::filesystem::path(a.out) / "manifest.json", a.force);

    std::vector<SequenceSample> samples =
        generate_dataset(spec, a.sequences, a.seed, a.workers);
    write_dataset(samples, a.out, spec, a.seed);
    std::cout << "wrote " << samples.size() << " sequences ("
              << samples.size() * static_cast<std::size_t>(a.frames) * a.crops
              << " patches) to " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string train_dir, val_dir, out, metrics;
    std::string preset = "desk";
    // Model overrides; unset means "keep the preset value".
    std::optional<int> d_angle, layers, heads, d_mlp, enc_hidden, patch_size;
    std::optional<double> dropout;
    TrainConfig tcfg;
    bool force = false;
};

ModelConfig resolve_model_config(const TrainArgs& a) {
    ModelConfig cfg = a.preset == "paper" ? ModelConfig::paper() : ModelConfig::desk();
    if (a.d_angle) {
        cfg.encoding.d_angle = *a.d_angle;
        cfg.encoding.d_model = 3 * *a.d_angle;
        cfg.d_model = 3 * *a.d_angle;
    }
    if (a.layers) cfg.n_layers = *a.layers;
    if (a.heads) cfg.n_heads = *a.heads;
    if (a.d_mlp) cfg.d_mlp = *a.d_mlp;
    if (a.enc_hidden) cfg.enc_hidden = *a.enc_hidden;
    if (a.patch_size) cfg.patch_size = *a.patch_size;
    if (a.dropout) cfg.dropout_rate = *a.dropout;
    cfg.validate();  // conflicting preset/override combinations die here
    return cfg;
}

int run_train(const TrainArgs& a) {
    ModelConfig mcfg = resolve_model_config(a);
    a.tcfg.validate();
    const std::string metrics =
        a.metrics.empty() ? a.out + ".metrics.jsonl" : a.metrics;
    refuse_overwrite(a.out, a.force);
    refuse_overwrite(metrics, a.force);

    TrainResult r = train_to_files(a.train_dir, a.val_dir, mcfg, a.tcfg, a.out, metrics,
                                   [](const EpochMetric& m) {
                                       std::cout << metric_json_line(m) << "\n";
                                   });
    std::cout << "best epoch " << r.best_epoch << " at " << r.best_val_err_deg
              << " deg; checkpoint " << a.out << ", metrics " << metrics << "\n";
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint, data, out;
    std::string aggregator = "mean";
    std::string method;
    bool independent = false;
    double perturb_poses_deg = 0.0;
    std::uint64_t perturb_seed = 0;
    std::uint64_t seed = 0;
    int workers = 1;
    bool force = false;
    std::string dump_estimates;
};

int run_eval(const EvalArgs& a) {
    EvalOptions opt;
    opt.aggregator = aggregator_from_name(a.aggregator);
    opt.workers = a.workers;
    opt.method = a.method.empty()
                     ? std::string(a.independent ? "independent" : "joint") + "+" + a.aggregator
                     : a.method;
    refuse_overwrite(std::filesystem::path(a.out) / "report.json", a.force);

    EvalReport report = evaluate_checkpoint(a.checkpoint, a.data, opt, a.independent,
                                            deg2rad(a.perturb_poses_deg), a.perturb_seed);
    write_report(report, a.out);

    if (!a.dump_estimates.empty()) {
        LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
        std::vector<SequenceSample> samples = read_dataset(a.data);
        if (deg2rad(a.perturb_poses_deg) > 0.0)
            samples = perturb_poses(std::move(samples), deg2rad(a.perturb_poses_deg),
                                    a.perturb_seed);
        Estimator est = a.independent ? independent_estimator(ck.weights, ck.config)
                                      : model_estimator(ck.weights, ck.config);
        std::filesystem::create_directories(a.dump_estimates);
        for (const auto& s : samples)
            write_estimates(est(s), (std::filesystem::path(a.dump_estimates) /
                                     ("estimates_" + std::to_string(s.sequence_id) + ".jsonl"))
                                        .string());
    }

    std::cout << "method " << report.method << ": mean " << report.mean_deg << " deg, median "
              << report.median_deg << " deg, max " << report.max_deg
              << " deg over " << report.rows.size() << " sequences; reports in " << a.out
              << "\n";
    return 0;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
    std::string checkpoint, data;
    std::optional<std::uint64_t> sequence;
    std::string aggregator = "mean";
    std::uint64_t seed = 0;
};

int run_predict(const PredictArgs& a) {
    LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
    std::vector<SequenceSample> samples = read_dataset(a.data);
    if (samples.empty()) throw DataError("predict: dataset " + a.data + " is empty");
    const SequenceSample* chosen = nullptr;
    if (a.sequence) {
        for (const auto& s : samples)
            if (s.sequence_id == *a.sequence) chosen = &s;
        if (!chosen)
            throw DataError("predict: no sequence with id " + std::to_string(*a.sequence) +
                            " in " + a.data);
    } else {
        chosen = &samples.front();
    }
    if (chosen->patch_size != ck.config.patch_size)
        throw DataError("predict: checkpoint patch_size " +
                        std::to_string(ck.config.patch_size) + " does not match dataset (" +
                        std::to_string(chosen->patch_size) + ")");

    EstimateSet est = model_estimator(ck.weights, ck.config)(*chosen);
    Vec3 v = aggregate_estimates(est, aggregator_from_name(a.aggregator));
    nlohmann::json j = direction_json(v);
    j["sequence_id"] = chosen->sequence_id;
    std::cout << j.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------- baseline

struct BaselineArgs {
    std::string estimates;
    double bandwidth = 0.2;
    double outlier_sigma = 2.0;
    std::uint64_t seed = 0;
};

int run_baseline(const BaselineArgs& a) {
    EstimateSet est = read_estimates(a.estimates);
    Vec3 v = meanshift_aggregate(est, a.bandwidth, a.outlier_sigma);
    nlohmann::json j = direction_json(v);
    j["estimates"] = est.items.size();
    std::cout << j.dump() << "\n";
    return 0;
}

// --------------------------------------------------------------- gradcheck

int run_gradcheck(std::uint64_t seed) {
    const auto results = run_gradient_suite(seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-24s max_rel_err %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_err,
                    r.tolerance, r.pass ? "ok" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::cerr << "gradient check failed\n";
        return 4;
    }
    std::cout << results.size() << " checks passed\n";
    return 0;
}

// ------------------------------------------------------------------- solar

int run_solar(double lat, double lon, const std::string& timestamp) {
    SolarPosition pos = sun_from_gps_time(lat, lon, parse_utc_timestamp(timestamp));
    nlohmann::json j;
    j["azimuth_deg"] = rad2deg(pos.azimuth);
    j["altitude_deg"] = rad2deg(pos.altitude);
    std::cout << j.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sun-direction estimation pipeline"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* cgen = app.add_subcommand("generate", "render a synthetic dataset");
    cgen->add_option("--out", gen.out, "output dataset directory")->required();
    cgen->add_option("--sequences", gen.sequences, "number of sequences")->required();
    cgen->add_option("--seed", gen.seed, "master seed (default 0)");
    cgen->add_option("--outlier-prob", gen.outlier_prob,
                     "probability a patch is cue-free (default 0.25)");
    cgen->add_option("--noise", gen.noise, "per-value Gaussian pixel noise std (default 0.05)");
    cgen->add_option("--frames", gen.frames, "frames per sequence (default 8)");
    cgen->add_option("--crops", gen.crops, "crops per frame (default 4)");
    cgen->add_option("--patch-size", gen.patch_size, "square patch side in pixels (default 16)");
    cgen->add_option("--workers", gen.workers, "render threads (default 1)");
    cgen->add_flag("--force", gen.force, "overwrite an existing dataset");

    TrainArgs tr;
    auto* ctr = app.add_subcommand("train", "train the estimation model");
    ctr->add_option("--train", tr.train_dir, "training dataset directory")->required();
    ctr->add_option("--val", tr.val_dir, "validation dataset directory")->required();
    ctr->add_option("--out", tr.out, "checkpoint output path")->required();
    ctr->add_option("--metrics", tr.metrics,
                    "metric log path (default: <out>.metrics.jsonl)");
    ctr->add_option("--preset", tr.preset, "model preset (default desk)")
        ->check(CLI::IsMember({"desk", "paper"}));
    ctr->add_option("--d-angle", tr.d_angle,
                    "per-angle encoding width; model width becomes 3x this");
    ctr->add_option("--layers", tr.layers, "attention blocks");
    ctr->add_option("--heads", tr.heads, "attention heads");
    ctr->add_option("--d-mlp", tr.d_mlp, "feed-forward hidden width");
    ctr->add_option("--enc-hidden", tr.enc_hidden, "patch encoder hidden width");
    ctr->add_option("--patch-size", tr.patch_size, "square patch side in pixels");
    ctr->add_option("--dropout", tr.dropout, "dropout rate in [0, 1)");
    ctr->add_option("--lr", tr.tcfg.lr, "learning rate (default 2e-5)");
    ctr->add_option("--batch", tr.tcfg.batch_size, "sequences per step (default 8)");
    ctr->add_option("--epochs", tr.tcfg.max_epochs, "epoch budget (default 50)");
    ctr->add_option("--patience", tr.tcfg.patience,
                    "epochs without improvement before stopping (default 5)");
    ctr->add_option("--seed", tr.tcfg.seed, "training seed (default 0)");
    ctr->add_option("--aggregate-weight", tr.tcfg.aggregate_loss_weight,
                    "weight of the aggregate loss term (default 0)");
    ctr->add_flag("--force", tr.force, "overwrite existing outputs");

    EvalArgs ev;
    auto* cev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    cev->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
    cev->add_option("--data", ev.data, "dataset directory")->required();
    cev->add_option("--out", ev.out, "report output directory")->required();
    cev->add_option("--aggregator", ev.aggregator, "aggregation method (default mean)")
        ->check(CLI::IsMember({"mean", "meanshift"}));
    cev->add_flag("--independent", ev.independent,
                  "estimate each patch alone instead of jointly");
    cev->add_option("--perturb-poses", ev.perturb_poses_deg,
                    "pose noise std in degrees (default 0)");
    cev->add_option("--perturb-seed", ev.perturb_seed, "pose noise seed (default 0)");
    cev->add_option("--seed", ev.seed,
                    "accepted for uniformity; evaluation is deterministic "
                    "(pose noise uses --perturb-seed)");
    cev->add_option("--workers", ev.workers, "evaluation threads (default 1)");
    cev->add_option("--method", ev.method, "method tag written into the report");
    cev->add_option("--dump-estimates", ev.dump_estimates,
                    "directory for per-sequence estimate files");
    cev->add_flag("--force", ev.force, "overwrite existing reports");

    PredictArgs pr;
    auto* cpr = app.add_subcommand("predict", "predict one sequence's sun direction");
    cpr->add_option("--checkpoint", pr.checkpoint, "checkpoint path")->required();
    cpr->add_option("--data", pr.data, "dataset directory")->required();
    cpr->add_option("--sequence", pr.sequence, "sequence id (default: first in dataset)");
    cpr->add_option("--aggregator", pr.aggregator, "aggregation method (default mean)")
        ->check(CLI::IsMember({"mean", "meanshift"}));
    cpr->add_option("--seed", pr.seed, "accepted for uniformity; prediction is deterministic");

    BaselineArgs bl;
    auto* cbl = app.add_subcommand("baseline", "mean-shift aggregate an estimate file");
    cbl->add_option("--estimates", bl.estimates, "estimate file (JSON lines)")->required();
    cbl->add_option("--bandwidth", bl.bandwidth, "kernel bandwidth in radians (default 0.2)");
    cbl->add_option("--outlier-sigma", bl.outlier_sigma,
                    "sigma-clipping threshold (default 2.0)");
    cbl->add_option("--seed", bl.seed, "accepted for uniformity; aggregation is deterministic");

    std::uint64_t gc_seed = 12345;
    auto* cgc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    cgc->add_option("--seed", gc_seed, "suite seed (default 12345)");

    double so_lat = 0.0, so_lon = 0.0;
    std::uint64_t so_seed = 0;
    std::string so_time;
    auto* cso = app.add_subcommand("solar", "sun azimuth/altitude for a place and time");
    cso->add_option("lat", so_lat, "latitude in degrees, north positive")->required();
    cso->add_option("lon", so_lon, "longitude in degrees, east positive")->required();
    cso->add_option("timestamp", so_time, "UTC time, e.g. 2020-03-20T12:07:00Z")->required();
    cso->add_option("--seed", so_seed, "accepted for uniformity; the ephemeris is deterministic");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(cgen)) return run_generate(gen);
        if (app.got_subcommand(ctr)) return run_train(tr);
        if (app.got_subcommand(cev)) return run_eval(ev);
        if (app.got_subcommand(cpr)) return run_predict(pr);
        if (app.got_subcommand(cbl)) return run_baseline(bl);
        if (app.got_subcommand(cgc)) return run_gradcheck(gc_seed);
        if (app.got_subcommand(cso)) return run_solar(so_lat, so_lon, so_time);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "filesystem error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;  // unreachable with require_subcommand(1)
}
