#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sunattn/dataset_io.hpp"
#include "sunattn/evaluate.hpp"
#include "sunattn/model.hpp"
#include "sunattn/synth.hpp"
#include "testutil.hpp"

using namespace sunattn;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.patch_size = 4;
    cfg.d_model = 12;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_mlp = 16;
    cfg.enc_hidden = 8;
    cfg.dropout_rate = 0.0;
    cfg.encoding = EncodingConfig{4, kPi / 2, 10000.0, 12};
    return cfg;
}

std::vector<SequenceSample> tiny_dataset(std::size_t count, int patch_size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SequenceSample> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(testutil::random_sample(2, 2, patch_size, rng));
        out.back().sequence_id = i;
    }
    return out;
}

// One von-Mises-Fisher draw about +z with concentration kappa.
Vec3 vmf_draw(double kappa, Rng& rng) {
    const double u = rng.uniform();
    const double w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
    const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    const double phi = rng.uniform() * 2.0 * kPi;
    return Vec3{s * std::cos(phi), s * std::sin(phi), w};
}

// Analytic RMS polar angle of the same distribution, by Simpson quadrature
// over the density proportional to exp(kappa*cos(theta))*sin(theta).
double vmf_rms_angle(double kappa) {
    const int n = 20000;  // even
    const double h = kPi / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double theta = i * h;
        const double f = std::exp(kappa * (std::cos(theta) - 1.0)) * std::sin(theta);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        num += w * f * theta * theta;
        den += w * f;
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("cumulative curve closed forms") {
    CHECK(cumulative_curve({10.0, 20.0, 30.0}, {15.0}) == std::vector<double>{1.0 / 3.0});
    CHECK(cumulative_curve({10.0, 20.0, 30.0}, {}).empty());
    CHECK(cumulative_curve({10.0, 20.0, 30.0}, {0.0, 180.0}) ==
          std::vector<double>{0.0, 1.0});
    CHECK(cumulative_curve({10.0, 20.0, 30.0}, {10.0}) ==
          std::vector<double>{1.0 / 3.0});  // inclusive threshold
    CHECK_THROWS_AS(cumulative_curve({1.0}, {5.0, 4.0}), std::invalid_argument);

    SECTION("nondecreasing in the thresholds, bounded by [0, 1]") {
        Rng rng(3);
        std::vector<double> errors;
        for (int i = 0; i < 200; ++i) errors.push_back(rng.uniform(0.0, 90.0));
        std::vector<double> thresholds;
        for (int i = 0; i <= 90; i += 3) thresholds.push_back(static_cast<double>(i));
        auto cdf = cumulative_curve(errors, thresholds);
        REQUIRE(cdf.size() == thresholds.size());
        for (std::size_t i = 0; i < cdf.size(); ++i) {
            CHECK(cdf[i] >= 0.0);
            CHECK(cdf[i] <= 1.0);
            if (i > 0) CHECK(cdf[i] >= cdf[i - 1]);
        }
        CHECK(cdf.back() == 1.0);  // 90 covers every draw
    }
}

TEST_CASE("dispersion closed forms") {
    SECTION("identical estimates have zero dispersion") {
        Vec3 v = direction_from_spherical(1.0, 0.5);
        CHECK(dispersion_deg({v, v, v}) == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("a symmetric pair ten degrees apart disperses five degrees") {
        Vec3 a = direction_from_spherical(0.0, deg2rad(40.0));
        Vec3 b = direction_from_spherical(0.0, deg2rad(50.0));
        CHECK(dispersion_deg({a, b}) == Catch::Approx(5.0).margin(1e-9));
    }
    SECTION("fewer than two estimates are rejected") {
        CHECK_THROWS_AS(dispersion_deg({}), std::invalid_argument);
        CHECK_THROWS_AS(dispersion_deg({Vec3{0, 0, 1}}), std::invalid_argument);
    }
    SECTION("von-Mises-Fisher sample matches the quadrature oracle within 3%") {
        const double kappa = 50.0;
        Rng rng(99);
        std::vector<Vec3> draws;
        draws.reserve(10000);
        for (int i = 0; i < 10000; ++i) draws.push_back(vmf_draw(kappa, rng));
        const double sampled = dispersion_deg(draws);
        const double analytic = rad2deg(vmf_rms_angle(kappa));
        CHECK(std::abs(sampled - analytic) / analytic < 0.03);
    }
}

TEST_CASE("oracle estimator drives every error to zero") {
    auto samples = tiny_dataset(6, 4, 41);
    EvalReport r = evaluate_dataset(samples, oracle_estimator());
    REQUIRE(r.rows.size() == 6);
    for (const auto& row : r.rows) {
        CHECK(row.error_deg < 1e-9);
        CHECK(row.dispersion_deg < 1e-9);
    }
    CHECK(r.mean_deg < 1e-9);
    CHECK(r.median_deg < 1e-9);
    CHECK(r.max_deg < 1e-9);
    CHECK(r.cdf.back() == 1.0);
    // Rows come back sorted by sequence id.
    for (std::size_t i = 1; i < r.rows.size(); ++i)
        CHECK(r.rows[i].sequence_id > r.rows[i - 1].sequence_id);
}

TEST_CASE("constant zenith answers cost exactly ninety minus altitude") {
    Rng rng(7);
    auto samples = tiny_dataset(20, 4, 55);
    std::vector<double> alts_deg;
    for (auto& s : samples) {
        const double alt = rng.uniform(deg2rad(5.0), deg2rad(85.0));
        const double az = rng.uniform(0.0, 2.0 * kPi);
        s.gt_world = direction_from_spherical(az, alt);
        alts_deg.push_back(rad2deg(alt));
    }
    EvalReport r = evaluate_dataset(samples, constant_world_estimator());
    REQUIRE(r.rows.size() == samples.size());
    double expected_mean = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(r.rows[i].error_deg == Catch::Approx(90.0 - alts_deg[i]).margin(1e-7));
        expected_mean += 90.0 - alts_deg[i];
    }
    expected_mean /= static_cast<double>(samples.size());
    CHECK(r.mean_deg == Catch::Approx(expected_mean).margin(1.0));
    CHECK(r.mean_deg == Catch::Approx(expected_mean).margin(1e-6));
}

TEST_CASE("per patch errors flatten the whole dataset") {
    auto samples = tiny_dataset(5, 4, 77);
    auto errors = per_patch_errors_deg(samples, oracle_estimator());
    REQUIRE(errors.size() == 5 * 4);  // 2 frames x 2 crops each
    for (double e : errors) CHECK(e < 1e-9);
}

TEST_CASE("pose perturbation jitters poses and nothing else") {
    auto samples = tiny_dataset(40, 4, 11);

    SECTION("zero deviation is the identity") {
        auto same = perturb_poses(samples, 0.0, 123);
        for (std::size_t i = 0; i < samples.size(); ++i)
            for (std::size_t f = 0; f < samples[i].frames.size(); ++f) {
                CHECK(same[i].frames[f].yaw == samples[i].frames[f].yaw);
                CHECK(same[i].frames[f].pitch == samples[i].frames[f].pitch);
            }
    }

    SECTION("fixed seed is reproducible, different seeds differ") {
        auto a = perturb_poses(samples, deg2rad(1.01), 5);
        auto b = perturb_poses(samples, deg2rad(1.01), 5);
        auto c = perturb_poses(samples, deg2rad(1.01), 6);
        bool any_diff = false;
        for (std::size_t i = 0; i < samples.size(); ++i)
            for (std::size_t f = 0; f < samples[i].frames.size(); ++f) {
                CHECK(a[i].frames[f].yaw == b[i].frames[f].yaw);
                CHECK(a[i].frames[f].pitch == b[i].frames[f].pitch);
                any_diff = any_diff || a[i].frames[f].yaw != c[i].frames[f].yaw;
            }
        CHECK(any_diff);
    }

    SECTION("noise magnitude matches the requested deviation") {
        const double sd = deg2rad(2.0);
        auto noisy = perturb_poses(samples, sd, 21);
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < samples.size(); ++i)
            for (std::size_t f = 0; f < samples[i].frames.size(); ++f) {
                const double d = noisy[i].frames[f].pitch - samples[i].frames[f].pitch;
                acc += d * d;
                ++count;
            }
        const double sample_sd = std::sqrt(acc / static_cast<double>(count));
        CHECK(sample_sd == Catch::Approx(sd).epsilon(0.25));
        // Ground truth and pixels are untouched.
        CHECK(noisy[0].gt_world.x == samples[0].gt_world.x);
        CHECK(noisy[0].patches[0].pixels == samples[0].patches[0].pixels);
    }

    SECTION("negative deviation is rejected") {
        CHECK_THROWS_AS(perturb_poses(samples, -0.1, 0), std::invalid_argument);
    }
}

TEST_CASE("evaluation is independent of the worker count") {
    ModelConfig cfg = tiny_config();
    Rng rng(13);
    ModelWeights<float> w = init_weights<float>(cfg, rng);
    auto samples = tiny_dataset(9, cfg.patch_size, 31);

    EvalOptions serial;
    serial.workers = 1;
    EvalOptions parallel;
    parallel.workers = 4;
    EvalReport a = evaluate_dataset(samples, model_estimator(w, cfg), serial);
    EvalReport b = evaluate_dataset(samples, model_estimator(w, cfg), parallel);

    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].sequence_id == b.rows[i].sequence_id);
        CHECK(a.rows[i].error_deg == b.rows[i].error_deg);
        CHECK(a.rows[i].dispersion_deg == b.rows[i].dispersion_deg);
    }
    CHECK(a.mean_deg == b.mean_deg);
    CHECK(a.cdf == b.cdf);
}

TEST_CASE("independent estimator decouples patches") {
    ModelConfig cfg = tiny_config();
    Rng rng(17);
    ModelWeights<float> w = init_weights<float>(cfg, rng);
    auto samples = tiny_dataset(1, cfg.patch_size, 3);
    SequenceSample s = samples[0];

    EstimateSet joint = model_estimator(w, cfg)(s);
    EstimateSet indep = independent_estimator(w, cfg)(s);
    REQUIRE(joint.items.size() == s.patches.size());
    REQUIRE(indep.items.size() == s.patches.size());

    // Shuffling the patch order must not change any independent estimate;
    // compare via a sequence with two patches swapped.
    SequenceSample swapped = s;
    std::swap(swapped.patches[0], swapped.patches[3]);
    EstimateSet indep_swapped = independent_estimator(w, cfg)(swapped);
    CHECK(indep.items[0].v_cam.x == indep_swapped.items[3].v_cam.x);
    CHECK(indep.items[3].v_cam.x == indep_swapped.items[0].v_cam.x);
    CHECK(indep.items[1].v_cam.y == indep_swapped.items[1].v_cam.y);

    // And each independent estimate equals the model run on a single patch,
    // which differs from the joint result in general.
    bool any_difference = false;
    for (std::size_t i = 0; i < s.patches.size(); ++i)
        any_difference = any_difference ||
                         std::abs(joint.items[i].v_cam.x - indep.items[i].v_cam.x) > 1e-9;
    CHECK(any_difference);
}

TEST_CASE("report files land on disk and reload consistently") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sunattn_eval_report_test";
    fs::remove_all(dir);

    auto samples = tiny_dataset(4, 4, 19);
    EvalOptions opt;
    opt.method = "oracle+mean";
    EvalReport r = evaluate_dataset(samples, oracle_estimator(), opt);
    write_report(r, dir.string());

    REQUIRE(fs::exists(dir / "report.csv"));
    REQUIRE(fs::exists(dir / "report.json"));
    REQUIRE(fs::exists(dir / "cdf.csv"));

    std::ifstream csv(dir / "report.csv");
    std::vector<std::string> lines;
    for (std::string line; std::getline(csv, line);)
        if (!line.empty()) lines.push_back(line);
    REQUIRE(lines.size() == 1 + r.rows.size());
    CHECK(lines[0] == "sequence_id,error_deg,dispersion_deg");

    std::ifstream js(dir / "report.json");
    nlohmann::json parsed = nlohmann::json::parse(js);
    CHECK(parsed["method"] == "oracle+mean");
    CHECK(parsed["sequences"] == r.rows.size());
    CHECK(parsed["mean_deg"].get<double>() == r.mean_deg);
    CHECK(parsed["rows"].size() == r.rows.size());

    std::ifstream cdf(dir / "cdf.csv");
    std::vector<std::string> cdf_lines;
    for (std::string line; std::getline(cdf, line);)
        if (!line.empty()) cdf_lines.push_back(line);
    REQUIRE(cdf_lines.size() == 1 + r.thresholds_deg.size());
    CHECK(cdf_lines[0] == "threshold_deg,fraction");

    SECTION("rewrites are byte-identical") {
        auto slurp = [](const fs::path& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in),
                               std::istreambuf_iterator<char>());
        };
        const std::string before = slurp(dir / "report.json") + slurp(dir / "report.csv") +
                                   slurp(dir / "cdf.csv");
        write_report(r, dir.string());
        const std::string after = slurp(dir / "report.json") + slurp(dir / "report.csv") +
                                  slurp(dir / "cdf.csv");
        CHECK(before == after);
    }

    fs::remove_all(dir);
}

TEST_CASE("checkpoint evaluation wires the whole pipeline") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sunattn_eval_ckpt_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    ModelConfig cfg = tiny_config();
    Rng rng(23);
    ModelWeights<float> w = init_weights<float>(cfg, rng);
    const std::string ckpt = (dir / "model.ckpt").string();
    save_checkpoint(ckpt, w, cfg, TrainMeta{1, 45.0, 23});

    auto samples = tiny_dataset(3, cfg.patch_size, 29);
    SceneSpec spec;
    spec.patch_size = cfg.patch_size;
    write_dataset(samples, (dir / "data").string(), spec, 29);

    EvalOptions opt;
    opt.method = "joint+mean";
    EvalReport joint = evaluate_checkpoint(ckpt, (dir / "data").string(), opt);
    CHECK(joint.rows.size() == 3);
    for (const auto& row : joint.rows) {
        CHECK(row.error_deg >= 0.0);
        CHECK(row.error_deg <= 180.0);
    }

    EvalReport indep = evaluate_checkpoint(ckpt, (dir / "data").string(), opt, true);
    CHECK(indep.rows.size() == 3);

    SECTION("meanshift aggregation also runs") {
        EvalOptions ms;
        ms.aggregator = Aggregator::meanshift;
        EvalReport r = evaluate_checkpoint(ckpt, (dir / "data").string(), ms);
        CHECK(r.rows.size() == 3);
    }

    SECTION("pose noise changes the report") {
        EvalReport noisy =
            evaluate_checkpoint(ckpt, (dir / "data").string(), opt, false, deg2rad(5.0), 7);
        bool differs = false;
        for (std::size_t i = 0; i < joint.rows.size(); ++i)
            differs = differs || noisy.rows[i].error_deg != joint.rows[i].error_deg;
        CHECK(differs);
    }

    SECTION("patch size mismatch is rejected naming the field") {
        ModelConfig big = cfg;
        big.patch_size = 8;
        Rng r2(5);
        ModelWeights<float> w2 = init_weights<float>(big, r2);
        const std::string ckpt2 = (dir / "model8.ckpt").string();
        save_checkpoint(ckpt2, w2, big, TrainMeta{});
        CHECK_THROWS_WITH(evaluate_checkpoint(ckpt2, (dir / "data").string(), opt),
                          Catch::Matchers::ContainsSubstring("patch_size"));
    }

    fs::remove_all(dir);
}

TEST_CASE("empty datasets and bad options are rejected") {
    CHECK_THROWS_AS(evaluate_dataset({}, oracle_estimator()), DataError);
    auto samples = tiny_dataset(2, 4, 1);
    EvalOptions opt;
    opt.workers = 0;
    CHECK_THROWS_AS(evaluate_dataset(samples, oracle_estimator(), opt), std::invalid_argument);
    CHECK_THROWS_AS(aggregator_from_name("median"), std::invalid_argument);
    CHECK(aggregator_from_name("mean") == Aggregator::mean);
    CHECK(aggregator_from_name("meanshift") == Aggregator::meanshift);
}
