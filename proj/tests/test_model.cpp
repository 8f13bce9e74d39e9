#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sunattn/gradcheck.hpp"
#include "sunattn/losses.hpp"
#include "sunattn/model.hpp"
#include "testutil.hpp"

using namespace sunattn;

namespace {

// Small enough that exhaustive finite differences stay fast.
ModelConfig tiny_config() {
    ModelConfig c;
    c.patch_size = 4;
    c.d_model = 12;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_mlp = 16;
    c.enc_hidden = 8;
    c.dropout_rate = 0.0;
    c.encoding = EncodingConfig{4, kPi / 2, 10000.0, 12};
    return c;
}

}  // namespace

TEST_CASE("model config validation") {
    CHECK_NOTHROW(ModelConfig::desk().validate());
    CHECK_NOTHROW(ModelConfig::paper().validate());
    CHECK(ModelConfig::desk().d_model == 66);
    CHECK(ModelConfig::paper().d_model == 516);
    CHECK(ModelConfig::paper().d_model % ModelConfig::paper().n_heads == 0);

    auto bad_heads = ModelConfig::desk();
    bad_heads.n_heads = 4;  // 66 % 4 != 0
    CHECK_THROWS_AS(bad_heads.validate(), std::invalid_argument);

    auto bad_enc = ModelConfig::desk();
    bad_enc.encoding.d_angle = 20;
    CHECK_THROWS_AS(bad_enc.validate(), std::invalid_argument);

    auto bad_drop = ModelConfig::desk();
    bad_drop.dropout_rate = 1.0;
    CHECK_THROWS_AS(bad_drop.validate(), std::invalid_argument);
}

TEST_CASE("weight initialization is deterministic and well-scoped") {
    auto cfg = tiny_config();
    Rng a(42), b(42), c(43);
    auto wa = init_weights<double>(cfg, a);
    auto wb = init_weights<double>(cfg, b);
    auto wc = init_weights<double>(cfg, c);

    auto ra = wa.registry(), rb = wb.registry(), rc = wc.registry();
    REQUIRE(ra.size() == rb.size());
    bool same_seed_equal = true, diff_seed_equal = true;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        CHECK(ra[i].first == rb[i].first);
        same_seed_equal = same_seed_equal && ra[i].second.values() == rb[i].second.values();
        diff_seed_equal = diff_seed_equal && ra[i].second.values() == rc[i].second.values();
    }
    CHECK(same_seed_equal);
    CHECK_FALSE(diff_seed_equal);

    // Biases zero, gains one, weights within the xavier bound.
    CHECK(std::all_of(wa.enc_b1.values().begin(), wa.enc_b1.values().end(),
                      [](double v) { return v == 0.0; }));
    CHECK(std::all_of(wa.layers[0].ln1_gain.values().begin(),
                      wa.layers[0].ln1_gain.values().end(),
                      [](double v) { return v == 1.0; }));
    const double bound = std::sqrt(6.0 / (cfg.patch_dim() + cfg.enc_hidden));
    for (double v : wa.enc_w1.values()) {
        CHECK(std::abs(v) <= bound);
    }
    CHECK(wa.param_count() > 0);
    CHECK(ra.size() == 4 + 16 * cfg.n_layers + 4);
}

TEST_CASE("zero patch with zero biases encodes to zero") {
    auto cfg = tiny_config();
    Rng rng(7);
    auto w = init_weights<double>(cfg, rng);
    std::vector<double> zero(cfg.patch_dim(), 0.0);
    auto e = encode_patch(zero, w, cfg);
    REQUIRE(e.rows() == 1);
    REQUIRE(e.cols() == static_cast<std::size_t>(cfg.d_model));
    for (double v : e.values()) CHECK(v == 0.0);

    std::vector<double> wrong(10, 0.0);
    CHECK_THROWS_AS(encode_patch(wrong, w, cfg), std::invalid_argument);
}

TEST_CASE("encoder gradcheck") {
    auto cfg = tiny_config();
    Rng rng(11);
    auto w = init_weights<double>(cfg, rng);
    auto x = testutil::random_leaf(3, cfg.patch_dim(), rng, 0.0, 1.0, true);
    auto res = gradcheck(
        "encoder", [&] { return mean_all(square(encode_patches(x, w))); },
        {x, w.enc_w1, w.enc_b1, w.enc_w2, w.enc_b2}, 1e-5);
    INFO(res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("attention weights: single token attends to itself") {
    Rng rng(13);
    auto q = testutil::random_leaf(1, 6, rng);
    auto k = testutil::random_leaf(1, 6, rng);
    auto p = attention_probs(q, k);
    REQUIRE(p.rows() == 1);
    REQUIRE(p.cols() == 1);
    CHECK(p.at(0, 0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("attention rows sum to one") {
    Rng rng(17);
    for (int iter = 0; iter < 10; ++iter) {
        auto q = testutil::random_leaf(5, 6, rng);
        auto k = testutil::random_leaf(5, 6, rng);
        auto p = attention_probs(q, k);
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 5; ++j) s += p.at(i, j);
            CHECK(s == Catch::Approx(1.0).margin(1e-12));
        }
    }
}

TEST_CASE("forward produces 32x3 for 8 frames x 4 crops") {
    auto cfg = tiny_config();
    Rng rng(19);
    auto w = init_weights<double>(cfg, rng);
    auto s = testutil::random_sample(8, 4, cfg.patch_size, rng);
    Rng fwd(1);
    auto out = forward_sequence(s, w, cfg, Mode::eval, fwd);
    CHECK(out.rows() == 32);
    CHECK(out.cols() == 3);
}

TEST_CASE("eval forward is bit-identical across calls") {
    auto cfg = tiny_config();
    cfg.dropout_rate = 0.3;  // must be inert in eval mode
    Rng rng(23);
    auto w = init_weights<double>(cfg, rng);
    auto s = testutil::random_sample(3, 2, cfg.patch_size, rng);
    Rng r1(5), r2(99);  // different states: eval mode must not consume draws
    auto a = forward_sequence(s, w, cfg, Mode::eval, r1);
    auto b = forward_sequence(s, w, cfg, Mode::eval, r2);
    CHECK(a.values() == b.values());
}

TEST_CASE("train-mode dropout changes outputs, eval does not") {
    auto cfg = tiny_config();
    cfg.dropout_rate = 0.4;
    Rng rng(29);
    auto w = init_weights<double>(cfg, rng);
    auto s = testutil::random_sample(2, 2, cfg.patch_size, rng);
    Rng r1(5), r2(5), r3(6);
    auto a = forward_sequence(s, w, cfg, Mode::train, r1);
    auto b = forward_sequence(s, w, cfg, Mode::train, r2);
    auto c = forward_sequence(s, w, cfg, Mode::train, r3);
    CHECK(a.values() == b.values());      // same rng stream
    CHECK(a.values() != c.values());      // different rng stream
}

TEST_CASE("permuting patches permutes outputs") {
    auto cfg = tiny_config();
    Rng rng(31);
    auto w = init_weights<double>(cfg, rng);
    auto s = testutil::random_sample(4, 2, cfg.patch_size, rng);
    Rng fwd(1);
    auto base = forward_sequence(s, w, cfg, Mode::eval, fwd);

    std::vector<std::size_t> perm(s.patches.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform(0.0, double(i)))]);

    SequenceSample shuffled = s;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.patches[i] = s.patches[perm[i]];
    auto permuted = forward_sequence(shuffled, w, cfg, Mode::eval, fwd);

    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(permuted.at(i, j) == Catch::Approx(base.at(perm[i], j)).margin(1e-9));
}

TEST_CASE("masking a patch's keys changes other outputs") {
    auto cfg = tiny_config();
    Rng rng(37);
    auto w = init_weights<double>(cfg, rng);
    auto s = testutil::random_sample(3, 2, cfg.patch_size, rng);
    Rng fwd(1);
    auto base = forward_sequence(s, w, cfg, Mode::eval, fwd);
    std::vector<char> mask(s.patches.size(), 0);
    mask[2] = 1;
    auto masked = forward_sequence(s, w, cfg, Mode::eval, fwd, &mask);
    double max_other = 0;
    for (std::size_t i = 0; i < s.patches.size(); ++i) {
        if (i == 2) continue;
        for (std::size_t j = 0; j < 3; ++j)
            max_other = std::max(max_other, std::abs(masked.at(i, j) - base.at(i, j)));
    }
    CHECK(max_other > 1e-8);

    // Masked attention rows still sum to one over the surviving keys.
    auto q = testutil::random_leaf(4, 6, rng);
    auto k = testutil::random_leaf(4, 6, rng);
    std::vector<char> km{0, 1, 0, 0};
    auto p = attention_probs(q, k, &km);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(p.at(i, 1) < 1e-12);
        double srow = 0;
        for (std::size_t j = 0; j < 4; ++j) srow += p.at(i, j);
        CHECK(srow == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("activations stay finite over many random inputs") {
    auto cfg = tiny_config();
    Rng rng(41);
    auto w = init_weights<double>(cfg, rng);
    bool all_finite = true;
    for (int i = 0; i < 1000; ++i) {
        auto s = testutil::random_sample(2, 2, cfg.patch_size, rng);
        Rng fwd(static_cast<std::uint64_t>(i));
        auto out = forward_sequence(s, w, cfg, Mode::eval, fwd);
        for (double v : out.values()) all_finite = all_finite && std::isfinite(v);
    }
    CHECK(all_finite);
}

TEST_CASE("end-to-end loss gradcheck on the tiny model") {
    auto cfg = tiny_config();
    Rng rng(43);
    auto w = init_weights<double>(cfg, rng);
    auto s = testutil::random_sample(2, 2, cfg.patch_size, rng);
    auto targets = patch_targets<double>(s);

    std::vector<Tensor<double>> leaves;
    for (auto& [name, t] : w.registry()) leaves.push_back(t);

    Rng fwd(1);
    auto res = gradcheck(
        "model-e2e",
        [&] {
            auto out = forward_sequence(s, w, cfg, Mode::eval, fwd);
            return mean_all(loss_light_rows(out, targets));
        },
        leaves, 1e-4);
    INFO("rel err " << res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("weights cast between precisions") {
    auto cfg = tiny_config();
    Rng rng(47);
    auto wd = init_weights<double>(cfg, rng);
    auto wf = cast_weights<float>(wd);
    auto back = cast_weights<double>(wf);
    auto a = wd.registry(), b = back.registry();
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].second.numel() == b[i].second.numel());
        for (std::size_t j = 0; j < a[i].second.numel(); ++j)
            CHECK(std::abs(a[i].second.values()[j] - b[i].second.values()[j]) < 1e-6);
    }
}
