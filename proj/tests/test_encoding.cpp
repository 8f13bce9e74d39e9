#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sunattn/encoding.hpp"
#include "sunattn/gradcheck.hpp"
#include "testutil.hpp"

using namespace sunattn;

namespace {

double linf(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("encoding config validation") {
    EncodingConfig bad_odd{21, kPi / 2, 10000.0, 63};
    CHECK_THROWS_AS(bad_odd.validate(), std::invalid_argument);
    EncodingConfig bad_model{22, kPi / 2, 10000.0, 64};
    CHECK_THROWS_AS(bad_model.validate(), std::invalid_argument);
    EncodingConfig bad_alpha{22, 0.0, 10000.0, 66};
    CHECK_THROWS_AS(bad_alpha.validate(), std::invalid_argument);
    EncodingConfig ok{22, kPi / 2, 10000.0, 66};
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("cyclic encoding closed form at zero") {
    EncodingConfig cfg{22, kPi / 2, 10000.0, 66};
    auto pe = cyclic_pe(0.0, cfg);
    CHECK(pe[0] == Catch::Approx(0.0).margin(1e-15));  // sin(sin 0 * pi/2)
    CHECK(pe[1] == Catch::Approx(1.0).margin(1e-15));  // sin(cos 0 * pi/2)
}

TEST_CASE("cyclic encoding is 2pi-periodic") {
    EncodingConfig cfg{22, kPi / 2, 10000.0, 66};
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        double phi = rng.uniform(-20.0, 20.0);
        CHECK(linf(cyclic_pe(phi, cfg), cyclic_pe(phi + 2 * kPi, cfg)) < 1e-9);
    }
}

TEST_CASE("cyclic encoding entries are bounded") {
    EncodingConfig cfg{22, kPi / 2, 10000.0, 66};
    Rng rng(7);
    for (int i = 0; i < 200; ++i)
        for (double v : cyclic_pe(rng.uniform(-10, 10), cfg)) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("cyclic encoding is injective on a 0.1 degree grid") {
    EncodingConfig cfg{32, kPi / 2, 10000.0, 96};
    const int n = 3600;
    std::vector<std::vector<double>> enc(n);
    for (int i = 0; i < n; ++i) enc[i] = cyclic_pe(deg2rad(0.1 * i), cfg);
    double min_d = 1e300;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) min_d = std::min(min_d, l2(enc[i], enc[j]));
    INFO("min pairwise L2 = " << min_d);
    CHECK(min_d > 1e-6);
}

TEST_CASE("cyclic encoding has no half-period alias") {
    EncodingConfig cfg{22, kPi / 2, 10000.0, 66};
    // Grid avoiding the symmetry points 0, pi/2, pi, 3pi/2.
    for (int i = 0; i < 180; ++i) {
        double phi = deg2rad(1.0 + 2.0 * i);
        if (std::abs(std::remainder(phi, kPi / 2)) < 1e-3) continue;
        CHECK(l2(cyclic_pe(phi, cfg), cyclic_pe(phi + kPi, cfg)) > 1e-3);
    }
}

TEST_CASE("patch encoding stacks the three angles in order") {
    EncodingConfig cfg{22, kPi / 2, 10000.0, 66};
    auto zero = cyclic_pe(0.0, cfg);
    auto stacked = patch_positional_encoding(0.0, 0.0, 0.0, cfg);
    REQUIRE(stacked.size() == 66);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 22; ++j) CHECK(stacked[k * 22 + j] == zero[j]);

    auto a = patch_positional_encoding(0.3, -0.1, 1.0, cfg);
    auto b = patch_positional_encoding(0.3, -0.1, 2.5, cfg);
    for (int j = 0; j < 44; ++j) CHECK(a[j] == b[j]);  // phi_h, phi_v parts unchanged
    double tail = 0;
    for (int j = 44; j < 66; ++j) tail += std::abs(a[j] - b[j]);
    CHECK(tail > 1e-3);
}

TEST_CASE("encodings are smooth across the wraparound") {
    EncodingConfig cfg{22, kPi / 2, 10000.0, 66};
    auto near_wrap_a = patch_positional_encoding(0, 0, deg2rad(359.9), cfg);
    auto near_wrap_b = patch_positional_encoding(0, 0, deg2rad(0.1), cfg);
    auto apart_a = patch_positional_encoding(0, 0, deg2rad(0.1), cfg);
    auto apart_b = patch_positional_encoding(0, 0, deg2rad(10.0), cfg);
    CHECK(linf(near_wrap_a, near_wrap_b) < linf(apart_a, apart_b));
}

TEST_CASE("superpose adds encodings rowwise") {
    EncodingConfig cfg{4, kPi / 2, 10000.0, 12};
    std::vector<PatchPosition> pos{{0.1, 0.2, 0.3}, {1.0, -0.5, 2.0}};
    auto x = Tensor<double>::zeros(2, 12);
    auto out = superpose(x, pos, cfg);
    for (int i = 0; i < 2; ++i) {
        auto expect = patch_positional_encoding(pos[i].phi_h, pos[i].phi_v, pos[i].yaw, cfg);
        for (int j = 0; j < 12; ++j) CHECK(out.at(i, j) == Catch::Approx(expect[j]).margin(1e-15));
    }

    std::vector<PatchPosition> same{{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}};
    Rng rng(3);
    auto y = testutil::random_leaf(2, 12, rng, -1, 1, false);
    auto out2 = superpose(y, same, cfg);
    for (int j = 0; j < 12; ++j)
        CHECK(out2.at(0, j) - y.at(0, j) == Catch::Approx(out2.at(1, j) - y.at(1, j)).margin(1e-15));

    CHECK_THROWS_AS(superpose(Tensor<double>::zeros(3, 12), same, cfg), std::invalid_argument);
}

TEST_CASE("superpose gradcheck") {
    EncodingConfig cfg{4, kPi / 2, 10000.0, 12};
    std::vector<PatchPosition> pos{{0.1, 0.2, 0.3}, {1.0, -0.5, 2.0}};
    Rng rng(9);
    auto x = testutil::random_leaf(2, 12, rng);
    auto res = gradcheck("superpose", [&] { return sum_all(square(superpose(x, pos, cfg))); },
                         {x}, 1e-7);
    INFO(res.max_rel_err);
    CHECK(res.pass);
}
