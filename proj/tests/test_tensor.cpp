#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sunattn/geometry.hpp"
#include "sunattn/gradcheck.hpp"
#include "sunattn/tensor.hpp"
#include "testutil.hpp"

using namespace sunattn;
using testutil::random_leaf;
using testutil::random_leaf_nonzero;

TEST_CASE("matmul identity and hand-checked product") {
    auto m = Tensor<double>::leaf(2, 2, {1, 2, 3, 4});
    auto out = matmul(identity_matrix<double>(2), m);
    CHECK(out.values() == m.values());

    auto b = Tensor<double>::leaf(2, 1, {0, 1});
    auto p = matmul(m, b);
    CHECK(p.rows() == 2);
    CHECK(p.cols() == 1);
    CHECK(p.values()[0] == 2.0);
    CHECK(p.values()[1] == 4.0);
}

TEST_CASE("matmul rejects mismatched inner extents with shapes in the message") {
    auto a = Tensor<double>::leaf(2, 3, std::vector<double>(6, 1.0));
    auto b = Tensor<double>::leaf(2, 2, std::vector<double>(4, 1.0));
    CHECK_THROWS_MATCHES(matmul(a, b), std::invalid_argument,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("2x3") &&
                             Catch::Matchers::ContainsSubstring("2x2")));
}

TEST_CASE("matmul gradients match central finite differences") {
    Rng rng(11);
    auto a = random_leaf(3, 4, rng);
    auto b = random_leaf(4, 2, rng);
    auto res = gradcheck("matmul", [&] { return sum_all(matmul(a, b)); }, {a, b}, 1e-7);
    INFO(res.name << " max_rel_err=" << res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("softmax closed forms") {
    auto eq = softmax_rows(Tensor<double>::leaf(1, 4, {0.7, 0.7, 0.7, 0.7}));
    for (double v : eq.values()) CHECK(v == Catch::Approx(0.25).margin(1e-15));

    auto two = softmax_rows(Tensor<double>::leaf(1, 2, {0.0, std::log(3.0)}));
    CHECK(two.values()[0] == Catch::Approx(0.25).margin(1e-12));
    CHECK(two.values()[1] == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("softmax rows sum to 1 on random input") {
    Rng rng(5);
    auto x = random_leaf(6, 9, rng, -30.0, 30.0, false);
    auto s = softmax_rows(x);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < s.cols(); ++j) {
            double v = s.at(i, j);
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("softmax rejects non-finite input") {
    auto x = Tensor<double>::leaf(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(softmax_rows(x), NumericError);
}

TEST_CASE("softmax gradcheck") {
    Rng rng(17);
    auto x = random_leaf(4, 4, rng);
    auto w = random_leaf(4, 4, rng, -1, 1, false);  // random projection to scalar
    auto res = gradcheck("softmax_rows",
                         [&] { return sum_all(mul(softmax_rows(x), w)); }, {x}, 1e-7);
    INFO(res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("layer_norm closed forms") {
    auto gain = Tensor<double>::leaf(1, 4, {1, 1, 1, 1});
    auto bias = Tensor<double>::leaf(1, 4, {0, 0, 0, 0});
    auto constant = layer_norm(Tensor<double>::leaf(1, 4, {3, 3, 3, 3}), gain, bias);
    for (double v : constant.values()) CHECK(v == Catch::Approx(0.0).margin(1e-12));

    auto g2 = Tensor<double>::leaf(1, 2, {1, 1});
    auto b2 = Tensor<double>::leaf(1, 2, {0, 0});
    auto pm = layer_norm(Tensor<double>::leaf(1, 2, {1, -1}), g2, b2);
    CHECK(pm.values()[0] == Catch::Approx(1.0).margin(1e-4));   // eps correction only
    CHECK(pm.values()[1] == Catch::Approx(-1.0).margin(1e-4));
}

TEST_CASE("layer_norm gradcheck") {
    Rng rng(23);
    auto x = random_leaf(3, 8, rng);
    auto gain = random_leaf(1, 8, rng, 0.5, 1.5);
    auto bias = random_leaf(1, 8, rng, -0.5, 0.5);
    auto w = random_leaf(3, 8, rng, -1, 1, false);
    auto res = gradcheck("layer_norm",
                         [&] { return sum_all(mul(layer_norm(x, gain, bias), w)); },
                         {x, gain, bias}, 1e-6);
    INFO(res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("layer_norm rejects single-column input") {
    auto g = Tensor<double>::leaf(1, 1, {1.0});
    CHECK_THROWS_AS(layer_norm(Tensor<double>::leaf(2, 1, {1.0, 2.0}), g, g),
                    std::invalid_argument);
}

TEST_CASE("dropout eval and rate-0 are identities consuming no randomness") {
    Rng rng(7);
    auto x = Tensor<double>::leaf(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(dropout(x, 0.2, rng, Mode::eval).values() == x.values());
    CHECK(dropout(x, 0.0, rng, Mode::train).values() == x.values());
    Rng fresh(7);
    CHECK(rng.next_u64() == fresh.next_u64());  // generator untouched
}

TEST_CASE("dropout rejects rate outside [0,1)") {
    Rng rng(1);
    auto x = Tensor<double>::leaf(1, 1, {1.0});
    CHECK_THROWS_AS(dropout(x, 1.0, rng, Mode::train), std::invalid_argument);
    CHECK_THROWS_AS(dropout(x, -0.1, rng, Mode::train), std::invalid_argument);
}

TEST_CASE("dropout is unbiased over many applications") {
    Rng rng(99);
    auto ones = Tensor<double>::leaf(1, 8, std::vector<double>(8, 1.0));
    const int n = 100000;
    std::vector<double> acc(8, 0.0);
    for (int k = 0; k < n; ++k) {
        auto d = dropout(ones, 0.2, rng, Mode::train);
        for (int j = 0; j < 8; ++j) acc[j] += d.values()[j];
    }
    for (double s : acc) CHECK(s / n == Catch::Approx(1.0).epsilon(0.01));
}

TEST_CASE("dropout train mode gradcheck with a replayed mask") {
    Rng rng(31);
    auto x = random_leaf(3, 5, rng);
    auto w = random_leaf(3, 5, rng, -1, 1, false);
    auto res = gradcheck("dropout",
                         [&] {
                             Rng mask_rng(123);  // same mask each evaluation
                             return sum_all(mul(dropout(x, 0.3, mask_rng, Mode::train), w));
                         },
                         {x}, 1e-7);
    INFO(res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("elementwise and structural op gradchecks") {
    Rng rng(41);
    struct Case {
        const char* name;
        std::function<Tensor<double>()> fwd;
        std::vector<Tensor<double>> leaves;
        double tol;
    };
    auto a = random_leaf(3, 4, rng);
    auto b = random_leaf(3, 4, rng);
    auto c = random_leaf_nonzero(3, 4, rng, 0.3, 2.0);  // divisor away from 0
    auto r = random_leaf_nonzero(2, 5, rng);            // relu off the kink
    auto d = random_leaf(4, 3, rng);
    auto e = random_leaf(3, 2, rng);
    auto nz = random_leaf_nonzero(4, 3, rng, 0.5, 2.0);  // rows_norm away from 0
    auto bias = random_leaf(1, 4, rng);

    std::vector<Case> cases;
    cases.push_back({"add", [&] { return sum_all(add(a, b)); }, {a, b}, 1e-9});
    cases.push_back({"sub", [&] { return sum_all(mul(sub(a, b), a)); }, {a, b}, 1e-7});
    cases.push_back({"mul", [&] { return sum_all(mul(a, b)); }, {a, b}, 1e-7});
    cases.push_back({"div", [&] { return sum_all(div(a, c)); }, {a, c}, 1e-7});
    cases.push_back({"affine", [&] { return sum_all(affine(a, 2.5, -0.75)); }, {a}, 1e-9});
    cases.push_back({"relu", [&] { return sum_all(mul(relu(r), r)); }, {r}, 1e-7});
    cases.push_back({"add_bias", [&] { return sum_all(square(add_bias(a, bias))); },
                     {a, bias}, 1e-7});
    cases.push_back({"transpose", [&] { return sum_all(mul(transpose(d), a)); }, {a, d}, 1e-7});
    cases.push_back(
        {"concat_rows", [&] { return sum_all(square(concat_rows(a, b))); }, {a, b}, 1e-7});
    cases.push_back(
        {"concat_cols", [&] { return sum_all(square(concat_cols(a, e))); }, {a, e}, 1e-7});
    cases.push_back(
        {"slice_cols", [&] { return sum_all(square(slice_cols(a, 1, 3))); }, {a}, 1e-7});
    cases.push_back(
        {"slice_rows", [&] { return sum_all(square(slice_rows(a, 0, 2))); }, {a}, 1e-7});
    cases.push_back({"mean_all", [&] { return mean_all(mul(a, a)); }, {a}, 1e-7});
    cases.push_back({"rows_dot", [&] { return sum_all(square(rows_dot(a, b))); }, {a, b}, 1e-7});
    cases.push_back({"rows_norm", [&] { return sum_all(square(rows_norm(nz))); }, {nz}, 1e-7});
    cases.push_back({"mean_rows", [&] { return sum_all(square(mean_rows(a))); }, {a}, 1e-7});

    for (auto& cs : cases) {
        auto res = gradcheck(cs.name, cs.fwd, cs.leaves, cs.tol);
        INFO(res.name << " max_rel_err=" << res.max_rel_err);
        CHECK(res.pass);
    }
}

TEST_CASE("rotate_rows_transposed matches calibrate and gradchecks") {
    Rng rng(53);
    auto rots = std::make_shared<std::vector<std::array<double, 9>>>();
    for (int i = 0; i < 3; ++i) {
        auto R = matmul3(r_pitch(rng.uniform(-0.3, 0.3)), r_yaw(rng.uniform(0, 2 * kPi)));
        rots->push_back(R.m);
    }
    auto x = random_leaf(3, 3, rng);
    auto out = rotate_rows_transposed(x, rots);
    for (int i = 0; i < 3; ++i) {
        Mat3 R;
        R.m = (*rots)[i];
        Vec3 v{x.at(i, 0), x.at(i, 1), x.at(i, 2)};
        Vec3 w = apply(transpose3(R), v);
        CHECK(out.at(i, 0) == Catch::Approx(w.x).margin(1e-12));
        CHECK(out.at(i, 1) == Catch::Approx(w.y).margin(1e-12));
        CHECK(out.at(i, 2) == Catch::Approx(w.z).margin(1e-12));
    }
    auto res = gradcheck("rotate_rows_transposed",
                         [&] { return sum_all(square(rotate_rows_transposed(x, rots))); }, {x},
                         1e-7);
    CHECK(res.pass);
}

TEST_CASE("forward values are independent of gradient tracking") {
    Rng rng(61);
    std::vector<double> data(12);
    for (auto& v : data) v = rng.uniform(-2, 2);
    auto tracked = Tensor<double>::leaf(3, 4, data, true);
    auto frozen = Tensor<double>::leaf(3, 4, data, false);
    auto f = [](const Tensor<double>& t) {
        auto g = Tensor<double>::leaf(1, 4, {1, 1, 1, 1});
        auto b = Tensor<double>::leaf(1, 4, {0, 0, 0, 0});
        return softmax_rows(layer_norm(relu(t), g, b));
    };
    CHECK(f(tracked).values() == f(frozen).values());
}

TEST_CASE("repeated backward after zero_grad is bit-identical") {
    Rng rng(71);
    auto a = random_leaf(4, 4, rng);
    auto b = random_leaf(4, 4, rng);
    auto run = [&] {
        a.zero_grad();
        b.zero_grad();
        auto loss = mean_all(square(matmul(softmax_rows(a), b)));
        loss.backward();
        return std::make_pair(a.grad(), b.grad());
    };
    auto first = run();
    auto second = run();
    CHECK(first.first == second.first);
    CHECK(first.second == second.second);
}

TEST_CASE("gradients accumulate across backward calls") {
    Rng rng(83);
    auto a = random_leaf(2, 2, rng);
    a.zero_grad();
    auto loss1 = sum_all(square(a));
    loss1.backward();
    auto once = a.grad();
    auto loss2 = sum_all(square(a));
    loss2.backward();
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(a.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("backward requires a scalar") {
    auto a = Tensor<double>::leaf(2, 2, {1, 2, 3, 4}, true);
    CHECK_THROWS_AS(square(a).backward(), std::invalid_argument);
}

TEST_CASE("leaf shape validation") {
    CHECK_THROWS_AS(Tensor<double>::leaf(2, 2, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor<double>::leaf(0, 2, {}), std::invalid_argument);
}
