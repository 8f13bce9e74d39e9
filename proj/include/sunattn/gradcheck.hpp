#pragma once

// Central finite-difference gradient verification at 64-bit.
//
// For a scalar-valued forward closure over a set of leaf tensors, compares
// reverse-mode gradients against (f(x+h) - f(x-h)) / 2h elementwise. The
// forward closure must be deterministic (re-seed any internal generators per
// call). Relative error uses max(|a|, |b|, 1) in the denominator so values
// near zero compare absolutely.

#include <functional>
#include <string>
#include <vector>

#include "sunattn/tensor.hpp"

namespace sunattn {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// `forward` must rebuild the graph from the current leaf values and return a
// scalar tensor. Leaves must have requires_grad = true.
inline GradCheckResult gradcheck(const std::string& name,
                                 const std::function<Tensor<double>()>& forward,
                                 std::vector<Tensor<double>> leaves, double tolerance,
                                 double h = 1e-6) {
    // Reference gradients from one reverse pass.
    for (auto& leaf : leaves) leaf.zero_grad();
    Tensor<double> y = forward();
    y.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckResult res{name, 0.0, tolerance, false};
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = leaves[li].values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double fp = forward().values()[0];
            vals[i] = saved - h;
            const double fm = forward().values()[0];
            vals[i] = saved;
            const double fd = (fp - fm) / (2 * h);
            const double ad = analytic[li][i];
            const double denom = std::max({std::abs(fd), std::abs(ad), 1.0});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - ad) / denom);
        }
    }
    res.pass = res.max_rel_err < tolerance;
    return res;
}

}  // namespace sunattn
