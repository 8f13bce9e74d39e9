#pragma once

// Dense 2-D tensors with reverse-mode automatic differentiation.
//
// Every tensor is a (rows x cols) row-major array; vectors are 1xN or Nx1,
// scalars 1x1. Operations build a computation record (one tape per forward
// pass, reachable from the result); backward() walks it in reverse creation
// order. Gradients ACCUMULATE into leaves so a caller can sum gradients over
// a batch; zero leaf gradients between steps with zero_grad(). Repeating
// backward() after zero_grad() yields bit-identical gradients: node order and
// every kernel are deterministic. Forward values never depend on whether
// gradients are being tracked.
//
// Matrix products delegate to Eigen maps over the same storage; everything
// else is explicit loops.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "sunattn/common.hpp"

namespace sunattn {

enum class Mode { train, eval };

template <typename T>
struct TensorNode {
    std::size_t rows = 0, cols = 0;
    std::vector<T> values;
    std::vector<T> grad;  // allocated on demand, same extent as values
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Propagates this node's grad into its parents' grads.
    std::function<void(TensorNode&)> backward;

    std::size_t numel() const { return rows * cols; }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    }
};

template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor leaf(std::size_t rows, std::size_t cols, std::vector<T> values,
                       bool requires_grad = false) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("tensor extents must be positive");
        if (values.size() != rows * cols)
            throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape_string(rows, cols));
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->rows = rows;
        t.node_->cols = cols;
        t.node_->values = std::move(values);
        t.node_->requires_grad = requires_grad;
        if (requires_grad) t.node_->ensure_grad();
        return t;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        return leaf(rows, cols, std::vector<T>(rows * cols, T(0)), requires_grad);
    }

    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    const std::vector<T>& values() const { return node_->values; }
    std::vector<T>& values() { return node_->values; }
    const std::vector<T>& grad() const { return node_->grad; }

    T at(std::size_t r, std::size_t c) const { return node_->values[r * node_->cols + c]; }

    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->values.size(), T(0));
    }

    std::shared_ptr<TensorNode<T>>& node() { return node_; }
    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    // Runs reverse-mode accumulation from this scalar. Fresh (non-leaf) node
    // gradients start zeroed; leaf gradients accumulate across calls.
    void backward() const {
        if (numel() != 1)
            throw std::invalid_argument("backward() requires a scalar, got " +
                                        shape_string(rows(), cols()));
        if (!node_->requires_grad) return;
        // Topological order: DFS over parent edges, post-order, then reverse,
        // so every consumer runs before its inputs. Deterministic: traversal
        // follows stored parent order only.
        std::vector<TensorNode<T>*> order;
        std::unordered_set<TensorNode<T>*> seen;
        std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
        stack.push_back({node_.get(), 0});
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                TensorNode<T>* p = n->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (auto* n : order) n->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward) (*it)->backward(**it);
    }

  private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
using EMat = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CEMat =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
CEMat<T> as_eigen(const std::vector<T>& v, std::size_t r, std::size_t c) {
    return CEMat<T>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
EMat<T> as_eigen(std::vector<T>& v, std::size_t r, std::size_t c) {
    return EMat<T>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
Tensor<T> make_result(std::size_t rows, std::size_t cols, std::vector<T> values,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backward) {
    bool track = false;
    for (const auto& in : inputs) track = track || in.requires_grad();
    Tensor<T> out = Tensor<T>::leaf(rows, cols, std::move(values), false);
    if (track) {
        out.node()->requires_grad = true;
        for (auto& in : inputs) out.node()->parents.push_back(in.node());
        out.node()->backward = std::move(backward);
    }
    return out;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_string(a.rows(), a.cols()) + " vs " +
                                    shape_string(b.rows(), b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------- matmul --

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner extents differ, " +
                                    shape_string(a.rows(), a.cols()) + " * " +
                                    shape_string(b.rows(), b.cols()));
    const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
    std::vector<T> out(m * p);
    detail::as_eigen(out, m, p) =
        detail::as_eigen(a.values(), m, k) * detail::as_eigen(b.values(), k, p);
    return detail::make_result<T>(
        m, p, std::move(out), {a, b}, [m, k, p](TensorNode<T>& n) {
            auto& A = *n.parents[0];
            auto& B = *n.parents[1];
            auto G = detail::as_eigen(n.grad, m, p);
            if (A.requires_grad) {
                A.ensure_grad();
                detail::as_eigen(A.grad, m, k) +=
                    G * detail::as_eigen(B.values, k, p).transpose();
            }
            if (B.requires_grad) {
                B.ensure_grad();
                detail::as_eigen(B.grad, k, p) +=
                    detail::as_eigen(A.values, m, k).transpose() * G;
            }
        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    const std::size_t m = a.rows(), c = a.cols();
    std::vector<T> out(m * c);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * m + i] = a.values()[i * c + j];
    return detail::make_result<T>(c, m, std::move(out), {a}, [m, c](TensorNode<T>& n) {
        auto& A = *n.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) A.grad[i * c + j] += n.grad[j * m + i];
    });
}

// ----------------------------------------------------------- elementwise --

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return detail::make_result<T>(a.rows(), a.cols(), std::move(out), {a, b},
                                  [](TensorNode<T>& n) {
                                      for (int s = 0; s < 2; ++s) {
                                          auto& P = *n.parents[s];
                                          if (!P.requires_grad) continue;
                                          P.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              P.grad[i] += n.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return detail::make_result<T>(a.rows(), a.cols(), std::move(out), {a, b},
                                  [](TensorNode<T>& n) {
                                      auto& A = *n.parents[0];
                                      auto& B = *n.parents[1];
                                      if (A.requires_grad) {
                                          A.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              A.grad[i] += n.grad[i];
                                      }
                                      if (B.requires_grad) {
                                          B.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              B.grad[i] -= n.grad[i];
                                      }
                                  });
}

// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return detail::make_result<T>(a.rows(), a.cols(), std::move(out), {a, b},
                                  [](TensorNode<T>& n) {
                                      auto& A = *n.parents[0];
                                      auto& B = *n.parents[1];
                                      if (A.requires_grad) {
                                          A.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              A.grad[i] += n.grad[i] * B.values[i];
                                      }
                                      if (B.requires_grad) {
                                          B.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              B.grad[i] += n.grad[i] * A.values[i];
                                      }
                                  });
}

// Elementwise quotient. Not differentiable where b == 0; callers guard.
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
    return detail::make_result<T>(a.rows(), a.cols(), std::move(out), {a, b},
                                  [](TensorNode<T>& n) {
                                      auto& A = *n.parents[0];
                                      auto& B = *n.parents[1];
                                      if (A.requires_grad) {
                                          A.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              A.grad[i] += n.grad[i] / B.values[i];
                                      }
                                      if (B.requires_grad) {
                                          B.ensure_grad();
                                          for (std::size_t i = 0; i < n.grad.size(); ++i)
                                              B.grad[i] -= n.grad[i] * A.values[i] /
                                                           (B.values[i] * B.values[i]);
                                      }
                                  });
}

// alpha * x + beta, with scalar constants.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T alpha, T beta) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * x.values()[i] + beta;
    return detail::make_result<T>(x.rows(), x.cols(), std::move(out), {x},
                                  [alpha](TensorNode<T>& n) {
                                      auto& X = *n.parents[0];
                                      if (!X.requires_grad) return;
                                      X.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          X.grad[i] += alpha * n.grad[i];
                                  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T alpha) {
    return affine(x, alpha, T(0));
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return affine(x, T(-1), T(0));
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return mul(x, x);
}

// Adds a 1xN bias row to every row of x (MxN).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols())
        throw std::invalid_argument("add_bias: bias must be 1x" + std::to_string(x.cols()) +
                                    ", got " + shape_string(bias.rows(), bias.cols()));
    const std::size_t m = x.rows(), c = x.cols();
    std::vector<T> out(m * c);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.values()[i * c + j] + bias.values()[j];
    return detail::make_result<T>(m, c, std::move(out), {x, bias}, [m, c](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        auto& B = *n.parents[1];
        if (X.requires_grad) {
            X.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) X.grad[i] += n.grad[i];
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) B.grad[j] += n.grad[i * c + j];
        }
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
    return detail::make_result<T>(x.rows(), x.cols(), std::move(out), {x},
                                  [](TensorNode<T>& n) {
                                      auto& X = *n.parents[0];
                                      if (!X.requires_grad) return;
                                      X.ensure_grad();
                                      // Subgradient 0 at the kink.
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          if (X.values[i] > T(0)) X.grad[i] += n.grad[i];
                                  });
}

// ------------------------------------------------------------- softmax ----

// Row-wise softmax with max-subtraction. Rejects non-finite input.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    const std::size_t m = x.rows(), c = x.cols();
    for (T v : x.values())
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError("softmax_rows: non-finite input");
    std::vector<T> out(m * c);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.values().data() + i * c;
        T mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(row[j] - mx);
            sum += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
    }
    return detail::make_result<T>(m, c, std::move(out), {x}, [m, c](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        if (!X.requires_grad) return;
        X.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const T* s = n.values.data() + i * c;
            const T* g = n.grad.data() + i * c;
            T dot = T(0);
            for (std::size_t j = 0; j < c; ++j) dot += s[j] * g[j];
            for (std::size_t j = 0; j < c; ++j) X.grad[i * c + j] += s[j] * (g[j] - dot);
        }
    });
}

// ----------------------------------------------------------- layer_norm ---

// Row-wise layer normalization followed by elementwise gain/bias (each 1xD).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
    const std::size_t m = x.rows(), d = x.cols();
    if (d < 2) throw std::invalid_argument("layer_norm: needs at least 2 columns");
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
        throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(d));
    std::vector<T> out(m * d);
    // Captured for the backward pass: per-row inverse std and normalized rows.
    auto xhat = std::make_shared<std::vector<T>>(m * d);
    auto rstd = std::make_shared<std::vector<T>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.values().data() + i * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<T>(d);
        T r = T(1) / std::sqrt(var + eps);
        (*rstd)[i] = r;
        for (std::size_t j = 0; j < d; ++j) {
            T h = (row[j] - mean) * r;
            (*xhat)[i * d + j] = h;
            out[i * d + j] = h * gain.values()[j] + bias.values()[j];
        }
    }
    return detail::make_result<T>(
        m, d, std::move(out), {x, gain, bias}, [m, d, xhat, rstd](TensorNode<T>& n) {
            auto& X = *n.parents[0];
            auto& G = *n.parents[1];
            auto& B = *n.parents[2];
            for (std::size_t i = 0; i < m; ++i) {
                const T* g = n.grad.data() + i * d;
                const T* h = xhat->data() + i * d;
                if (G.requires_grad) {
                    G.ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) G.grad[j] += g[j] * h[j];
                }
                if (B.requires_grad) {
                    B.ensure_grad();
                    for (std::size_t j = 0; j < d; ++j) B.grad[j] += g[j];
                }
                if (X.requires_grad) {
                    X.ensure_grad();
                    const std::vector<T>& gain = G.values;
                    T sum_gh = T(0), sum_ghh = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        sum_gh += g[j] * gain[j];
                        sum_ghh += g[j] * gain[j] * h[j];
                    }
                    const T inv_d = T(1) / static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j)
                        X.grad[i * d + j] += (*rstd)[i] * (g[j] * gain[j] - inv_d * sum_gh -
                                                           h[j] * inv_d * sum_ghh);
                }
            }
        });
}

// -------------------------------------------------------------- dropout ---

// Train mode zeroes entries with probability `rate` and rescales survivors by
// 1/(1-rate); masks come from the supplied generator. Eval mode and rate 0
// are identities and consume no randomness.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, Mode mode) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (mode == Mode::eval || rate == 0.0) {
        // Identity that still participates in the tape.
        return affine(x, T(1), T(0));
    }
    const T keep_scale = T(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<unsigned char>>(x.numel());
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool keep = !rng.bernoulli(rate);
        (*mask)[i] = keep;
        out[i] = keep ? x.values()[i] * keep_scale : T(0);
    }
    return detail::make_result<T>(x.rows(), x.cols(), std::move(out), {x},
                                  [mask, keep_scale](TensorNode<T>& n) {
                                      auto& X = *n.parents[0];
                                      if (!X.requires_grad) return;
                                      X.ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                                          if ((*mask)[i]) X.grad[i] += n.grad[i] * keep_scale;
                                  });
}

// ------------------------------------------------------- concat / slice ---

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("concat_rows: column counts differ, " +
                                    shape_string(a.rows(), a.cols()) + " vs " +
                                    shape_string(b.rows(), b.cols()));
    std::vector<T> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    const std::size_t an = a.numel();
    return detail::make_result<T>(a.rows() + b.rows(), a.cols(), std::move(out), {a, b},
                                  [an](TensorNode<T>& n) {
                                      auto& A = *n.parents[0];
                                      auto& B = *n.parents[1];
                                      if (A.requires_grad) {
                                          A.ensure_grad();
                                          for (std::size_t i = 0; i < an; ++i)
                                              A.grad[i] += n.grad[i];
                                      }
                                      if (B.requires_grad) {
                                          B.ensure_grad();
                                          for (std::size_t i = an; i < n.grad.size(); ++i)
                                              B.grad[i - an] += n.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("concat_cols: row counts differ, " +
                                    shape_string(a.rows(), a.cols()) + " vs " +
                                    shape_string(b.rows(), b.cols()));
    const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<T> out(m * (ca + cb));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.values()[i * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.values()[i * cb + j];
    }
    return detail::make_result<T>(m, ca + cb, std::move(out), {a, b},
                                  [m, ca, cb](TensorNode<T>& n) {
                                      auto& A = *n.parents[0];
                                      auto& B = *n.parents[1];
                                      if (A.requires_grad) {
                                          A.ensure_grad();
                                          for (std::size_t i = 0; i < m; ++i)
                                              for (std::size_t j = 0; j < ca; ++j)
                                                  A.grad[i * ca + j] += n.grad[i * (ca + cb) + j];
                                      }
                                      if (B.requires_grad) {
                                          B.ensure_grad();
                                          for (std::size_t i = 0; i < m; ++i)
                                              for (std::size_t j = 0; j < cb; ++j)
                                                  B.grad[i * cb + j] +=
                                                      n.grad[i * (ca + cb) + ca + j];
                                      }
                                  });
}

// Columns [c0, c1).
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    if (c0 >= c1 || c1 > x.cols())
        throw std::invalid_argument("slice_cols: invalid range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for " +
                                    shape_string(x.rows(), x.cols()));
    const std::size_t m = x.rows(), c = x.cols(), w = c1 - c0;
    std::vector<T> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.values()[i * c + c0 + j];
    return detail::make_result<T>(m, w, std::move(out), {x}, [m, c, c0, w](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        if (!X.requires_grad) return;
        X.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) X.grad[i * c + c0 + j] += n.grad[i * w + j];
    });
}

// Rows [r0, r1).
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t r0, std::size_t r1) {
    if (r0 >= r1 || r1 > x.rows())
        throw std::invalid_argument("slice_rows: invalid range [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") for " +
                                    shape_string(x.rows(), x.cols()));
    const std::size_t c = x.cols(), h = r1 - r0;
    std::vector<T> out(x.values().begin() + r0 * c, x.values().begin() + r1 * c);
    return detail::make_result<T>(h, c, std::move(out), {x}, [r0, c, h](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        if (!X.requires_grad) return;
        X.ensure_grad();
        for (std::size_t i = 0; i < h * c; ++i) X.grad[r0 * c + i] += n.grad[i];
    });
}

// ----------------------------------------------------------- reductions ---

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.values()) s += v;
    return detail::make_result<T>(1, 1, {s}, {x}, [](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        if (!X.requires_grad) return;
        X.ensure_grad();
        for (std::size_t i = 0; i < X.grad.size(); ++i) X.grad[i] += n.grad[0];
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// Row-wise dot products of two MxN tensors -> Mx1.
template <typename T>
Tensor<T> rows_dot(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "rows_dot");
    const std::size_t m = a.rows(), c = a.cols();
    std::vector<T> out(m, T(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += a.values()[i * c + j] * b.values()[i * c + j];
    return detail::make_result<T>(m, 1, std::move(out), {a, b}, [m, c](TensorNode<T>& n) {
        auto& A = *n.parents[0];
        auto& B = *n.parents[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) A.grad[i * c + j] += n.grad[i] * B.values[i * c + j];
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) B.grad[i * c + j] += n.grad[i] * A.values[i * c + j];
        }
    });
}

// Row-wise Euclidean norms of an MxN tensor -> Mx1. Not differentiable at a
// zero row; callers guard (the loss layer rejects degenerate directions).
template <typename T>
Tensor<T> rows_norm(const Tensor<T>& a) {
    const std::size_t m = a.rows(), c = a.cols();
    std::vector<T> out(m, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        T s = T(0);
        for (std::size_t j = 0; j < c; ++j) s += a.values()[i * c + j] * a.values()[i * c + j];
        out[i] = std::sqrt(s);
    }
    return detail::make_result<T>(m, 1, std::move(out), {a}, [m, c](TensorNode<T>& n) {
        auto& A = *n.parents[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const T inv = n.grad[i] / n.values[i];
            for (std::size_t j = 0; j < c; ++j) A.grad[i * c + j] += inv * A.values[i * c + j];
        }
    });
}

// Applies a fixed 3x3 rotation transpose per row: row i -> row_i * R_i
// (equivalently, column-vector w_i = R_i^T v_i). Rotations are constants.
template <typename T>
Tensor<T> rotate_rows_transposed(const Tensor<T>& x,
                                 std::shared_ptr<const std::vector<std::array<double, 9>>> rots) {
    if (x.cols() != 3) throw std::invalid_argument("rotate_rows_transposed: needs Mx3 input");
    if (rots->size() != x.rows())
        throw std::invalid_argument("rotate_rows_transposed: rotation count mismatch");
    const std::size_t m = x.rows();
    std::vector<T> out(m * 3);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& R = (*rots)[i];
        const T* v = x.values().data() + i * 3;
        // w = R^T v  (w_j = sum_k R[k][j] v_k)
        for (int j = 0; j < 3; ++j)
            out[i * 3 + j] = static_cast<T>(R[0 * 3 + j]) * v[0] +
                             static_cast<T>(R[1 * 3 + j]) * v[1] +
                             static_cast<T>(R[2 * 3 + j]) * v[2];
    }
    return detail::make_result<T>(m, 3, std::move(out), {x}, [m, rots](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        if (!X.requires_grad) return;
        X.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const auto& R = (*rots)[i];
            const T* g = n.grad.data() + i * 3;
            for (int k = 0; k < 3; ++k)
                X.grad[i * 3 + k] += static_cast<T>(R[k * 3 + 0]) * g[0] +
                                     static_cast<T>(R[k * 3 + 1]) * g[1] +
                                     static_cast<T>(R[k * 3 + 2]) * g[2];
        }
    });
}

// Column means of an MxN tensor -> 1xN.
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
    const std::size_t m = x.rows(), c = x.cols();
    std::vector<T> out(c, T(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += x.values()[i * c + j];
    for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<T>(m);
    return detail::make_result<T>(1, c, std::move(out), {x}, [m, c](TensorNode<T>& n) {
        auto& X = *n.parents[0];
        if (!X.requires_grad) return;
        X.ensure_grad();
        const T inv = T(1) / static_cast<T>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j) X.grad[i * c + j] += n.grad[j] * inv;
    });
}

template <typename T>
Tensor<T> identity_matrix(std::size_t n) {
    std::vector<T> v(n * n, T(0));
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = T(1);
    return Tensor<T>::leaf(n, n, std::move(v));
}

}  // namespace sunattn
