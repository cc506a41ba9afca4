#pragma once
// Small dense linear algebra: a row-major matrix, a cyclic Jacobi symmetric
// eigensolver, and L2-regularised logistic regression.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace compass {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) throw std::invalid_argument("matrix data length does not match dimensions");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> col(std::size_t c) const {
        std::vector<double> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    std::span<const double> data() const noexcept { return data_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) throw std::invalid_argument("matrix product dimension mismatch");
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += aik * b(k, j);
            }
        return out;
    }

    double frobenius() const noexcept {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

class NotSymmetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EigenConvergenceError : public std::runtime_error {
public:
    EigenConvergenceError(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

struct SymEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // column k pairs with values[k]
};

struct EigenOptions {
    std::size_t max_dim = 512;
    std::size_t max_sweeps = 100;
    double symmetry_tol = 1e-10;
};

/// Cyclic Jacobi rotations. Eigenvectors are sign-normalised so the first
/// nonzero component of each column is positive.
inline SymEigen sym_eigendecomp(const Matrix& input, const EigenOptions& opts = {}) {
    const std::size_t n = input.rows();
    if (n != input.cols()) throw NotSymmetricError("sym_eigendecomp: matrix is not square");
    if (n == 0) throw std::invalid_argument("sym_eigendecomp: empty matrix");
    if (n > opts.max_dim) {
        throw std::invalid_argument("sym_eigendecomp: dimension " + std::to_string(n) + " exceeds cap " +
                                    std::to_string(opts.max_dim));
    }
    const double scale = std::max(1.0, input.frobenius());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(input(i, j) - input(j, i)) > opts.symmetry_tol * scale) {
                throw NotSymmetricError("sym_eigendecomp: matrix is not symmetric at (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
            }

    Matrix a = input;
    Matrix v = Matrix::identity(n);
    auto off_diagonal = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    const double target = 1e-14 * std::max(input.frobenius(), std::numeric_limits<double>::min());
    bool converged = n == 1;
    for (std::size_t sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
        if (off_diagonal() <= target) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged && off_diagonal() > target) {
        const double residual = off_diagonal();
        throw EigenConvergenceError("sym_eigendecomp: no convergence, off-diagonal norm " + std::to_string(residual),
                                    residual);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymEigen out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.values[k] = a(src, src);
        double sign = 1.0;
        for (std::size_t r = 0; r < n; ++r) {
            if (std::abs(v(r, src)) > 1e-14) {
                sign = v(r, src) > 0 ? 1.0 : -1.0;
                break;
            }
        }
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

class DegenerateClassificationError : public std::invalid_argument {
public:
    DegenerateClassificationError() : std::invalid_argument("degenerate classification") {}
    using std::invalid_argument::invalid_argument;
};

struct LogisticConfig {
    double l2 = 1e-4;        // penalty on weights, not the bias
    double tolerance = 1e-6; // on the full gradient norm
    std::size_t max_iterations = 5000;
};

struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
    double loss = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;

    double logit(std::span<const double> x) const {
        double z = bias;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
        return z;
    }
    double probability(std::span<const double> x) const { return 1.0 / (1.0 + std::exp(-logit(x))); }
};

namespace detail {

// log(1 + exp(z)) without overflow
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Solves the SPD system h x = b in place via Cholesky; returns false if h is
// not numerically positive definite.
inline bool cholesky_solve(std::vector<double> h, std::vector<double>& b, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = h[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= h[j * n + k] * h[j * n + k];
        if (!(d > 0)) return false;
        d = std::sqrt(d);
        h[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = h[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= h[i * n + k] * h[j * n + k];
            h[i * n + j] = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= h[i * n + k] * b[k];
        b[i] = s / h[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= h[k * n + i] * b[k];
        b[i] = s / h[i * n + i];
    }
    return true;
}

}  // namespace detail

/// Mean logistic loss plus (l2/2)·‖w‖² at parameters (w, b).
inline double logistic_loss(const Matrix& x, std::span<const int> labels, std::span<const double> w, double b,
                            double l2) {
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double z = b;
        for (std::size_t j = 0; j < x.cols(); ++j) z += w[j] * x(i, j);
        loss += labels[i] ? detail::softplus(-z) : detail::softplus(z);
    }
    loss /= static_cast<double>(x.rows());
    double reg = 0.0;
    for (double wj : w) reg += wj * wj;
    return loss + 0.5 * l2 * reg;
}

/// Gradient of logistic_loss; the last entry is the bias component.
inline std::vector<double> logistic_gradient(const Matrix& x, std::span<const int> labels, std::span<const double> w,
                                             double b, double l2) {
    const std::size_t d = x.cols();
    std::vector<double> g(d + 1, 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double z = b;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * x(i, j);
        const double r = detail::sigmoid(z) - labels[i];
        for (std::size_t j = 0; j < d; ++j) g[j] += r * x(i, j);
        g[d] += r;
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (auto& gj : g) gj *= inv_n;
    for (std::size_t j = 0; j < d; ++j) g[j] += l2 * w[j];
    return g;
}

/// Fits an L2-regularised logistic model by descent with Armijo backtracking.
/// The search direction is the Newton step when the Hessian is positive
/// definite and the negative gradient otherwise.
inline LogisticModel logistic_fit(const Matrix& x, std::span<const int> labels, const LogisticConfig& cfg = {}) {
    const std::size_t n = x.rows(), d = x.cols();
    if (labels.size() != n) throw std::invalid_argument("logistic_fit: label count does not match rows");
    if (n < 2) throw DegenerateClassificationError("degenerate classification: fewer than two samples");
    std::size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("logistic_fit: labels must be 0 or 1");
        positives += static_cast<std::size_t>(y);
    }
    if (positives == 0 || positives == n) throw DegenerateClassificationError();
    for (double v : x.data())
        if (!std::isfinite(v)) throw std::invalid_argument("logistic_fit: non-finite feature");

    std::vector<double> w(d, 0.0);
    const double prior = static_cast<double>(positives) / static_cast<double>(n);
    double b = std::log(prior / (1.0 - prior));
    double loss = logistic_loss(x, labels, w, b, cfg.l2);

    LogisticModel model;
    const std::size_t p = d + 1;
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        const auto g = logistic_gradient(x, labels, w, b, cfg.l2);
        double gnorm = 0.0;
        for (double gj : g) gnorm += gj * gj;
        gnorm = std::sqrt(gnorm);
        model.iterations = it;
        model.gradient_norm = gnorm;
        if (gnorm < cfg.tolerance) {
            model.converged = true;
            break;
        }

        // Hessian of the mean loss: Xᵀ S X / n + l2 on the weight block.
        std::vector<double> h(p * p, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * x(i, j);
            const double s = detail::sigmoid(z);
            const double wi = s * (1.0 - s);
            for (std::size_t a = 0; a < p; ++a) {
                const double xa = a < d ? x(i, a) : 1.0;
                for (std::size_t c = 0; c <= a; ++c) {
                    const double xc = c < d ? x(i, c) : 1.0;
                    h[a * p + c] += wi * xa * xc;
                }
            }
        }
        for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t c = 0; c <= a; ++c) {
                h[a * p + c] /= static_cast<double>(n);
                h[c * p + a] = h[a * p + c];
            }
        }
        for (std::size_t j = 0; j < d; ++j) h[j * p + j] += cfg.l2;

        std::vector<double> step = g;
        if (!detail::cholesky_solve(h, step, p)) step = g;
        double slope = 0.0;
        for (std::size_t a = 0; a < p; ++a) slope += g[a] * step[a];
        if (!(slope > 0)) {
            step = g;
            slope = gnorm * gnorm;
        }

        double t = 1.0;
        std::vector<double> w_new(d);
        double b_new = b, loss_new = loss;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t j = 0; j < d; ++j) w_new[j] = w[j] - t * step[j];
            b_new = b - t * step[d];
            loss_new = logistic_loss(x, labels, w_new, b_new, cfg.l2);
            if (loss_new <= loss - 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // No measurable decrease left at double precision.
            model.converged = gnorm < cfg.tolerance;
            break;
        }
        w = w_new;
        b = b_new;
        loss = loss_new;
    }
    const auto g = logistic_gradient(x, labels, w, b, cfg.l2);
    double gnorm = 0.0;
    for (double gj : g) gnorm += gj * gj;
    model.gradient_norm = std::sqrt(gnorm);
    model.converged = model.gradient_norm < cfg.tolerance;
    model.weights = std::move(w);
    model.bias = b;
    model.loss = loss;
    return model;
}

}  // namespace compass
