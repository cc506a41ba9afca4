#pragma once
// Dense row-major float64 tensors and the convolution kernels used by the
// toy segmentation network.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace compass {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_product(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (shape_product(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // rank-3 [C,H,W] access
    double& operator()(std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double operator()(std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    double sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    double norm() const noexcept {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& other) {
        require_same_shape(other, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) noexcept {
        for (double& v : data_) v *= s;
        return *this;
    }

    // this += a * x
    Tensor& axpy(double a, const Tensor& x) {
        require_same_shape(x, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

    void require_same_shape(const Tensor& other, const char* what) const {
        if (shape_ != other.shape_) {
            throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(shape_) + " vs " +
                             shape_str(other.shape_));
        }
    }

private:
    void validate_shape() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw ShapeError("tensor shape entries must be >= 1, got " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

namespace detail {

struct ConvGeometry {
    std::size_t c_in, c_out, height, width, k;
};

inline ConvGeometry check_conv(const Tensor& input, const Tensor& kernels, std::size_t bias_len) {
    const auto& in = input.shape();
    const auto& ks = kernels.shape();
    if (in.size() != 3 || ks.size() != 4 || ks[1] != in[0] || ks[2] != ks[3] || ks[2] % 2 == 0 ||
        bias_len != ks[0]) {
        throw ShapeError("conv2d: incompatible input " + shape_str(in) + " and kernels " + shape_str(ks) +
                         " (bias length " + std::to_string(bias_len) + ")");
    }
    return {in[0], ks[0], in[1], in[2], ks[2]};
}

// Visits every (kernel tap, valid output row span) pair of a same-padded
// cross-correlation. fn(ky, kx, y, x_begin, x_end, dy, dx) with input row
// y + dy and input column x + dx.
template <typename Fn>
void for_each_tap(std::size_t height, std::size_t width, std::size_t k, Fn&& fn) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);
    for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, h - dy);
        for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
            const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
            if (x0 >= x1) continue;
            for (std::ptrdiff_t y = y0; y < y1; ++y) fn(ky, kx, y, x0, x1, dy, dx);
        }
    }
}

}  // namespace detail

/// Same-padded (zeros) 2-D cross-correlation.
/// input [C_in,H,W], kernels [C_out,C_in,k,k] with odd k, bias of length C_out.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, std::span<const double> bias) {
    const auto g = detail::check_conv(input, kernels, bias.size());
    const std::size_t hw = g.height * g.width;
    Tensor out({g.c_out, g.height, g.width});
    const double* src = input.data().data();
    const double* ker = kernels.data().data();
    double* dst = out.data().data();
    for (std::size_t co = 0; co < g.c_out; ++co) {
        double* o = dst + co * hw;
        std::fill(o, o + hw, bias[co]);
        for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const double* in = src + ci * hw;
            const double* kk = ker + (co * g.c_in + ci) * g.k * g.k;
            detail::for_each_tap(g.height, g.width, g.k,
                                 [&](std::size_t ky, std::size_t kx, std::ptrdiff_t y, std::ptrdiff_t x0,
                                     std::ptrdiff_t x1, std::ptrdiff_t dy, std::ptrdiff_t dx) {
                                     const double wgt = kk[ky * g.k + kx];
                                     double* orow = o + y * static_cast<std::ptrdiff_t>(g.width);
                                     const double* irow = in + (y + dy) * static_cast<std::ptrdiff_t>(g.width) + dx;
                                     for (std::ptrdiff_t x = x0; x < x1; ++x) orow[x] += wgt * irow[x];
                                 });
        }
    }
    return out;
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    return conv2d(input, kernels, bias.data());
}

/// Gradient of a conv2d output w.r.t. its input (transposed correlation).
inline Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& kernels) {
    const auto& ks = kernels.shape();
    if (grad_out.rank() != 3 || ks.size() != 4 || grad_out.dim(0) != ks[0]) {
        throw ShapeError("conv2d_input_grad: incompatible grad " + shape_str(grad_out.shape()) + " and kernels " +
                         shape_str(ks));
    }
    const std::size_t c_out = ks[0], c_in = ks[1], k = ks[2];
    const std::size_t height = grad_out.dim(1), width = grad_out.dim(2), hw = height * width;
    Tensor grad_in({c_in, height, width});
    const double* go = grad_out.data().data();
    const double* ker = kernels.data().data();
    double* gi = grad_in.data().data();
    for (std::size_t co = 0; co < c_out; ++co) {
        const double* g = go + co * hw;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            double* dst = gi + ci * hw;
            const double* kk = ker + (co * c_in + ci) * k * k;
            detail::for_each_tap(height, width, k,
                                 [&](std::size_t ky, std::size_t kx, std::ptrdiff_t y, std::ptrdiff_t x0,
                                     std::ptrdiff_t x1, std::ptrdiff_t dy, std::ptrdiff_t dx) {
                                     const double wgt = kk[ky * k + kx];
                                     const double* grow = g + y * static_cast<std::ptrdiff_t>(width);
                                     double* drow = dst + (y + dy) * static_cast<std::ptrdiff_t>(width) + dx;
                                     for (std::ptrdiff_t x = x0; x < x1; ++x) drow[x] += wgt * grow[x];
                                 });
        }
    }
    return grad_in;
}

/// Accumulates the gradient of a conv2d output w.r.t. kernels and bias.
inline void conv2d_param_grad(const Tensor& input, const Tensor& grad_out, Tensor& grad_kernels,
                              std::span<double> grad_bias) {
    const auto g = detail::check_conv(input, grad_kernels, grad_bias.size());
    const std::size_t hw = g.height * g.width;
    const double* src = input.data().data();
    const double* go = grad_out.data().data();
    double* gk = grad_kernels.data().data();
    for (std::size_t co = 0; co < g.c_out; ++co) {
        const double* gr = go + co * hw;
        double bsum = 0.0;
        for (std::size_t i = 0; i < hw; ++i) bsum += gr[i];
        grad_bias[co] += bsum;
        for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const double* in = src + ci * hw;
            double* kk = gk + (co * g.c_in + ci) * g.k * g.k;
            detail::for_each_tap(g.height, g.width, g.k,
                                 [&](std::size_t ky, std::size_t kx, std::ptrdiff_t y, std::ptrdiff_t x0,
                                     std::ptrdiff_t x1, std::ptrdiff_t dy, std::ptrdiff_t dx) {
                                     const double* grow = gr + y * static_cast<std::ptrdiff_t>(g.width);
                                     const double* irow = in + (y + dy) * static_cast<std::ptrdiff_t>(g.width) + dx;
                                     double acc = 0.0;
                                     for (std::ptrdiff_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
                                     kk[ky * g.k + kx] += acc;
                                 });
        }
    }
}

}  // namespace compass
