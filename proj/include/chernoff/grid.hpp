#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chernoff/fft.hpp"

namespace chernoff {

using Complex = std::complex<double>;

/// A point in the box; only the first `dim` coordinates are meaningful.
using Point = std::array<double, 2>;

/// Uniform periodic box discretization of R^d (d = 1 or 2) with the same
/// power-of-two point count m along every axis. Node j on an axis sits at
/// lower + j*h with h = (upper-lower)/m; the node at `upper` is identified
/// with the one at `lower`.
struct Grid {
    int dim = 1;
    std::array<double, 2> lower{0.0, 0.0};
    std::array<double, 2> upper{1.0, 1.0};
    std::size_t m = 8;

    Grid() = default;

    Grid(int dim_, std::array<double, 2> lower_, std::array<double, 2> upper_, std::size_t m_)
        : dim(dim_), lower(lower_), upper(upper_), m(m_) {
        if (dim != 1 && dim != 2) throw std::invalid_argument("Grid: dim must be 1 or 2");
        if (m < 8 || !detail::is_power_of_two(m))
            throw std::invalid_argument("Grid: m must be a power of two with m >= 8, got " + std::to_string(m));
        for (int a = 0; a < dim; ++a) {
            if (!(upper[a] > lower[a]) || !std::isfinite(lower[a]) || !std::isfinite(upper[a]))
                throw std::invalid_argument("Grid: bounds must be finite with upper > lower on axis " + std::to_string(a));
        }
    }

    static Grid line(double lo, double hi, std::size_t m) { return Grid(1, {lo, 0.0}, {hi, 0.0}, m); }
    static Grid square(double lo, double hi, std::size_t m) { return Grid(2, {lo, lo}, {hi, hi}, m); }

    double length(int axis) const { return upper[axis] - lower[axis]; }
    double spacing(int axis) const { return length(axis) / static_cast<double>(m); }
    std::size_t size() const { return dim == 1 ? m : m * m; }

    /// Row-major (axis0 major) linear index of a node.
    std::size_t index(std::size_t i0, std::size_t i1 = 0) const { return dim == 1 ? i0 : i0 * m + i1; }

    Point node(std::size_t flat) const {
        Point p{0.0, 0.0};
        if (dim == 1) {
            p[0] = lower[0] + static_cast<double>(flat) * spacing(0);
        } else {
            p[0] = lower[0] + static_cast<double>(flat / m) * spacing(0);
            p[1] = lower[1] + static_cast<double>(flat % m) * spacing(1);
        }
        return p;
    }

    /// Angular frequency 2π k̃/L for the unshifted FFT bin κ on an axis,
    /// with k̃ = κ for κ < m/2 and κ − m otherwise.
    double frequency(int axis, std::size_t kappa) const {
        const double ktilde = kappa < m / 2 ? static_cast<double>(kappa)
                                            : static_cast<double>(kappa) - static_cast<double>(m);
        return 2.0 * detail::kPi * ktilde / length(axis);
    }

    bool operator==(const Grid& o) const {
        if (dim != o.dim || m != o.m) return false;
        for (int a = 0; a < dim; ++a)
            if (lower[a] != o.lower[a] || upper[a] != o.upper[a]) return false;
        return true;
    }
    bool operator!=(const Grid& o) const { return !(*this == o); }
};

enum class ScalarKind { Real, Complex };

/// A sampled function on a Grid. Values are stored as complex numbers; a
/// Real-kind function promises exactly-zero imaginary parts. Treat instances
/// as immutable once built: every operation in this library returns a fresh
/// GridFunction, and concurrent reads are safe.
class GridFunction {
  public:
    GridFunction() = default;

    GridFunction(Grid grid, std::vector<Complex> values, ScalarKind kind)
        : grid_(grid), values_(std::move(values)), kind_(kind) {
        if (values_.size() != grid_.size())
            throw std::invalid_argument("GridFunction: expected " + std::to_string(grid_.size()) +
                                        " values, got " + std::to_string(values_.size()));
        if (kind_ == ScalarKind::Real) {
            for (std::size_t i = 0; i < values_.size(); ++i)
                if (values_[i].imag() != 0.0)
                    throw std::invalid_argument("GridFunction: real-kind function has nonzero imaginary part at node " +
                                                std::to_string(i));
        }
    }

    static GridFunction zeros(const Grid& grid, ScalarKind kind = ScalarKind::Real) {
        return GridFunction(grid, std::vector<Complex>(grid.size(), Complex(0.0, 0.0)), kind);
    }

    const Grid& grid() const { return grid_; }
    ScalarKind kind() const { return kind_; }
    bool is_real() const { return kind_ == ScalarKind::Real; }
    std::size_t size() const { return values_.size(); }

    const std::vector<Complex>& values() const { return values_; }
    std::vector<Complex>& values() { return values_; }
    Complex operator[](std::size_t i) const { return values_[i]; }

    /// Zero out roundoff imaginary parts and mark the function Real. Used by
    /// operators that map real data to real data through complex arithmetic.
    void force_real() {
        for (auto& v : values_) v = Complex(v.real(), 0.0);
        kind_ = ScalarKind::Real;
    }
    void mark_complex() { kind_ = ScalarKind::Complex; }

  private:
    Grid grid_;
    std::vector<Complex> values_;
    ScalarKind kind_ = ScalarKind::Real;
};

// ---------------------------------------------------------------------------
// sampling

/// Sample a pointwise callable at the grid nodes. Rejects non-finite values,
/// naming the offending node.
inline GridFunction sample(const Grid& grid, const std::function<Complex(Point)>& f) {
    std::vector<Complex> v(grid.size());
    bool real = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Point p = grid.node(i);
        const Complex val = f(p);
        if (!std::isfinite(val.real()) || !std::isfinite(val.imag())) {
            throw std::invalid_argument("sample: non-finite value at node " + std::to_string(i) + " (x = " +
                                        std::to_string(p[0]) + (grid.dim == 2 ? ", y = " + std::to_string(p[1]) : "") +
                                        ")");
        }
        v[i] = val;
        if (val.imag() != 0.0) real = false;
    }
    return GridFunction(grid, std::move(v), real ? ScalarKind::Real : ScalarKind::Complex);
}

inline GridFunction sample(const Grid& grid, const std::function<double(Point)>& f) {
    return sample(grid, std::function<Complex(Point)>([&f](Point p) { return Complex(f(p), 0.0); }));
}

inline GridFunction sample1d(const Grid& grid, const std::function<double(double)>& f) {
    if (grid.dim != 1) throw std::invalid_argument("sample1d: grid is not one-dimensional");
    return sample(grid, std::function<double(Point)>([&f](Point p) { return f(p[0]); }));
}

// ---------------------------------------------------------------------------
// norms

inline double sup_norm(const GridFunction& f) {
    double s = 0.0;
    for (const auto& v : f.values()) s = std::max(s, std::abs(v));
    return s;
}

/// sqrt(h^dim * sum |f_j|^2): the periodic-trapezoid L2 norm.
inline double l2_norm(const GridFunction& f) {
    double acc = 0.0;
    for (const auto& v : f.values()) acc += std::norm(v);
    double w = f.grid().spacing(0);
    if (f.grid().dim == 2) w *= f.grid().spacing(1);
    return std::sqrt(w * acc);
}

// ---------------------------------------------------------------------------
// elementwise arithmetic (kind-propagating)

namespace detail {
inline ScalarKind join(ScalarKind a, ScalarKind b) {
    return (a == ScalarKind::Real && b == ScalarKind::Real) ? ScalarKind::Real : ScalarKind::Complex;
}
inline void check_same_grid(const GridFunction& a, const GridFunction& b, const char* who) {
    if (a.grid() != b.grid()) throw std::invalid_argument(std::string(who) + ": grid mismatch");
}
}  // namespace detail

inline GridFunction operator+(const GridFunction& a, const GridFunction& b) {
    detail::check_same_grid(a, b, "operator+");
    std::vector<Complex> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    return GridFunction(a.grid(), std::move(v), detail::join(a.kind(), b.kind()));
}

inline GridFunction operator-(const GridFunction& a, const GridFunction& b) {
    detail::check_same_grid(a, b, "operator-");
    std::vector<Complex> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    return GridFunction(a.grid(), std::move(v), detail::join(a.kind(), b.kind()));
}

inline GridFunction operator*(double c, const GridFunction& f) {
    std::vector<Complex> v(f.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * f[i];
    return GridFunction(f.grid(), std::move(v), f.kind());
}

inline GridFunction operator*(Complex c, const GridFunction& f) {
    std::vector<Complex> v(f.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * f[i];
    return GridFunction(f.grid(), std::move(v), c.imag() == 0.0 ? f.kind() : ScalarKind::Complex);
}

// ---------------------------------------------------------------------------
// Fourier transform pair
//
// Unitary convention on the periodic box, with phases taken relative to the
// box origin: for 1D,
//   ĝ_k = (2π)^{-1/2} h Σ_j f_j e^{-i p_k j h},   p_k = 2πk/L,  k = -m/2..m/2-1,
//   f_j = (2π)^{-1/2} Δp Σ_k ĝ_k e^{+i p_k j h},  Δp = 2π/L.
// The spectrum lives on the frequency grid [-πm/L, πm/L) with spacing Δp, in
// ascending-k order, so Parseval holds with the same h^dim-weighted l2_norm.

namespace detail {

inline void fft_any(std::vector<Complex>& v, const Grid& g, bool inverse) {
    if (g.dim == 1)
        fft_radix2(v, inverse);
    else
        fft_radix2_2d(v, g.m, inverse);
}

// unshifted FFT order -> ascending-k order (and back)
inline std::size_t shift_index(std::size_t kappa, std::size_t m) { return (kappa + m / 2) % m; }

}  // namespace detail

inline GridFunction fourier_forward(const GridFunction& f) {
    const Grid& g = f.grid();
    std::vector<Complex> v = f.values();
    detail::fft_any(v, g, /*inverse=*/false);

    double scale = 1.0;
    for (int a = 0; a < g.dim; ++a) scale *= g.spacing(a) / std::sqrt(2.0 * detail::kPi);

    Grid freq = g.dim == 1
                    ? Grid(1, {-detail::kPi * static_cast<double>(g.m) / g.length(0), 0.0},
                           {detail::kPi * static_cast<double>(g.m) / g.length(0), 0.0}, g.m)
                    : Grid(2,
                           {-detail::kPi * static_cast<double>(g.m) / g.length(0),
                            -detail::kPi * static_cast<double>(g.m) / g.length(1)},
                           {detail::kPi * static_cast<double>(g.m) / g.length(0),
                            detail::kPi * static_cast<double>(g.m) / g.length(1)},
                           g.m);

    std::vector<Complex> shifted(v.size());
    if (g.dim == 1) {
        for (std::size_t k = 0; k < g.m; ++k) shifted[detail::shift_index(k, g.m)] = scale * v[k];
    } else {
        for (std::size_t k0 = 0; k0 < g.m; ++k0)
            for (std::size_t k1 = 0; k1 < g.m; ++k1)
                shifted[detail::shift_index(k0, g.m) * g.m + detail::shift_index(k1, g.m)] = scale * v[k0 * g.m + k1];
    }
    return GridFunction(freq, std::move(shifted), ScalarKind::Complex);
}

/// Exact inverse of fourier_forward. The spatial grid must be supplied since
/// the spectrum alone does not determine the box origin.
inline GridFunction fourier_inverse(const GridFunction& spectrum, const Grid& spatial) {
    const Grid& fg = spectrum.grid();
    if (fg.m != spatial.m || fg.dim != spatial.dim)
        throw std::invalid_argument("fourier_inverse: frequency/spatial grid mismatch");
    for (int a = 0; a < spatial.dim; ++a) {
        const double dp = 2.0 * detail::kPi / spatial.length(a);
        if (std::abs(fg.spacing(a) - dp) > 1e-12 * dp)
            throw std::invalid_argument("fourier_inverse: frequency spacing inconsistent with the spatial box");
    }

    const std::size_t m = spatial.m;
    std::vector<Complex> v(spectrum.size());
    if (spatial.dim == 1) {
        for (std::size_t k = 0; k < m; ++k) v[k] = spectrum[detail::shift_index(k, m)];
    } else {
        for (std::size_t k0 = 0; k0 < m; ++k0)
            for (std::size_t k1 = 0; k1 < m; ++k1)
                v[k0 * m + k1] = spectrum[detail::shift_index(k0, m) * m + detail::shift_index(k1, m)];
    }
    detail::fft_any(v, spatial, /*inverse=*/true);

    double scale = 1.0;
    for (int a = 0; a < spatial.dim; ++a) scale *= (2.0 * detail::kPi / spatial.length(a)) / std::sqrt(2.0 * detail::kPi);
    for (auto& x : v) x *= scale;
    return GridFunction(spatial, std::move(v), ScalarKind::Complex);
}

// ---------------------------------------------------------------------------
// interpolation

/// Multilinear interpolation with periodic wrap. Exact at nodes and for
/// affine data inside one cell; error O(h^2) on smooth data.
inline Complex interpolate(const GridFunction& f, Point x) {
    const Grid& g = f.grid();
    const std::size_t m = g.m;

    std::array<std::size_t, 2> i0{0, 0};
    std::array<double, 2> frac{0.0, 0.0};
    for (int a = 0; a < g.dim; ++a) {
        const double h = g.spacing(a);
        double u = (x[a] - g.lower[a]) / h;
        double fl = std::floor(u);
        frac[a] = u - fl;
        long long cell = static_cast<long long>(fl) % static_cast<long long>(m);
        if (cell < 0) cell += static_cast<long long>(m);
        i0[a] = static_cast<std::size_t>(cell);
    }

    if (g.dim == 1) {
        const std::size_t j0 = i0[0], j1 = (i0[0] + 1) % m;
        return (1.0 - frac[0]) * f[j0] + frac[0] * f[j1];
    }
    const std::size_t a0 = i0[0], a1 = (i0[0] + 1) % m;
    const std::size_t b0 = i0[1], b1 = (i0[1] + 1) % m;
    const double s = frac[0], t = frac[1];
    return (1.0 - s) * (1.0 - t) * f[a0 * m + b0] + (1.0 - s) * t * f[a0 * m + b1] +
           s * (1.0 - t) * f[a1 * m + b0] + s * t * f[a1 * m + b1];
}

// ---------------------------------------------------------------------------
// band-limited (trigonometric) point evaluation, used by the shift and
// averaging families in their spectral mode

namespace detail {

/// Raw (unnormalized, unshifted) forward DFT of the values of f.
inline std::vector<Complex> raw_spectrum(const GridFunction& f) {
    std::vector<Complex> v = f.values();
    fft_any(v, f.grid(), /*inverse=*/false);
    return v;
}

/// Evaluate the trigonometric interpolant at offset `xi` from the box origin
/// (1D). The Nyquist bin is treated as a cosine so real samples interpolate
/// to real values.
inline Complex trig_eval_1d(const std::vector<Complex>& raw, const Grid& g, double xi) {
    const std::size_t m = g.m;
    Complex acc(0.0, 0.0);
    for (std::size_t kappa = 0; kappa < m; ++kappa) {
        const double p = g.frequency(0, kappa);
        if (kappa == m / 2) {
            acc += raw[kappa] * std::cos(p * xi);
        } else {
            acc += raw[kappa] * std::polar(1.0, p * xi);
        }
    }
    return acc / static_cast<double>(m);
}

}  // namespace detail

}  // namespace chernoff
