#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "chernoff/families.hpp"
#include "chernoff/iterate.hpp"

namespace chernoff {

// ---------------------------------------------------------------------------
// counter-based random stream
//
// Reproducibility contract: the k-th uniform of path i under seed s is
//   u = to_unit( mix( mix(s + (i+1)*C1) + (k+1)*C2 ) )
// with mix = SplitMix64 finalizer, C1/C2 fixed odd constants and
// to_unit(z) = (z >> 11)*2^-53 + 2^-54 ∈ (0,1). Normals come from the
// Box–Muller pair of uniforms (2j, 2j+1). No state, so any path/step can be
// generated independently on any thread with identical results.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t path, std::uint64_t k) {
    const std::uint64_t key = splitmix64(seed + (path + 1) * 0xA24BAED4963EE407ULL);
    const std::uint64_t z = splitmix64(key + (k + 1) * 0x9E3779B97F4A7C15ULL);
    return static_cast<double>(z >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

inline double counter_normal(std::uint64_t seed, std::uint64_t path, std::uint64_t idx) {
    const std::uint64_t pair = idx >> 1;
    const double u1 = counter_uniform(seed, path, 2 * pair);
    const double u2 = counter_uniform(seed, path, 2 * pair + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    return (idx & 1) == 0 ? r * std::cos(a) : r * std::sin(a);
}

// sqrt of a symmetric positive definite 2x2 matrix: (M + √det·I)/√(tr + 2√det)
inline void sym_sqrt_2x2(double m00, double m01, double m11, double& s00, double& s01, double& s11) {
    const double det = m00 * m11 - m01 * m01;
    if (!(det > 0.0) || !(m00 > 0.0))
        throw std::runtime_error("euler_maruyama: diffusion matrix is not positive definite along the path");
    const double s = std::sqrt(det);
    const double tau = std::sqrt(m00 + m11 + 2.0 * s);
    s00 = (m00 + s) / tau;
    s01 = m01 / tau;
    s11 = (m11 + s) / tau;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// weak Euler–Maruyama scheme X_{k+1} = X_k - B(X_k) t/n + sqrt(2t/n A(X_k)) Z_k
// for the drift-generator pairing L = -B·∇ + tr(A Hess), C ≡ 0.

struct PathEnsemble {
    int dim = 1;
    std::vector<Point> terminal;
    std::uint64_t seed = 0;
    int steps = 0;
    std::string spec_description;
};

inline PathEnsemble euler_maruyama(const Grid& box, const GeneratorSpec& spec, Point x0, double t, int steps,
                                   std::size_t paths, std::uint64_t seed, int threads = 1,
                                   std::string spec_description = "generator") {
    if (!(t >= 0.0)) throw std::invalid_argument("euler_maruyama: t must be nonnegative");
    if (steps <= 0) throw std::invalid_argument("euler_maruyama: need at least one step");
    if (paths == 0) throw std::invalid_argument("euler_maruyama: need at least one path");
    if (!spec.a11) throw std::invalid_argument("euler_maruyama: diffusion coefficient A is required");
    if (spec.c) {
        // the scheme covers killing-free generators only; probe C across the box
        for (int i = 0; i < 65; ++i) {
            Point p{box.lower[0] + box.length(0) * static_cast<double>(i) / 64.0, 0.0};
            if (box.dim == 2) p[1] = box.lower[1] + box.length(1) * static_cast<double>(i) / 64.0;
            if (spec.c(p) != 0.0) throw std::invalid_argument("euler_maruyama: killing rate C must be identically zero");
        }
    }

    const double dt = t / static_cast<double>(steps);
    PathEnsemble out;
    out.dim = box.dim;
    out.terminal.resize(paths);
    out.seed = seed;
    out.steps = steps;
    out.spec_description = std::move(spec_description);

    auto escape = [&box](const Point& p) {
        for (int a = 0; a < box.dim; ++a) {
            const double pad = box.length(a);
            if (p[a] < box.lower[a] - pad || p[a] > box.upper[a] + pad) return true;
        }
        return false;
    };

    auto run_block = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Point x = x0;
            std::uint64_t draw = 0;
            for (int k = 0; k < steps; ++k) {
                if (box.dim == 1) {
                    const double a = spec.a11(x);
                    if (!(a > 0.0)) throw std::runtime_error("euler_maruyama: diffusion A <= 0 along the path");
                    const double b = spec.b1 ? spec.b1(x) : 0.0;
                    const double z = detail::counter_normal(seed, i, draw++);
                    x[0] += -b * dt + std::sqrt(2.0 * dt * a) * z;
                } else {
                    const double a00 = spec.a11(x);
                    const double a01 = spec.a12 ? spec.a12(x) : 0.0;
                    const double a11v = spec.a22 ? spec.a22(x) : a00;
                    const double b1v = spec.b1 ? spec.b1(x) : 0.0;
                    const double b2v = spec.b2 ? spec.b2(x) : 0.0;
                    double s00, s01, s11;
                    detail::sym_sqrt_2x2(2.0 * dt * a00, 2.0 * dt * a01, 2.0 * dt * a11v, s00, s01, s11);
                    const double z0 = detail::counter_normal(seed, i, draw++);
                    const double z1 = detail::counter_normal(seed, i, draw++);
                    x[0] += -b1v * dt + s00 * z0 + s01 * z1;
                    x[1] += -b2v * dt + s01 * z0 + s11 * z1;
                }
                if (!std::isfinite(x[0]) || (box.dim == 2 && !std::isfinite(x[1])))
                    throw std::runtime_error("euler_maruyama: non-finite state on path " + std::to_string(i));
                if (escape(x))
                    throw std::runtime_error("euler_maruyama: path " + std::to_string(i) +
                                             " escaped the simulation box by more than one box-width; use a larger box");
            }
            out.terminal[i] = x;
        }
    };

    if (threads <= 1 || paths < 256) {
        run_block(0, paths);
    } else {
        const int workers = std::min<int>(threads, 64);
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const std::size_t chunk = (paths + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = std::min(paths, w * chunk);
            const std::size_t hi = std::min(paths, lo + chunk);
            pool.emplace_back([&, lo, hi, w] {
                try {
                    run_block(lo, hi);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return out;
}

/// Sample mean and standard error of f0 interpolated at the terminal states:
/// the Monte Carlo side of E[f0(X_n) | X_0 = x] = F^n(t/n) f0 (x).
inline std::pair<double, double> mc_functional(const PathEnsemble& ensemble, const GridFunction& f0) {
    if (!f0.is_real()) throw std::invalid_argument("mc_functional: test functional must be real-valued");
    if (ensemble.terminal.empty()) throw std::invalid_argument("mc_functional: empty ensemble");
    const Grid& g = f0.grid();
    for (std::size_t i = 0; i < ensemble.terminal.size(); ++i)
        for (int a = 0; a < g.dim; ++a)
            if (ensemble.terminal[i][a] < g.lower[a] || ensemble.terminal[i][a] >= g.upper[a])
                throw std::invalid_argument("mc_functional: terminal state " + std::to_string(i) +
                                            " lies outside the interpolation box");

    // compensated summation keeps the aggregate independent of path order
    double sum = 0.0, comp = 0.0;
    for (const auto& x : ensemble.terminal) {
        const double v = interpolate(f0, x).real();
        const double y = v - comp;
        const double tnew = sum + y;
        comp = (tnew - sum) - y;
        sum = tnew;
    }
    const double n = static_cast<double>(ensemble.terminal.size());
    const double mean = sum / n;
    if (ensemble.terminal.size() == 1) return {mean, 0.0};

    double var = 0.0, vcomp = 0.0;
    for (const auto& x : ensemble.terminal) {
        const double d = interpolate(f0, x).real() - mean;
        const double y = d * d - vcomp;
        const double tnew = var + y;
        vcomp = (tnew - var) - y;
        var = tnew;
    }
    var /= (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

// ---------------------------------------------------------------------------
// the time-fractional solver f_n(t) = ∫_0^∞ [F(τ/n)]^n f0 · p^μ(t, τ) dτ

/// Marginal density of the 1/2-stable inverse subordinator,
/// p^{1/2}(t, τ) = (πt)^{-1/2} e^{-τ²/(4t)}.
inline double inverse_half_stable_density(double t, double tau) {
    if (!(t > 0.0)) throw std::invalid_argument("inverse_half_stable_density: t must be positive");
    if (tau < 0.0) return 0.0;
    return std::exp(-tau * tau / (4.0 * t)) / std::sqrt(detail::kPi * t);
}

/// Mixing measure for the distributed-order time derivative: either the
/// Caputo-1/2 case with its analytic inverse-subordinator density, or a
/// user-supplied sampled density table p^μ(t, ·) on a τ-grid.
struct FractionalMeasure {
    enum class Tag { DeltaHalf, Table };
    Tag tag = Tag::DeltaHalf;
    std::vector<double> tau_grid;
    std::vector<double> density;

    static FractionalMeasure delta_half() { return FractionalMeasure{}; }

    static FractionalMeasure table(std::vector<double> tau, std::vector<double> dens) {
        if (tau.size() != dens.size() || tau.size() < 2)
            throw std::invalid_argument("FractionalMeasure: table needs matching τ and density arrays");
        double mass = 0.0;
        for (std::size_t i = 0; i < tau.size(); ++i) {
            if (i > 0 && tau[i] <= tau[i - 1]) throw std::invalid_argument("FractionalMeasure: τ grid must be ascending");
            if (tau[i] < 0.0) throw std::invalid_argument("FractionalMeasure: τ grid must be nonnegative");
            if (!(dens[i] >= 0.0)) throw std::invalid_argument("FractionalMeasure: density must be nonnegative");
            if (i > 0) mass += 0.5 * (dens[i] + dens[i - 1]) * (tau[i] - tau[i - 1]);
        }
        if (std::abs(mass - 1.0) > 1e-6)
            throw std::invalid_argument("FractionalMeasure: table density must integrate to 1 ± 1e-6, got " +
                                        std::to_string(mass));
        FractionalMeasure m;
        m.tag = Tag::Table;
        m.tau_grid = std::move(tau);
        m.density = std::move(dens);
        return m;
    }
};

namespace detail {

/// Gauss–Legendre nodes/weights on [-1, 1] via Newton on the recurrence.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double xi = std::cos(kPi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = xi;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = p2;
            }
            dp = static_cast<double>(n) * (xi * p1 - p0) / (xi * xi - 1.0);
            const double dx = p1 / dp;
            xi -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        x[i] = -xi;
        x[n - 1 - i] = xi;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
}

}  // namespace detail

/// Quadrature realization of the fractional Feynman formula. For the
/// delta_half measure the τ-range [0, τ_max] holds all but < 1e-8 of the
/// density mass; Gauss–Legendre with `quad_nodes` nodes integrates over it.
/// Exact-semigroup families collapse [F(τ/n)]^n to one application per node
/// (fixed-step reuse); `force_generic_iteration` disables that shortcut.
inline GridFunction fractional_solve(const ChernoffFamily& family, const GridFunction& f0, double t, int n,
                                     const FractionalMeasure& mu, int quad_nodes = 48,
                                     bool force_generic_iteration = false) {
    if (!(t > 0.0)) throw std::invalid_argument("fractional_solve: t must be positive");
    if (n <= 0) throw std::invalid_argument("fractional_solve: n must be positive");
    if (quad_nodes < 2) throw std::invalid_argument("fractional_solve: need at least 2 quadrature nodes");

    std::vector<double> taus, weights;  // weights include the density factor
    if (mu.tag == FractionalMeasure::Tag::DeltaHalf) {
        const double eps = 1e-8;
        const double tau_max = 2.0 * std::sqrt(t) * std::sqrt(std::log(1.0 / eps));
        const double tail = std::erfc(tau_max / (2.0 * std::sqrt(t)));
        if (!(tail < eps)) throw std::runtime_error("fractional_solve: density mass coverage unreachable");
        std::vector<double> gx, gw;
        detail::gauss_legendre(quad_nodes, gx, gw);
        for (int j = 0; j < quad_nodes; ++j) {
            const double tau = 0.5 * tau_max * (gx[j] + 1.0);
            taus.push_back(tau);
            weights.push_back(0.5 * tau_max * gw[j] * inverse_half_stable_density(t, tau));
        }
    } else {
        for (std::size_t j = 0; j + 1 < mu.tau_grid.size(); ++j) {
            // trapezoid on the supplied table
            const double dt0 = mu.tau_grid[j + 1] - mu.tau_grid[j];
            if (j == 0) {
                taus.push_back(mu.tau_grid[j]);
                weights.push_back(0.5 * dt0 * mu.density[j]);
            } else {
                weights.back() += 0.5 * dt0 * mu.density[j];
            }
            taus.push_back(mu.tau_grid[j + 1]);
            weights.push_back(0.5 * dt0 * mu.density[j + 1]);
        }
    }

    GridFunction acc = GridFunction::zeros(f0.grid(), ScalarKind::Complex);
    const bool one_shot = family.exact_semigroup() && !force_generic_iteration;
    for (std::size_t j = 0; j < taus.size(); ++j) {
        if (weights[j] == 0.0) continue;
        GridFunction term = taus[j] == 0.0
                                ? f0
                                : (one_shot ? family.apply(taus[j], f0) : chernoff_iterate(family, taus[j], n, f0));
        for (std::size_t i = 0; i < acc.size(); ++i) acc.values()[i] += weights[j] * term[i];
    }
    if (f0.is_real() && family.preserves_real()) acc.force_real();
    return acc;
}

}  // namespace chernoff
