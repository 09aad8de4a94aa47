#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chernoff/grid.hpp"

namespace chernoff {

// ---------------------------------------------------------------------------
// coefficient and symbol specifications

/// Coefficients of the local generator  Lf = -C f - B·∇f + tr(A Hess f)
/// with uniform ellipticity a0|z|^2 <= z·A(x)z <= A0|z|^2 and killing C >= 0.
/// In 1D only a11, b1, c are consulted; unset callables default to zero.
struct GeneratorSpec {
    std::function<double(Point)> a11, a12, a22;
    std::function<double(Point)> b1, b2;
    std::function<double(Point)> c;
    double a0 = 0.0;
    double A0 = 0.0;

    static GeneratorSpec constant1d(double A, double B = 0.0, double C = 0.0) {
        GeneratorSpec s;
        s.a11 = [A](Point) { return A; };
        s.b1 = [B](Point) { return B; };
        s.c = [C](Point) { return C; };
        s.a0 = A;
        s.A0 = A;
        return s;
    }

    static GeneratorSpec make1d(std::function<double(double)> A, std::function<double(double)> B,
                                std::function<double(double)> C, double a0, double A0) {
        GeneratorSpec s;
        s.a11 = [A = std::move(A)](Point p) { return A(p[0]); };
        if (B) s.b1 = [B = std::move(B)](Point p) { return B(p[0]); };
        if (C) s.c = [C = std::move(C)](Point p) { return C(p[0]); };
        s.a0 = a0;
        s.A0 = A0;
        return s;
    }

    static GeneratorSpec make2d(std::function<double(Point)> a11, std::function<double(Point)> a12,
                                std::function<double(Point)> a22, std::function<double(Point)> b1,
                                std::function<double(Point)> b2, std::function<double(Point)> c, double a0,
                                double A0) {
        GeneratorSpec s;
        s.a11 = std::move(a11);
        s.a12 = std::move(a12);
        s.a22 = std::move(a22);
        s.b1 = std::move(b1);
        s.b2 = std::move(b2);
        s.c = std::move(c);
        s.a0 = a0;
        s.A0 = A0;
        return s;
    }
};

/// Parametric x-independent symbol H(p): a finite sum of quadratic,
/// fractional |p|^alpha and relativistic (|p|^alpha + m)^{1/alpha} terms.
struct SymbolTerm {
    enum class Kind { Quadratic, Fractional, Relativistic };
    Kind kind = Kind::Quadratic;
    // quadratic: c + i b·p + p·Ap with constant coefficients
    double c = 0.0, b1 = 0.0, b2 = 0.0;
    double a11 = 0.0, a12 = 0.0, a22 = 0.0;
    // fractional / relativistic
    double alpha = 1.0;
    double scale = 1.0;
    double mass = 1.0;
};

struct SymbolSpec {
    std::vector<SymbolTerm> terms;

    Complex evaluate(Point p, int dim) const {
        Complex h(0.0, 0.0);
        const double p0 = p[0];
        const double p1 = dim == 2 ? p[1] : 0.0;
        const double p2 = p0 * p0 + p1 * p1;
        for (const auto& term : terms) {
            switch (term.kind) {
                case SymbolTerm::Kind::Quadratic:
                    h += Complex(term.c + term.a11 * p0 * p0 + 2.0 * term.a12 * p0 * p1 + term.a22 * p1 * p1,
                                 term.b1 * p0 + term.b2 * p1);
                    break;
                case SymbolTerm::Kind::Fractional:
                    h += Complex(term.scale * std::pow(p2, 0.5 * term.alpha), 0.0);
                    break;
                case SymbolTerm::Kind::Relativistic:
                    h += Complex(term.scale * std::pow(std::pow(p2, 0.5 * term.alpha) + term.mass, 1.0 / term.alpha),
                                 0.0);
                    break;
            }
        }
        return h;
    }

    bool real_valued() const {
        for (const auto& t : terms)
            if (t.kind == SymbolTerm::Kind::Quadratic && (t.b1 != 0.0 || t.b2 != 0.0)) return false;
        return true;
    }

    SymbolSpec& operator+=(const SymbolSpec& o) {
        terms.insert(terms.end(), o.terms.begin(), o.terms.end());
        return *this;
    }
    friend SymbolSpec operator+(SymbolSpec a, const SymbolSpec& b) { return a += b; }

    static SymbolSpec quadratic1d(double a, double b = 0.0, double c = 0.0) {
        SymbolTerm t;
        t.kind = SymbolTerm::Kind::Quadratic;
        t.a11 = a;
        t.b1 = b;
        t.c = c;
        return SymbolSpec{{t}};
    }

    static SymbolSpec quadratic2d(double a11, double a12, double a22, double b1 = 0.0, double b2 = 0.0,
                                  double c = 0.0) {
        SymbolTerm t;
        t.kind = SymbolTerm::Kind::Quadratic;
        t.a11 = a11;
        t.a12 = a12;
        t.a22 = a22;
        t.b1 = b1;
        t.b2 = b2;
        t.c = c;
        return SymbolSpec{{t}};
    }

    static SymbolSpec fractional(double alpha, double scale = 1.0) {
        if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("SymbolSpec: fractional alpha must lie in (0, 2]");
        SymbolTerm t;
        t.kind = SymbolTerm::Kind::Fractional;
        t.alpha = alpha;
        t.scale = scale;
        return SymbolSpec{{t}};
    }

    static SymbolSpec relativistic(double alpha, double mass, double scale = 1.0) {
        if (!(alpha > 0.0 && alpha <= 2.0)) throw std::invalid_argument("SymbolSpec: relativistic alpha must lie in (0, 2]");
        if (!(mass > 0.0)) throw std::invalid_argument("SymbolSpec: relativistic mass must be positive");
        SymbolTerm t;
        t.kind = SymbolTerm::Kind::Relativistic;
        t.alpha = alpha;
        t.mass = mass;
        t.scale = scale;
        return SymbolSpec{{t}};
    }
};

// ---------------------------------------------------------------------------
// the Chernoff family contract

struct FamilyTraits {
    std::string name;
    double growth_bound = 0.0;  // w with ||F(t)|| <= e^{wt}
    bool linear = true;
    bool kernel_style = false;   // per-output-node kernel evaluation available
    bool preserves_real = true;  // maps real data to real data
    bool exact_semigroup = false;
    bool self_adjoint = false;
};

class FamilyCore {
  public:
    virtual ~FamilyCore() = default;

    /// Apply F(t) for t > 0 (t == 0 is short-circuited by the wrapper).
    virtual GridFunction apply(double t, const GridFunction& f) const = 0;

    /// Kernel-style families evaluate the output at node q with a per-node
    /// time parameter ts[q]; this is the hook multiplicative perturbation
    /// rides on. ts entries are > 0.
    virtual GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const {
        (void)ts;
        (void)f;
        throw std::logic_error("family does not expose per-node kernel evaluation");
    }

    /// Families with a cheaper exact n-fold iteration may provide it here.
    virtual std::optional<GridFunction> fast_iterate(double t, int n, const GridFunction& f0) const {
        (void)t;
        (void)n;
        (void)f0;
        return std::nullopt;
    }

    /// Symbol families expose their H samples (unshifted FFT bin layout).
    virtual const std::vector<Complex>* symbol_bins() const { return nullptr; }
};

/// A time-indexed bounded operator family F(t) bound to a fixed grid, with
/// apply(0, f) = f exactly. Immutable and safe for concurrent apply calls.
class ChernoffFamily {
  public:
    ChernoffFamily() = default;
    ChernoffFamily(Grid grid, FamilyTraits traits, std::shared_ptr<const FamilyCore> core)
        : grid_(grid), traits_(std::move(traits)), core_(std::move(core)) {}

    GridFunction apply(double t, const GridFunction& f) const {
        ensure_usable(f);
        if (!(t >= 0.0)) throw std::invalid_argument(traits_.name + ": time must be nonnegative, got t = " + std::to_string(t));
        if (t == 0.0) return f;
        GridFunction out = core_->apply(t, f);
        settle_kind(f, out);
        return out;
    }

    /// Output node q receives (F(ts[q]) f)(x_q). Only kernel-style families
    /// support this.
    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const {
        ensure_usable(f);
        if (!traits_.kernel_style)
            throw std::invalid_argument(traits_.name + ": family does not expose per-node kernel evaluation");
        if (ts.size() != grid_.size()) throw std::invalid_argument(traits_.name + ": node-time vector has wrong length");
        bool all_zero = true;
        for (double t : ts) {
            if (!(t >= 0.0)) throw std::invalid_argument(traits_.name + ": node times must be nonnegative");
            if (t != 0.0) all_zero = false;
        }
        if (all_zero) return f;
        GridFunction out = core_->apply_at_node_times(ts, f);
        settle_kind(f, out);
        return out;
    }

    std::optional<GridFunction> fast_iterate(double t, int n, const GridFunction& f0) const {
        ensure_usable(f0);
        auto out = core_->fast_iterate(t, n, f0);
        if (out) settle_kind(f0, *out);
        return out;
    }

    const Grid& grid() const { return grid_; }
    const std::string& name() const { return traits_.name; }
    double growth_bound() const { return traits_.growth_bound; }
    bool linear() const { return traits_.linear; }
    bool kernel_style() const { return traits_.kernel_style; }
    bool preserves_real() const { return traits_.preserves_real; }
    bool exact_semigroup() const { return traits_.exact_semigroup; }
    bool self_adjoint() const { return traits_.self_adjoint; }
    const std::vector<Complex>* symbol_bins() const { return core_ ? core_->symbol_bins() : nullptr; }
    bool valid() const { return core_ != nullptr; }

  private:
    void ensure_usable(const GridFunction& f) const {
        if (!core_) throw std::logic_error("ChernoffFamily: empty handle");
        if (f.grid() != grid_) throw std::invalid_argument(traits_.name + ": input grid does not match the family grid");
    }
    void settle_kind(const GridFunction& in, GridFunction& out) const {
        if (in.is_real() && traits_.preserves_real)
            out.force_real();
        else
            out.mark_complex();
    }

    Grid grid_;
    FamilyTraits traits_;
    std::shared_ptr<const FamilyCore> core_;
};

// ---------------------------------------------------------------------------
// shared construction helpers

namespace detail {

inline constexpr double kKernelCutLog = 36.8413614879047;  // -ln(1e-16)

inline std::vector<double> sample_coefficient(const Grid& g, const std::function<double(Point)>& f,
                                              double fallback, const char* what) {
    std::vector<double> v(g.size(), fallback);
    if (!f) return v;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = f(g.node(i));
        if (!std::isfinite(v[i]))
            throw std::invalid_argument(std::string(what) + ": non-finite coefficient at node " + std::to_string(i));
    }
    return v;
}

inline bool all_equal(const std::vector<double>& v) {
    for (const double x : v)
        if (x != v.front()) return false;
    return true;
}

inline long long wrap_index(long long j, long long m) {
    long long r = j % m;
    return r < 0 ? r + m : r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gaussian kernel family for the uniformly elliptic local generator:
//   F(t)φ(x) = e^{-tC(x)} ((4πt)^d det A(x))^{-1/2}
//              ∫ exp(-A^{-1}(x)(x - tB(x) - y)·(x - tB(x) - y) / (4t)) φ(y) dy,
// realized as a periodic (wrapped) kernel quadrature with relative cutoff
// 1e-16 against the kernel peak.

namespace detail {

class GaussianCore final : public FamilyCore {
  public:
    GaussianCore(const Grid& grid, const GeneratorSpec& spec) : grid_(grid) {
        if (!spec.a11) throw std::invalid_argument("gaussian_family: diffusion coefficient A is required");
        if (!(spec.a0 > 0.0) || !(spec.A0 >= spec.a0))
            throw std::invalid_argument("gaussian_family: ellipticity bounds must satisfy 0 < a0 <= A0");
        a11_ = sample_coefficient(grid, spec.a11, 0.0, "gaussian_family");
        b1_ = sample_coefficient(grid, spec.b1, 0.0, "gaussian_family");
        c_ = sample_coefficient(grid, spec.c, 0.0, "gaussian_family");
        if (grid.dim == 2) {
            a12_ = sample_coefficient(grid, spec.a12, 0.0, "gaussian_family");
            a22_ = sample_coefficient(grid, spec.a22, 0.0, "gaussian_family");
            b2_ = sample_coefficient(grid, spec.b2, 0.0, "gaussian_family");
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (c_[i] < 0.0)
                throw std::invalid_argument("gaussian_family: killing rate C < 0 at node " + std::to_string(i));
            double lo, hi;
            if (grid.dim == 1) {
                lo = hi = a11_[i];
            } else {
                const double tr = a11_[i] + a22_[i];
                const double det = a11_[i] * a22_[i] - a12_[i] * a12_[i];
                const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
                lo = 0.5 * (tr - disc);
                hi = 0.5 * (tr + disc);
            }
            if (lo < spec.a0 * (1.0 - 1e-12) || hi > spec.A0 * (1.0 + 1e-12))
                throw std::invalid_argument("gaussian_family: ellipticity bounds violated at node " + std::to_string(i));
        }
    }

    GridFunction apply(double t, const GridFunction& f) const override {
        return apply_at_node_times(std::vector<double>(grid_.size(), t), f);
    }

    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const override {
        return grid_.dim == 1 ? apply_1d(ts, f) : apply_2d(ts, f);
    }

    bool drift_free() const {
        for (double b : b1_)
            if (b != 0.0) return false;
        for (double b : b2_)
            if (b != 0.0) return false;
        return true;
    }
    bool constant_coefficients() const {
        return all_equal(a11_) && all_equal(b1_) && all_equal(c_) &&
               (grid_.dim == 1 || (all_equal(a12_) && all_equal(a22_) && all_equal(b2_)));
    }

  private:
    // The kernel row is normalized by its own quadrature mass, so the
    // discrete operator is exactly sub-Markovian at every resolution. When
    // the kernel is narrower than a cell (all weights underflow), it
    // degenerates to point evaluation at the drifted center.
    GridFunction apply_1d(const std::vector<double>& ts, const GridFunction& f) const {
        const std::size_t m = grid_.m;
        const double h = grid_.spacing(0);
        const double lower = grid_.lower[0];
        std::vector<Complex> out(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double t = ts[i];
            if (t == 0.0) {
                out[i] = f[i];
                continue;
            }
            const double A = a11_[i];
            const double varh = 4.0 * t * A;
            const double center = (lower + static_cast<double>(i) * h) - t * b1_[i];
            const double radius = std::sqrt(varh * kKernelCutLog);
            const long long jc = static_cast<long long>(std::llround((center - lower) / h));
            const long long R = static_cast<long long>(std::ceil(radius / h)) + 1;

            // weights g(o) = exp(-(u0 - o h)^2 / varh) by recurrence; since
            // |u0| <= h/2 every factor lies in (0, 1], so only underflow can
            // occur and the outward sweeps may stop at the first zero
            const double u0 = center - (lower + static_cast<double>(jc) * h);
            const double g0 = std::exp(-u0 * u0 / varh);
            const double rr = std::exp(-2.0 * h * h / varh);
            const double fac_up0 = std::exp((2.0 * h * u0 - h * h) / varh);
            const double fac_dn0 = std::exp(-(2.0 * h * u0 + h * h) / varh);
            const std::size_t j0 = static_cast<std::size_t>(wrap_index(jc, static_cast<long long>(m)));
            double mass = g0;
            Complex acc;
            if (f.is_real()) {
                double accr = g0 * f[j0].real();
                double w = g0, fac = fac_up0;
                std::size_t idx = j0;
                for (long long o = 1; o <= R; ++o) {
                    w *= fac;
                    fac *= rr;
                    if (w == 0.0) break;
                    idx = idx + 1 == m ? 0 : idx + 1;
                    mass += w;
                    accr += w * f[idx].real();
                }
                w = g0;
                fac = fac_dn0;
                idx = j0;
                for (long long o = 1; o <= R; ++o) {
                    w *= fac;
                    fac *= rr;
                    if (w == 0.0) break;
                    idx = idx == 0 ? m - 1 : idx - 1;
                    mass += w;
                    accr += w * f[idx].real();
                }
                acc = Complex(accr, 0.0);
            } else {
                acc = g0 * f[j0];
                double w = g0, fac = fac_up0;
                std::size_t idx = j0;
                for (long long o = 1; o <= R; ++o) {
                    w *= fac;
                    fac *= rr;
                    if (w == 0.0) break;
                    idx = idx + 1 == m ? 0 : idx + 1;
                    mass += w;
                    acc += w * f[idx];
                }
                w = g0;
                fac = fac_dn0;
                idx = j0;
                for (long long o = 1; o <= R; ++o) {
                    w *= fac;
                    fac *= rr;
                    if (w == 0.0) break;
                    idx = idx == 0 ? m - 1 : idx - 1;
                    mass += w;
                    acc += w * f[idx];
                }
            }
            const double kill = std::exp(-t * c_[i]);
            if (mass > 0.0) {
                out[i] = kill / mass * acc;
            } else {
                const double frac = (center - lower) / h - std::floor((center - lower) / h);
                const long long j0 = static_cast<long long>(std::floor((center - lower) / h));
                const Complex lo = f[static_cast<std::size_t>(wrap_index(j0, static_cast<long long>(m)))];
                const Complex hi = f[static_cast<std::size_t>(wrap_index(j0 + 1, static_cast<long long>(m)))];
                out[i] = kill * ((1.0 - frac) * lo + frac * hi);
            }
        }
        return GridFunction(grid_, std::move(out), ScalarKind::Complex);
    }

    GridFunction apply_2d(const std::vector<double>& ts, const GridFunction& f) const {
        const std::size_t m = grid_.m;
        const double h0 = grid_.spacing(0), h1 = grid_.spacing(1);
        std::vector<Complex> out(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const double t = ts[i];
            if (t == 0.0) {
                out[i] = f[i];
                continue;
            }
            const Point x = grid_.node(i);
            const double a = a11_[i], b = a12_[i], d = a22_[i];
            const double det = a * d - b * b;
            const double inv00 = d / det, inv01 = -b / det, inv11 = a / det;
            const double tr = a + d;
            const double lam_max = 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
            const double radius = std::sqrt(4.0 * t * lam_max * kKernelCutLog);
            const double c0 = x[0] - t * b1_[i], c1 = x[1] - t * b2_[i];
            const long long jc0 = static_cast<long long>(std::llround((c0 - grid_.lower[0]) / h0));
            const long long jc1 = static_cast<long long>(std::llround((c1 - grid_.lower[1]) / h1));
            const long long R0 = static_cast<long long>(std::ceil(radius / h0)) + 1;
            const long long R1 = static_cast<long long>(std::ceil(radius / h1)) + 1;
            Complex acc(0.0, 0.0);
            double mass = 0.0;
            for (long long o0 = -R0; o0 <= R0; ++o0) {
                const double y0 = grid_.lower[0] + static_cast<double>(jc0 + o0) * h0;
                const double u0 = c0 - y0;
                const std::size_t row =
                    static_cast<std::size_t>(wrap_index(jc0 + o0, static_cast<long long>(m))) * m;
                for (long long o1 = -R1; o1 <= R1; ++o1) {
                    const double y1 = grid_.lower[1] + static_cast<double>(jc1 + o1) * h1;
                    const double u1 = c1 - y1;
                    const double q = inv00 * u0 * u0 + 2.0 * inv01 * u0 * u1 + inv11 * u1 * u1;
                    const double e = q / (4.0 * t);
                    if (e > kKernelCutLog) continue;
                    const double w = std::exp(-e);
                    mass += w;
                    acc += w * f[row + static_cast<std::size_t>(wrap_index(jc1 + o1, static_cast<long long>(m)))];
                }
            }
            const double kill = std::exp(-t * c_[i]);
            if (mass > 0.0) {
                out[i] = kill / mass * acc;
            } else {
                // kernel narrower than a cell: bilinear evaluation at the center
                auto node_val = [&](long long j0, long long j1) {
                    return f[static_cast<std::size_t>(wrap_index(j0, static_cast<long long>(m))) * m +
                             static_cast<std::size_t>(wrap_index(j1, static_cast<long long>(m)))];
                };
                const double u0 = (c0 - grid_.lower[0]) / h0, u1 = (c1 - grid_.lower[1]) / h1;
                const long long j0 = static_cast<long long>(std::floor(u0));
                const long long j1 = static_cast<long long>(std::floor(u1));
                const double s0 = u0 - std::floor(u0), s1 = u1 - std::floor(u1);
                out[i] = kill * ((1.0 - s0) * (1.0 - s1) * node_val(j0, j1) + (1.0 - s0) * s1 * node_val(j0, j1 + 1) +
                                 s0 * (1.0 - s1) * node_val(j0 + 1, j1) + s0 * s1 * node_val(j0 + 1, j1 + 1));
            }
        }
        return GridFunction(grid_, std::move(out), ScalarKind::Complex);
    }

    Grid grid_;
    std::vector<double> a11_, a12_, a22_, b1_, b2_, c_;
};

}  // namespace detail

inline ChernoffFamily gaussian_family(const Grid& grid, const GeneratorSpec& spec) {
    auto core = std::make_shared<detail::GaussianCore>(grid, spec);
    FamilyTraits tr;
    tr.name = "gaussian";
    tr.growth_bound = 0.0;  // C >= 0 is enforced
    tr.kernel_style = true;
    tr.preserves_real = true;
    tr.self_adjoint = core->drift_free() && core->constant_coefficients();
    return ChernoffFamily(grid, tr, std::move(core));
}

// ---------------------------------------------------------------------------
// x-independent symbol family: apply = F^{-1} ∘ e^{-tH(p)} ∘ F. For constant
// symbols this family IS the semigroup, so apply(t)∘apply(s) = apply(t+s).

namespace detail {

class SymbolCore final : public FamilyCore {
  public:
    SymbolCore(const Grid& grid, const SymbolSpec& spec) : grid_(grid), bins_(grid.size()) {
        const std::size_t m = grid.m;
        if (grid.dim == 1) {
            for (std::size_t k = 0; k < m; ++k)
                bins_[k] = spec.evaluate({grid.frequency(0, k), 0.0}, 1);
        } else {
            for (std::size_t k0 = 0; k0 < m; ++k0)
                for (std::size_t k1 = 0; k1 < m; ++k1)
                    bins_[k0 * m + k1] = spec.evaluate({grid.frequency(0, k0), grid.frequency(1, k1)}, 2);
        }
        for (std::size_t k = 0; k < bins_.size(); ++k) {
            if (!(std::isfinite(bins_[k].real()) && std::isfinite(bins_[k].imag())))
                throw std::invalid_argument("symbol_family: non-finite symbol value at frequency bin " + std::to_string(k));
            if (bins_[k].real() < 0.0)
                throw std::invalid_argument("symbol_family: Re H < 0 at grid frequency bin " + std::to_string(k));
        }
    }

    GridFunction apply(double t, const GridFunction& f) const override {
        std::vector<Complex> v = f.values();
        fft_any(v, grid_, false);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] *= std::exp(-t * bins_[k]);
        fft_any(v, grid_, true);
        const double inv = 1.0 / static_cast<double>(v.size());
        for (auto& x : v) x *= inv;
        return GridFunction(grid_, std::move(v), ScalarKind::Complex);
    }

    const std::vector<Complex>* symbol_bins() const override { return &bins_; }

    bool real_symbol() const {
        for (const auto& h : bins_)
            if (h.imag() != 0.0) return false;
        return true;
    }

  private:
    Grid grid_;
    std::vector<Complex> bins_;
};

}  // namespace detail

inline ChernoffFamily symbol_family(const Grid& grid, const SymbolSpec& spec) {
    auto core = std::make_shared<detail::SymbolCore>(grid, spec);
    FamilyTraits tr;
    tr.name = "symbol";
    tr.growth_bound = 0.0;  // Re H >= 0 is enforced
    tr.preserves_real = true;
    tr.exact_semigroup = true;
    tr.self_adjoint = core->real_symbol();
    return ChernoffFamily(grid, tr, std::move(core));
}

// ---------------------------------------------------------------------------
// composite convolution family F(t) = F_gauss(t) ∘ F_symbol(t): the
// x-independent convolution factor acts first, then the frozen-coefficient
// Gaussian kernel.

namespace detail {

class CompositeCore final : public FamilyCore {
  public:
    CompositeCore(ChernoffFamily gauss, ChernoffFamily symbol) : gauss_(std::move(gauss)), symbol_(std::move(symbol)) {}
    GridFunction apply(double t, const GridFunction& f) const override {
        return gauss_.apply(t, symbol_.apply(t, f));
    }

  private:
    ChernoffFamily gauss_, symbol_;
};

}  // namespace detail

inline ChernoffFamily composite_convolution_family(const Grid& grid, const GeneratorSpec& spec,
                                                   const SymbolSpec& nonlocal) {
    ChernoffFamily g = gaussian_family(grid, spec);
    ChernoffFamily s = symbol_family(grid, nonlocal);
    FamilyTraits tr;
    tr.name = "composite(gaussian, symbol)";
    tr.growth_bound = g.growth_bound() + s.growth_bound();
    tr.preserves_real = g.preserves_real() && s.preserves_real();
    return ChernoffFamily(grid, tr, std::make_shared<detail::CompositeCore>(std::move(g), std::move(s)));
}

// ---------------------------------------------------------------------------
// Poisson (Cauchy) kernel family for H(x,p) = a(x)|p| in 1D:
//   F(t)φ(x) = (1/π) ∫ φ(q) a(x)t / ((x-q)^2 + a^2(x)t^2) dq
// evaluated on the periodic box through its Fourier side: the output at node
// x is the band-limited evaluation of e^{-a(x)t|p|} against the spectrum of
// φ, which is the wrapped-kernel quadrature in exact form and degrades
// gracefully as t -> 0.

namespace detail {

class PoissonCore final : public FamilyCore {
  public:
    PoissonCore(const Grid& grid, const std::function<double(double)>& a) : grid_(grid) {
        if (grid.dim != 1) throw std::invalid_argument("poisson_family: only d = 1 is supported");
        if (!a) throw std::invalid_argument("poisson_family: scale function a is required");
        a_ = sample_coefficient(grid, [&a](Point p) { return a(p[0]); }, 1.0, "poisson_family");
        for (std::size_t i = 0; i < a_.size(); ++i)
            if (!(a_[i] > 0.0))
                throw std::invalid_argument("poisson_family: scale a(x) must be positive, violated at node " +
                                            std::to_string(i));
        absp_.resize(grid.m);
        for (std::size_t k = 0; k < grid.m; ++k) absp_[k] = std::abs(grid.frequency(0, k));
    }

    GridFunction apply(double t, const GridFunction& f) const override {
        return apply_at_node_times(std::vector<double>(grid_.size(), t), f);
    }

    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const override {
        const std::size_t m = grid_.m;
        std::vector<Complex> raw = raw_spectrum(f);
        std::vector<Complex> out(m);
        const double invm = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double c = a_[i] * ts[i];
            if (c == 0.0) {
                out[i] = f[i];
                continue;
            }
            const Complex omega = std::polar(1.0, 2.0 * kPi * static_cast<double>(i) * invm);
            Complex phase(1.0, 0.0);
            Complex acc(0.0, 0.0);
            for (std::size_t k = 0; k < m; ++k) {
                acc += raw[k] * std::exp(-c * absp_[k]) * phase;
                phase *= omega;
            }
            out[i] = acc * invm;
        }
        return GridFunction(grid_, std::move(out), ScalarKind::Complex);
    }

    bool constant_scale() const { return all_equal(a_); }

  private:
    Grid grid_;
    std::vector<double> a_;
    std::vector<double> absp_;
};

}  // namespace detail

inline ChernoffFamily poisson_family(const Grid& grid, const std::function<double(double)>& a) {
    auto core = std::make_shared<detail::PoissonCore>(grid, a);
    FamilyTraits tr;
    tr.name = "poisson";
    tr.growth_bound = 0.0;
    tr.kernel_style = true;
    tr.preserves_real = true;
    tr.self_adjoint = core->constant_scale();
    return ChernoffFamily(grid, tr, std::move(core));
}

inline ChernoffFamily poisson_family(const Grid& grid, double a) {
    return poisson_family(grid, std::function<double(double)>([a](double) { return a; }));
}

// ---------------------------------------------------------------------------
// averaging family U(t)φ(x) = Σ_k w_k φ(x + ε_k √t) for a finite symmetric
// probability measure, and the two-point shift family as its special case.
// Point evaluation is band-limited (trigonometric) by default; a multilinear
// mode is available where positive interpolation weights matter more than
// spectral accuracy.

struct AveragingAtom {
    Point offset{0.0, 0.0};
    double weight = 0.0;
};

enum class PointEvaluation { Spectral, Multilinear };

namespace detail {

class AveragingCore final : public FamilyCore {
  public:
    AveragingCore(const Grid& grid, std::vector<AveragingAtom> atoms, PointEvaluation mode)
        : grid_(grid), atoms_(std::move(atoms)), mode_(mode) {
        if (atoms_.empty()) throw std::invalid_argument("averaging_family: measure has no atoms");
        double mass = 0.0;
        for (const auto& a : atoms_) {
            if (!(a.weight >= 0.0)) throw std::invalid_argument("averaging_family: weights must be nonnegative");
            mass += a.weight;
        }
        if (std::abs(mass - 1.0) > 1e-12)
            throw std::invalid_argument("averaging_family: measure must be normalized, total mass = " + std::to_string(mass));
        for (const auto& a : atoms_) {
            if (a.offset[0] == 0.0 && a.offset[1] == 0.0) continue;
            bool matched = false;
            for (const auto& b : atoms_) {
                if (b.offset[0] == -a.offset[0] && b.offset[1] == -a.offset[1] &&
                    std::abs(b.weight - a.weight) <= 1e-15 * std::max(1.0, a.weight)) {
                    matched = true;
                    break;
                }
            }
            if (!matched)
                throw std::invalid_argument("averaging_family: measure must be symmetric (atoms in ±ε pairs with equal weights)");
        }
        for (int axis = 0; axis < grid_.dim; ++axis) {
            double second = 0.0;
            for (const auto& a : atoms_) second += a.weight * a.offset[axis] * a.offset[axis];
            if (!(second > 0.0))
                throw std::invalid_argument("averaging_family: second moment must be positive on axis " + std::to_string(axis));
        }
    }

    GridFunction apply(double t, const GridFunction& f) const override {
        return apply_at_node_times(std::vector<double>(grid_.size(), t), f);
    }

    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const override {
        if (mode_ == PointEvaluation::Spectral && all_equal(ts)) return apply_multiplier(ts.front(), f);
        return apply_pointwise(ts, f);
    }

  private:
    GridFunction apply_multiplier(double t, const GridFunction& f) const {
        const double sq = std::sqrt(t);
        std::vector<Complex> v = f.values();
        fft_any(v, grid_, false);
        const std::size_t m = grid_.m;
        if (grid_.dim == 1) {
            for (std::size_t k = 0; k < m; ++k) {
                const double p = grid_.frequency(0, k);
                double mult = 0.0;
                for (const auto& a : atoms_) mult += a.weight * std::cos(sq * p * a.offset[0]);
                v[k] *= mult;
            }
        } else {
            for (std::size_t k0 = 0; k0 < m; ++k0)
                for (std::size_t k1 = 0; k1 < m; ++k1) {
                    const double p0 = grid_.frequency(0, k0), p1 = grid_.frequency(1, k1);
                    double mult = 0.0;
                    for (const auto& a : atoms_) mult += a.weight * std::cos(sq * (p0 * a.offset[0] + p1 * a.offset[1]));
                    v[k0 * m + k1] *= mult;
                }
        }
        fft_any(v, grid_, true);
        const double inv = 1.0 / static_cast<double>(v.size());
        for (auto& x : v) x *= inv;
        return GridFunction(grid_, std::move(v), ScalarKind::Complex);
    }

    GridFunction apply_pointwise(const std::vector<double>& ts, const GridFunction& f) const {
        std::vector<Complex> out(grid_.size());
        std::vector<Complex> raw;
        if (mode_ == PointEvaluation::Spectral) raw = raw_spectrum(f);
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (ts[i] == 0.0) {
                out[i] = f[i];
                continue;
            }
            const double sq = std::sqrt(ts[i]);
            const Point x = grid_.node(i);
            Complex acc(0.0, 0.0);
            for (const auto& a : atoms_) {
                const Point y{x[0] + sq * a.offset[0], x[1] + sq * a.offset[1]};
                acc += a.weight * eval_point(f, raw, y);
            }
            out[i] = acc;
        }
        return GridFunction(grid_, std::move(out), ScalarKind::Complex);
    }

    Complex eval_point(const GridFunction& f, const std::vector<Complex>& raw, Point y) const {
        if (mode_ == PointEvaluation::Multilinear) return interpolate(f, y);
        if (grid_.dim == 1) return trig_eval_1d(raw, grid_, y[0] - grid_.lower[0]);
        // 2D band-limited evaluation, Nyquist bins as cosines on each axis
        const std::size_t m = grid_.m;
        const double xi0 = y[0] - grid_.lower[0], xi1 = y[1] - grid_.lower[1];
        Complex acc(0.0, 0.0);
        for (std::size_t k0 = 0; k0 < m; ++k0) {
            const double p0 = grid_.frequency(0, k0);
            const Complex e0 = (k0 == m / 2) ? Complex(std::cos(p0 * xi0), 0.0) : std::polar(1.0, p0 * xi0);
            Complex inner(0.0, 0.0);
            for (std::size_t k1 = 0; k1 < m; ++k1) {
                const double p1 = grid_.frequency(1, k1);
                const Complex e1 = (k1 == m / 2) ? Complex(std::cos(p1 * xi1), 0.0) : std::polar(1.0, p1 * xi1);
                inner += raw[k0 * m + k1] * e1;
            }
            acc += inner * e0;
        }
        return acc / static_cast<double>(m * m);
    }

    Grid grid_;
    std::vector<AveragingAtom> atoms_;
    PointEvaluation mode_;
};

}  // namespace detail

inline ChernoffFamily averaging_family(const Grid& grid, std::vector<AveragingAtom> atoms,
                                       PointEvaluation mode = PointEvaluation::Spectral) {
    auto core = std::make_shared<detail::AveragingCore>(grid, std::move(atoms), mode);
    FamilyTraits tr;
    tr.name = "averaging";
    tr.growth_bound = 0.0;
    tr.kernel_style = true;
    tr.preserves_real = true;
    tr.self_adjoint = true;
    return ChernoffFamily(grid, tr, std::move(core));
}

/// S_t φ(x) = (φ(x + √t) + φ(x - √t)) / 2 on a 1D grid.
inline ChernoffFamily shift_family(const Grid& grid, PointEvaluation mode = PointEvaluation::Spectral) {
    if (grid.dim != 1) throw std::invalid_argument("shift_family: only d = 1 is supported");
    std::vector<AveragingAtom> atoms{{{1.0, 0.0}, 0.5}, {{-1.0, 0.0}, 0.5}};
    auto core = std::make_shared<detail::AveragingCore>(grid, std::move(atoms), mode);
    FamilyTraits tr;
    tr.name = "shift";
    tr.growth_bound = 0.0;
    tr.kernel_style = true;
    tr.preserves_real = true;
    tr.self_adjoint = true;
    return ChernoffFamily(grid, tr, std::move(core));
}

// ---------------------------------------------------------------------------
// multiplication family F(t)φ(x) = e^{-tV(x)} φ(x): the exact semigroup of
// the potential term, used as a splitting factor.

namespace detail {

class MultiplicationCore final : public FamilyCore {
  public:
    MultiplicationCore(const Grid& grid, const std::function<double(Point)>& v) : grid_(grid) {
        if (!v) throw std::invalid_argument("multiplication_family: potential V is required");
        v_ = sample_coefficient(grid, v, 0.0, "multiplication_family");
    }
    GridFunction apply(double t, const GridFunction& f) const override {
        return apply_at_node_times(std::vector<double>(grid_.size(), t), f);
    }
    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const override {
        std::vector<Complex> out(grid_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(-ts[i] * v_[i]) * f[i];
        return GridFunction(grid_, std::move(out), ScalarKind::Complex);
    }
    double min_potential() const {
        double lo = v_.front();
        for (double x : v_) lo = std::min(lo, x);
        return lo;
    }

  private:
    Grid grid_;
    std::vector<double> v_;
};

}  // namespace detail

inline ChernoffFamily multiplication_family(const Grid& grid, const std::function<double(Point)>& potential) {
    auto core = std::make_shared<detail::MultiplicationCore>(grid, potential);
    FamilyTraits tr;
    tr.name = "potential";
    tr.growth_bound = std::max(0.0, -core->min_potential());
    tr.kernel_style = true;
    tr.preserves_real = true;
    tr.exact_semigroup = true;
    tr.self_adjoint = true;
    return ChernoffFamily(grid, tr, std::move(core));
}

inline ChernoffFamily multiplication_family1d(const Grid& grid, const std::function<double(double)>& potential) {
    return multiplication_family(grid, [potential](Point p) { return potential(p[0]); });
}

// ---------------------------------------------------------------------------
// matrix reference families: F(t) = Id + tL and F(t) = (Id - tL)^{-1} for a
// dense bounded operator L on the grid values.

namespace detail {

class DenseMatrix {
  public:
    DenseMatrix(std::size_t n, std::vector<double> a) : n_(n), a_(std::move(a)) {
        if (a_.size() != n * n) throw std::invalid_argument("matrix family: expected a dense n×n matrix");
        for (double x : a_)
            if (!std::isfinite(x)) throw std::invalid_argument("matrix family: matrix entries must be finite");
    }
    std::size_t n() const { return n_; }
    double at(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    std::vector<Complex> matvec(const std::vector<Complex>& x) const {
        std::vector<Complex> y(n_, Complex(0.0, 0.0));
        for (std::size_t i = 0; i < n_; ++i) {
            Complex acc(0.0, 0.0);
            const double* row = a_.data() + i * n_;
            for (std::size_t j = 0; j < n_; ++j) acc += row[j] * x[j];
            y[i] = acc;
        }
        return y;
    }

    double inf_norm() const {
        double w = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j) s += std::abs(at(i, j));
            w = std::max(w, s);
        }
        return w;
    }

    bool symmetric() const {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                if (at(i, j) != at(j, i)) return false;
        return true;
    }

  private:
    std::size_t n_;
    std::vector<double> a_;
};

/// Solve (Id - tL) u = rhs by LU with partial pivoting; throws naming t when
/// the shifted matrix is singular.
inline std::vector<Complex> solve_resolvent(const DenseMatrix& L, double t, const std::vector<Complex>& rhs) {
    const std::size_t n = L.n();
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] = (i == j ? 1.0 : 0.0) - t * L.at(i, j);

    std::vector<Complex> x = rhs;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    const double tiny = std::max(scale, 1.0) * 1e-14;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < tiny)
            throw std::runtime_error("matrix_resolvent_family: Id - tL is singular at t = " + std::to_string(t));
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[piv * n + j], a[col * n + j]);
            std::swap(x[piv], x[col]);
        }
        const double d = a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double fac = a[r * n + col] / d;
            if (fac == 0.0) continue;
            a[r * n + col] = 0.0;
            for (std::size_t j = col + 1; j < n; ++j) a[r * n + j] -= fac * a[col * n + j];
            x[r] -= fac * x[col];
        }
    }
    for (std::size_t ii = n; ii-- > 0;) {
        Complex acc = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) acc -= a[ii * n + j] * x[j];
        x[ii] = acc / a[ii * n + ii];
    }
    return x;
}

class MatrixEulerCore final : public FamilyCore {
  public:
    MatrixEulerCore(const Grid& grid, DenseMatrix L) : grid_(grid), L_(std::move(L)) {
        if (L_.n() != grid.size()) throw std::invalid_argument("matrix_euler_family: matrix size must match the grid");
    }
    GridFunction apply(double t, const GridFunction& f) const override {
        return apply_at_node_times(std::vector<double>(grid_.size(), t), f);
    }
    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const override {
        std::vector<Complex> lf = L_.matvec(f.values());
        std::vector<Complex> out(grid_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i] + ts[i] * lf[i];
        return GridFunction(grid_, std::move(out), ScalarKind::Complex);
    }
    const DenseMatrix& matrix() const { return L_; }

  private:
    Grid grid_;
    DenseMatrix L_;
};

class MatrixResolventCore final : public FamilyCore {
  public:
    MatrixResolventCore(const Grid& grid, DenseMatrix L) : grid_(grid), L_(std::move(L)) {
        if (L_.n() != grid.size())
            throw std::invalid_argument("matrix_resolvent_family: matrix size must match the grid");
    }
    GridFunction apply(double t, const GridFunction& f) const override {
        return GridFunction(grid_, solve_resolvent(L_, t, f.values()), ScalarKind::Complex);
    }
    const DenseMatrix& matrix() const { return L_; }

  private:
    Grid grid_;
    DenseMatrix L_;
};

}  // namespace detail

inline ChernoffFamily matrix_euler_family(const Grid& grid, std::vector<double> dense) {
    auto core = std::make_shared<detail::MatrixEulerCore>(grid, detail::DenseMatrix(grid.size(), std::move(dense)));
    FamilyTraits tr;
    tr.name = "matrix-euler";
    tr.growth_bound = core->matrix().inf_norm();
    tr.kernel_style = true;
    tr.preserves_real = true;
    tr.self_adjoint = core->matrix().symmetric();
    return ChernoffFamily(grid, tr, std::move(core));
}

inline ChernoffFamily matrix_resolvent_family(const Grid& grid, std::vector<double> dense) {
    auto core =
        std::make_shared<detail::MatrixResolventCore>(grid, detail::DenseMatrix(grid.size(), std::move(dense)));
    FamilyTraits tr;
    tr.name = "matrix-resolvent";
    tr.growth_bound = core->matrix().inf_norm();
    tr.preserves_real = true;
    tr.self_adjoint = core->matrix().symmetric();
    return ChernoffFamily(grid, tr, std::move(core));
}

/// Periodic 3-point Laplacian times `scale` as a dense matrix, the stock
/// bounded-generator example for the matrix families.
inline std::vector<double> periodic_laplacian_matrix(const Grid& grid, double scale) {
    if (grid.dim != 1) throw std::invalid_argument("periodic_laplacian_matrix: 1D grids only");
    const std::size_t m = grid.m;
    const double h2 = grid.spacing(0) * grid.spacing(0);
    std::vector<double> a(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        a[i * m + i] = -2.0 * scale / h2;
        a[i * m + (i + 1) % m] = scale / h2;
        a[i * m + (i + m - 1) % m] = scale / h2;
    }
    return a;
}

}  // namespace chernoff
