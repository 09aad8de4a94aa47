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

#include "chernoff/families.hpp"

namespace chernoff {

// ---------------------------------------------------------------------------
// compose: F(t) = F_1(t) ∘ ... ∘ F_m(t), the splitting family. The list is
// applied right to left (F_m acts first).

namespace detail {

class ComposeCore final : public FamilyCore {
  public:
    explicit ComposeCore(std::vector<ChernoffFamily> fams) : fams_(std::move(fams)) {}
    GridFunction apply(double t, const GridFunction& f) const override {
        GridFunction g = f;
        for (std::size_t i = fams_.size(); i-- > 0;) g = fams_[i].apply(t, g);
        return g;
    }

  private:
    std::vector<ChernoffFamily> fams_;
};

}  // namespace detail

inline ChernoffFamily compose(std::vector<ChernoffFamily> families) {
    if (families.empty()) throw std::invalid_argument("compose: need at least one family");
    const Grid grid = families.front().grid();
    FamilyTraits tr;
    tr.name = "compose(";
    double w = 0.0;
    bool real = true;
    for (std::size_t i = 0; i < families.size(); ++i) {
        if (families[i].grid() != grid) throw std::invalid_argument("compose: families live on different grids");
        tr.name += (i ? ", " : "") + families[i].name();
        w += families[i].growth_bound();
        real = real && families[i].preserves_real();
    }
    tr.name += ")";
    tr.growth_bound = w;
    tr.preserves_real = real;
    return ChernoffFamily(grid, tr, std::make_shared<detail::ComposeCore>(std::move(families)));
}

// ---------------------------------------------------------------------------
// splitting variants:
//   H^θ(t) = F_1(θt) ∘ F_2(t) ∘ F_1((1-θ)t)          (θ = 1/2: Strang)
//   G^τ(t) = τ F_1(t)F_2(t) + (1-τ) F_2(t)F_1(t)

namespace detail {

class ThetaSplitCore final : public FamilyCore {
  public:
    ThetaSplitCore(ChernoffFamily f1, ChernoffFamily f2, double theta)
        : f1_(std::move(f1)), f2_(std::move(f2)), theta_(theta) {}
    GridFunction apply(double t, const GridFunction& f) const override {
        return f1_.apply(theta_ * t, f2_.apply(t, f1_.apply((1.0 - theta_) * t, f)));
    }

  private:
    ChernoffFamily f1_, f2_;
    double theta_;
};

class ConvexSplitCore final : public FamilyCore {
  public:
    ConvexSplitCore(ChernoffFamily f1, ChernoffFamily f2, double tau)
        : f1_(std::move(f1)), f2_(std::move(f2)), tau_(tau) {}
    GridFunction apply(double t, const GridFunction& f) const override {
        GridFunction a = f1_.apply(t, f2_.apply(t, f));
        GridFunction b = f2_.apply(t, f1_.apply(t, f));
        return tau_ * a + (1.0 - tau_) * b;
    }

  private:
    ChernoffFamily f1_, f2_;
    double tau_;
};

inline void check_split_pair(const ChernoffFamily& f1, const ChernoffFamily& f2, double param, const char* who,
                             const char* pname) {
    if (f1.grid() != f2.grid()) throw std::invalid_argument(std::string(who) + ": families live on different grids");
    if (!(param >= 0.0 && param <= 1.0))
        throw std::invalid_argument(std::string(who) + ": " + pname + " = " + std::to_string(param) +
                                    " outside [0, 1]");
}

}  // namespace detail

inline ChernoffFamily theta_splitting(ChernoffFamily f1, ChernoffFamily f2, double theta) {
    detail::check_split_pair(f1, f2, theta, "theta_splitting", "theta");
    FamilyTraits tr;
    tr.name = "theta_split(" + f1.name() + ", " + f2.name() + "; theta=" + std::to_string(theta) + ")";
    tr.growth_bound = f1.growth_bound() + f2.growth_bound();
    tr.preserves_real = f1.preserves_real() && f2.preserves_real();
    const Grid grid = f1.grid();
    return ChernoffFamily(grid, tr, std::make_shared<detail::ThetaSplitCore>(std::move(f1), std::move(f2), theta));
}

inline ChernoffFamily convex_splitting(ChernoffFamily f1, ChernoffFamily f2, double tau) {
    detail::check_split_pair(f1, f2, tau, "convex_splitting", "tau");
    FamilyTraits tr;
    tr.name = "convex_split(" + f1.name() + ", " + f2.name() + "; tau=" + std::to_string(tau) + ")";
    tr.growth_bound = f1.growth_bound() + f2.growth_bound();
    tr.preserves_real = f1.preserves_real() && f2.preserves_real();
    const Grid grid = f1.grid();
    return ChernoffFamily(grid, tr, std::make_shared<detail::ConvexSplitCore>(std::move(f1), std::move(f2), tau));
}

// ---------------------------------------------------------------------------
// multiplicative perturbation F♯(t)φ(q) = (F(a(q) t) φ)(q): the kernel's time
// parameter varies with the output node. Requires a kernel-style family.

namespace detail {

class PerturbCore final : public FamilyCore {
  public:
    PerturbCore(ChernoffFamily inner, std::vector<double> a) : inner_(std::move(inner)), a_(std::move(a)) {}
    GridFunction apply(double t, const GridFunction& f) const override {
        std::vector<double> ts(a_.size());
        for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = a_[i] * t;
        return inner_.apply_at_node_times(ts, f);
    }
    GridFunction apply_at_node_times(const std::vector<double>& ts, const GridFunction& f) const override {
        std::vector<double> scaled(a_.size());
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = a_[i] * ts[i];
        return inner_.apply_at_node_times(scaled, f);
    }

  private:
    ChernoffFamily inner_;
    std::vector<double> a_;
};

}  // namespace detail

inline ChernoffFamily multiplicative_perturbation(ChernoffFamily inner, const std::function<double(Point)>& a,
                                                  double a_floor = 0.0) {
    if (!inner.kernel_style())
        throw std::invalid_argument(
            "multiplicative_perturbation: family does not expose per-output-point kernel evaluation");
    const Grid grid = inner.grid();
    std::vector<double> samples = detail::sample_coefficient(grid, a, 1.0, "multiplicative_perturbation");
    double amax = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i] > 0.0) || samples[i] < a_floor)
            throw std::invalid_argument("multiplicative_perturbation: multiplier must satisfy a(x) >= a_0 > 0, violated at node " +
                                        std::to_string(i));
        amax = std::max(amax, samples[i]);
    }
    FamilyTraits tr;
    tr.name = "perturbed(" + inner.name() + ")";
    tr.growth_bound = amax * inner.growth_bound();
    tr.kernel_style = true;
    tr.preserves_real = inner.preserves_real();
    return ChernoffFamily(grid, tr, std::make_shared<detail::PerturbCore>(std::move(inner), std::move(samples)));
}

inline ChernoffFamily multiplicative_perturbation1d(ChernoffFamily inner, const std::function<double(double)>& a,
                                                    double a_floor = 0.0) {
    return multiplicative_perturbation(std::move(inner), [a](Point p) { return a(p[0]); }, a_floor);
}

// ---------------------------------------------------------------------------
// Dirichlet restriction F*(t) = R ∘ F(t) ∘ E*: extension by zero outside Ω,
// kernel application, truncation back to Ω (the measure form of the Feynman
// formula over Ω).

/// Indicator of Ω on the grid; Ω is a finite union of closed axis-aligned
/// intervals (1D) or rectangles (2D).
class DomainMask {
  public:
    struct Box {
        double lo0, hi0;
        double lo1 = 0.0, hi1 = 0.0;
    };

    DomainMask(const Grid& grid, const std::vector<Box>& boxes) : grid_(grid), inside_(grid.size(), 0) {
        if (boxes.empty()) throw std::invalid_argument("DomainMask: no boxes given");
        const double eps = 1e-12;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const Point p = grid.node(i);
            for (const auto& b : boxes) {
                const bool in0 = p[0] >= b.lo0 - eps && p[0] <= b.hi0 + eps;
                const bool in1 = grid.dim == 1 || (p[1] >= b.lo1 - eps && p[1] <= b.hi1 + eps);
                if (in0 && in1) {
                    inside_[i] = 1;
                    break;
                }
            }
        }
        std::size_t count = 0;
        for (auto v : inside_) count += v;
        if (count == 0) throw std::invalid_argument("DomainMask: domain contains no grid nodes");
    }

    const Grid& grid() const { return grid_; }
    bool inside(std::size_t i) const { return inside_[i] != 0; }

    GridFunction cut(const GridFunction& f) const {
        if (f.grid() != grid_) throw std::invalid_argument("DomainMask: grid mismatch");
        std::vector<Complex> v(f.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = inside_[i] ? f[i] : Complex(0.0, 0.0);
        return GridFunction(grid_, std::move(v), f.kind());
    }

  private:
    Grid grid_;
    std::vector<char> inside_;
};

namespace detail {

class DirichletCore final : public FamilyCore {
  public:
    DirichletCore(ChernoffFamily inner, DomainMask mask) : inner_(std::move(inner)), mask_(std::move(mask)) {}
    GridFunction apply(double t, const GridFunction& f) const override {
        return mask_.cut(inner_.apply(t, mask_.cut(f)));
    }

  private:
    ChernoffFamily inner_;
    DomainMask mask_;
};

}  // namespace detail

inline ChernoffFamily dirichlet_restrict(ChernoffFamily inner, DomainMask mask) {
    if (!inner.kernel_style())
        throw std::invalid_argument("dirichlet_restrict: family is not an integral (kernel-style) operator");
    if (mask.grid() != inner.grid()) throw std::invalid_argument("dirichlet_restrict: mask grid mismatch");
    FamilyTraits tr;
    tr.name = "dirichlet(" + inner.name() + ")";
    tr.growth_bound = inner.growth_bound();
    tr.kernel_style = false;
    tr.preserves_real = inner.preserves_real();
    const Grid grid = inner.grid();
    return ChernoffFamily(grid, tr, std::make_shared<detail::DirichletCore>(std::move(inner), std::move(mask)));
}

// ---------------------------------------------------------------------------
// rotation to the Schrödinger group: F*(t) = e^{i(F(t) - Id)}.
//  - series mode sums Σ_k i^k (F(t)-Id)^k f / k!, truncating when the term
//    falls below 1e-14 ||f|| (cap 200 terms);
//  - symbol mode multiplies by e^{i(e^{-tH(p)} - 1)} in frequency space, and
//    its n-fold iterate is the single-pass symbol exp{in(e^{-tH(p)/n} - 1)}.

enum class RotationMode { Series, Symbol };

namespace detail {

class RotateSeriesCore final : public FamilyCore {
  public:
    explicit RotateSeriesCore(ChernoffFamily inner) : inner_(std::move(inner)) {}

    GridFunction apply(double t, const GridFunction& f) const override {
        const double target = 1e-14 * sup_norm(f);
        GridFunction term = f;  // (F(t)-Id)^k f
        std::vector<Complex> acc = f.values();
        Complex coef(1.0, 0.0);
        for (int k = 1; k <= 200; ++k) {
            term = inner_.apply(t, term) - term;
            coef *= Complex(0.0, 1.0) / static_cast<double>(k);
            double tail = 0.0;
            for (const Complex& v : term.values()) {
                if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                    throw std::runtime_error("rotate: operator exponential series did not converge within 200 terms "
                                             "(term " + std::to_string(k) + " is non-finite)");
                tail = std::max(tail, std::abs(v));
            }
            tail *= std::abs(coef);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += coef * term[i];
            if (tail < target) {
                return GridFunction(inner_.grid(), std::move(acc), ScalarKind::Complex);
            }
        }
        throw std::runtime_error("rotate: operator exponential series did not converge within 200 terms");
    }

  private:
    ChernoffFamily inner_;
};

class RotateSymbolCore final : public FamilyCore {
  public:
    RotateSymbolCore(Grid grid, std::vector<Complex> bins) : grid_(std::move(grid)), bins_(std::move(bins)) {}

    GridFunction apply(double t, const GridFunction& f) const override { return multiply(t, 1, f); }

    std::optional<GridFunction> fast_iterate(double t, int n, const GridFunction& f0) const override {
        if (n <= 0) return std::nullopt;
        return multiply(t / static_cast<double>(n), n, f0);
    }

  private:
    // applies the symbol exp{i k (e^{-sH} - 1)} with k = n, s = t/n
    GridFunction multiply(double s, int n, const GridFunction& f) const {
        std::vector<Complex> v = f.values();
        fft_any(v, grid_, false);
        const Complex iu(0.0, 1.0);
        for (std::size_t k = 0; k < v.size(); ++k) {
            const Complex z = iu * (static_cast<double>(n) * (std::exp(-s * bins_[k]) - 1.0));
            v[k] *= std::exp(z);
        }
        fft_any(v, grid_, true);
        const double inv = 1.0 / static_cast<double>(v.size());
        for (auto& x : v) x *= inv;
        return GridFunction(grid_, std::move(v), ScalarKind::Complex);
    }

    Grid grid_;
    std::vector<Complex> bins_;
};

}  // namespace detail

inline ChernoffFamily rotate(ChernoffFamily inner, RotationMode mode) {
    const Grid grid = inner.grid();
    FamilyTraits tr;
    tr.growth_bound = 0.0;  // unitary
    tr.preserves_real = false;
    if (mode == RotationMode::Series) {
        if (!inner.self_adjoint())
            throw std::invalid_argument("rotate: series mode needs a self-adjoint-representing family "
                                        "(real symmetric kernel or real symbol)");
        tr.name = "rotate_series(" + inner.name() + ")";
        return ChernoffFamily(grid, tr, std::make_shared<detail::RotateSeriesCore>(std::move(inner)));
    }
    const std::vector<Complex>* bins = inner.symbol_bins();
    if (bins == nullptr)
        throw std::invalid_argument("rotate: symbol mode needs an x-independent symbol family");
    for (const auto& h : *bins)
        if (h.imag() != 0.0) throw std::invalid_argument("rotate: symbol mode needs a real-valued symbol");
    tr.name = "rotate_symbol(" + inner.name() + ")";
    return ChernoffFamily(grid, tr, std::make_shared<detail::RotateSymbolCore>(grid, *bins));
}

// ---------------------------------------------------------------------------
// subordination

/// Bernstein triplet (σ, λ, μ) of a subordinator, with μ either a finite
/// discrete measure on (0,∞) or the analytic half-stable density
///   g_t(s) = t/(2√π) s^{-3/2} e^{-t²/(4s)}   (Laplace transform e^{-t√z}).
/// The step-count function defaults to m(t) = ⌈1/t⌉.
struct SubordinatorSpec {
    struct Atom {
        double s = 1.0;
        double weight = 1.0;
    };

    double sigma = 0.0;
    double lambda = 0.0;
    std::vector<Atom> atoms;      // bounded-measure path
    bool half_stable = false;     // analytic-density path
    int quadrature_nodes = 64;    // log-spaced nodes for the density path
    std::function<int(double)> steps;  // m(t); default ⌈1/t⌉

    int step_count(double t) const {
        if (steps) return std::max(1, steps(t));
        return std::max(1, static_cast<int>(std::ceil(1.0 / t)));
    }

    void validate() const {
        if (!(sigma >= 0.0) || !(lambda >= 0.0))
            throw std::invalid_argument("SubordinatorSpec: sigma and lambda must be nonnegative");
        for (const auto& a : atoms) {
            if (!(a.s > 0.0)) throw std::invalid_argument("SubordinatorSpec: atoms must sit in (0, infinity)");
            if (!(a.weight >= 0.0)) throw std::invalid_argument("SubordinatorSpec: atom weights must be nonnegative");
        }
        if (half_stable && !atoms.empty())
            throw std::invalid_argument("SubordinatorSpec: choose either the analytic density or a discrete measure");
        if (quadrature_nodes < 2) throw std::invalid_argument("SubordinatorSpec: need at least 2 quadrature nodes");
    }

    double atom_mass() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.weight;
        return s;
    }

    static SubordinatorSpec half_stable_spec(int quad_nodes = 64) {
        SubordinatorSpec s;
        s.half_stable = true;
        s.quadrature_nodes = quad_nodes;
        return s;
    }
};

/// Density of the 1/2-stable subordinator, g_t(s) = t/(2√π) s^{-3/2} e^{-t²/(4s)}.
inline double half_stable_subordinator_density(double t, double s) {
    if (!(t > 0.0)) throw std::invalid_argument("half_stable_subordinator_density: t must be positive");
    if (s <= 0.0) return 0.0;  // continuous extension at s = 0
    return t / (2.0 * std::sqrt(detail::kPi)) * std::pow(s, -1.5) * std::exp(-t * t / (4.0 * s));
}

namespace detail {

inline GridFunction repeated_apply(const ChernoffFamily& f, double step, int count, const GridFunction& g) {
    GridFunction x = g;
    for (int k = 0; k < count; ++k) x = f.apply(step, x);
    return x;
}

/// Log-spaced trapezoid nodes/weights for the half-stable density at time t,
/// covering all but <= eps of the mass and renormalized to unit mass so the
/// subordinated operator stays mass-preserving.
struct DensityQuadrature {
    std::vector<double> s;
    std::vector<double> w;
};

inline DensityQuadrature half_stable_quadrature(double t, int nodes, double eps = 1e-8) {
    // tail bounds: ∫_0^δ g = erfc(t/(2√δ)), ∫_S^∞ g ≈ t/√(πS)
    const double z = 4.3;  // erfc(4.3) ≈ 1.1e-9
    const double s_min = t * t / (4.0 * z * z);
    const double s_max = 16.0 * t * t / (kPi * eps * eps);  // upper tail ≈ eps/4
    const double covered = std::erfc(t / (2.0 * std::sqrt(s_max))) - std::erfc(t / (2.0 * std::sqrt(s_min)));
    if (!(covered >= 1.0 - eps))
        throw std::runtime_error("subordinate_known_density: requested density mass coverage is unreachable");

    DensityQuadrature q;
    q.s.resize(nodes);
    q.w.resize(nodes);
    const double u0 = std::log(s_min), u1 = std::log(s_max);
    const double du = (u1 - u0) / static_cast<double>(nodes - 1);
    double mass = 0.0;
    for (int i = 0; i < nodes; ++i) {
        const double u = u0 + du * static_cast<double>(i);
        const double s = std::exp(u);
        const double end = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
        q.s[i] = s;
        q.w[i] = end * du * s * half_stable_subordinator_density(t, s);
        mass += q.w[i];
    }
    for (auto& w : q.w) w /= mass;
    return q;
}

class SubordinateDensityCore final : public FamilyCore {
  public:
    SubordinateDensityCore(ChernoffFamily inner, SubordinatorSpec sub) : inner_(std::move(inner)), sub_(std::move(sub)) {}

    GridFunction apply(double t, const GridFunction& f) const override {
        GridFunction g = f;
        if (sub_.half_stable) {
            const int mt = sub_.step_count(t);
            const DensityQuadrature q = half_stable_quadrature(t, sub_.quadrature_nodes);
            GridFunction acc = GridFunction::zeros(inner_.grid(), ScalarKind::Complex);
            for (std::size_t i = 0; i < q.s.size(); ++i) {
                GridFunction term = repeated_apply(inner_, q.s[i] / static_cast<double>(mt), mt, g);
                for (std::size_t j = 0; j < acc.size(); ++j) acc.values()[j] += q.w[i] * term[j];
            }
            g = std::move(acc);
        }
        if (sub_.lambda != 0.0) g = inner_.apply(sub_.lambda * t, g);
        if (sub_.sigma != 0.0) g = std::exp(-sub_.sigma * t) * g;
        return g;
    }

  private:
    ChernoffFamily inner_;
    SubordinatorSpec sub_;
};

class SubordinateMeasureCore final : public FamilyCore {
  public:
    SubordinateMeasureCore(ChernoffFamily inner, SubordinatorSpec sub) : inner_(std::move(inner)), sub_(std::move(sub)) {}

    GridFunction apply(double t, const GridFunction& f) const override {
        GridFunction g = f;
        if (!sub_.atoms.empty()) {
            const int mt = sub_.step_count(t);
            GridFunction correction = GridFunction::zeros(inner_.grid(), ScalarKind::Complex);
            for (const auto& atom : sub_.atoms) {
                if (atom.weight == 0.0) continue;
                GridFunction term = repeated_apply(inner_, atom.s / static_cast<double>(mt), mt, f);
                for (std::size_t j = 0; j < correction.size(); ++j)
                    correction.values()[j] += atom.weight * (term[j] - f[j]);
            }
            g = f + t * correction;
        }
        if (sub_.lambda != 0.0) g = inner_.apply(sub_.lambda * t, g);
        if (sub_.sigma != 0.0) g = std::exp(-sub_.sigma * t) * g;
        return g;
    }

  private:
    ChernoffFamily inner_;
    SubordinatorSpec sub_;
};

}  // namespace detail

/// Thm-style Case 1: 𝓕(t) = e^{-σt} ∘ F(λt) ∘ ∫ [F(s/m(t))]^{m(t)} η⁰_t(ds),
/// for a subordinator with known convolution-semigroup density (half-stable).
inline ChernoffFamily subordinate_known_density(ChernoffFamily inner, SubordinatorSpec sub) {
    sub.validate();
    if (!sub.atoms.empty())
        throw std::invalid_argument("subordinate_known_density: spec carries a discrete measure; use subordinate_bounded_measure");
    FamilyTraits tr;
    tr.name = "subordinated_density(" + inner.name() + ")";
    tr.growth_bound = 0.0;
    tr.preserves_real = inner.preserves_real();
    const Grid grid = inner.grid();
    return ChernoffFamily(grid, tr, std::make_shared<detail::SubordinateDensityCore>(std::move(inner), std::move(sub)));
}

/// Case 2 for a bounded measure:
/// 𝓕_μ(t)φ = e^{-σt} F(λt)( φ + t Σ_i (F^{m(t)}(s_i/m(t))φ - φ) μ_i ).
inline ChernoffFamily subordinate_bounded_measure(ChernoffFamily inner, SubordinatorSpec sub) {
    sub.validate();
    if (sub.half_stable)
        throw std::invalid_argument("subordinate_bounded_measure: spec carries an analytic density; use subordinate_known_density");
    if (sub.atoms.empty() && sub.sigma == 0.0 && sub.lambda == 0.0)
        throw std::invalid_argument("subordinate_bounded_measure: empty measure with sigma = lambda = 0 generates nothing");
    FamilyTraits tr;
    tr.name = "subordinated_measure(" + inner.name() + ")";
    tr.growth_bound = 2.0 * sub.atom_mass();
    tr.preserves_real = inner.preserves_real();
    const Grid grid = inner.grid();
    return ChernoffFamily(grid, tr, std::make_shared<detail::SubordinateMeasureCore>(std::move(inner), std::move(sub)));
}

}  // namespace chernoff
