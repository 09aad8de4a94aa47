#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chernoff/families.hpp"

namespace chernoff {

// ---------------------------------------------------------------------------
// the Chernoff iteration [F(t/n)]^n

namespace detail {

inline void check_finite_state(const GridFunction& g, int step, const std::string& name) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Complex v = g[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw std::runtime_error(name + ": non-finite state after iteration step " + std::to_string(step) +
                                     " at node " + std::to_string(i));
    }
}

}  // namespace detail

/// n sequential applications of F at step t/n. Families with an exact
/// closed-form iterate (the rotated symbol family) take their single-pass
/// route; everyone else walks the steps, with a finiteness check per step.
inline GridFunction chernoff_iterate(const ChernoffFamily& family, double t, int n, const GridFunction& f0) {
    if (!(t >= 0.0)) throw std::invalid_argument("chernoff_iterate: t must be nonnegative");
    if (n < 0) throw std::invalid_argument("chernoff_iterate: n must be positive");
    if (t == 0.0) return f0;
    if (n == 0) throw std::invalid_argument("chernoff_iterate: n must be positive when t > 0");

    if (auto fast = family.fast_iterate(t, n, f0)) return std::move(*fast);

    const double step = t / static_cast<double>(n);
    GridFunction g = f0;
    for (int k = 1; k <= n; ++k) {
        g = family.apply(step, g);
        detail::check_finite_state(g, k, family.name());
    }
    return g;
}

// ---------------------------------------------------------------------------
// convergence diagnostics

/// Errors of [F(t/n)]^n f0 against a reference, with the observed order
/// fitted by least squares over the decreasing tail of the n-list.
struct ConvergenceReport {
    struct Entry {
        int n = 0;
        double sup_error = 0.0;
        double l2_error = 0.0;
        double runtime_ms = 0.0;
    };

    double t = 0.0;
    std::string reference;
    std::string norm_kind = "sup";  // which norm the headline order refers to
    std::vector<Entry> entries;
    bool exact = false;  // all errors below 1e-10; order fit skipped
    std::optional<double> order_sup;
    std::optional<double> order_l2;

    std::optional<double> order() const { return norm_kind == "l2" ? order_l2 : order_sup; }
};

namespace detail {

/// Least-squares slope fit of log(error) vs log(n) over the longest
/// contiguous run of strictly decreasing errors (ties broken toward larger
/// n), restricted to that run's largest decade.
inline std::optional<double> fit_observed_order(const std::vector<int>& ns, const std::vector<double>& errs) {
    const std::size_t count = ns.size();
    if (count < 2) return std::nullopt;

    std::size_t best_lo = 0, best_hi = 0;  // [lo, hi] inclusive
    std::size_t lo = 0;
    for (std::size_t i = 1; i <= count; ++i) {
        const bool extends = i < count && errs[i] < errs[i - 1] && errs[i] > 0.0 && errs[i - 1] > 0.0;
        if (!extends) {
            if (i - 1 - lo >= best_hi - best_lo) {
                best_lo = lo;
                best_hi = i - 1;
            }
            lo = i;
        }
    }
    if (best_hi == best_lo) return std::nullopt;

    // largest decade within the run
    const double n_hi = static_cast<double>(ns[best_hi]);
    std::size_t start = best_lo;
    while (static_cast<double>(ns[start]) < n_hi / 10.0 && start < best_hi) ++start;
    if (best_hi - start < 1) start = best_lo;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double cnt = static_cast<double>(best_hi - start + 1);
    for (std::size_t i = start; i <= best_hi; ++i) {
        const double x = std::log(static_cast<double>(ns[i]));
        const double y = std::log(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = cnt * sxx - sx * sx;
    if (denom == 0.0) return std::nullopt;
    return -(cnt * sxy - sx * sy) / denom;
}

}  // namespace detail

/// Run [F(t/n)]^n f0 for every n in `ns` and record sup/l2 errors against the
/// reference. Flags the study "exact" (and skips the order fit) when every
/// error is below 1e-10.
inline ConvergenceReport convergence_study(const ChernoffFamily& family, double t, const GridFunction& f0,
                                           const std::vector<int>& ns, const GridFunction& reference,
                                           const std::string& reference_description = "reference",
                                           const std::string& norm_kind = "sup") {
    if (ns.empty()) throw std::invalid_argument("convergence_study: the n-list is empty");
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (ns[i] <= 0) throw std::invalid_argument("convergence_study: n values must be positive");
        if (i > 0 && ns[i] <= ns[i - 1]) throw std::invalid_argument("convergence_study: the n-list must be ascending");
    }
    if (reference.grid() != f0.grid()) throw std::invalid_argument("convergence_study: reference grid mismatch");
    if (norm_kind != "sup" && norm_kind != "l2") throw std::invalid_argument("convergence_study: norm must be 'sup' or 'l2'");

    ConvergenceReport report;
    report.t = t;
    report.reference = reference_description;
    report.norm_kind = norm_kind;

    for (int n : ns) {
        GridFunction g = chernoff_iterate(family, t, n, f0);
        ConvergenceReport::Entry e;
        e.n = n;
        e.sup_error = sup_norm(g - reference);
        e.l2_error = l2_norm(g - reference);
        report.entries.push_back(e);
    }

    report.exact = true;
    for (const auto& e : report.entries)
        if (std::max(e.sup_error, e.l2_error) >= 1e-10) report.exact = false;

    if (!report.exact) {
        std::vector<double> sup_errs, l2_errs;
        for (const auto& e : report.entries) {
            sup_errs.push_back(e.sup_error);
            l2_errs.push_back(e.l2_error);
        }
        report.order_sup = detail::fit_observed_order(ns, sup_errs);
        report.order_l2 = detail::fit_observed_order(ns, l2_errs);
    }
    return report;
}

/// Residuals of the Chernoff derivative: ||(F(t)f0 - f0)/t - Lf0||_sup for a
/// descending list of small t, plus a monotone-decrease flag.
struct DerivativeCheck {
    std::vector<std::pair<double, double>> residuals;  // (t, residual)
    bool monotone = false;
};

inline DerivativeCheck derivative_check(const ChernoffFamily& family, const GridFunction& lf0,
                                        const GridFunction& f0, const std::vector<double>& ts) {
    if (ts.empty()) throw std::invalid_argument("derivative_check: the t-list is empty");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (!(ts[i] > 0.0)) throw std::invalid_argument("derivative_check: t values must be positive");
        if (i > 0 && ts[i] >= ts[i - 1]) throw std::invalid_argument("derivative_check: the t-list must be descending");
    }
    if (lf0.grid() != f0.grid()) throw std::invalid_argument("derivative_check: Lf0 grid mismatch");

    DerivativeCheck out;
    for (double t : ts) {
        GridFunction num = (1.0 / t) * (family.apply(t, f0) - f0);
        out.residuals.emplace_back(t, sup_norm(num - lf0));
    }
    out.monotone = true;
    for (std::size_t i = 1; i < out.residuals.size(); ++i)
        if (out.residuals[i].second >= out.residuals[i - 1].second) out.monotone = false;
    return out;
}

}  // namespace chernoff
