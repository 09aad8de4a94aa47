#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chernoff/combinators.hpp"
#include "chernoff/stochastic.hpp"
#include "test_helpers.hpp"

using namespace chernoff;

namespace {
constexpr double kPi = detail::kPi;
}

TEST_CASE("euler_maruyama") {
    Grid box = Grid::line(-16.0, 16.0, 256);

    SECTION("identical seeds give identical ensembles; different seeds differ") {
        GeneratorSpec spec = GeneratorSpec::constant1d(0.5);
        spec.c = nullptr;
        PathEnsemble a = euler_maruyama(box, spec, {0.0, 0.0}, 0.5, 16, 64, 42);
        PathEnsemble b = euler_maruyama(box, spec, {0.0, 0.0}, 0.5, 16, 64, 42);
        PathEnsemble c = euler_maruyama(box, spec, {0.0, 0.0}, 0.5, 16, 64, 43);
        for (std::size_t i = 0; i < a.terminal.size(); ++i) REQUIRE(a.terminal[i][0] == b.terminal[i][0]);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.terminal.size(); ++i) any_diff = any_diff || a.terminal[i][0] != c.terminal[i][0];
        REQUIRE(any_diff);
    }

    SECTION("threaded generation is bitwise identical to serial") {
        GeneratorSpec spec = GeneratorSpec::make1d([](double x) { return 0.5 * (1.0 + 0.3 * std::sin(x)); },
                                                   [](double x) { return 0.2 * std::cos(x); }, nullptr, 0.35, 0.65);
        PathEnsemble serial = euler_maruyama(box, spec, {0.1, 0.0}, 0.5, 8, 4096, 7, 1);
        PathEnsemble threaded = euler_maruyama(box, spec, {0.1, 0.0}, 0.5, 8, 4096, 7, 4);
        for (std::size_t i = 0; i < serial.terminal.size(); ++i)
            REQUIRE(serial.terminal[i][0] == threaded.terminal[i][0]);
    }

    SECTION("Brownian moments: mean 0, variance 2At within 4 standard errors") {
        const std::size_t paths = 100000;
        GeneratorSpec spec = GeneratorSpec::constant1d(0.5);
        PathEnsemble e = euler_maruyama(box, spec, {0.0, 0.0}, 1.0, 32, paths, 1234);
        double mean = 0.0;
        for (const auto& x : e.terminal) mean += x[0];
        mean /= static_cast<double>(paths);
        double var = 0.0;
        for (const auto& x : e.terminal) var += (x[0] - mean) * (x[0] - mean);
        var /= static_cast<double>(paths - 1);
        const double se_mean = 1.0 / std::sqrt(static_cast<double>(paths));
        const double se_var = std::sqrt(2.0 / static_cast<double>(paths));
        REQUIRE(std::abs(mean) <= 4.0 * se_mean);
        REQUIRE(std::abs(var - 1.0) <= 4.0 * se_var);  // Var = 2At = 1
    }

    SECTION("single-step drift: mean is x0 - Bt") {
        const std::size_t paths = 50000;
        const double eps = 1e-4, t = 0.7, b = 0.8, x0 = 0.2;
        GeneratorSpec spec = GeneratorSpec::constant1d(eps, b);
        PathEnsemble e = euler_maruyama(box, spec, {x0, 0.0}, t, 1, paths, 99);
        double mean = 0.0;
        for (const auto& x : e.terminal) mean += x[0];
        mean /= static_cast<double>(paths);
        const double se = std::sqrt(2.0 * eps * t) / std::sqrt(static_cast<double>(paths));
        REQUIRE(std::abs(mean - (x0 - b * t)) <= 4.0 * se + 1e-12);
    }

    SECTION("2D diffusion with anisotropic constant matrix") {
        Grid box2 = Grid::square(-12.0, 12.0, 32);
        GeneratorSpec spec;
        spec.a11 = [](Point) { return 0.6; };
        spec.a12 = [](Point) { return 0.2; };
        spec.a22 = [](Point) { return 0.5; };
        spec.a0 = 0.2;
        spec.A0 = 0.9;
        const std::size_t paths = 60000;
        PathEnsemble e = euler_maruyama(box2, spec, {0.0, 0.0}, 1.0, 16, paths, 5);
        double cxx = 0.0, cxy = 0.0, cyy = 0.0;
        for (const auto& x : e.terminal) {
            cxx += x[0] * x[0];
            cxy += x[0] * x[1];
            cyy += x[1] * x[1];
        }
        cxx /= paths;
        cxy /= paths;
        cyy /= paths;
        // covariance of the terminal state is 2At
        REQUIRE(cxx == Catch::Approx(1.2).margin(4.0 * 1.2 * std::sqrt(2.0 / paths)));
        REQUIRE(cyy == Catch::Approx(1.0).margin(4.0 * 1.0 * std::sqrt(2.0 / paths)));
        REQUIRE(cxy == Catch::Approx(0.4).margin(4.0 * std::sqrt(2.0 / paths)));
    }

    SECTION("killing rates and runaway paths are rejected") {
        GeneratorSpec killed = GeneratorSpec::constant1d(0.5, 0.0, 0.3);
        REQUIRE_THROWS_WITH(euler_maruyama(box, killed, {0.0, 0.0}, 0.5, 8, 16, 1),
                            Catch::Matchers::ContainsSubstring("identically zero"));

        Grid tiny = Grid::line(-0.25, 0.25, 8);
        GeneratorSpec wild = GeneratorSpec::constant1d(50.0);
        REQUIRE_THROWS_WITH(euler_maruyama(tiny, wild, {0.0, 0.0}, 4.0, 64, 64, 3),
                            Catch::Matchers::ContainsSubstring("larger box"));
    }
}

TEST_CASE("mc_functional") {
    Grid g = Grid::line(-16.0, 16.0, 512);
    GeneratorSpec spec = GeneratorSpec::constant1d(0.5);

    SECTION("constant functional has mean 1 and zero standard error") {
        PathEnsemble e = euler_maruyama(g, spec, {0.0, 0.0}, 0.5, 8, 500, 11);
        GridFunction one = sample1d(g, [](double) { return 1.0; });
        auto [mean, stderr_] = mc_functional(e, one);
        REQUIRE(mean == Catch::Approx(1.0).epsilon(1e-14));
        REQUIRE(stderr_ < 1e-14);
    }

    SECTION("martingale property: linear functional, zero drift") {
        const double x0 = 0.3;
        PathEnsemble e = euler_maruyama(g, spec, {x0, 0.0}, 0.5, 16, 40000, 21);
        GridFunction lin = sample1d(g, [](double x) { return x; });
        auto [mean, stderr_] = mc_functional(e, lin);
        REQUIRE(std::abs(mean - x0) <= 4.0 * stderr_ + 1e-6);
    }

    SECTION("tower property: MC agrees with the Chernoff iterate at x0") {
        const double t = 0.5;
        const int n = 32;
        PathEnsemble e = euler_maruyama(g, spec, {0.0, 0.0}, t, n, 40000, 31);
        GridFunction bump = sample1d(g, [](double x) { return std::exp(-x * x); });
        auto [mean, stderr_] = mc_functional(e, bump);
        auto F = gaussian_family(g, spec);
        GridFunction it = chernoff_iterate(F, t, n, bump);
        const double at_x0 = interpolate(it, {0.0, 0.0}).real();
        REQUIRE(std::abs(mean - at_x0) <= 3.0 * stderr_ + 1e-3);
    }

    SECTION("complex functionals are rejected") {
        PathEnsemble e = euler_maruyama(g, spec, {0.0, 0.0}, 0.1, 4, 32, 1);
        GridFunction cplx = testutil::random_function(g, 1, true);
        REQUIRE_THROWS_AS(mc_functional(e, cplx), std::invalid_argument);
    }
}

TEST_CASE("densities of the half-stable pair") {
    SECTION("inverse-subordinator density integrates to one") {
        for (double t : {0.1, 1.0, 4.0}) {
            const double tau_max = 12.0 * std::sqrt(t);
            const int n = 200000;
            const double h = tau_max / n;
            double acc = 0.5 * (inverse_half_stable_density(t, 0.0) + inverse_half_stable_density(t, tau_max));
            for (int i = 1; i < n; ++i) acc += inverse_half_stable_density(t, i * h);
            REQUIRE(std::abs(acc * h - 1.0) < 1e-10);
        }
    }

    SECTION("p^{1/2}(t, 0) = (pi t)^{-1/2}") {
        for (double t : {0.1, 1.0, 4.0})
            REQUIRE(inverse_half_stable_density(t, 0.0) == Catch::Approx(1.0 / std::sqrt(kPi * t)).epsilon(1e-14));
    }

    SECTION("subordinator density has Laplace transform e^{-t sqrt(z)}") {
        const double t = 1.0;
        for (double z : {1.0, 4.0}) {
            // log-spaced trapezoid straight through the implemented density
            const int n = 400000;
            const double u0 = std::log(1e-12), u1 = std::log(1e10);
            const double du = (u1 - u0) / n;
            double acc = 0.0;
            for (int i = 0; i <= n; ++i) {
                const double s = std::exp(u0 + i * du);
                const double w = (i == 0 || i == n) ? 0.5 : 1.0;
                acc += w * du * s * half_stable_subordinator_density(t, s) * std::exp(-z * s);
            }
            REQUIRE(std::abs(acc - std::exp(-t * std::sqrt(z))) < 1e-8);
        }
    }

    SECTION("boundary behaviour") {
        REQUIRE(half_stable_subordinator_density(1.0, 0.0) == 0.0);
        REQUIRE(half_stable_subordinator_density(1.0, -1.0) == 0.0);
        REQUIRE_THROWS_AS(inverse_half_stable_density(0.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("fractional_solve") {
    Grid g = Grid::line(-kPi, kPi, 256);
    auto heat = symbol_family(g, SymbolSpec::quadratic1d(0.5));  // H = p^2/2

    SECTION("eigenmode reduction matches the closed-form Laplace factor") {
        // for f0 = sin(kx): output = sin(kx) * e^{a^2 t} erfc(a sqrt(t)), a = k^2/2
        const double t = 0.5;
        GridFunction f0 = sample1d(g, [](double x) { return std::sin(2.0 * x); });
        GridFunction out = fractional_solve(heat, f0, t, 4, FractionalMeasure::delta_half());
        const double a = 2.0;  // k = 2
        const double factor = std::exp(a * a * t) * std::erfc(a * std::sqrt(t));
        GridFunction want = factor * f0;
        REQUIRE(sup_norm(out - want) < 1e-6);
    }

    SECTION("n-independence for an exact semigroup, through the generic path") {
        const double t = 0.5;
        GridFunction f0 = sample1d(g, [](double x) { return std::exp(std::cos(x)); });
        GridFunction a = fractional_solve(heat, f0, t, 1, FractionalMeasure::delta_half(), 48, true);
        GridFunction b = fractional_solve(heat, f0, t, 3, FractionalMeasure::delta_half(), 48, true);
        GridFunction c = fractional_solve(heat, f0, t, 16, FractionalMeasure::delta_half(), 48, true);
        REQUIRE(sup_norm(a - b) < 1e-6);
        REQUIRE(sup_norm(a - c) < 1e-6);
        // and the exact-semigroup shortcut agrees with the generic path
        GridFunction d = fractional_solve(heat, f0, t, 16, FractionalMeasure::delta_half());
        REQUIRE(sup_norm(c - d) < 1e-10);
    }

    SECTION("t -> 0 recovers the initial condition") {
        GridFunction f0 = sample1d(g, [](double x) { return std::sin(2.0 * x); });
        GridFunction out = fractional_solve(heat, f0, 1e-6, 2, FractionalMeasure::delta_half());
        REQUIRE(sup_norm(out - f0) < 1e-2);
        GridFunction closer = fractional_solve(heat, f0, 1e-10, 2, FractionalMeasure::delta_half());
        REQUIRE(sup_norm(closer - f0) < 1e-4);
    }

    SECTION("linearity and positivity") {
        auto gauss = gaussian_family(g, GeneratorSpec::constant1d(0.5));
        GridFunction f = sample1d(g, [](double x) { return std::exp(-4.0 * (1.0 - std::cos(x))); });
        GridFunction h = sample1d(g, [](double x) { return std::cos(x) * std::cos(x); });
        const double t = 0.3;
        GridFunction lhs = fractional_solve(gauss, f + h, t, 4, FractionalMeasure::delta_half());
        GridFunction rhs = fractional_solve(gauss, f, t, 4, FractionalMeasure::delta_half()) +
                           fractional_solve(gauss, h, t, 4, FractionalMeasure::delta_half());
        REQUIRE(sup_norm(lhs - rhs) < 1e-11);
        GridFunction pos = fractional_solve(gauss, f, t, 4, FractionalMeasure::delta_half());
        for (std::size_t i = 0; i < pos.size(); ++i) REQUIRE(pos[i].real() >= -1e-12);
    }

    SECTION("table measures are validated and integrate like the analytic density") {
        const double t = 0.7;
        std::vector<double> taus, dens;
        const double tau_max = 2.0 * std::sqrt(t) * 4.3;
        for (int i = 0; i <= 4000; ++i) {
            taus.push_back(tau_max * i / 4000.0);
            dens.push_back(inverse_half_stable_density(t, taus.back()));
        }
        FractionalMeasure table = FractionalMeasure::table(taus, dens);
        GridFunction f0 = sample1d(g, [](double x) { return std::sin(x); });
        GridFunction a = fractional_solve(heat, f0, t, 2, table);
        GridFunction b = fractional_solve(heat, f0, t, 2, FractionalMeasure::delta_half());
        REQUIRE(sup_norm(a - b) < 1e-5);

        std::vector<double> bad_dens = dens;
        bad_dens[5] = -1.0;
        REQUIRE_THROWS_AS(FractionalMeasure::table(taus, bad_dens), std::invalid_argument);
        std::vector<double> short_dens(dens.begin(), dens.end());
        for (auto& d : short_dens) d *= 0.5;
        REQUIRE_THROWS_WITH(FractionalMeasure::table(taus, short_dens),
                            Catch::Matchers::ContainsSubstring("integrate"));
    }

    SECTION("argument validation") {
        GridFunction f0 = sample1d(g, [](double x) { return std::sin(x); });
        REQUIRE_THROWS_AS(fractional_solve(heat, f0, 0.0, 4, FractionalMeasure::delta_half()), std::invalid_argument);
        REQUIRE_THROWS_AS(fractional_solve(heat, f0, 0.5, 0, FractionalMeasure::delta_half()), std::invalid_argument);
    }
}
