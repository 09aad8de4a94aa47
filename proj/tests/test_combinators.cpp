#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chernoff/combinators.hpp"
#include "chernoff/iterate.hpp"
#include "test_helpers.hpp"

using namespace chernoff;
using testutil::random_function;

namespace {

constexpr double kPi = detail::kPi;

GridFunction gaussian_profile(const Grid& g, double variance) {
    return sample1d(g, [variance](double x) { return std::exp(-x * x / (2.0 * variance)); });
}

/// reference multiplier applied through the public Fourier ops: a second,
/// independent code path against the family pipelines
GridFunction multiplier_oracle(const GridFunction& f, const std::function<Complex(double)>& mult) {
    GridFunction spec = fourier_forward(f);
    std::vector<Complex> v = spec.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= mult(spec.grid().node(i)[0]);
    return fourier_inverse(GridFunction(spec.grid(), std::move(v), ScalarKind::Complex), f.grid());
}

}  // namespace

TEST_CASE("compose") {
    Grid g = Grid::line(-10.0, 10.0, 128);
    auto h1 = symbol_family(g, SymbolSpec::quadratic1d(0.7));
    auto h2 = symbol_family(g, SymbolSpec::fractional(1.0, 0.5));

    SECTION("singleton composition is the family itself, bitwise") {
        auto c = compose({h1});
        GridFunction f = random_function(g, 1);
        GridFunction a = c.apply(0.3, f);
        GridFunction b = h1.apply(0.3, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("two constant symbols iterate to the symbol-sum semigroup") {
        auto c = compose({h1, h2});
        auto sum = symbol_family(g, SymbolSpec::quadratic1d(0.7) + SymbolSpec::fractional(1.0, 0.5));
        GridFunction f = gaussian_profile(g, 1.0);
        GridFunction it = chernoff_iterate(c, 0.5, 8, f);
        REQUIRE(sup_norm(it - sum.apply(0.5, f)) < 1e-10);
    }

    SECTION("gaussian + killing factor composes to the killed family at first order") {
        Grid fine = Grid::line(-kPi, kPi, 1024);
        auto gauss = gaussian_family(fine, GeneratorSpec::constant1d(0.5));
        auto kill = multiplication_family1d(fine, [](double x) { return 0.5 + 0.3 * std::cos(x); });
        auto composed = compose({gauss, kill});
        GridFunction f0 = sample1d(fine, [](double x) { return std::cos(x); });
        // both families share the Chernoff derivative (1/2)phi'' - C phi
        GridFunction lf0 = sample1d(fine, [](double x) {
            return -0.5 * std::cos(x) - (0.5 + 0.3 * std::cos(x)) * std::cos(x);
        });
        double prev = 1e300;
        for (double t : {1e-2, 1e-3, 1e-4}) {
            const double res = sup_norm((1.0 / t) * (composed.apply(t, f0) - f0) - lf0);
            REQUIRE(res < prev);
            prev = res;
        }
        REQUIRE(prev < 0.05);
    }

    SECTION("grid mismatch is rejected") {
        Grid other = Grid::line(-10.0, 10.0, 256);
        auto alien = symbol_family(other, SymbolSpec::quadratic1d(1.0));
        REQUIRE_THROWS_WITH(compose({h1, alien}), Catch::Matchers::ContainsSubstring("grids"));
    }
}

TEST_CASE("theta and convex splitting") {
    Grid g = Grid::line(-kPi, kPi, 128);
    auto heat = symbol_family(g, SymbolSpec::quadratic1d(1.0));
    auto pot = multiplication_family1d(g, [](double x) { return 1.0 + std::sin(x) * std::sin(x); });
    GridFunction f = gaussian_profile(g, 0.5);

    SECTION("theta = 1 reduces to compose, bitwise") {
        auto split = theta_splitting(heat, pot, 1.0);
        auto comp = compose({heat, pot});
        GridFunction a = split.apply(0.4, f);
        GridFunction b = comp.apply(0.4, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("commuting factors make the splitting theta-independent") {
        auto h2 = symbol_family(g, SymbolSpec::fractional(1.0));
        GridFunction a = theta_splitting(heat, h2, 0.3).apply(0.5, f);
        GridFunction b = theta_splitting(heat, h2, 0.8).apply(0.5, f);
        REQUIRE(sup_norm(a - b) < 1e-10);
    }

    SECTION("Strang beats Lie on a non-commuting pair") {
        const double t = 0.5;
        GridFunction ref = chernoff_iterate(theta_splitting(heat, pot, 0.5), t, 2048, f);
        const double lie_err = sup_norm(chernoff_iterate(theta_splitting(heat, pot, 0.0), t, 32, f) - ref);
        const double strang_err = sup_norm(chernoff_iterate(theta_splitting(heat, pot, 0.5), t, 32, f) - ref);
        REQUIRE(strang_err < 0.2 * lie_err);
    }

    SECTION("parameters outside [0,1] are rejected") {
        REQUIRE_THROWS_WITH(theta_splitting(heat, pot, 1.5), Catch::Matchers::ContainsSubstring("outside [0, 1]"));
        REQUIRE_THROWS_AS(convex_splitting(heat, pot, -0.1), std::invalid_argument);
    }

    SECTION("convex splitting interpolates the two orderings") {
        auto lie12 = compose({heat, pot});
        auto lie21 = compose({pot, heat});
        GridFunction a = convex_splitting(heat, pot, 0.25).apply(0.4, f);
        GridFunction b = 0.25 * lie12.apply(0.4, f) + 0.75 * lie21.apply(0.4, f);
        REQUIRE(sup_norm(a - b) < 1e-14);
    }
}

TEST_CASE("multiplicative perturbation") {
    Grid g = Grid::line(0.0, 2.0 * kPi, 128);

    SECTION("unit multiplier is the family itself, bitwise") {
        auto base = poisson_family(g, 1.0);
        auto pert = multiplicative_perturbation1d(base, [](double) { return 1.0; });
        GridFunction f = sample1d(g, [](double x) { return std::exp(std::cos(x)); });
        GridFunction a = pert.apply(0.31, f);
        GridFunction b = base.apply(0.31, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("perturbing poisson(1) by a(x) gives poisson(a), bitwise") {
        auto a_of_x = [](double x) { return 1.0 + 0.5 * std::sin(x) * std::sin(x); };
        auto direct = poisson_family(g, a_of_x);
        auto pert = multiplicative_perturbation1d(poisson_family(g, 1.0), a_of_x);
        GridFunction f = sample1d(g, [](double x) { return std::exp(std::sin(x)); });
        GridFunction a = pert.apply(0.27, f);
        GridFunction b = direct.apply(0.27, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("constant multiplier c is a time rescaling of the iteration") {
        Grid gl = Grid::line(-12.0, 12.0, 256);
        auto base = gaussian_family(gl, GeneratorSpec::constant1d(0.5));
        auto doubled = multiplicative_perturbation1d(base, [](double) { return 2.0; });
        GridFunction f = gaussian_profile(gl, 1.0);
        GridFunction a = chernoff_iterate(doubled, 0.3, 16, f);
        GridFunction b = chernoff_iterate(base, 0.6, 16, f);
        REQUIRE(sup_norm(a - b) < 1e-10);
    }

    SECTION("shift family supports perturbation through band-limited evaluation") {
        auto base = shift_family(g);
        auto pert = multiplicative_perturbation1d(base, [](double x) { return 1.0 + 0.25 * std::cos(x); });
        GridFunction f = sample1d(g, [](double x) { return std::cos(2.0 * x); });
        const double t = 0.2;
        GridFunction out = pert.apply(t, f);
        // oracle: at node x the output is cos(2x)·cos(2·sqrt(a(x)t))
        for (std::size_t i = 0; i < g.m; ++i) {
            const double x = g.node(i)[0];
            const double want = std::cos(2.0 * x) * std::cos(2.0 * std::sqrt((1.0 + 0.25 * std::cos(x)) * t));
            REQUIRE(out[i].real() == Catch::Approx(want).margin(1e-11));
        }
    }

    SECTION("rejections: pure symbol families and nonpositive multipliers") {
        auto sym = symbol_family(g, SymbolSpec::quadratic1d(1.0));
        REQUIRE_THROWS_WITH(multiplicative_perturbation1d(sym, [](double) { return 1.0; }),
                            Catch::Matchers::ContainsSubstring("per-output-point"));
        auto base = poisson_family(g, 1.0);
        REQUIRE_THROWS_WITH(multiplicative_perturbation1d(base, [](double x) { return std::cos(x); }),
                            Catch::Matchers::ContainsSubstring("a_0"));
        REQUIRE_THROWS_AS(multiplicative_perturbation1d(base, [](double) { return 0.5; }, 0.75),
                          std::invalid_argument);
    }
}

TEST_CASE("dirichlet restriction") {
    Grid g = Grid::line(-0.5, 1.5, 256);
    auto heat = gaussian_family(g, GeneratorSpec::constant1d(0.5));

    SECTION("whole-box mask changes nothing, bitwise") {
        DomainMask everything(g, {{-0.5, 1.5}});
        auto restricted = dirichlet_restrict(heat, everything);
        GridFunction f = gaussian_profile(g, 0.02);
        GridFunction a = restricted.apply(0.05, f);
        GridFunction b = heat.apply(0.05, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("data far inside the domain evolves as if unrestricted") {
        DomainMask omega(g, {{0.0, 1.0}});
        auto restricted = dirichlet_restrict(heat, omega);
        const double t = 0.002;  // 6 sqrt(t) ~ 0.27 < distance to the boundary
        GridFunction f = sample1d(g, [](double x) { return std::exp(-(x - 0.5) * (x - 0.5) / 0.005); });
        GridFunction a = restricted.apply(t, f);
        GridFunction b = heat.apply(t, f);
        double interior_diff = 0.0;
        for (std::size_t i = 0; i < g.m; ++i) {
            const double x = g.node(i)[0];
            if (x >= 0.05 && x <= 0.95) interior_diff = std::max(interior_diff, std::abs(a[i] - b[i]));
        }
        REQUIRE(interior_diff < 1e-6);
    }

    SECTION("output vanishes identically outside the domain") {
        DomainMask omega(g, {{0.0, 1.0}});
        auto restricted = dirichlet_restrict(heat, omega);
        GridFunction f = random_function(g, 15);
        GridFunction out = restricted.apply(0.05, f);
        for (std::size_t i = 0; i < g.m; ++i) {
            const double x = g.node(i)[0];
            if (x < -1e-9 || x > 1.0 + 1e-9) REQUIRE(out[i] == Complex(0.0, 0.0));
        }
    }

    SECTION("killed heat decays along the first Dirichlet eigenfunction") {
        // discretely monitored killing converges at rate n^{-1/2} (barrier-
        // shift effect), so assert the decay profile and the observed rate
        DomainMask omega(g, {{0.0, 1.0}});
        auto restricted = dirichlet_restrict(heat, omega);
        GridFunction f0 = sample1d(g, [](double x) { return (x >= 0.0 && x <= 1.0) ? std::sin(kPi * x) : 0.0; });
        const double t = 0.1;
        const double decay = std::exp(-kPi * kPi * t / 2.0);
        auto interior_error = [&](int n) {
            GridFunction it = chernoff_iterate(restricted, t, n, f0);
            double err = 0.0;
            for (std::size_t i = 0; i < g.m; ++i) {
                const double x = g.node(i)[0];
                if (x < 0.1 || x > 0.9) continue;
                err = std::max(err, std::abs(it[i].real() - decay * std::sin(kPi * x)));
            }
            return err;
        };
        const double e32 = interior_error(32), e128 = interior_error(128), e512 = interior_error(512);
        REQUIRE(e128 < e32);
        REQUIRE(e512 < e128);
        REQUIRE(e512 < 0.02);
        const double rate = std::log(e32 / e512) / std::log(512.0 / 32.0);
        REQUIRE(rate == Catch::Approx(0.5).margin(0.2));
    }

    SECTION("non-kernel families and empty domains are rejected") {
        auto sym = symbol_family(g, SymbolSpec::quadratic1d(1.0));
        REQUIRE_THROWS_WITH(dirichlet_restrict(sym, DomainMask(g, {{0.0, 1.0}})),
                            Catch::Matchers::ContainsSubstring("kernel"));
        REQUIRE_THROWS_AS(DomainMask(g, {{5.0, 6.0}}), std::invalid_argument);
    }
}

TEST_CASE("rotation to the Schrodinger group") {
    Grid g = Grid::line(-16.0, 16.0, 256);
    auto heat = symbol_family(g, SymbolSpec::quadratic1d(1.0));

    SECTION("rotating the identity family gives the identity") {
        auto ident = multiplication_family1d(g, [](double) { return 0.0; });
        auto rot = rotate(ident, RotationMode::Series);
        GridFunction f = random_function(g, 5);
        REQUIRE(sup_norm(rot.apply(0.7, f) - f) < 1e-14);
    }

    SECTION("symbol mode preserves the l2 norm exactly") {
        auto rot = rotate(heat, RotationMode::Symbol);
        GridFunction f = gaussian_profile(g, 1.0);
        GridFunction out = rot.apply(0.7, f);
        REQUIRE(std::abs(l2_norm(out) - l2_norm(f)) < 1e-12 * l2_norm(f));
    }

    SECTION("series and symbol modes agree after 8 iterations") {
        auto rot_series = rotate(heat, RotationMode::Series);
        auto rot_symbol = rotate(heat, RotationMode::Symbol);
        GridFunction f = gaussian_profile(g, 1.0);
        GridFunction a = chernoff_iterate(rot_series, 0.2, 8, f);
        GridFunction b = chernoff_iterate(rot_symbol, 0.2, 8, f);
        REQUIRE(sup_norm(a - b) < 1e-8);
    }

    SECTION("single-pass iterate applies exp(i n (e^{-tH/n} - 1))") {
        auto rot = rotate(heat, RotationMode::Symbol);
        GridFunction f = gaussian_profile(g, 1.0);
        const double t = 0.4;
        const int n = 16;
        GridFunction it = chernoff_iterate(rot, t, n, f);
        GridFunction oracle = multiplier_oracle(f, [t, n](double p) {
            const Complex iu(0.0, 1.0);
            return std::exp(iu * (static_cast<double>(n) * (std::exp(-t * p * p / n) - 1.0)));
        });
        REQUIRE(sup_norm(it - oracle) < 1e-11);
    }

    SECTION("mode preconditions are enforced") {
        auto drifty = symbol_family(g, SymbolSpec::quadratic1d(1.0, 0.4, 0.0));
        REQUIRE_THROWS_WITH(rotate(drifty, RotationMode::Series),
                            Catch::Matchers::ContainsSubstring("self-adjoint"));
        REQUIRE_THROWS_WITH(rotate(drifty, RotationMode::Symbol),
                            Catch::Matchers::ContainsSubstring("real-valued"));
        auto gauss = gaussian_family(g, GeneratorSpec::constant1d(0.5, 0.1));
        REQUIRE_THROWS_WITH(rotate(gauss, RotationMode::Symbol),
                            Catch::Matchers::ContainsSubstring("symbol"));
    }

    SECTION("a wildly expanding family overflows the series cap") {
        auto expanding = multiplication_family1d(g, [](double) { return -80.0; });  // e^{+80 t}
        auto rot = rotate(expanding, RotationMode::Series);
        REQUIRE_THROWS_WITH(rot.apply(1.0, gaussian_profile(g, 1.0)),
                            Catch::Matchers::ContainsSubstring("series"));
    }
}

TEST_CASE("subordination, known density (half-stable)") {
    Grid g = Grid::line(-16.0, 16.0, 128);
    auto heat = symbol_family(g, SymbolSpec::quadratic1d(1.0));

    SECTION("degenerate triplet sigma=0, lambda=1, mu=0 reproduces F bitwise") {
        SubordinatorSpec sub;
        sub.lambda = 1.0;
        auto sb = subordinate_known_density(heat, sub);
        GridFunction f = random_function(g, 3);
        GridFunction a = sb.apply(0.4, f);
        GridFunction b = heat.apply(0.4, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("killing and drift parts reduce to scalar factor and time scaling") {
        SubordinatorSpec sub;
        sub.sigma = 0.3;
        sub.lambda = 0.5;
        auto sb = subordinate_known_density(heat, sub);
        GridFunction f = gaussian_profile(g, 1.0);
        const double t = 0.4;
        GridFunction want = std::exp(-0.3 * t) * heat.apply(0.5 * t, f);
        REQUIRE(sup_norm(sb.apply(t, f) - want) < 1e-14);
    }

    SECTION("half-stable subordination of heat converges to the Cauchy semigroup") {
        auto sb = subordinate_known_density(heat, SubordinatorSpec::half_stable_spec(64));
        GridFunction f = gaussian_profile(g, 1.0);
        const double t = 0.5;
        GridFunction oracle = multiplier_oracle(f, [t](double p) { return std::exp(-t * std::abs(p)); });
        const double e4 = l2_norm(chernoff_iterate(sb, t, 4, f) - oracle);
        const double e16 = l2_norm(chernoff_iterate(sb, t, 16, f) - oracle);
        REQUIRE(e16 < e4);
        REQUIRE(e16 < 2e-2);
    }

    SECTION("t = 0 identity and atom/density exclusivity") {
        auto sb = subordinate_known_density(heat, SubordinatorSpec::half_stable_spec(16));
        GridFunction f = random_function(g, 4);
        GridFunction out = sb.apply(0.0, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(out[i] == f[i]);

        SubordinatorSpec bad = SubordinatorSpec::half_stable_spec(16);
        bad.atoms.push_back({1.0, 1.0});
        REQUIRE_THROWS_AS(subordinate_known_density(heat, bad), std::invalid_argument);
    }
}

TEST_CASE("subordination, bounded measure") {
    Grid g = Grid::line(-16.0, 16.0, 128);
    auto heat = symbol_family(g, SymbolSpec::quadratic1d(1.0));

    SECTION("single-atom measure converges to the compound-Poisson symbol") {
        SubordinatorSpec sub;
        sub.atoms.push_back({1.0, 1.0});
        auto sb = subordinate_bounded_measure(heat, sub);
        GridFunction f = gaussian_profile(g, 0.25);
        const double t = 0.5;
        GridFunction oracle = multiplier_oracle(f, [t](double p) {
            return std::exp(-t * (1.0 - std::exp(-p * p)));
        });
        const double e8 = l2_norm(chernoff_iterate(sb, t, 8, f) - oracle);
        const double e32 = l2_norm(chernoff_iterate(sb, t, 32, f) - oracle);
        REQUIRE(e32 < e8);
        REQUIRE(e32 < 6e-3);
    }

    SECTION("zero-mass measure degenerates to e^{-sigma t} F(lambda t)") {
        SubordinatorSpec sub;
        sub.sigma = 0.2;
        sub.lambda = 0.7;
        auto sb = subordinate_bounded_measure(heat, sub);
        GridFunction f = gaussian_profile(g, 1.0);
        const double t = 0.3;
        GridFunction want = std::exp(-0.2 * t) * heat.apply(0.7 * t, f);
        REQUIRE(sup_norm(sb.apply(t, f) - want) < 1e-14);
    }

    SECTION("sigma=0, lambda=1, empty measure reproduces F bitwise") {
        SubordinatorSpec sub;
        sub.lambda = 1.0;
        auto sb = subordinate_bounded_measure(heat, sub);
        GridFunction f = random_function(g, 6);
        GridFunction a = sb.apply(0.4, f);
        GridFunction b = heat.apply(0.4, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("null generator is rejected") {
        SubordinatorSpec sub;  // no atoms, sigma = lambda = 0
        REQUIRE_THROWS_WITH(subordinate_bounded_measure(heat, sub),
                            Catch::Matchers::ContainsSubstring("generates nothing"));
    }

    SECTION("t = 0 identity") {
        SubordinatorSpec sub;
        sub.atoms.push_back({1.0, 0.5});
        auto sb = subordinate_bounded_measure(heat, sub);
        GridFunction f = random_function(g, 7);
        GridFunction out = sb.apply(0.0, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(out[i] == f[i]);
    }
}

TEST_CASE("every combinator output is the identity at t = 0") {
    Grid g = Grid::line(0.0, 2.0 * kPi, 64);
    auto heat = symbol_family(g, SymbolSpec::quadratic1d(1.0));
    auto gauss = gaussian_family(g, GeneratorSpec::constant1d(0.5));
    auto pois = poisson_family(g, 1.0);
    SubordinatorSpec half = SubordinatorSpec::half_stable_spec(16);
    SubordinatorSpec atom;
    atom.atoms.push_back({1.0, 1.0});

    std::vector<ChernoffFamily> combos;
    combos.push_back(compose({heat, gauss}));
    combos.push_back(theta_splitting(heat, gauss, 0.5));
    combos.push_back(convex_splitting(heat, gauss, 0.25));
    combos.push_back(multiplicative_perturbation1d(pois, [](double x) { return 1.0 + 0.1 * std::sin(x); }));
    combos.push_back(dirichlet_restrict(gauss, DomainMask(g, {{1.0, 5.0}})));
    combos.push_back(rotate(heat, RotationMode::Symbol));
    combos.push_back(rotate(heat, RotationMode::Series));
    combos.push_back(subordinate_known_density(heat, half));
    combos.push_back(subordinate_bounded_measure(heat, atom));

    GridFunction f = random_function(g, 99, true);
    for (const auto& F : combos) {
        GridFunction out = F.apply(0.0, f);
        for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(out[i] == f[i]);
    }
}
