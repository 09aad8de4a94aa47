#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chernoff/combinators.hpp"
#include "chernoff/expr.hpp"
#include "chernoff/toml.hpp"

namespace chernoff::config {

struct ConfigError : std::runtime_error {
    int line;
    ConfigError(int line_, const std::string& msg) : std::runtime_error(msg), line(line_) {}
};

// ---------------------------------------------------------------------------
// lookup helpers that keep line information for error messages

namespace detail_cfg {

inline const toml::Value* find(const toml::Table& t, const std::string& key) {
    auto it = t.find(key);
    return it == t.end() ? nullptr : &it->second;
}

[[noreturn]] inline void fail(int line, const std::string& msg) { throw ConfigError(line, msg); }

inline double need_number(const toml::Table& t, const std::string& key, int ctx_line, const std::string& where) {
    const toml::Value* v = find(t, key);
    if (!v) fail(ctx_line, where + ": missing required field '" + key + "'");
    if (!v->is_number()) fail(v->line, where + "." + key + ": expected a number");
    return v->as_number();
}

inline double number_or(const toml::Table& t, const std::string& key, double fallback) {
    const toml::Value* v = find(t, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(v->line, "field '" + key + "': expected a number");
    return v->as_number();
}

inline long long need_integer(const toml::Table& t, const std::string& key, int ctx_line, const std::string& where) {
    const toml::Value* v = find(t, key);
    if (!v) fail(ctx_line, where + ": missing required field '" + key + "'");
    if (v->kind != toml::Value::Kind::Integer) fail(v->line, where + "." + key + ": expected an integer");
    return v->inum;
}

inline long long integer_or(const toml::Table& t, const std::string& key, long long fallback) {
    const toml::Value* v = find(t, key);
    if (!v) return fallback;
    if (v->kind != toml::Value::Kind::Integer) fail(v->line, "field '" + key + "': expected an integer");
    return v->inum;
}

inline std::string need_string(const toml::Table& t, const std::string& key, int ctx_line, const std::string& where) {
    const toml::Value* v = find(t, key);
    if (!v) fail(ctx_line, where + ": missing required field '" + key + "'");
    if (v->kind != toml::Value::Kind::String) fail(v->line, where + "." + key + ": expected a string");
    return v->str;
}

inline std::string string_or(const toml::Table& t, const std::string& key, const std::string& fallback) {
    const toml::Value* v = find(t, key);
    if (!v) return fallback;
    if (v->kind != toml::Value::Kind::String) fail(v->line, "field '" + key + "': expected a string");
    return v->str;
}

inline bool bool_or(const toml::Table& t, const std::string& key, bool fallback) {
    const toml::Value* v = find(t, key);
    if (!v) return fallback;
    if (v->kind != toml::Value::Kind::Boolean) fail(v->line, "field '" + key + "': expected a boolean");
    return v->boolean;
}

inline expr::Expression parse_expression(const std::string& text, int line, int dim, const std::string& where) {
    expr::Expression e;
    try {
        e = expr::parse(text);
    } catch (const std::exception& ex) {
        fail(line, where + ": " + ex.what());
    }
    if (e.max_var() > dim) fail(line, where + ": expression uses 'y' on a 1D grid");
    return e;
}

inline expr::Expression need_expr(const toml::Table& t, const std::string& key, int ctx_line, int dim,
                                  const std::string& where) {
    const toml::Value* v = find(t, key);
    if (!v) fail(ctx_line, where + ": missing required field '" + key + "'");
    if (v->kind != toml::Value::Kind::String) fail(v->line, where + "." + key + ": expected an expression string");
    return parse_expression(v->str, v->line, dim, where + "." + key);
}

}  // namespace detail_cfg

// ---------------------------------------------------------------------------
// plan model

struct StageSpec {
    std::string name;
    toml::Table params;
    int line = 0;
};

struct RunSpec {
    double t = 0.0;
    std::vector<int> ns;
    std::string norm = "sup";
    std::string reference;       // "family" | "self:<N>" | "dirichlet_sine"
    std::string mode = "iterate";  // "iterate" | "fractional"
    int fractional_nodes = 48;
    std::string fractional_measure = "delta_half";
    int line = 0;
};

struct ExperimentPlan {
    std::string id;
    std::vector<StageSpec> pipeline;
    RunSpec run;
    ChernoffFamily family;  // built during validation
};

struct ParsedConfig {
    Grid grid = Grid::line(0.0, 1.0, 8);
    GridFunction f0;
    std::vector<ExperimentPlan> experiments;
    std::string out_dir = ".";
    bool snapshots = false;
    std::uint64_t hash = 0;
    std::optional<GeneratorSpec> generator;
    SymbolSpec symbol;
    bool has_symbol = false;
};

// ---------------------------------------------------------------------------
// presets

struct Preset {
    const char* name;
    const char* description;
    const char* text;
};

inline const std::vector<Preset>& presets() {
    static const std::vector<Preset> list = {
        {"heat",
         "1D heat semigroup via the quadratic symbol p^2; exact family reference",
         R"TOML(
[grid]
dim = 1
lower = -8.0
upper = 8.0
m = 256

[problem]
f0 = "exp(-x^2/2)"

[problem.symbol]
kind = "quadratic"
a = 1.0

[[pipeline]]
stage = "symbol"

[run]
t = 0.5
ns = [1, 2, 4, 8, 16, 32, 64]
norm = "sup"
reference = "family"
)TOML"},
        {"cauchy",
         "1D Cauchy semigroup via the fractional symbol |p|; exact family reference",
         R"TOML(
[grid]
dim = 1
lower = -16.0
upper = 16.0
m = 256

[problem]
f0 = "exp(-x^2/2)"

[problem.symbol]
kind = "fractional"
alpha = 1.0

[[pipeline]]
stage = "symbol"

[run]
t = 0.5
ns = [1, 2, 4, 8, 16, 32, 64]
norm = "sup"
reference = "family"
)TOML"},
        {"relativistic",
         "1D relativistic semigroup via sqrt(p^2 + 1); exact family reference",
         R"TOML(
[grid]
dim = 1
lower = -16.0
upper = 16.0
m = 256

[problem]
f0 = "exp(-x^2/2)"

[problem.symbol]
kind = "relativistic"
alpha = 2.0
mass = 1.0

[[pipeline]]
stage = "symbol"

[run]
t = 0.5
ns = [1, 2, 4, 8, 16, 32, 64]
norm = "sup"
reference = "family"
)TOML"},
        {"killed_interval",
         "heat diffusion killed outside [0,1]; Dirichlet eigenfunction reference",
         R"TOML(
[grid]
dim = 1
lower = -0.5
upper = 1.5
m = 512

[problem]
f0 = "sin(pi*x)"

[problem.generator]
A = "0.5"

[[pipeline]]
stage = "gaussian"

[[pipeline]]
stage = "dirichlet"
intervals = [[0.0, 1.0]]

[run]
t = 0.1
ns = [32, 64, 128, 256]
norm = "sup"
reference = "dirichlet_sine"
)TOML"},
        {"caputo_half",
         "Caputo-1/2 time-fractional heat evolution via the inverse-subordinator quadrature",
         R"TOML(
[grid]
dim = 1
lower = -8.0
upper = 8.0
m = 256

[problem]
f0 = "exp(-x^2/2)"

[problem.symbol]
kind = "quadratic"
a = 0.5

[[pipeline]]
stage = "symbol"

[run]
mode = "fractional"
t = 0.5
ns = [1, 2, 4, 8]
norm = "l2"
reference = "self:64"

[run.fractional]
nodes = 48
measure = "delta_half"
)TOML"},
        {"strang_vs_lie",
         "Lie vs Strang splitting orders for heat + potential 1+sin(x)^2",
         R"TOML(
[grid]
dim = 1
lower = -3.141592653589793
upper = 3.141592653589793
m = 256

[problem]
f0 = "exp(-x^2)"

[problem.symbol]
kind = "quadratic"
a = 1.0

[run]
t = 0.5
ns = [8, 16, 32, 64, 128, 256]
norm = "sup"
reference = "self:4096"

[[experiment]]
id = "lie"

[[experiment.pipeline]]
stage = "symbol"

[[experiment.pipeline]]
stage = "potential"
V = "1+sin(x)^2"

[[experiment.pipeline]]
stage = "theta_split"
theta = 0.0

[[experiment]]
id = "strang"

[[experiment.pipeline]]
stage = "symbol"

[[experiment.pipeline]]
stage = "potential"
V = "1+sin(x)^2"

[[experiment.pipeline]]
stage = "theta_split"
theta = 0.5
)TOML"},
    };
    return list;
}

inline const Preset* find_preset(const std::string& name) {
    for (const auto& p : presets())
        if (name == p.name) return &p;
    return nullptr;
}

namespace detail_cfg {

/// Recursive "user wins" merge of the preset tree under the user tree.
inline void merge_defaults(toml::Table& user, const toml::Table& defaults) {
    for (const auto& [key, dv] : defaults) {
        auto it = user.find(key);
        if (it == user.end()) {
            user[key] = dv;
        } else if (it->second.kind == toml::Value::Kind::Table && dv.kind == toml::Value::Kind::Table) {
            merge_defaults(it->second.table, dv.table);
        }
        // scalar/array collisions: the user's value stands
    }
}

}  // namespace detail_cfg

// ---------------------------------------------------------------------------
// parsing + validation (family construction happens here, so operation
// preconditions are checked before any run computation starts)

namespace detail_cfg {

inline Grid parse_grid(const toml::Table& root) {
    const toml::Value* gv = find(root, "grid");
    if (!gv || gv->kind != toml::Value::Kind::Table) fail(1, "missing [grid] block");
    const toml::Table& g = gv->table;
    const long long dim = need_integer(g, "dim", gv->line, "grid");
    if (dim != 1 && dim != 2) fail(gv->line, "grid.dim must be 1 or 2");
    const double lo = need_number(g, "lower", gv->line, "grid");
    const double hi = need_number(g, "upper", gv->line, "grid");
    const long long m = need_integer(g, "m", gv->line, "grid");
    try {
        if (dim == 1) return Grid::line(lo, hi, static_cast<std::size_t>(m));
        return Grid::square(lo, hi, static_cast<std::size_t>(m));
    } catch (const std::exception& ex) {
        fail(gv->line, std::string("grid: ") + ex.what());
    }
}

inline GeneratorSpec parse_generator(const toml::Table& problem, int line, const Grid& grid) {
    const toml::Value* gv = find(problem, "generator");
    if (!gv || gv->kind != toml::Value::Kind::Table) fail(line, "pipeline needs a [problem.generator] block");
    const toml::Table& g = gv->table;
    GeneratorSpec spec;
    if (grid.dim == 1) {
        expr::Expression a = need_expr(g, "A", gv->line, 1, "problem.generator");
        spec.a11 = [a](Point p) { return a(p); };
        if (find(g, "B")) {
            expr::Expression b = need_expr(g, "B", gv->line, 1, "problem.generator");
            spec.b1 = [b](Point p) { return b(p); };
        }
        if (find(g, "C")) {
            expr::Expression c = need_expr(g, "C", gv->line, 1, "problem.generator");
            spec.c = [c](Point p) { return c(p); };
        }
    } else {
        if (find(g, "A")) {  // isotropic shorthand A*Id
            expr::Expression a = need_expr(g, "A", gv->line, 2, "problem.generator");
            spec.a11 = [a](Point p) { return a(p); };
            spec.a22 = [a](Point p) { return a(p); };
            spec.a12 = [](Point) { return 0.0; };
        } else {
            expr::Expression a11 = need_expr(g, "A11", gv->line, 2, "problem.generator");
            expr::Expression a12 = need_expr(g, "A12", gv->line, 2, "problem.generator");
            expr::Expression a22 = need_expr(g, "A22", gv->line, 2, "problem.generator");
            spec.a11 = [a11](Point p) { return a11(p); };
            spec.a12 = [a12](Point p) { return a12(p); };
            spec.a22 = [a22](Point p) { return a22(p); };
        }
        if (find(g, "B1")) {
            expr::Expression b1 = need_expr(g, "B1", gv->line, 2, "problem.generator");
            spec.b1 = [b1](Point p) { return b1(p); };
        }
        if (find(g, "B2")) {
            expr::Expression b2 = need_expr(g, "B2", gv->line, 2, "problem.generator");
            spec.b2 = [b2](Point p) { return b2(p); };
        }
        if (find(g, "C")) {
            expr::Expression c = need_expr(g, "C", gv->line, 2, "problem.generator");
            spec.c = [c](Point p) { return c(p); };
        }
    }

    // ellipticity bounds: explicit a0/A0 win, otherwise tightest sampled bounds
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Point p = grid.node(i);
        double lmin, lmax;
        if (grid.dim == 1) {
            lmin = lmax = spec.a11(p);
        } else {
            const double a = spec.a11(p), b = spec.a12 ? spec.a12(p) : 0.0, d = spec.a22(p);
            const double tr = a + d, det = a * d - b * b;
            const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * det));
            lmin = 0.5 * (tr - disc);
            lmax = 0.5 * (tr + disc);
        }
        lo = std::min(lo, lmin);
        hi = std::max(hi, lmax);
    }
    spec.a0 = number_or(g, "a0", lo);
    spec.A0 = number_or(g, "A0", hi);
    if (!(spec.a0 > 0.0)) fail(gv->line, "problem.generator: diffusion must be uniformly elliptic (a0 > 0)");
    return spec;
}

inline SymbolTerm parse_symbol_term(const toml::Table& s, int line, int dim) {
    const std::string kind = need_string(s, "kind", line, "problem.symbol");
    try {
        if (kind == "quadratic") {
            if (dim == 1)
                return SymbolSpec::quadratic1d(number_or(s, "a", 0.0), number_or(s, "b", 0.0), number_or(s, "c", 0.0))
                    .terms.front();
            return SymbolSpec::quadratic2d(number_or(s, "a11", 0.0), number_or(s, "a12", 0.0), number_or(s, "a22", 0.0),
                                           number_or(s, "b1", 0.0), number_or(s, "b2", 0.0), number_or(s, "c", 0.0))
                .terms.front();
        }
        if (kind == "fractional")
            return SymbolSpec::fractional(need_number(s, "alpha", line, "problem.symbol"), number_or(s, "scale", 1.0))
                .terms.front();
        if (kind == "relativistic")
            return SymbolSpec::relativistic(need_number(s, "alpha", line, "problem.symbol"),
                                            need_number(s, "mass", line, "problem.symbol"), number_or(s, "scale", 1.0))
                .terms.front();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        fail(line, std::string("problem.symbol: ") + ex.what());
    }
    fail(line, "problem.symbol.kind must be quadratic, fractional, relativistic or sum");
}

inline SymbolSpec parse_symbol(const toml::Table& problem, int line, int dim) {
    const toml::Value* sv = find(problem, "symbol");
    if (!sv || sv->kind != toml::Value::Kind::Table) fail(line, "pipeline needs a [problem.symbol] block");
    const toml::Table& s = sv->table;
    const std::string kind = need_string(s, "kind", sv->line, "problem.symbol");
    SymbolSpec spec;
    if (kind == "sum") {
        const toml::Value* terms = find(s, "terms");
        if (!terms || terms->kind != toml::Value::Kind::Array || terms->array.empty())
            fail(sv->line, "problem.symbol: kind = \"sum\" needs [[problem.symbol.terms]] entries");
        for (const auto& tv : terms->array) {
            if (tv.kind != toml::Value::Kind::Table) fail(tv.line, "problem.symbol.terms: expected tables");
            spec.terms.push_back(parse_symbol_term(tv.table, tv.line, dim));
        }
    } else {
        spec.terms.push_back(parse_symbol_term(s, sv->line, dim));
    }
    return spec;
}

inline std::vector<StageSpec> parse_pipeline(const toml::Value* pv) {
    std::vector<StageSpec> out;
    if (!pv) return out;
    if (pv->kind != toml::Value::Kind::Array) fail(pv->line, "[[pipeline]] must be an array of tables");
    for (const auto& sv : pv->array) {
        if (sv.kind != toml::Value::Kind::Table) fail(sv.line, "[[pipeline]] must be an array of tables");
        StageSpec st;
        st.line = sv.line;
        st.params = sv.table;
        st.name = need_string(sv.table, "stage", sv.line, "pipeline");
        out.push_back(std::move(st));
    }
    return out;
}

inline RunSpec parse_run(const toml::Table& root, const RunSpec* defaults) {
    const toml::Value* rv = find(root, "run");
    RunSpec run = defaults ? *defaults : RunSpec{};
    if (!rv && defaults) return run;
    if (!rv || rv->kind != toml::Value::Kind::Table) fail(1, "missing [run] block");
    const toml::Table& r = rv->table;
    run.line = rv->line;
    if (find(r, "t") || !defaults) run.t = need_number(r, "t", rv->line, "run");
    if (!(run.t > 0.0)) fail(rv->line, "run.t must be positive");
    if (find(r, "ns") || !defaults) {
        const toml::Value* nsv = find(r, "ns");
        if (!nsv || nsv->kind != toml::Value::Kind::Array) fail(rv->line, "run.ns: expected an array of integers");
        run.ns.clear();
        for (const auto& e : nsv->array) {
            if (e.kind != toml::Value::Kind::Integer || e.inum <= 0)
                fail(e.line, "run.ns: entries must be positive integers");
            run.ns.push_back(static_cast<int>(e.inum));
        }
        if (run.ns.empty()) fail(nsv->line, "run.ns must not be empty");
        for (std::size_t i = 1; i < run.ns.size(); ++i)
            if (run.ns[i] <= run.ns[i - 1]) fail(nsv->line, "run.ns must be strictly ascending");
    }
    run.norm = string_or(r, "norm", run.norm);
    if (run.norm != "sup" && run.norm != "l2") fail(rv->line, "run.norm must be \"sup\" or \"l2\"");
    run.reference = string_or(r, "reference", run.reference);
    if (run.reference.empty()) fail(rv->line, "run.reference is required (\"family\", \"self:<n>\" or \"dirichlet_sine\")");
    if (run.reference != "family" && run.reference != "dirichlet_sine" && run.reference.rfind("self:", 0) != 0)
        fail(rv->line, "run.reference must be \"family\", \"self:<n>\" or \"dirichlet_sine\"");
    if (run.reference.rfind("self:", 0) == 0) {
        try {
            if (std::stoi(run.reference.substr(5)) <= 0) throw std::invalid_argument("nonpositive");
        } catch (const std::exception&) {
            fail(rv->line, "run.reference: self:<n> needs a positive integer n");
        }
    }
    run.mode = string_or(r, "mode", run.mode);
    if (run.mode != "iterate" && run.mode != "fractional") fail(rv->line, "run.mode must be \"iterate\" or \"fractional\"");
    if (const toml::Value* fv = find(r, "fractional")) {
        if (fv->kind != toml::Value::Kind::Table) fail(fv->line, "run.fractional must be a table");
        run.fractional_nodes = static_cast<int>(integer_or(fv->table, "nodes", run.fractional_nodes));
        if (run.fractional_nodes < 2) fail(fv->line, "run.fractional.nodes must be at least 2");
        run.fractional_measure = string_or(fv->table, "measure", run.fractional_measure);
        if (run.fractional_measure != "delta_half") fail(fv->line, "run.fractional.measure: only \"delta_half\" is bundled");
    }
    return run;
}

// ---------------------------------------------------------------------------
// pipeline -> family (the stack machine over stage specs)

struct BuildContext {
    const Grid* grid;
    const toml::Table* problem;
    int problem_line;
};

inline ChernoffFamily build_stage(const StageSpec& st, const BuildContext& ctx, std::vector<ChernoffFamily>& stack) {
    const Grid& grid = *ctx.grid;
    const toml::Table& p = st.params;
    auto pop = [&](const char* who) {
        if (stack.empty()) fail(st.line, std::string("pipeline stage '") + who + "' has no family to act on");
        ChernoffFamily f = stack.back();
        stack.pop_back();
        return f;
    };

    try {
        if (st.name == "gaussian") return gaussian_family(grid, parse_generator(*ctx.problem, ctx.problem_line, grid));
        if (st.name == "symbol") return symbol_family(grid, parse_symbol(*ctx.problem, ctx.problem_line, grid.dim));
        if (st.name == "composite")
            return composite_convolution_family(grid, parse_generator(*ctx.problem, ctx.problem_line, grid),
                                                parse_symbol(*ctx.problem, ctx.problem_line, grid.dim));
        if (st.name == "poisson") {
            expr::Expression a = need_expr(p, "a", st.line, grid.dim, "pipeline.poisson");
            return poisson_family(grid, [a](double x) { return a(x); });
        }
        if (st.name == "shift" || st.name == "averaging") {
            const std::string interp = string_or(p, "interp", "spectral");
            if (interp != "spectral" && interp != "linear") fail(st.line, "pipeline: interp must be \"spectral\" or \"linear\"");
            const PointEvaluation mode = interp == "spectral" ? PointEvaluation::Spectral : PointEvaluation::Multilinear;
            if (st.name == "shift") return shift_family(grid, mode);
            const toml::Value* av = find(p, "atoms");
            if (!av || av->kind != toml::Value::Kind::Array) fail(st.line, "pipeline.averaging: needs atoms = [[...], ...]");
            std::vector<AveragingAtom> atoms;
            for (const auto& e : av->array) {
                if (e.kind != toml::Value::Kind::Array || e.array.size() != static_cast<std::size_t>(grid.dim) + 1)
                    fail(e.line, "pipeline.averaging: each atom is [offsets..., weight]");
                AveragingAtom atom;
                for (int a = 0; a < grid.dim; ++a) atom.offset[a] = e.array[a].as_number();
                atom.weight = e.array[grid.dim].as_number();
                atoms.push_back(atom);
            }
            return averaging_family(grid, std::move(atoms), mode);
        }
        if (st.name == "potential") {
            expr::Expression v = need_expr(p, "V", st.line, grid.dim, "pipeline.potential");
            return multiplication_family(grid, [v](Point q) { return v(q); });
        }
        if (st.name == "matrix_euler" || st.name == "matrix_resolvent") {
            const std::string kind = string_or(p, "kind", "laplacian");
            if (kind != "laplacian") fail(st.line, "pipeline matrix stage: only kind = \"laplacian\" is bundled");
            const double scale = number_or(p, "scale", 0.5);
            auto dense = periodic_laplacian_matrix(grid, scale);
            return st.name == "matrix_euler" ? matrix_euler_family(grid, std::move(dense))
                                             : matrix_resolvent_family(grid, std::move(dense));
        }
        if (st.name == "dirichlet") {
            const toml::Value* iv = find(p, grid.dim == 1 ? "intervals" : "rects");
            if (!iv || iv->kind != toml::Value::Kind::Array)
                fail(st.line, "pipeline.dirichlet: needs intervals (1D) or rects (2D)");
            std::vector<DomainMask::Box> boxes;
            for (const auto& e : iv->array) {
                const std::size_t want = grid.dim == 1 ? 2 : 4;
                if (e.kind != toml::Value::Kind::Array || e.array.size() != want)
                    fail(e.line, "pipeline.dirichlet: malformed box entry");
                DomainMask::Box b{e.array[0].as_number(), e.array[1].as_number()};
                if (grid.dim == 2) {
                    b.lo1 = e.array[2].as_number();
                    b.hi1 = e.array[3].as_number();
                }
                boxes.push_back(b);
            }
            return dirichlet_restrict(pop("dirichlet"), DomainMask(grid, boxes));
        }
        if (st.name == "perturb") {
            expr::Expression a = need_expr(p, "a", st.line, grid.dim, "pipeline.perturb");
            const double floor = number_or(p, "a0", 0.0);
            return multiplicative_perturbation(pop("perturb"), [a](Point q) { return a(q); }, floor);
        }
        if (st.name == "rotate") {
            const std::string mode = need_string(p, "mode", st.line, "pipeline.rotate");
            if (mode != "series" && mode != "symbol") fail(st.line, "pipeline.rotate: mode must be \"series\" or \"symbol\"");
            return rotate(pop("rotate"), mode == "series" ? RotationMode::Series : RotationMode::Symbol);
        }
        if (st.name == "subordinate_density") {
            SubordinatorSpec sub = SubordinatorSpec::half_stable_spec(static_cast<int>(integer_or(p, "nodes", 64)));
            sub.sigma = number_or(p, "sigma", 0.0);
            sub.lambda = number_or(p, "lambda", 0.0);
            return subordinate_known_density(pop("subordinate_density"), std::move(sub));
        }
        if (st.name == "subordinate_measure") {
            SubordinatorSpec sub;
            sub.sigma = number_or(p, "sigma", 0.0);
            sub.lambda = number_or(p, "lambda", 0.0);
            if (const toml::Value* av = find(p, "atoms")) {
                if (av->kind != toml::Value::Kind::Array) fail(av->line, "pipeline.subordinate_measure: atoms must be an array");
                for (const auto& e : av->array) {
                    if (e.kind != toml::Value::Kind::Array || e.array.size() != 2)
                        fail(e.line, "pipeline.subordinate_measure: each atom is [s, weight]");
                    sub.atoms.push_back({e.array[0].as_number(), e.array[1].as_number()});
                }
            }
            return subordinate_bounded_measure(pop("subordinate_measure"), std::move(sub));
        }
        if (st.name == "theta_split" || st.name == "convex_split") {
            const bool theta = st.name == "theta_split";
            const double param = need_number(p, theta ? "theta" : "tau", st.line, "pipeline." + st.name);
            ChernoffFamily f2 = pop(st.name.c_str());
            ChernoffFamily f1 = pop(st.name.c_str());
            return theta ? theta_splitting(std::move(f1), std::move(f2), param)
                         : convex_splitting(std::move(f1), std::move(f2), param);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        fail(st.line, "pipeline stage '" + st.name + "': " + ex.what());
    }
    fail(st.line, "unknown pipeline stage '" + st.name + "'");
}

inline ChernoffFamily build_pipeline(const std::vector<StageSpec>& stages, const BuildContext& ctx, int line) {
    if (stages.empty()) fail(line, "experiment has no pipeline stages");
    std::vector<ChernoffFamily> stack;
    for (const auto& st : stages) stack.push_back(build_stage(st, ctx, stack));
    if (stack.size() == 1) return stack.front();
    return compose(std::move(stack));
}

}  // namespace detail_cfg

// ---------------------------------------------------------------------------

inline ParsedConfig parse_config(toml::Table root) {
    using namespace detail_cfg;

    // fold in preset defaults first
    if (const toml::Value* pv = find(root, "preset")) {
        if (pv->kind != toml::Value::Kind::String) fail(pv->line, "preset: expected a preset name string");
        const Preset* preset = find_preset(pv->str);
        if (!preset) fail(pv->line, "unknown preset '" + pv->str + "'");
        toml::Table defaults = toml::parse_string(preset->text);
        merge_defaults(root, defaults);
    }

    ParsedConfig cfg;
    cfg.hash = toml::config_hash(root);
    cfg.grid = parse_grid(root);

    const toml::Value* problem = find(root, "problem");
    if (!problem || problem->kind != toml::Value::Kind::Table) fail(1, "missing [problem] block");
    const int problem_line = problem->line;

    expr::Expression f0e = need_expr(problem->table, "f0", problem_line, cfg.grid.dim, "problem");
    std::optional<expr::Expression> f0i;
    if (find(problem->table, "f0_imag"))
        f0i = need_expr(problem->table, "f0_imag", problem_line, cfg.grid.dim, "problem");
    try {
        cfg.f0 = sample(cfg.grid, std::function<Complex(Point)>([&](Point p) {
                            return Complex(f0e(p), f0i ? (*f0i)(p) : 0.0);
                        }));
    } catch (const std::exception& ex) {
        fail(problem_line, std::string("problem.f0: ") + ex.what());
    }

    if (const toml::Value* ov = find(root, "output")) {
        if (ov->kind != toml::Value::Kind::Table) fail(ov->line, "[output] must be a table");
        cfg.out_dir = string_or(ov->table, "dir", cfg.out_dir);
        cfg.snapshots = bool_or(ov->table, "snapshots", cfg.snapshots);
    }

    const RunSpec base_run_defaults = [&] {
        if (find(root, "run")) return parse_run(root, nullptr);
        RunSpec r;
        return r;
    }();

    BuildContext ctx{&cfg.grid, &problem->table, problem_line};
    std::vector<StageSpec> base_pipeline = parse_pipeline(find(root, "pipeline"));

    const toml::Value* exps = find(root, "experiment");
    if (exps) {
        if (exps->kind != toml::Value::Kind::Array) fail(exps->line, "[[experiment]] must be an array of tables");
        for (const auto& ev : exps->array) {
            if (ev.kind != toml::Value::Kind::Table) fail(ev.line, "[[experiment]] must be an array of tables");
            ExperimentPlan plan;
            plan.id = need_string(ev.table, "id", ev.line, "experiment");
            plan.pipeline = parse_pipeline(find(ev.table, "pipeline"));
            if (plan.pipeline.empty()) plan.pipeline = base_pipeline;
            if (find(root, "run") == nullptr && find(ev.table, "run") == nullptr)
                fail(ev.line, "experiment '" + plan.id + "' has no [run] block");
            plan.run = find(ev.table, "run") ? parse_run(ev.table, find(root, "run") ? &base_run_defaults : nullptr)
                                             : base_run_defaults;
            plan.family = build_pipeline(plan.pipeline, ctx, ev.line);
            cfg.experiments.push_back(std::move(plan));
        }
    } else {
        ExperimentPlan plan;
        plan.id = "main";
        plan.pipeline = base_pipeline;
        if (!find(root, "run")) fail(1, "missing [run] block");
        plan.run = base_run_defaults;
        plan.family = build_pipeline(plan.pipeline, ctx, 1);
        cfg.experiments.push_back(std::move(plan));
    }

    for (const auto& plan : cfg.experiments) {
        if (plan.run.mode == "fractional" && plan.run.reference == "dirichlet_sine")
            fail(plan.run.line, "experiment '" + plan.id + "': dirichlet_sine reference does not apply to fractional runs");
    }
    return cfg;
}

inline ParsedConfig parse_config_file(const std::string& path) { return parse_config(toml::parse_file(path)); }

inline std::string list_presets_text() {
    std::string out = "available presets:\n";
    for (const auto& p : presets()) {
        out += "  ";
        out += p.name;
        out += "  -  ";
        out += p.description;
        out += "\n";
    }
    return out;
}

}  // namespace chernoff::config
