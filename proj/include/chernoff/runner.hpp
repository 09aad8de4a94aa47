#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chernoff/config.hpp"
#include "chernoff/iterate.hpp"
#include "chernoff/stochastic.hpp"
#include "chernoff/version.hpp"

namespace chernoff::runner {

struct RunOptions {
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int threads = 1;
    bool snapshots = false;
};

namespace detail_run {

inline GridFunction solve_cell(const config::ExperimentPlan& plan, const GridFunction& f0, int n) {
    if (plan.run.mode == "fractional")
        return fractional_solve(plan.family, f0, plan.run.t, n, FractionalMeasure::delta_half(),
                                plan.run.fractional_nodes, /*force_generic_iteration=*/true);
    return chernoff_iterate(plan.family, plan.run.t, n, f0);
}

inline GridFunction build_reference(const config::ExperimentPlan& plan, const config::ParsedConfig& cfg) {
    const auto& r = plan.run;
    if (r.reference == "family") {
        if (r.mode == "fractional") {
            if (!plan.family.exact_semigroup())
                throw std::runtime_error("experiment '" + plan.id +
                                         "': the family reference in fractional mode needs an exact-semigroup pipeline");
            return fractional_solve(plan.family, cfg.f0, r.t, 1, FractionalMeasure::delta_half(), r.fractional_nodes);
        }
        return plan.family.apply(r.t, cfg.f0);
    }
    if (r.reference == "dirichlet_sine") {
        if (cfg.grid.dim != 1)
            throw std::runtime_error("experiment '" + plan.id + "': dirichlet_sine reference is one-dimensional");
        const double decay = std::exp(-detail::kPi * detail::kPi * r.t / 2.0);
        return sample1d(cfg.grid, [decay](double x) {
            return (x >= 0.0 && x <= 1.0) ? decay * std::sin(detail::kPi * x) : 0.0;
        });
    }
    const int nref = std::stoi(r.reference.substr(5));
    return solve_cell(plan, cfg.f0, nref);
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void write_snapshot(const std::filesystem::path& path, const GridFunction& g) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write snapshot file " + path.string());
    const Grid& grid = g.grid();
    out << (grid.dim == 1 ? "x,value_re,value_im\n" : "x,y,value_re,value_im\n");
    char buf[96];
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point p = grid.node(i);
        if (grid.dim == 1)
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p[0], g[i].real(), g[i].imag());
        else
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p[0], p[1], g[i].real(), g[i].imag());
        out << buf;
    }
}

}  // namespace detail_run

/// Execute every experiment in the config: one ConvergenceReport per
/// experiment, rows appended to results.csv, the full reports serialized to
/// report.json, optional per-n solution snapshots.
inline void run(const config::ParsedConfig& cfg, const RunOptions& opts) {
    namespace fs = std::filesystem;
    fs::create_directories(opts.out_dir);

    struct Cell {
        std::size_t exp_index;
        int n;
        double sup_error = 0.0;
        double l2_error = 0.0;
        double runtime_ms = 0.0;
        GridFunction solution;
    };

    std::vector<GridFunction> references;
    references.reserve(cfg.experiments.size());
    for (const auto& plan : cfg.experiments) references.push_back(detail_run::build_reference(plan, cfg));

    std::vector<Cell> cells;
    for (std::size_t e = 0; e < cfg.experiments.size(); ++e)
        for (int n : cfg.experiments[e].run.ns) {
            Cell cell;
            cell.exp_index = e;
            cell.n = n;
            cells.push_back(std::move(cell));
        }

    auto work = [&](Cell& cell) {
        const auto& plan = cfg.experiments[cell.exp_index];
        const auto start = std::chrono::steady_clock::now();
        cell.solution = detail_run::solve_cell(plan, cfg.f0, cell.n);
        const auto stop = std::chrono::steady_clock::now();
        cell.runtime_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        cell.sup_error = sup_norm(cell.solution - references[cell.exp_index]);
        cell.l2_error = l2_norm(cell.solution - references[cell.exp_index]);
    };

    if (opts.threads <= 1) {
        for (auto& cell : cells) work(cell);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(opts.threads));
        for (int w = 0; w < opts.threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) work(cells[i]);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    // results.csv
    const fs::path csv_path = fs::path(opts.out_dir) / "results.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << "experiment,n,sup_error,l2_error,runtime_ms\n";
    char buf[160];
    for (const auto& cell : cells) {
        std::snprintf(buf, sizeof buf, ",%d,%.17g,%.17g,%.17g\n", cell.n, cell.sup_error, cell.l2_error,
                      cell.runtime_ms);
        csv << cfg.experiments[cell.exp_index].id << buf;
    }
    csv.close();

    // report.json: full ConvergenceReport serialization
    nlohmann::json experiments = nlohmann::json::array();
    for (std::size_t e = 0; e < cfg.experiments.size(); ++e) {
        const auto& plan = cfg.experiments[e];
        ConvergenceReport report;
        report.t = plan.run.t;
        report.reference = plan.run.reference;
        report.norm_kind = plan.run.norm;
        std::vector<int> ns;
        std::vector<double> sup_errs, l2_errs;
        for (const auto& cell : cells) {
            if (cell.exp_index != e) continue;
            report.entries.push_back({cell.n, cell.sup_error, cell.l2_error, cell.runtime_ms});
            ns.push_back(cell.n);
            sup_errs.push_back(cell.sup_error);
            l2_errs.push_back(cell.l2_error);
        }
        report.exact = true;
        for (const auto& en : report.entries)
            if (std::max(en.sup_error, en.l2_error) >= 1e-10) report.exact = false;
        if (!report.exact) {
            report.order_sup = detail::fit_observed_order(ns, sup_errs);
            report.order_l2 = detail::fit_observed_order(ns, l2_errs);
        }

        nlohmann::json entries = nlohmann::json::array();
        for (const auto& en : report.entries)
            entries.push_back({{"n", en.n},
                               {"sup_error", en.sup_error},
                               {"l2_error", en.l2_error},
                               {"runtime_ms", en.runtime_ms}});
        nlohmann::json jr = {{"id", plan.id},
                             {"t", report.t},
                             {"mode", plan.run.mode},
                             {"norm", report.norm_kind},
                             {"reference", report.reference},
                             {"exact", report.exact},
                             {"entries", entries}};
        jr["fitted_order_sup"] = report.order_sup ? nlohmann::json(*report.order_sup) : nlohmann::json(nullptr);
        jr["fitted_order_l2"] = report.order_l2 ? nlohmann::json(*report.order_l2) : nlohmann::json(nullptr);
        experiments.push_back(std::move(jr));
    }

    nlohmann::json report_json = {{"schema_version", 1},
                                  {"library_version", kLibraryVersion},
                                  {"config_hash", detail_run::hex64(cfg.hash)},
                                  {"seed", opts.seed},
                                  {"experiments", experiments}};
    const fs::path json_path = fs::path(opts.out_dir) / "report.json";
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("cannot write " + json_path.string());
    js << report_json.dump(2) << "\n";
    js.close();

    if (opts.snapshots || cfg.snapshots) {
        for (const auto& cell : cells) {
            const std::string name =
                "snapshot_" + cfg.experiments[cell.exp_index].id + "_n" + std::to_string(cell.n) + ".csv";
            detail_run::write_snapshot(fs::path(opts.out_dir) / name, cell.solution);
        }
    }
}

}  // namespace chernoff::runner
