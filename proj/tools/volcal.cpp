// Command-line front end for the calibration library.
//
// Subcommands:
//   check         validate quotes against static-arbitrage spread tests
//   fit-prior     fit the first-maturity reference volatility
//   calibrate     run the full surface calibration and save the result
//   smile         reprice a strike grid from a saved surface
//   export-trace  dump per-maturity convergence traces from a saved surface
//
// Exit codes: 0 success, 1 check failure, 2 usage/input error,
// 3 suspected arbitrage in the quotes, 4 solver failed to converge.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "volcal/volcal.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitArbitrage = 3;
constexpr int kExitNotConverged = 4;

struct RunConfig {
    double lambda = 0.1;
    double eps_floor = 1e-4;
    int grid_n = 200;
    double grad_tol = 1e-8;   // relative to spot
    double tail_tol = 1e-10;
    int max_outer = 500;
    int threads = 1;
    bool truncate_at_zero = false;
};

void print_config(const RunConfig& c, std::ostream& os) {
    os << "lambda=" << c.lambda << '\n'
       << "eps_floor=" << c.eps_floor << '\n'
       << "grid_n=" << c.grid_n << '\n'
       << "grad_tol=" << c.grad_tol << '\n'
       << "tail_tol=" << c.tail_tol << '\n'
       << "max_outer=" << c.max_outer << '\n'
       << "threads=" << c.threads << '\n'
       << "truncate_at_zero=" << (c.truncate_at_zero ? 1 : 0) << '\n';
}

// Flat key=value file; '#' starts a comment; unknown keys are rejected.
void apply_config_file(RunConfig& c, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw CLI::ValidationError("--config", "cannot open " + path);
    std::string line;
    int ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed;
        for (char ch : line)
            if (!std::isspace(static_cast<unsigned char>(ch)))
                trimmed += ch;
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError(
                "config", path + ":" + std::to_string(ln) + ": expected key=value");
        const std::string key = trimmed.substr(0, eq);
        const std::string val = trimmed.substr(eq + 1);
        try {
            if (key == "lambda") c.lambda = std::stod(val);
            else if (key == "eps_floor") c.eps_floor = std::stod(val);
            else if (key == "grid_n") c.grid_n = std::stoi(val);
            else if (key == "grad_tol") c.grad_tol = std::stod(val);
            else if (key == "tail_tol") c.tail_tol = std::stod(val);
            else if (key == "max_outer") c.max_outer = std::stoi(val);
            else if (key == "threads") c.threads = std::stoi(val);
            else if (key == "truncate_at_zero")
                c.truncate_at_zero = val == "1" || val == "true";
            else
                throw CLI::ValidationError(
                    "config", path + ":" + std::to_string(ln) + ": unknown key '" +
                                  key + "'");
        } catch (const std::invalid_argument&) {
            throw CLI::ValidationError(
                "config", path + ":" + std::to_string(ln) + ": bad value for '" +
                              key + "'");
        }
    }
}

volcal::QuoteSet parse_quote_file(const std::string& path, double lambda) {
    std::ifstream is(path);
    if (!is) throw volcal::ParseError("cannot open quote file: " + path);
    return volcal::parse_quotes(is, lambda);
}

volcal::SurfaceConfig surface_config(const RunConfig& c) {
    volcal::SurfaceConfig sc;
    sc.solver.grad_tol_rel = c.grad_tol;
    sc.solver.max_outer = c.max_outer;
    sc.solver.threads = c.threads;
    sc.grid_n = c.grid_n;
    sc.tail_tol = c.tail_tol;
    sc.eps_floor = c.eps_floor;
    sc.truncate_at_zero = c.truncate_at_zero;
    return sc;
}

int cmd_check(const RunConfig& cfg, const std::string& quotes_path,
              const std::string& csv_out) {
    const volcal::QuoteSet qs = parse_quote_file(quotes_path, cfg.lambda);
    for (const auto& wmsg : qs.warnings)
        std::cerr << "warning: " << wmsg << '\n';
    std::vector<volcal::WeightedSlice> ws;
    for (const auto& sl : qs.slices)
        ws.push_back(volcal::compute_weights(sl, cfg.eps_floor));
    const volcal::SpreadReport rep = volcal::check_quotes(ws);
    volcal::write_report_text(rep, std::cout);
    if (!csv_out.empty()) {
        std::ofstream os(csv_out);
        if (!os) throw volcal::ParseError("cannot open for writing: " + csv_out);
        volcal::write_report_csv(rep, os);
    }
    return rep.overall_pass ? kExitOk : kExitCheckFailed;
}

int cmd_fit_prior(const RunConfig& cfg, const std::string& quotes_path) {
    const volcal::QuoteSet qs = parse_quote_file(quotes_path, cfg.lambda);
    const auto ws = volcal::compute_weights(qs.slices.front(), cfg.eps_floor);
    const volcal::PriorFit fit = volcal::fit_first_prior(ws);
    std::cout << "maturity=" << ws.slice.maturity << '\n'
              << "sigma0=" << fit.params.sigma0 << '\n'
              << "objective=" << fit.objective << '\n'
              << "at_boundary=" << (fit.at_boundary ? 1 : 0) << '\n';
    std::cout << "note: transition priors for later maturities are fitted "
                 "during calibrate\n";
    return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, const std::string& quotes_path,
                  const std::string& out_path) {
    const volcal::QuoteSet qs = parse_quote_file(quotes_path, cfg.lambda);
    const volcal::CalibratedSurface surf =
        volcal::calibrate_surface(qs, surface_config(cfg));
    for (const auto& wmsg : surf.warnings)
        std::cerr << "warning: " << wmsg << '\n';
    volcal::save_surface_file(surf, out_path);
    for (const auto& cs : surf.slices) {
        std::cout << "maturity " << cs.problem.maturity << ": converged in "
                  << cs.iterations << " iterations, grad_inf "
                  << cs.final_grad_inf << ", rate " << cs.lambda_hat << '\n';
    }
    std::cout << "surface written to " << out_path << '\n';
    return kExitOk;
}

int cmd_smile(const std::string& surface_path, int index, double k_lo,
              double k_hi, int k_n, const std::string& out_path,
              bool all_maturities) {
    const volcal::CalibratedSurface surf =
        volcal::load_surface_file(surface_path);
    if (surf.slices.empty()) throw volcal::LoadError("surface has no slices");
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file)
            throw volcal::LoadError("cannot open for writing: " + out_path);
        os = &file;
    }
    const auto grid_for = [&](std::size_t i) {
        double lo = k_lo, hi = k_hi;
        if (!(hi > lo)) {
            const auto& ks = surf.slices[i].problem.strikes;
            lo = ks.front();
            hi = ks.back();
        }
        return volcal::uniform_strike_grid(lo, hi, k_n);
    };
    if (all_maturities) {
        (*os) << "maturity,strike,price,implied_vol\n";
        os->precision(17);
        for (std::size_t i = 0; i < surf.slices.size(); ++i) {
            for (const auto& p : volcal::query_smile(surf, i, grid_for(i))) {
                (*os) << surf.slices[i].problem.maturity << ',' << p.strike
                      << ',' << p.price << ',';
                if (p.implied_vol) (*os) << *p.implied_vol;
                (*os) << '\n';
            }
        }
        return kExitOk;
    }
    if (index < 0 || static_cast<std::size_t>(index) >= surf.slices.size())
        throw CLI::ValidationError("--index", "maturity index out of range");
    const auto pts =
        volcal::query_smile(surf, static_cast<std::size_t>(index),
                            grid_for(static_cast<std::size_t>(index)));
    volcal::write_smile_csv(pts, *os);
    return kExitOk;
}

int cmd_export_trace(const std::string& surface_path,
                     const std::string& out_dir) {
    const volcal::CalibratedSurface surf =
        volcal::load_surface_file(surface_path);
    for (std::size_t i = 0; i < surf.slices.size(); ++i) {
        const std::string path =
            out_dir + "/trace_slice" + std::to_string(i) + ".csv";
        std::ofstream os(path);
        if (!os) throw volcal::LoadError("cannot open for writing: " + path);
        volcal::write_trace_csv(surf.slices[i].trace, os);
        std::cout << "wrote " << path << '\n';
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bid-ask implied-volatility surface calibration"};
    app.require_subcommand(0, 1);

    RunConfig cfg;
    std::string config_path;
    bool want_print_config = false;
    app.add_option("--config", config_path,
                   "flat key=value config file (falls back to $VOLCAL_CONFIG)");
    app.add_flag("--print-config", want_print_config,
                 "print the effective configuration and exit");
    app.add_option("--lambda", cfg.lambda, "spread-to-weight scale, > 0");
    app.add_option("--eps-floor", cfg.eps_floor,
                   "relative weight floor for zero-width quotes");
    app.add_option("--grid-n", cfg.grid_n, "marginal grid size");
    app.add_option("--grad-tol", cfg.grad_tol,
                   "convergence tolerance, relative to spot");
    app.add_option("--tail-tol", cfg.tail_tol,
                   "discretization tail budget (call-value units)");
    app.add_option("--max-outer", cfg.max_outer, "outer iteration cap");
    app.add_option("--threads", cfg.threads, "worker threads");
    app.add_flag("--truncate-at-zero", cfg.truncate_at_zero,
                 "restrict transition kernels to nonnegative prices");

    std::string quotes_path, out_path, csv_out, surface_path, out_dir = ".";
    int smile_index = 0, smile_n = 50;
    double k_lo = 0.0, k_hi = 0.0;
    bool all_maturities = false;

    CLI::App* c_check = app.add_subcommand("check", "run static-arbitrage checks");
    c_check->add_option("quotes", quotes_path, "quote CSV file")->required();
    c_check->add_option("--csv", csv_out, "also write the report as CSV");

    CLI::App* c_fit = app.add_subcommand("fit-prior", "fit the first-maturity prior");
    c_fit->add_option("quotes", quotes_path, "quote CSV file")->required();

    CLI::App* c_cal = app.add_subcommand("calibrate", "calibrate the full surface");
    c_cal->add_option("quotes", quotes_path, "quote CSV file")->required();
    c_cal->add_option("-o,--out", out_path, "output surface file")->required();

    CLI::App* c_smile = app.add_subcommand("smile", "reprice strikes from a surface");
    c_smile->add_option("surface", surface_path, "surface file")->required();
    c_smile->add_option("--index", smile_index, "maturity index (0-based)");
    c_smile->add_option("--k-lo", k_lo, "lowest strike");
    c_smile->add_option("--k-hi", k_hi, "highest strike");
    c_smile->add_option("--k-n", smile_n, "number of strikes");
    c_smile->add_flag("--all-maturities", all_maturities,
                      "emit maturity,strike,price,implied_vol for every slice");
    c_smile->add_option("-o,--out", out_path, "output CSV (default stdout)");

    CLI::App* c_trace = app.add_subcommand("export-trace",
                                           "dump convergence traces");
    c_trace->add_option("surface", surface_path, "surface file")->required();
    c_trace->add_option("-o,--out-dir", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (config_path.empty()) {
            if (const char* env = std::getenv("VOLCAL_CONFIG"))
                config_path = env;
        }
        // Config file first, then explicit flags override it.
        if (!config_path.empty()) {
            RunConfig file_cfg;
            apply_config_file(file_cfg, config_path);
            RunConfig merged = file_cfg;
            for (const auto* opt : app.get_options()) {
                if (opt->count() == 0) continue;
                const std::string name = opt->get_name();
                if (name == "--lambda") merged.lambda = cfg.lambda;
                else if (name == "--eps-floor") merged.eps_floor = cfg.eps_floor;
                else if (name == "--grid-n") merged.grid_n = cfg.grid_n;
                else if (name == "--grad-tol") merged.grad_tol = cfg.grad_tol;
                else if (name == "--tail-tol") merged.tail_tol = cfg.tail_tol;
                else if (name == "--max-outer") merged.max_outer = cfg.max_outer;
                else if (name == "--threads") merged.threads = cfg.threads;
                else if (name == "--truncate-at-zero")
                    merged.truncate_at_zero = cfg.truncate_at_zero;
            }
            cfg = merged;
        }
        if (cfg.lambda <= 0.0)
            throw CLI::ValidationError("--lambda", "must be positive");
        if (cfg.grid_n < 2)
            throw CLI::ValidationError("--grid-n", "must be at least 2");
        if (want_print_config) {
            print_config(cfg, std::cout);
            return kExitOk;
        }

        if (c_check->parsed()) return cmd_check(cfg, quotes_path, csv_out);
        if (c_fit->parsed()) return cmd_fit_prior(cfg, quotes_path);
        if (c_cal->parsed()) return cmd_calibrate(cfg, quotes_path, out_path);
        if (c_smile->parsed())
            return cmd_smile(surface_path, smile_index, k_lo, k_hi, smile_n,
                             out_path, all_maturities);
        if (c_trace->parsed()) return cmd_export_trace(surface_path, out_dir);
        std::cerr << "error: a subcommand is required (see --help)\n";
        return kExitUsage;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const volcal::CalibrationError& e) {
        for (const auto& w : e.warnings) std::cerr << "warning: " << w << '\n';
        std::cerr << "error: " << e.what() << " ["
                  << volcal::to_string(e.status) << "]\n";
        return e.status == volcal::SolveStatus::ArbitrageSuspected
                   ? kExitArbitrage
                   : kExitNotConverged;
    } catch (const volcal::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const volcal::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const volcal::LoadError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const volcal::FitError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
