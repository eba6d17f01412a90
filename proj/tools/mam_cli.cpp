// mam: fit marginal additive models, evaluate saved fits on grids, run simulation studies.
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 unreliable study.

#include "mam/config.hpp"
#include "mam/fit_io.hpp"
#include "mam/pipeline.hpp"
#include "mam/simulation.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mam;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitUnreliable = 4;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
}

// x, b_1(x), ..., b_d(x) for the raw B-spline basis of each smooth on its reporting grid.
void dump_basis(const ModelDesign& design, const std::vector<std::string>& names, Index points, const fs::path& out) {
    for (const SmoothTerm& t : design.smooth_terms()) {
        const Vector x = term_grid(t, points);
        const Matrix B = raw_basis(t, x);
        std::ostringstream os;
        os << "x";
        for (Index j = 0; j < B.cols(); ++j) os << ",b" << j + 1;
        os << "\n";
        for (Index r = 0; r < B.rows(); ++r) {
            os << format_double(x(r));
            for (Index j = 0; j < B.cols(); ++j) os << "," << format_double(B(r, j));
            os << "\n";
        }
        write_text((out / ("basis_" + names.at(static_cast<std::size_t>(t.covariate)) + ".csv")).string(), os.str());
    }
}

int cmd_fit(const std::string& data_path, const std::string& config_path, const std::string& out_dir,
            unsigned threads, bool verbose, bool basis) {
    const FitConfig config = fit_config_from_json(read_json_file(config_path));
    const ClusteredDataset data = load_csv(data_path, config.schema, config.spec.re);
    const ValidationReport report = validate(data, config.spec);
    if (!report.ok()) throw ValidationError("validation failed:\n" + report.summary());
    ensure_dir(out_dir);

    MamOptions opt;
    opt.grid_points = config.grid_points;
    opt.threads = threads;
    if (verbose)
        std::cerr << "fitting " << data.n_total() << " rows in " << data.num_clusters() << " clusters\n";
    const MamResult res = fit_mam(data, config.spec, opt);

    const fs::path out(out_dir);
    write_text((out / "fit_summary.json").string(), fit_summary_json(res, config, data).dump(2) + "\n");
    write_curves_csv((out / "marginal_curves.csv").string(), res.marginal_curves);
    write_curves_csv((out / "conditional_curves.csv").string(), res.conditional_curves);
    write_text((out / "diagnostics.txt").string(), diagnostics_text(res));
    if (basis) dump_basis(res.conditional.design, data.covariate_names(), config.grid_points, out);
    if (verbose) std::cerr << diagnostics_text(res);
    return 0;
}

int cmd_marginalize(const std::string& fit_path, const std::string& grid_path, const std::string& data_path,
                    std::string out_dir, unsigned threads) {
    const SavedFit saved = load_fit_summary(fit_path);
    const auto& names = saved.config.schema.covariate_columns;
    Matrix grid;
    if (grid_path == "observed") {  // covariate rows of a data file
        if (data_path.empty()) throw ValidationError("--grid observed needs --data");
        grid = load_csv(data_path, saved.config.schema, saved.config.spec.re).stacked_x();
    } else {
        grid = grid_from_json(read_json_file(grid_path), names);
    }
    if (out_dir.empty()) out_dir = fs::path(fit_path).parent_path().string();
    if (out_dir.empty()) out_dir = ".";
    ensure_dir(out_dir);

    const ConditionalFit view = saved.conditional_view();
    const GhqRule rule = ghq_rule(saved.config.spec.re.dim(), saved.config.spec.ghq_k);
    const MarginalizedMeans means = marginalize(view, grid, rule, false, threads);
    const Matrix B = saved.design.rows(grid);
    const Matrix cov = saved.cov_conditional + saved.cov_correction;
    const Vector var = ((B * cov).array() * B.array()).rowwise().sum().cwiseMax(0.0);
    const Bands bands = confidence_bands(B * saved.alpha_M, var, Vector::Zero(var.size()));

    std::ostringstream os;
    for (const auto& n : names) os << n << ",";
    os << "lambda_hat,estimate,se,lower,upper\n";
    for (Index r = 0; r < grid.rows(); ++r) {
        for (Index c = 0; c < grid.cols(); ++c) os << format_double(grid(r, c)) << ",";
        os << format_double(means.lambda_hat(r)) << "," << format_double(bands.estimate(r)) << ","
           << format_double(bands.se(r)) << "," << format_double(bands.lower(r)) << ","
           << format_double(bands.upper(r)) << "\n";
    }
    write_text((fs::path(out_dir) / "marginal_grid.csv").string(), os.str());
    if (means.clamped > 0) std::cerr << "warning: " << means.clamped << " marginal means clamped to the link domain\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, const std::string& seed,
                 long replicates, unsigned threads, bool verbose) {
    nlohmann::json j = read_json_file(config_path);
    if (!seed.empty()) {
        try {
            j["seed"] = static_cast<std::uint64_t>(std::stoull(seed));
        } catch (const std::exception&) {
            throw ValidationError("--seed must be a non-negative integer");
        }
    }
    if (replicates > 0) j["replicates"] = replicates;
    const Scenario s = scenario_from_json(j);
    ensure_dir(out_dir);
    const StudyReport rep = run_study(s, threads, [&](Index done, Index total) {
        if (verbose) std::cerr << "\rreplicate " << done << "/" << total << std::flush;
    });
    if (verbose) std::cerr << "\n";
    const fs::path out(out_dir);
    write_text((out / "study_report.csv").string(), study_report_csv(rep));
    write_text((out / "replicates.csv").string(), replicates_csv(rep));
    write_text((out / "scenario.json").string(), scenario_to_json(s).dump(2) + "\n");
    if (rep.failed > 0) std::cerr << rep.failed << " of " << s.replicates << " replicates failed\n";
    if (rep.unreliable) {
        std::cerr << "study unreliable: more than 10% of replicates failed\n";
        return kExitUnreliable;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Marginal additive models for clustered data"};
    app.require_subcommand(1);
    unsigned threads = 0;
    bool verbose = false, basis = false;
    app.add_option("--threads", threads, "worker threads (0 = MAM_THREADS or hardware)");
    app.add_flag("-v,--verbose", verbose, "progress and diagnostics on stderr");

    std::string data_path, config_path, out_dir, fit_path, grid_path, seed;
    long replicates = 0;

    auto* fit = app.add_subcommand("fit", "fit a model from CSV data and a JSON config");
    fit->add_option("--data", data_path, "long-format CSV")->required();
    fit->add_option("--config", config_path, "model config JSON")->required();
    fit->add_option("--out", out_dir, "output directory")->required();
    fit->add_option("--threads", threads, "worker threads");
    fit->add_flag("--dump-basis", basis, "also write basis_<covariate>.csv per smooth");

    auto* sim = app.add_subcommand("simulate", "run a simulation study");
    sim->add_option("--config", config_path, "scenario JSON")->required();
    sim->add_option("--out", out_dir, "output directory")->required();
    sim->add_option("--seed", seed, "override the scenario seed");
    sim->add_option("--replicates", replicates, "override the number of replicates");
    sim->add_option("--threads", threads, "worker threads");

    auto* mrg = app.add_subcommand("marginalize", "evaluate a saved fit on a covariate grid");
    mrg->add_option("--fit", fit_path, "fit_summary.json")->required();
    mrg->add_option("--grid", grid_path, "grid JSON, or 'observed' for the rows of --data")->required();
    mrg->add_option("--data", data_path, "CSV whose covariate rows form the grid (with --grid observed)");
    mrg->add_option("--out", out_dir, "output directory (default: next to the fit)");
    mrg->add_option("--threads", threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        const unsigned workers = resolve_threads(threads);
        if (*fit) return cmd_fit(data_path, config_path, out_dir, workers, verbose, basis);
        if (*sim) return cmd_simulate(config_path, out_dir, seed, replicates, workers, verbose);
        if (*mrg) return cmd_marginalize(fit_path, grid_path, data_path, out_dir, workers);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitValidation;
}
