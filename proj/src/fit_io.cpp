#include "mam/fit_io.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

namespace mam {

using nlohmann::json;

json matrix_to_json(const Matrix& M) {
    json j = json::array();
    for (Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

Matrix matrix_from_json(const json& j) {
    const Index rows = static_cast<Index>(j.size());
    const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
    Matrix M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(j[static_cast<std::size_t>(r)].size()) != cols) throw ValidationError("ragged matrix in fit artifact");
        for (Index c = 0; c < cols; ++c) M(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return M;
}

json vector_to_json(const Vector& v) {
    json j = json::array();
    for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

Vector vector_from_json(const json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json fit_summary_json(const MamResult& res, const FitConfig& config, const ClusteredDataset& dataset) {
    const ConditionalFit& fit = res.conditional;
    const auto& names = fit.covariate_names;
    json j;
    j["schema_version"] = kSchemaVersion;
    j["created_at"] = utc_timestamp();
    j["config"] = fit_config_to_json(config);
    j["data"] = {{"n_total", dataset.n_total()}, {"num_clusters", dataset.num_clusters()}};

    json terms = json::array();
    for (Index l = 0; l < fit.design.num_smooths(); ++l) {
        const SmoothTerm& t = fit.design.smooth_terms()[static_cast<std::size_t>(l)];
        terms.push_back({{"term", fit.design.column_term(fit.design.smooth_first_col(l), names)},
                         {"covariate", names.at(static_cast<std::size_t>(t.covariate))},
                         {"degree", t.degree},
                         {"penalty_order", t.penalty_order},
                         {"basis_dim", t.basis_dim},
                         {"lo", t.lo},
                         {"hi", t.hi},
                         {"knots", t.knots},
                         {"centering", vector_to_json(t.centering)},
                         {"transform", matrix_to_json(t.transform)},
                         {"first_column", fit.design.smooth_first_col(l)},
                         {"null_dim", t.null_dim()},
                         {"edf", fit.edf(l)}});
    }
    j["terms"] = terms;

    json columns = json::array();
    for (Index c = 0; c < fit.design.num_fixed(); ++c) columns.push_back(fit.design.column_term(c, names));

    json u = json::array();
    for (Index i = 0; i < dataset.num_clusters(); ++i) {
        json row = json::array();
        for (Index k = 0; k < fit.u.cols(); ++k) row.push_back(fit.u(i, k));
        u.push_back({{"cluster", dataset.cluster(i).id}, {"u", row}});
    }
    json psi = json::object();
    for (std::size_t k = 0; k < fit.psi_names.size(); ++k) psi[fit.psi_names[k]] = fit.psi(static_cast<Index>(k));
    std::vector<std::string> boundary = fit.diagnostics.boundary;
    std::vector<bool> identified = fit.identified;

    j["conditional"] = {
        {"columns", columns},
        {"alpha", vector_to_json(fit.alpha)},
        {"log_tau", vector_to_json(fit.hyper.log_tau)},
        {"theta", vector_to_json(fit.hyper.theta.theta())},
        {"sigma", matrix_to_json(fit.hyper.theta.sigma())},
        {"sd_corr", vector_to_json(fit.hyper.theta.natural())},
        {"hyperparameters", psi},
        {"laml", fit.laml},
        {"edf", vector_to_json(fit.edf)},
        {"H_outer", matrix_to_json(fit.H_outer)},
        {"identified", identified},
        {"u_hat", u},
        {"convergence",
         {{"converged", fit.diagnostics.converged},
          {"outer_iterations", fit.diagnostics.outer_iterations},
          {"outer_evaluations", fit.diagnostics.outer_evaluations},
          {"polish_iterations", fit.diagnostics.polish_iterations},
          {"outer_gradient_max", fit.diagnostics.outer_grad_norm},
          {"inner_iterations", fit.diagnostics.inner_iterations},
          {"inner_gradient_max", fit.diagnostics.inner_grad_norm},
          {"boundary", boundary}}}};
    if (fit.data.has_scale()) j["conditional"]["residual_sd"] = std::exp(fit.hyper.log_sd);

    j["marginal"] = {{"alpha", vector_to_json(res.marginal.alpha_M)},
                     {"cov_conditional", matrix_to_json(res.marginal.cov_conditional)},
                     {"cov_correction", matrix_to_json(res.marginal.cov_correction)},
                     {"correction_available", res.marginal.correction_available},
                     {"correction_flag", res.marginal.correction_flag},
                     {"gram_condition", res.marginal.projection.gram_condition},
                     {"clamped_means", res.means.clamped},
                     {"ghq_nodes_per_dim", res.rule.k}};
    return j;
}

SavedFit load_fit_summary(const std::string& path) {
    const json j = read_json_file(path);
    try {
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
            throw ValidationError("fit artifact '" + path + "' has an unsupported schema_version");
        SavedFit out;
        out.config = fit_config_from_json(j.at("config"));
        const auto& names = out.config.schema.covariate_columns;
        std::vector<SmoothTerm> terms;
        const auto& tj = j.at("terms");
        if (tj.size() != out.config.spec.smooth_terms.size()) throw ValidationError("fit artifact terms do not match its config");
        for (std::size_t l = 0; l < tj.size(); ++l) {
            const auto& t = tj[l];
            SmoothTerm term;
            term.covariate = out.config.spec.smooth_terms[l].covariate;
            if (names.at(static_cast<std::size_t>(term.covariate)) != t.at("covariate").get<std::string>())
                throw ValidationError("fit artifact term order does not match its config");
            term.degree = t.at("degree").get<int>();
            term.penalty_order = t.at("penalty_order").get<Index>();
            term.basis_dim = t.at("basis_dim").get<Index>();
            term.lo = t.at("lo").get<double>();
            term.hi = t.at("hi").get<double>();
            term.knots = t.at("knots").get<std::vector<double>>();
            term.centering = vector_from_json(t.at("centering"));
            term.S = difference_penalty(term.basis_dim, term.penalty_order);
            finalize_term(term);
            term.transform = matrix_from_json(t.at("transform"));
            terms.push_back(std::move(term));
        }
        out.design = ModelDesign::from_terms(out.config.spec, std::move(terms), static_cast<Index>(names.size()));
        const auto& c = j.at("conditional");
        out.alpha_C = vector_from_json(c.at("alpha"));
        out.theta = CovarianceParam(out.config.spec.re.dim(), vector_from_json(c.at("theta")));
        const auto& m = j.at("marginal");
        out.alpha_M = vector_from_json(m.at("alpha"));
        out.cov_conditional = matrix_from_json(m.at("cov_conditional"));
        out.cov_correction = matrix_from_json(m.at("cov_correction"));
        const Index d = out.design.num_fixed();
        if (out.alpha_C.size() != d || out.alpha_M.size() != d || out.cov_conditional.rows() != d ||
            out.cov_correction.rows() != d)
            throw ValidationError("fit artifact '" + path + "' is inconsistent with its basis");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("fit artifact '" + path + "' is malformed: " + e.what());
    }
}

ConditionalFit SavedFit::conditional_view() const {
    ConditionalFit fit;
    fit.design = design;
    fit.covariate_names = config.schema.covariate_columns;
    fit.alpha = alpha_C;
    fit.hyper.theta = theta;
    return fit;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << text;
}

void write_curves_csv(const std::string& path, const std::vector<Curve>& curves) {
    std::ostringstream os;
    os << "term,x,estimate,se,lower,upper\n";
    for (const auto& c : curves)
        for (Index i = 0; i < c.x.size(); ++i)
            os << c.term << "," << format_double(c.x(i)) << "," << format_double(c.estimate(i)) << ","
               << format_double(c.se(i)) << "," << format_double(c.lower(i)) << "," << format_double(c.upper(i))
               << "\n";
    write_text(path, os.str());
}

std::string diagnostics_text(const MamResult& res) {
    const ConditionalFit& fit = res.conditional;
    const FitDiagnostics& d = fit.diagnostics;
    std::ostringstream os;
    os.precision(10);
    os << "conditional fit\n";
    os << "  converged: " << (d.converged ? "yes" : "no") << "\n";
    os << "  outer iterations: " << d.outer_iterations << " (" << d.outer_evaluations << " evaluations, "
       << d.polish_iterations << " Newton polish steps)\n";
    os << "  outer gradient max-norm: " << d.outer_grad_norm << "\n";
    os << "  inner Newton steps at optimum: " << d.inner_iterations << ", gradient max-norm " << d.inner_grad_norm
       << "\n";
    os << "  log LAML: " << fit.laml << "\n";
    for (std::size_t k = 0; k < fit.psi_names.size(); ++k)
        os << "  " << fit.psi_names[k] << " = " << fit.psi(static_cast<Index>(k))
           << (fit.identified[k] ? "" : "  (excluded from correction)") << "\n";
    for (const auto& b : d.boundary) os << "  boundary: " << b << "\n";
    for (Index l = 0; l < fit.edf.size(); ++l)
        os << "  edf " << fit.design.column_term(fit.design.smooth_first_col(l), fit.covariate_names) << " = "
           << fit.edf(l) << "\n";
    os << "marginal fit\n";
    os << "  Gram condition: " << res.marginal.projection.gram_condition << "\n";
    os << "  clamped marginal means: " << res.means.clamped << "\n";
    os << "  correction: " << (res.marginal.correction_available ? "available" : res.marginal.correction_flag) << "\n";
    os << "outer trace\n";
    for (const auto& line : d.trace) os << "  " << line << "\n";
    return os.str();
}

}  // namespace mam
