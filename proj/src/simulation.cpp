#include "mam/simulation.hpp"

#include "mam/marginalizer.hpp"
#include "mam/quadrature.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>

namespace mam {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : state_(mix64(seed + 0x9E3779B97F4A7C15ULL) ^ mix64(mix64(stream) + 0xD1B54A32D192ED03ULL)) {}

std::uint64_t RandomStream::next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
}

double RandomStream::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RandomStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
}

bool RandomStream::bernoulli(double p) { return uniform() < p; }

// ---------------------------------------------------------------- scenario

Matrix Scenario::sigma() const {
    if (re == RandomEffects::Intercept) return Matrix::Constant(1, 1, sigma0 * sigma0);
    Matrix S(2, 2);
    S << sigma0 * sigma0, rho * sigma0 * sigma1, rho * sigma0 * sigma1, sigma1 * sigma1;
    return S;
}

void Scenario::validate() const {
    std::vector<std::string> bad;
    if (!(sigma0 > 0)) bad.push_back("sigma0 must be positive");
    if (re == RandomEffects::InterceptSlope) {
        if (!(sigma1 > 0)) bad.push_back("sigma1 must be positive");
        if (!(std::abs(rho) < 1)) bad.push_back("|rho| must be below 1");
    }
    if (re == RandomEffects::None) bad.push_back("random_effects must be intercept or intercept+slope");
    if (clusters < 2) bad.push_back("clusters must be >= 2");
    if (cluster_size < 1) bad.push_back("cluster_size must be >= 1");
    if (replicates < 1) bad.push_back("replicates must be >= 1");
    if (grid_points < 2) bad.push_back("grid_points must be >= 2");
    if (ghq_k < 1) bad.push_back("ghq_k must be >= 1");
    for (const auto& f : {f1, f2})
        if (f != "sin_pi" && f != "quadratic" && f != "zero") bad.push_back("unknown truth function '" + f + "'");
    if (!bad.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& b : bad) msg += "\n  - " + b;
        throw ValidationError(msg);
    }
}

Scenario scenario_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("scenario must be a JSON object");
    Scenario s;
    try {
        s.name = j.value("name", s.name);
        s.clusters = j.value("clusters", s.clusters);
        s.cluster_size = j.value("cluster_size", s.cluster_size);
        const std::string re = j.value("random_effects", std::string("intercept+slope"));
        if (re == "intercept") s.re = RandomEffects::Intercept;
        else if (re == "intercept+slope") s.re = RandomEffects::InterceptSlope;
        else throw ValidationError("random_effects must be intercept or intercept+slope");
        s.sigma0 = j.value("sigma0", s.sigma0);
        s.sigma1 = j.value("sigma1", s.sigma1);
        s.rho = j.value("rho", s.rho);
        s.f1 = j.value("f1", s.f1);
        s.f2 = j.value("f2", s.f2);
        s.beta3 = j.value("beta3", s.beta3);
        s.replicates = j.value("replicates", s.replicates);
        s.seed = j.value("seed", s.seed);
        s.basis_dim = j.value("basis_dim", s.basis_dim);
        s.ghq_k = j.value("ghq_k", s.ghq_k);
        s.grid_points = j.value("grid_points", s.grid_points);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scenario field has the wrong type: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json scenario_to_json(const Scenario& s) {
    return {{"name", s.name},
            {"clusters", s.clusters},
            {"cluster_size", s.cluster_size},
            {"random_effects", s.re == RandomEffects::Intercept ? "intercept" : "intercept+slope"},
            {"sigma0", s.sigma0},
            {"sigma1", s.sigma1},
            {"rho", s.rho},
            {"f1", s.f1},
            {"f2", s.f2},
            {"beta3", s.beta3},
            {"replicates", s.replicates},
            {"seed", s.seed},
            {"basis_dim", s.basis_dim},
            {"ghq_k", s.ghq_k},
            {"grid_points", s.grid_points}};
}

std::function<double(double)> truth_function(const std::string& name) {
    if (name == "sin_pi") return [](double x) { return std::sin(M_PI * x); };
    if (name == "quadratic") return [](double x) { return 2.0 * x * x - 2.0 / 3.0; };
    if (name == "zero") return [](double) { return 0.0; };
    throw ValidationError("unknown truth function '" + name + "'");
}

double true_marginal_predictor(const Scenario& s, const Eigen::Ref<const RowVector>& x) {
    return truth_function(s.f1)(x(0)) + truth_function(s.f2)(x(1)) + s.beta3 * x(2);
}

ModelSpec scenario_spec(const Scenario& s) {
    ModelSpec spec;
    spec.family = Family::Bernoulli;
    spec.link = Link::Logit;
    spec.smooth_terms = {{0, s.basis_dim, 2}, {1, s.basis_dim, 2}};
    spec.linear_terms = {2};
    spec.re.kind = s.re;
    spec.re.slope_covariate = s.re == RandomEffects::InterceptSlope ? 2 : -1;
    spec.ghq_k = s.ghq_k;
    return spec;
}

SimulatedData generate_dataset(const Scenario& s, Index replicate) {
    s.validate();
    RandomStream rng(s.seed, static_cast<std::uint64_t>(replicate));
    const Matrix Lambda = CovarianceParam::from_covariance(s.sigma()).lambda();
    const Index m = Lambda.rows();
    const GhqRule rule = ghq_rule(m, s.ghq_k);
    ReStructure re{s.re, s.re == RandomEffects::InterceptSlope ? 2 : -1};

    SimulatedData out;
    out.u.resize(s.clusters, m);
    std::vector<Cluster> clusters;
    clusters.reserve(static_cast<std::size_t>(s.clusters));
    for (Index i = 0; i < s.clusters; ++i) {
        Vector e(m);
        for (Index k = 0; k < m; ++k) e(k) = rng.normal();
        const Vector u = Lambda * e;
        out.u.row(i) = u.transpose();
        Cluster c;
        c.id = std::to_string(i + 1);
        c.y.resize(s.cluster_size);
        c.x.resize(s.cluster_size, 3);
        c.z.resize(s.cluster_size, m);
        for (Index j = 0; j < s.cluster_size; ++j) {
            for (Index p = 0; p < 3; ++p) c.x(j, p) = rng.uniform(-1.0, 1.0);
            c.z.row(j) = re_design_row(re, c.x.row(j));
            const double lambda = true_marginal_predictor(s, c.x.row(j));
            double delta;
            try {
                delta = solve_delta(lambda, c.z.row(j), Lambda, rule, Link::Logit);
            } catch (const NumericalError& err) {
                throw NumericalError("scenario '" + s.name + "', replicate " + std::to_string(replicate) + ": " +
                                     err.what());
            }
            const double eta = delta + c.z.row(j).dot(u);
            c.y(j) = rng.bernoulli(inverse_link(Link::Logit, eta)) ? 1.0 : 0.0;
        }
        clusters.push_back(std::move(c));
    }
    out.data = ClusteredDataset(std::move(clusters), {"x1", "x2", "x3"});
    return out;
}

// ---------------------------------------------------------------- replication

namespace {

CurveMetrics curve_metrics(const Curve& c, const std::function<double(double)>& f, double centre) {
    CurveMetrics m;
    const Index g = c.x.size();
    m.error.resize(g);
    m.covered.resize(g);
    for (Index k = 0; k < g; ++k) {
        const double truth = f(c.x(k)) - centre;
        m.error(k) = c.estimate(k) - truth;
        m.covered(k) = (c.lower(k) <= truth && truth <= c.upper(k)) ? 1.0 : 0.0;
    }
    return m;
}

}  // namespace

ReplicateResult run_replication(const Scenario& s, Index r) {
    ReplicateResult res;
    res.replicate = r;
    try {
        const SimulatedData sim = generate_dataset(s, r);
        const ModelSpec spec = scenario_spec(s);
        MamOptions opt;
        opt.grid_points = s.grid_points;
        opt.threads = 1;

        // GAMM = conditional stage of the MAM.
        ConditionalFit cf = fit_conditional(sim.data, spec, opt.fit);
        const Vector truth = CovarianceParam::from_covariance(s.sigma()).natural();
        res.theta_hat = cf.hyper.theta.natural();
        res.theta_error = res.theta_hat - truth;
        res.rmsep = (cf.u - sim.u).colwise().squaredNorm().transpose() / static_cast<double>(s.clusters);
        res.rmsep = res.rmsep.cwiseSqrt();
        res.boundary = static_cast<Index>(cf.diagnostics.boundary.size());

        const Matrix X = sim.data.stacked_x();
        const std::function<double(double)> f[2] = {truth_function(s.f1), truth_function(s.f2)};
        double centre[2];
        for (int l = 0; l < 2; ++l) {
            double sum = 0.0;
            for (Index k = 0; k < X.rows(); ++k) sum += f[l](X(k, l));
            centre[l] = sum / static_cast<double>(X.rows());
        }

        const MamResult mr = marginalize_fit(std::move(cf), sim.data, opt);
        res.correction_available = mr.marginal.correction_available;
        for (int l = 0; l < 2; ++l) res.mam[l] = curve_metrics(mr.marginal_curves[static_cast<std::size_t>(l)], f[l], centre[l]);

        ModelSpec gam_spec = spec;
        gam_spec.re = ReStructure{RandomEffects::None, -1};
        const ModelDesign gam_design = ModelDesign::build(sim.data, gam_spec);
        const ConditionalFit gam = fit_conditional(sim.data, gam_design, opt.fit);
        for (int l = 0; l < 2; ++l) {
            const Vector x = term_grid(gam.design.smooth_terms()[static_cast<std::size_t>(l)], s.grid_points);
            res.gam[l] = curve_metrics(conditional_curve(gam, l, x), f[l], centre[l]);
        }
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
    }
    return res;
}

// ---------------------------------------------------------------- aggregation

namespace {

Cell mean_cell(const std::vector<double>& v) {
    Cell c;
    if (v.empty()) return c;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    c.present = true;
    c.value = mean;
    c.se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return c;
}

// Average over the grid of |pointwise bias|, with the grid-averaged pointwise MC SE.
Cell abs_bias_cell(const std::vector<const Vector*>& errors) {
    Cell c;
    if (errors.empty()) return c;
    const Index g = errors.front()->size();
    const double n = static_cast<double>(errors.size());
    double abs_sum = 0.0, se_sum = 0.0;
    for (Index k = 0; k < g; ++k) {
        double mean = 0.0;
        for (const Vector* e : errors) mean += (*e)(k);
        mean /= n;
        double ss = 0.0;
        for (const Vector* e : errors) ss += ((*e)(k) - mean) * ((*e)(k) - mean);
        abs_sum += std::abs(mean);
        se_sum += errors.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    }
    c.present = true;
    c.value = abs_sum / static_cast<double>(g);
    c.se = se_sum / static_cast<double>(g);
    return c;
}

void curve_cells(const std::vector<const ReplicateResult*>& ok, bool mam, ModelRow& row) {
    Cell* bias[2] = {&row.bias_f1, &row.bias_f2};
    Cell* absb[2] = {&row.abs_bias_f1, &row.abs_bias_f2};
    Cell* cvg[2] = {&row.cvg_f1, &row.cvg_f2};
    for (int l = 0; l < 2; ++l) {
        std::vector<double> b, c;
        std::vector<const Vector*> e;
        for (const auto* r : ok) {
            const CurveMetrics& m = mam ? r->mam[l] : r->gam[l];
            b.push_back(m.error.mean());
            c.push_back(100.0 * m.covered.mean());
            e.push_back(&m.error);
        }
        *bias[l] = mean_cell(b);
        *absb[l] = abs_bias_cell(e);
        *cvg[l] = mean_cell(c);
    }
}

void theta_cells(const std::vector<const ReplicateResult*>& ok, ModelRow& row) {
    if (ok.empty()) return;
    const Index s = ok.front()->theta_error.size();
    Cell* cells[3] = {&row.bias_sigma0, &row.bias_sigma1, &row.bias_rho};
    for (Index k = 0; k < s && k < 3; ++k) {
        std::vector<double> v;
        for (const auto* r : ok) v.push_back(r->theta_error(k));
        *cells[k] = mean_cell(v);
    }
    Cell* rm[2] = {&row.rmsep_u0, &row.rmsep_u1};
    for (Index k = 0; k < ok.front()->rmsep.size() && k < 2; ++k) {
        std::vector<double> v;
        for (const auto* r : ok) v.push_back(r->rmsep(k));
        *rm[k] = mean_cell(v);
    }
}

std::string cell_text(const Cell& c, bool se) {
    if (!c.present) return "";
    return format_double(se ? c.se : c.value);
}

}  // namespace

const ModelRow& StudyReport::row(const std::string& model) const {
    for (const auto& r : rows)
        if (r.model == model) return r;
    throw ValidationError("no report row for model '" + model + "'");
}

StudyReport run_study(const Scenario& s, unsigned threads,
                      const std::function<void(Index, Index)>& progress) {
    s.validate();
    StudyReport rep;
    rep.scenario = s;
    rep.replicates.resize(static_cast<std::size_t>(s.replicates));
    std::atomic<Index> done{0};
    std::mutex progress_mutex;
    parallel_for(s.replicates, resolve_threads(threads), [&](Index r) {
        rep.replicates[static_cast<std::size_t>(r)] = run_replication(s, r);
        const Index k = ++done;
        if (progress) {
            std::lock_guard<std::mutex> lock(progress_mutex);
            progress(k, s.replicates);
        }
    });
    std::vector<const ReplicateResult*> ok;
    for (const auto& r : rep.replicates) {
        if (r.ok) ok.push_back(&r);
        else ++rep.failed;
    }
    rep.completed = static_cast<Index>(ok.size());
    rep.unreliable = static_cast<double>(rep.failed) > 0.1 * static_cast<double>(s.replicates);

    ModelRow gam, gamm, mam;
    gam.model = "GAM";
    gamm.model = "GAMM";
    mam.model = "MAM";
    curve_cells(ok, false, gam);
    curve_cells(ok, true, mam);
    theta_cells(ok, gamm);
    theta_cells(ok, mam);
    rep.rows = {gam, gamm, mam};
    return rep;
}

std::string study_report_csv(const StudyReport& rep) {
    std::ostringstream os;
    const char* names[] = {"bias_f1", "abs_bias_f1", "cvg_f1", "bias_f2", "abs_bias_f2", "cvg_f2", "bias_sigma0",
                           "bias_sigma1", "bias_rho", "rmsep_u0", "rmsep_u1"};
    os << "scenario,model,replicates,failed";
    for (const char* n : names) os << "," << n << "," << n << "_se";
    os << "\n";
    for (const auto& r : rep.rows) {
        const Cell* cells[] = {&r.bias_f1, &r.abs_bias_f1, &r.cvg_f1, &r.bias_f2, &r.abs_bias_f2, &r.cvg_f2,
                               &r.bias_sigma0, &r.bias_sigma1, &r.bias_rho, &r.rmsep_u0, &r.rmsep_u1};
        os << rep.scenario.name << "," << r.model << "," << rep.completed << "," << rep.failed;
        for (const Cell* c : cells) os << "," << cell_text(*c, false) << "," << cell_text(*c, true);
        os << "\n";
    }
    return os.str();
}

std::string replicates_csv(const StudyReport& rep) {
    std::ostringstream os;
    os << "replicate,ok,gam_bias_f1,gam_cvg_f1,gam_bias_f2,gam_cvg_f2,mam_bias_f1,mam_cvg_f1,mam_bias_f2,mam_cvg_f2,"
          "sigma0_hat,sigma1_hat,rho_hat,rmsep_u0,rmsep_u1,correction_available,boundary,error\n";
    for (const auto& r : rep.replicates) {
        os << r.replicate << "," << (r.ok ? 1 : 0);
        auto put_curve = [&](const CurveMetrics& m) {
            os << "," << (r.ok ? format_double(m.error.mean()) : "") << ","
               << (r.ok ? format_double(100.0 * m.covered.mean()) : "");
        };
        put_curve(r.gam[0]);
        put_curve(r.gam[1]);
        put_curve(r.mam[0]);
        put_curve(r.mam[1]);
        for (Index k = 0; k < 3; ++k)
            os << "," << (r.ok && k < r.theta_hat.size() ? format_double(r.theta_hat(k)) : "");
        for (Index k = 0; k < 2; ++k) os << "," << (r.ok && k < r.rmsep.size() ? format_double(r.rmsep(k)) : "");
        os << "," << (r.correction_available ? 1 : 0) << "," << r.boundary << ",";
        std::string err = r.error;
        for (char& ch : err)
            if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
        os << err << "\n";
    }
    return os.str();
}

}  // namespace mam
