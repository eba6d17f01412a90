#include "mam/conditional.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>

namespace mam {

namespace {

double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Factorizes H, adding lambda * I with lambda = 1e-6, 1e-5, ... when needed.
bool factorize_shifted(const SparseMatrix& H, const Permutation& P, SparseCholesky& chol, bool& shifted) {
    shifted = false;
    if (chol.factorize(H, P)) return true;
    shifted = true;
    SparseMatrix I(H.rows(), H.cols());
    I.setIdentity();
    double lambda = 1e-6;
    for (int k = 0; k < 10; ++k, lambda *= 10.0)
        if (chol.factorize(H + lambda * I, P)) return true;
    return false;
}

// log det H from its arrow blocks: per-cluster u blocks, then the alpha Schur complement
// accumulated in extended precision so the result does not depend on cluster order.
// Returns NaN when a block is not positive definite.
double arrow_log_det(const ModelData& data, const SparseMatrix& H) {
    using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const Index d = data.num_fixed(), m = data.re_dim();
    LMatrix S = LMatrix::Zero(d, d);
    for (Index c = 0; c < d; ++c)
        for (SparseMatrix::InnerIterator it(H, c); it; ++it)
            if (it.row() < d) S(it.row(), c) = it.value();
    long double ld = 0.0L;
    Matrix Huu(m, m), Hau(d, m);
    for (Index i = 0; i < data.num_clusters(); ++i) {
        Huu.setZero();
        Hau.setZero();
        for (Index b = 0; b < m; ++b)
            for (SparseMatrix::InnerIterator it(H, d + i * m + b); it; ++it) {
                if (it.row() < d) Hau(it.row(), b) = it.value();
                else Huu(it.row() - d - i * m, b) = it.value();
            }
        const Eigen::LLT<Matrix> llt(Huu);
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
        for (Index b = 0; b < m; ++b) ld += 2.0L * std::log(static_cast<long double>(llt.matrixL()(b, b)));
        const Matrix W = llt.matrixL().solve(Hau.transpose());  // m x d
        S -= (W.transpose() * W).cast<long double>();
    }
    const Eigen::LLT<Matrix> llt(S.cast<double>());
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
    for (Index a = 0; a < d; ++a) ld += 2.0L * std::log(static_cast<long double>(llt.matrixL()(a, a)));
    return static_cast<double>(ld);
}

}  // namespace

InnerResult inner_newton(const ModelData& data, const HyperParams& hyper, const Vector& warm_start,
                         const InnerOptions& opt) {
    const Index n = data.num_params();
    Vector x = warm_start.size() == n ? warm_start : Vector::Zero(n);
    const Permutation P = arrow_permutation(data.num_fixed(), data.num_random());

    InnerResult res;
    JointEval ev = penalized_joint_nll(data, x, hyper, Want::Hessian);
    Index steps = 0;
    bool converged = false, polished = false;
    int polish_steps = 0;
    while (true) {
        const double gnorm = max_abs(ev.gradient);
        if (!converged && gnorm <= opt.rel_tol * (1.0 + std::abs(ev.value))) {
            converged = true;
            res.iterations = steps;
        }
        bool shifted = false;
        if (!factorize_shifted(ev.hessian, P, res.chol, shifted))
            throw NumericalError("joint Hessian not positive definite after 10 Levenberg shifts");
        Vector dir = -res.chol.solve(ev.gradient);
        // Along stiff directions the gradient cannot drop below its rounding floor; a
        // Newton step below 1e-10 (1 + |x|) means the mode is resolved anyway.
        // Near a variance floor the prior is stiff and neither test can pass; a Newton
        // decrement below the rounding of the objective ends the iteration as well.
        const bool tiny_step = !shifted && max_abs(dir) <= 1e-10 * (1.0 + max_abs(x));
        const bool unresolved = !shifted && -ev.gradient.dot(dir) <= 1e-14 * (1.0 + std::abs(ev.value));
        if (!converged && (tiny_step || unresolved)) {
            converged = true;
            res.iterations = steps;
        }
        // Once converged, a few more Newton steps take the mode to rounding level so the
        // objective built on it is a smooth function of the hyperparameters.
        const bool resolved = !shifted && max_abs(dir) <= 1e-14 * (1.0 + max_abs(x));
        if (converged && (polished || resolved || gnorm == 0.0)) {
            if (shifted) throw NumericalError("joint Hessian not positive definite at the mode");
            res.grad_norm = gnorm;
            break;
        }
        if (steps >= opt.max_iterations)
            throw NumericalError("inner Newton did not converge in " + std::to_string(opt.max_iterations) +
                                 " iterations (gradient max-norm " + std::to_string(gnorm) + ")");
        double slope = ev.gradient.dot(dir);
        if (!(slope < 0)) {
            dir = -ev.gradient;
            slope = -ev.gradient.squaredNorm();
        }
        double t = 1.0;
        bool accepted = false;
        Vector xn;
        for (int ls = 0; ls < 50; ++ls) {
            xn = x + t * dir;
            double fn;
            try {
                fn = penalized_joint_nll(data, xn, hyper, Want::Value).value;
            } catch (const NumericalError&) {
                fn = std::numeric_limits<double>::infinity();
            }
            // After convergence the step only removes rounding-level residue.
            const double allowance = converged ? 1e-12 * (1.0 + std::abs(ev.value)) : 1e-4 * t * slope;
            if (std::isfinite(fn) && fn <= ev.value + allowance) {
                accepted = true;
                break;
            }
            if (converged) break;
            t *= 0.5;
        }
        if (!accepted) {
            if (converged) {
                polished = true;
                continue;
            }
            throw NumericalError("inner line search failed (gradient max-norm " + std::to_string(gnorm) + ")");
        }
        x = xn;
        ev = penalized_joint_nll(data, x, hyper, Want::Hessian);
        ++steps;
        if (converged && ++polish_steps >= 3) polished = true;
    }
    res.x = std::move(x);
    res.eval = std::move(ev);
    return res;
}

double laml_value(const ModelData& data, const HyperParams& hyper, const InnerResult& inner) {
    double v = -inner.eval.value;
    for (std::size_t l = 0; l < data.penalties.size(); ++l) {
        const double r = static_cast<double>(data.penalties[l].size);
        v += 0.5 * r * (hyper.log_tau(static_cast<Index>(l)) - kLogTwoPi);
    }
    v += 0.5 * static_cast<double>(data.num_params()) * kLogTwoPi;
    const double ld = arrow_log_det(data, inner.eval.hessian);
    v -= 0.5 * (std::isfinite(ld) ? ld : inner.chol.log_determinant());
    return v;
}

LamlResult laml(const ModelData& data, const HyperParams& hyper, const Vector& warm_start, const InnerOptions& opt) {
    InnerResult inner = inner_newton(data, hyper, warm_start, opt);
    const double v = laml_value(data, hyper, inner);
    return {v, std::move(inner)};
}

Vector ConditionalFit::x() const {
    const Index d = alpha.size();
    const Index m = u.cols();
    Vector out(d + u.rows() * m);
    out.head(d) = alpha;
    for (Index i = 0; i < u.rows(); ++i) out.segment(d + i * m, m) = u.row(i).transpose();
    return out;
}

ConditionalFit fit_conditional(const ClusteredDataset& dataset, const ModelSpec& spec, const FitOptions& options) {
    const ValidationReport report = validate(dataset, spec);
    if (!report.ok()) throw ValidationError("invalid model or data:\n" + report.summary());
    return fit_conditional(dataset, ModelDesign::build(dataset, spec), options);
}

ConditionalFit fit_conditional(const ClusteredDataset& dataset, const ModelDesign& design, const FitOptions& opt) {
    ConditionalFit fit;
    fit.design = design;
    fit.data = ModelData::build(dataset, design);
    fit.covariate_names = dataset.covariate_names();
    const ModelData& data = fit.data;
    fit.psi_names = HyperParams::names(data, design, fit.covariate_names);

    const Index ps = static_cast<Index>(data.penalties.size());
    const Index m = data.re_dim();
    const Index s = CovarianceParam::num_params_for(m);
    const Index P = ps + s + (data.has_scale() ? 1 : 0);

    // Starting point and box.
    Vector psi0 = Vector::Zero(P);
    if (data.has_scale()) {
        const double mean = data.y.mean();
        const double sd = std::sqrt((data.y.array() - mean).square().sum() / std::max<Index>(1, data.n() - 1));
        psi0(P - 1) = std::log(std::max(sd, 1e-3));
    }
    if (opt.initial_psi.size() == P) psi0 = opt.initial_psi;
    BoxBounds box{Vector::Constant(P, -std::numeric_limits<double>::infinity()),
                  Vector::Constant(P, std::numeric_limits<double>::infinity())};
    box.lower.head(ps).setConstant(opt.log_tau_min);
    box.upper.head(ps).setConstant(opt.log_tau_max);
    if (opt.fixed_log_tau.size() == ps) {
        box.lower.head(ps) = opt.fixed_log_tau;
        box.upper.head(ps) = opt.fixed_log_tau;
    }
    {
        const CovarianceParam shape(m, Vector::Zero(s));
        for (Index k = 0; k < s; ++k) {
            if (shape.is_diagonal_param(k)) {
                box.lower(ps + k) = opt.log_sd_floor;
                box.upper(ps + k) = opt.log_sd_cap;
            } else {
                box.lower(ps + k) = -opt.offdiag_cap;
                box.upper(ps + k) = opt.offdiag_cap;
            }
        }
    }
    if (data.has_scale()) {
        box.lower(P - 1) = opt.log_sd_floor;
        box.upper(P - 1) = opt.log_sd_cap;
    }

    // Every evaluation warm-starts from the mode at the last accepted iterate, so the
    // objective is a deterministic function of psi for a given iterate.
    Vector base = Vector::Zero(data.num_params());
    auto F = [&](const Vector& psi) {
        try {
            return -laml(data, HyperParams::unpack(data, psi), base, opt.inner).value;
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    auto accept = [&](const Vector& psi) {
        try {
            base = inner_newton(data, HyperParams::unpack(data, psi), base, opt.inner).x;
        } catch (const NumericalError&) {
        }
    };

    BfgsResult bf = bfgs_minimize(F, box.clamp(psi0), box, opt.bfgs, accept);
    fit.diagnostics.trace = bf.trace;
    fit.diagnostics.outer_iterations = bf.iterations;
    fit.diagnostics.outer_evaluations = bf.evaluations;
    if (!bf.converged) {
        std::ostringstream os;
        os << "outer optimization did not converge after " << bf.evaluations << " evaluations; trace:\n";
        const std::size_t first = bf.trace.size() > 10 ? bf.trace.size() - 10 : 0;
        for (std::size_t i = first; i < bf.trace.size(); ++i) os << "  " << bf.trace[i] << "\n";
        throw NumericalError(os.str());
    }

    // Newton polish on the free coordinates with finite-difference derivatives; leaves
    // H_outer evaluated at the returned point.
    // All polish evaluations start from one cold-start mode: warm starts carried along
    // the path pick up rounding that depends on the order of the clusters.
    Vector psi = bf.x;
    base.setZero();
    accept(psi);
    double fx = F(psi);
    Matrix H;
    bool have_h = false;
    auto free_coords = [&](const Vector& x, const Vector& g) {
        std::vector<Index> idx;
        for (Index i = 0; i < P; ++i) {
            const bool lo = x(i) <= box.lower(i) + 1e-12, hi = x(i) >= box.upper(i) - 1e-12;
            if (box.lower(i) == box.upper(i)) continue;
            if ((lo && g(i) >= 0) || (hi && g(i) <= 0)) continue;
            idx.push_back(i);
        }
        return idx;
    };
    for (Index it = 0; it < opt.polish_iterations; ++it) {
        const Vector g = fd_gradient5(F, psi, opt.polish_step);
        H = fd_hessian(F, psi, opt.hessian_step, fx);
        have_h = true;
        const auto idx = free_coords(psi, g);
        if (idx.empty() || !g.allFinite() || !H.allFinite()) break;
        const Index k = static_cast<Index>(idx.size());
        Matrix Hs(k, k);
        Vector gs(k);
        for (Index a = 0; a < k; ++a) {
            gs(a) = g(idx[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < k; ++b) Hs(a, b) = H(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
        Eigen::LLT<Matrix> llt(Hs);
        if (llt.info() != Eigen::Success) break;
        Vector step = -llt.solve(gs);
        const double smax = max_abs(step);
        if (smax < 1e-10) {  // converged: take the last step, H stays valid at this scale
            for (Index a = 0; a < k; ++a) psi(idx[static_cast<std::size_t>(a)]) += step(a);
            psi = box.clamp(psi);
            fx = F(psi);
            break;
        }
        if (smax > 1.0) step /= smax;
        Vector trial = psi;
        for (Index a = 0; a < k; ++a) trial(idx[static_cast<std::size_t>(a)]) += step(a);
        trial = box.clamp(trial);
        const double ft = F(trial);
        if (!(ft <= fx + 1e-13 * (1.0 + std::abs(fx)))) break;
        psi = trial;
        fx = ft;
        have_h = false;
        ++fit.diagnostics.polish_iterations;
    }
    // A vanishing variance leaves the objective flat toward its floor; BFGS stops short of it.
    {
        const CovarianceParam shape(m, Vector::Zero(s));
        for (Index k = 0; k < s; ++k) {
            const Index i = ps + k;
            if (!shape.is_diagonal_param(k) || psi(i) <= box.lower(i) || psi(i) > opt.snap_log_sd) continue;
            Vector trial = psi;
            trial(i) = box.lower(i);
            const double ft = F(trial);
            if (!(ft <= fx + 1e-9 * (1.0 + std::abs(fx)))) continue;
            psi = trial;
            fx = std::min(fx, ft);
            have_h = false;
        }
    }
    if (!have_h) H = fd_hessian(F, psi, opt.hessian_step, fx);
    if (!std::isfinite(fx)) throw NumericalError("outer objective not finite at the optimum");
    fit.diagnostics.outer_grad_norm = max_abs(fd_gradient5(F, psi, opt.polish_step));
    fit.diagnostics.converged = true;

    fit.psi = psi;
    fit.hyper = HyperParams::unpack(data, psi);
    fit.H_outer = H;
    const auto bounded = at_bounds(psi, box, 1e-9);
    fit.identified.assign(static_cast<std::size_t>(P), false);
    double hmax = 0.0;
    for (Index i = 0; i < P; ++i)
        if (std::isfinite(H(i, i))) hmax = std::max(hmax, std::abs(H(i, i)));
    std::vector<Index> ident;
    for (Index i = 0; i < P; ++i) {
        if (bounded[static_cast<std::size_t>(i)]) {
            if (box.lower(i) != box.upper(i)) fit.diagnostics.boundary.push_back(fit.psi_names[static_cast<std::size_t>(i)]);
            continue;
        }
        if (H.row(i).allFinite() && H(i, i) > 1e-8 * (1.0 + hmax)) {
            fit.identified[static_cast<std::size_t>(i)] = true;
            ident.push_back(i);
        }
    }
    if (!ident.empty()) {
        const Index k = static_cast<Index>(ident.size());
        Matrix Hs(k, k);
        for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b) Hs(a, b) = H(ident[static_cast<std::size_t>(a)], ident[static_cast<std::size_t>(b)]);
        Eigen::LLT<Matrix> llt(Hs);
        if (llt.info() != Eigen::Success) {
            std::ostringstream os;
            os << "outer optimum not interior: theta = (" << fit.hyper.theta.theta().transpose() << ")";
            for (const auto& b : fit.diagnostics.boundary) os << "; " << b << " at bound";
            throw NumericalError(os.str());
        }
    }

    InnerResult inner = inner_newton(data, fit.hyper, base, opt.inner);
    fit.laml = laml_value(data, fit.hyper, inner);
    fit.alpha = alpha_part(data, inner.x);
    fit.u = u_part(data, inner.x);
    fit.perm = arrow_permutation(data.num_fixed(), data.num_random());
    fit.H_joint = inner.eval.hessian;
    fit.chol = inner.chol;
    fit.diagnostics.inner_iterations = inner.iterations;
    fit.diagnostics.inner_grad_norm = inner.grad_norm;

    // edf_l = columns_l - tau_l * sum_{j in range_l} (H^{-1})_jj
    fit.edf.resize(design.num_smooths());
    for (Index l = 0; l < design.num_smooths(); ++l) {
        const Index r0 = design.range_first_col(l), r = design.range_dim(l);
        SparseMatrix E(data.num_params(), r);
        for (Index j = 0; j < r; ++j) E.insert(r0 + j, j) = 1.0;
        const double tr = fit.chol.whiten(E).colwise().squaredNorm().sum();
        fit.edf(l) = static_cast<double>(design.smooth_terms()[static_cast<std::size_t>(l)].num_columns()) -
                     std::exp(fit.hyper.log_tau(l)) * tr;
    }
    return fit;
}

Vector predict_conditional(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& covariates,
                           const Eigen::Ref<const Vector>& u_value) {
    const Matrix X = fit.design.rows(covariates);
    const ReStructure& re = fit.design.spec().re;
    Vector mu(X.rows());
    for (Index r = 0; r < X.rows(); ++r) {
        double eta = X.row(r).dot(fit.alpha);
        if (re.dim() > 0) eta += re_design_row(re, covariates.row(r)).dot(u_value);
        mu(r) = inverse_link(fit.design.spec().link, eta);
    }
    return mu;
}

}  // namespace mam
