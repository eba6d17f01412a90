#include "mam/pipeline.hpp"

namespace mam {

Vector term_grid(const SmoothTerm& term, Index points) {
    if (points < 2) throw ValidationError("curve grid needs at least two points");
    return Vector::LinSpaced(points, term.lo, term.hi);
}

namespace {

Curve make_curve(std::string name, const Eigen::Ref<const Vector>& x, const Matrix& E, const Vector& coef,
                 const Matrix& cov) {
    Curve c;
    c.term = std::move(name);
    c.x = x;
    const Vector var = ((E * cov).array() * E.array()).rowwise().sum().cwiseMax(0.0);
    const Bands b = confidence_bands(E * coef, var, Vector::Zero(var.size()));
    c.estimate = b.estimate;
    c.se = b.se;
    c.lower = b.lower;
    c.upper = b.upper;
    return c;
}

}  // namespace

Curve marginal_curve(const ModelDesign& design, Index l, const Vector& alpha_M, const Matrix& coef_cov,
                     const Eigen::Ref<const Vector>& x, const std::vector<std::string>& names) {
    return make_curve(design.column_term(design.smooth_first_col(l), names), x, design.smooth_rows(l, x), alpha_M,
                      coef_cov);
}

Matrix alpha_covariance(const ConditionalFit& fit) {
    const Index d = fit.data.num_fixed();
    SparseMatrix E(fit.data.num_params(), d);
    for (Index j = 0; j < d; ++j) E.insert(j, j) = 1.0;
    const Matrix W = fit.chol.whiten(E);
    return W.transpose() * W;
}

Curve conditional_curve(const ConditionalFit& fit, Index l, const Eigen::Ref<const Vector>& x) {
    return make_curve(fit.design.column_term(fit.design.smooth_first_col(l), fit.covariate_names), x,
                      fit.design.smooth_rows(l, x), fit.alpha, alpha_covariance(fit));
}

MamResult marginalize_fit(ConditionalFit conditional, const ClusteredDataset& dataset, const MamOptions& opt) {
    MamResult res;
    res.conditional = std::move(conditional);
    const ConditionalFit& fit = res.conditional;
    res.rule = ghq_rule(fit.data.re_dim(), fit.design.spec().ghq_k);
    res.means = marginalize(fit, dataset.stacked_x(), res.rule, true, opt.threads);
    res.marginal = fit_marginal(fit, res.means, opt.batch, opt.threads);
    const Matrix cov = res.marginal.cov_conditional + res.marginal.cov_correction;
    const Matrix cov_c = alpha_covariance(fit);
    for (Index l = 0; l < fit.design.num_smooths(); ++l) {
        const Vector x = term_grid(fit.design.smooth_terms()[static_cast<std::size_t>(l)], opt.grid_points);
        res.marginal_curves.push_back(
            marginal_curve(fit.design, l, res.marginal.alpha_M, cov, x, fit.covariate_names));
        res.conditional_curves.push_back(make_curve(fit.design.column_term(fit.design.smooth_first_col(l),
                                                                           fit.covariate_names),
                                                    x, fit.design.smooth_rows(l, x), fit.alpha, cov_c));
    }
    return res;
}

MamResult fit_mam(const ClusteredDataset& dataset, const ModelSpec& spec, const MamOptions& opt) {
    return marginalize_fit(fit_conditional(dataset, spec, opt.fit), dataset, opt);
}

}  // namespace mam
