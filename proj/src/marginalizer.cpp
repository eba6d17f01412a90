#include "mam/marginalizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mam {

namespace {

struct RowTerms {
    double lambda = 0.0;
    double dl_deta = 0.0;  // d lambda / d eta
    Vector dl_dtheta;      // direct derivative through Lambda(theta)
    bool clamped = false;
};

// g'(mu) evaluated through lambda = g(mu).
double link_deriv(Link link, double mu, double lambda) {
    switch (link) {
        case Link::Logit: return 1.0 / (mu * (1.0 - mu));
        case Link::Log: return 1.0 / mu;
        case Link::Identity: return 1.0;
        case Link::Probit: return 1.0 / inverse_link_deriv(link, lambda);
    }
    return 1.0;
}

// E[h(eta + s Z)] and its partial derivatives in eta and s, Z ~ N(0, 1), for the binary links.
// The integrand is analytic in a strip of half-width ~1/s, so a trapezoid rule with step
// proportional to 1/s converges geometrically.
struct ScalarMean {
    double mu = 0.0, d_eta = 0.0, d_s = 0.0;
};

ScalarMean binary_mean(Link link, double eta, double s) {
    ScalarMean r;
    if (s == 0.0) {
        r.mu = inverse_link(link, eta);
        r.d_eta = inverse_link_deriv(link, eta);
        return r;
    }
    constexpr double kHalfWidth = 9.0;
    constexpr Index kMaxHalfNodes = 20000;
    const double step = 0.5 / std::max(1.0, s);
    const Index half = std::min(kMaxHalfNodes, static_cast<Index>(std::ceil(kHalfWidth / step)));
    for (Index j = -half; j <= half; ++j) {
        const double z = static_cast<double>(j) * step;
        const double phi = std::exp(-0.5 * z * z) * kInvSqrt2Pi;
        const double e = eta + s * z;
        r.mu += inverse_link(link, e) * phi;
        const double hp = inverse_link_deriv(link, e) * phi;
        r.d_eta += hp;
        r.d_s += hp * z;
    }
    r.mu *= step;
    r.d_eta *= step;
    r.d_s *= step;
    return r;
}

RowTerms row_terms(Link link, double eta, const Eigen::Ref<const RowVector>& z, const Matrix& Lambda,
                   const std::vector<Matrix>& dLambda, const GhqRule& rule) {
    RowTerms t;
    const Index s = static_cast<Index>(dLambda.size());
    t.dl_dtheta = Vector::Zero(s);
    if (link == Link::Identity) {
        t.lambda = eta;
        t.dl_deta = 1.0;
        return t;
    }
    const Index m = z.size();
    const RowVector zl = m ? RowVector(z * Lambda) : RowVector(0);
    double mu = 0.0, dmu = 0.0;
    Vector dmu_t = Vector::Zero(s);
    if (link == Link::Logit || link == Link::Probit) {
        // z'u ~ N(0, |z Lambda|^2): the marginal mean is a one-dimensional expectation.
        const double sd = m ? zl.norm() : 0.0;
        const ScalarMean sm = binary_mean(link, eta, sd);
        mu = sm.mu;
        dmu = sm.d_eta;
        if (sd > 0.0)
            for (Index k = 0; k < s; ++k)
                dmu_t(k) = sm.d_s * zl.dot(z * dLambda[static_cast<std::size_t>(k)]) / sd;
    } else {
        std::vector<RowVector> zd;
        for (const auto& D : dLambda) zd.emplace_back(z * D);
        for (Index q = 0; q < rule.size(); ++q) {
            const double off = m ? zl.dot(rule.nodes.row(q)) : 0.0;
            const double e = eta + off;
            const double w = rule.weights(q);
            mu += inverse_link(link, e) * w;
            const double hp = inverse_link_deriv(link, e) * w;
            dmu += hp;
            for (Index k = 0; k < s; ++k) dmu_t(k) += hp * zd[static_cast<std::size_t>(k)].dot(rule.nodes.row(q));
        }
    }
    const MeanDomain dom = mean_domain(link);
    if (mu < dom.lo || mu > dom.hi) {
        t.clamped = true;
        mu = std::clamp(mu, dom.lo, dom.hi);
    }
    t.lambda = link_fn(link, mu);
    const double gp = link_deriv(link, mu, t.lambda);
    t.dl_deta = gp * dmu;
    t.dl_dtheta = gp * dmu_t;
    return t;
}

std::vector<Matrix> lambda_derivs(const CovarianceParam& theta) {
    std::vector<Matrix> out;
    for (Index k = 0; k < theta.num_params(); ++k) out.push_back(theta.lambda_deriv(k));
    return out;
}

Matrix re_rows(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& grid) {
    const ReStructure& re = fit.design.spec().re;
    Matrix Z(grid.rows(), re.dim());
    for (Index r = 0; r < grid.rows(); ++r) Z.row(r) = re_design_row(re, grid.row(r));
    return Z;
}

}  // namespace

double marginal_link(Link link, double eta, const Eigen::Ref<const RowVector>& z, const Matrix& Lambda,
                     const GhqRule& rule, bool* clamped) {
    const RowTerms t = row_terms(link, eta, z, Lambda, {}, rule);
    if (clamped) *clamped = t.clamped;
    return t.lambda;
}

double marginal_link(const ConditionalFit& fit, const Eigen::Ref<const RowVector>& x_row,
                     const Eigen::Ref<const RowVector>& z_row, const GhqRule& rule, bool* clamped) {
    const double eta = fit.design.rows(x_row).row(0).dot(fit.alpha);
    return marginal_link(fit.design.spec().link, eta, z_row, fit.hyper.theta.lambda(), rule, clamped);
}

Matrix mode_sensitivity(const ConditionalFit& fit, double h) {
    const ModelData& data = fit.data;
    const Index P = fit.psi.size();
    const Vector x = fit.x();
    Matrix cross(x.size(), P);
    for (Index k = 0; k < P; ++k) {
        Vector psi = fit.psi;
        psi(k) += h;
        const Vector gp = penalized_joint_nll(data, x, HyperParams::unpack(data, psi), Want::Gradient).gradient;
        psi(k) = fit.psi(k) - h;
        const Vector gm = penalized_joint_nll(data, x, HyperParams::unpack(data, psi), Want::Gradient).gradient;
        cross.col(k) = (gp - gm) / (2.0 * h);
        if (!cross.col(k).allFinite())
            throw NumericalError("non-finite inner gradient while differentiating in " +
                                 fit.psi_names[static_cast<std::size_t>(k)]);
    }
    return -fit.chol.solve(cross).topRows(data.num_fixed());
}

void jacobian_lambda(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& grid, const GhqRule& rule,
                     RowSparseMatrix& D_joint, Matrix& D_outer, unsigned threads) {
    MarginalizedMeans mm = marginalize(fit, grid, rule, true, threads);
    D_joint = std::move(mm.D_joint);
    D_outer = std::move(mm.D_outer);
}

MarginalizedMeans marginalize(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& grid, const GhqRule& rule,
                              bool jacobians, unsigned threads) {
    const Link link = fit.design.spec().link;
    const Index n = grid.rows();
    const Index d = fit.data.num_fixed();
    const Index ps = fit.hyper.log_tau.size();
    const Index s = fit.hyper.theta.num_params();
    const Matrix X = fit.design.rows(grid);
    const Matrix Z = re_rows(fit, grid);
    const Vector eta = X * fit.alpha;
    const Matrix Lambda = fit.hyper.theta.lambda();
    const std::vector<Matrix> dL = jacobians ? lambda_derivs(fit.hyper.theta) : std::vector<Matrix>{};

    MarginalizedMeans out;
    out.grid = grid;
    out.lambda_hat.resize(n);
    Vector dl_deta(n);
    Matrix dl_dtheta(n, jacobians ? s : 0);
    std::vector<char> clamped(static_cast<std::size_t>(n), 0);
    parallel_for(n, threads, [&](Index r) {
        const RowTerms t = row_terms(link, eta(r), Z.row(r), Lambda, dL, rule);
        out.lambda_hat(r) = t.lambda;
        dl_deta(r) = t.dl_deta;
        if (jacobians) dl_dtheta.row(r) = t.dl_dtheta.transpose();
        clamped[static_cast<std::size_t>(r)] = t.clamped;
    });
    for (char c : clamped) out.clamped += c;
    if (!out.lambda_hat.allFinite()) throw NumericalError("non-finite marginal mean");
    if (!jacobians) return out;

    out.D_joint.resize(n, fit.data.num_params());
    out.D_joint.reserve(Eigen::VectorXi::Constant(n, static_cast<int>(d)));
    for (Index r = 0; r < n; ++r)
        for (Index a = 0; a < d; ++a) out.D_joint.insert(r, a) = dl_deta(r) * X(r, a);
    out.D_joint.makeCompressed();

    const Matrix A = mode_sensitivity(fit);
    out.D_outer = dl_deta.asDiagonal() * (X * A);
    out.D_outer.middleCols(ps, s) += dl_dtheta;
    return out;
}

double solve_delta(double target, const Eigen::Ref<const RowVector>& z, const Matrix& Lambda, const GhqRule& rule,
                   Link link) {
    if (link == Link::Identity) return target;
    const MeanDomain dom = mean_domain(link);
    const double mu_target = inverse_link(link, target);
    if (!(mu_target > dom.lo && mu_target < dom.hi)) throw ValidationError("target marginal mean outside the mean space");
    const Matrix Sigma = Lambda * Lambda.transpose();
    const double half = 10.0 * (1.0 + (Sigma.size() ? Sigma.norm() : 0.0));
    const std::vector<Matrix> none;
    auto residual = [&](double delta, double& deriv) {
        const RowTerms t = row_terms(link, delta, z, Lambda, none, rule);
        deriv = t.dl_deta;
        return t.lambda - target;
    };
    double a = target - half, b = target + half, da, db;
    double ra = residual(a, da), rb = residual(b, db);
    if (!(ra < 0 && rb > 0)) throw NumericalError("solve_delta: bracket does not contain the root");
    double x = target, dx;
    double r = residual(x, dx);
    for (int it = 0; it < 200; ++it) {
        if (std::abs(r) <= 1e-10) return x;
        if (r < 0) a = x;
        else b = x;
        double next = x - r / dx;
        if (!(dx > 0) || !(next > a && next < b)) next = 0.5 * (a + b);
        if (next == x || b - a <= 1e-15 * (1.0 + std::abs(x))) break;
        x = next;
        r = residual(x, dx);
    }
    if (std::abs(r) <= 1e-9) return x;
    throw NumericalError("solve_delta did not reach tolerance (residual " + std::to_string(r) + ")");
}

}  // namespace mam
