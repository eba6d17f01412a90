#include "mam/objective.hpp"

#include <algorithm>
#include <cmath>

namespace mam {

ModelData ModelData::build(const ClusteredDataset& dataset, const ModelDesign& design) {
    ModelData d;
    const ModelSpec& spec = design.spec();
    d.family = spec.family;
    d.link = spec.link;
    const Matrix covariates = dataset.stacked_x();
    d.X = design.rows(covariates);
    const Index m = spec.re.dim();
    if (m == 0) {
        d.Z = Matrix(covariates.rows(), 0);
    } else if (dataset.m() == m) {
        d.Z = dataset.stacked_z();
    } else {
        d.Z.resize(covariates.rows(), m);
        for (Index r = 0; r < covariates.rows(); ++r) d.Z.row(r) = re_design_row(spec.re, covariates.row(r));
    }
    d.y = dataset.stacked_y();
    for (Index i = 0; i < dataset.num_clusters(); ++i) {
        d.offsets.push_back(dataset.offset(i));
        d.sizes.push_back(dataset.cluster(i).size());
    }
    for (Index l = 0; l < design.num_smooths(); ++l)
        d.penalties.push_back({design.range_first_col(l), design.range_dim(l)});
    return d;
}

Vector HyperParams::pack(const ModelData& data) const {
    Vector psi(size(data));
    psi.head(log_tau.size()) = log_tau;
    psi.segment(log_tau.size(), theta.num_params()) = theta.theta();
    if (data.has_scale()) psi(psi.size() - 1) = log_sd;
    return psi;
}

HyperParams HyperParams::unpack(const ModelData& data, const Eigen::Ref<const Vector>& psi) {
    HyperParams h;
    const Index ps = static_cast<Index>(data.penalties.size());
    const Index s = CovarianceParam::num_params_for(data.re_dim());
    if (psi.size() != ps + s + (data.has_scale() ? 1 : 0))
        throw ValidationError("hyperparameter vector has wrong length");
    h.log_tau = psi.head(ps);
    h.theta = CovarianceParam(data.re_dim(), psi.segment(ps, s));
    if (data.has_scale()) h.log_sd = psi(psi.size() - 1);
    return h;
}

std::vector<std::string> HyperParams::names(const ModelData& data, const ModelDesign& design,
                                            const std::vector<std::string>& covariate_names) {
    std::vector<std::string> out;
    for (Index l = 0; l < design.num_smooths(); ++l)
        out.push_back("log_tau[" + design.column_term(design.smooth_first_col(l), covariate_names) + "]");
    const Index m = data.re_dim();
    for (Index j = 0; j < m; ++j)
        for (Index i = j; i < m; ++i)
            out.push_back(i == j ? "theta[log L" + std::to_string(i) + std::to_string(j) + "]"
                                 : "theta[L" + std::to_string(i) + std::to_string(j) + "]");
    if (data.has_scale()) out.push_back("log_sd");
    return out;
}

Vector alpha_part(const ModelData& data, const Eigen::Ref<const Vector>& x) { return x.head(data.num_fixed()); }

Matrix u_part(const ModelData& data, const Eigen::Ref<const Vector>& x) {
    const Index m = data.re_dim();
    Matrix u(data.num_clusters(), m);
    for (Index i = 0; i < data.num_clusters(); ++i) u.row(i) = x.segment(data.num_fixed() + i * m, m).transpose();
    return u;
}

JointEval penalized_joint_nll(const ModelData& data, const Eigen::Ref<const Vector>& x, const HyperParams& hyper,
                              Want want) {
    const Index d = data.num_fixed();
    const Index m = data.re_dim();
    const Index N = data.num_clusters();
    if (x.size() != data.num_params()) throw ValidationError("parameter vector has wrong length");
    const bool grad = want != Want::Value;
    const bool hess = want == Want::Hessian;
    const double scale = data.has_scale() ? std::exp(2.0 * hyper.log_sd) : 1.0;

    JointEval out;
    if (grad) out.gradient = Vector::Zero(x.size());
    const auto alpha = x.head(d);

    // Prior pieces: Sigma^{-1} = Lambda^{-T} Lambda^{-1}.
    Matrix sigma_inv, L;
    double log_det_sigma = 0.0;
    if (m > 0) {
        L = hyper.theta.lambda();
        const Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(m, m));
        sigma_inv = Linv.transpose() * Linv;
        sigma_inv = (0.5 * (sigma_inv + sigma_inv.transpose())).eval();
        for (Index k = 0; k < m; ++k) log_det_sigma += 2.0 * std::log(L(k, k));
    }

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> Haa;  // extended, like the value
    if (hess) {
        Haa.setZero(d, d);
        trip.reserve(static_cast<std::size_t>(N * (m * m + 2 * m * d)));
    }

    long double value = 0.0L;  // extended accumulation keeps the sum independent of cluster order
    Eigen::Matrix<long double, Eigen::Dynamic, 1> ga;
    if (grad) ga.setZero(d);
    Vector w;
    for (Index i = 0; i < N; ++i) {
        const Index off = data.offsets[static_cast<std::size_t>(i)];
        const Index ni = data.sizes[static_cast<std::size_t>(i)];
        const auto Xi = data.X.middleRows(off, ni);
        const auto Zi = data.Z.middleRows(off, ni);
        const auto ui = x.segment(d + i * m, m);
        const Vector eta = Xi * alpha + Zi * ui;
        Vector r(ni);
        w.resize(ni);
        for (Index j = 0; j < ni; ++j) {
            if (!std::isfinite(eta(j)))
                throw NumericalError("non-finite linear predictor at row " + std::to_string(off + j));
            const ObsTerms t = observation_nll(data.family, data.link, data.y(off + j), eta(j), scale);
            value += t.value;
            r(j) = t.d1;
            w(j) = t.d2;
        }
        if (m > 0) {
            // Through Lambda^{-1} u: Sigma^{-1} has huge cancelling entries near a variance floor.
            const Vector wi = L.triangularView<Eigen::Lower>().solve(ui);
            const Vector si = L.transpose().triangularView<Eigen::Upper>().solve(wi);
            value += 0.5 * wi.squaredNorm() + 0.5 * (m * kLogTwoPi + log_det_sigma);
            if (grad) out.gradient.segment(d + i * m, m) += Zi.transpose() * r + si;
        }
        if (grad) ga += (Xi.transpose() * r).cast<long double>();
        if (hess) {
            const Matrix WX = w.asDiagonal() * Xi;
            Haa += (Xi.transpose() * WX).cast<long double>();
            if (m > 0) {
                const Matrix Hau = WX.transpose() * Zi;  // d x m
                Matrix Huu = Zi.transpose() * w.asDiagonal() * Zi + sigma_inv;
                Huu = (0.5 * (Huu + Huu.transpose())).eval();
                for (Index b = 0; b < m; ++b) {
                    const Index cu = d + i * m + b;
                    for (Index a = 0; a < d; ++a) {
                        trip.emplace_back(a, cu, Hau(a, b));
                        trip.emplace_back(cu, a, Hau(a, b));
                    }
                    for (Index a = 0; a < m; ++a) trip.emplace_back(d + i * m + a, cu, Huu(a, b));
                }
            }
        }
    }

    for (std::size_t l = 0; l < data.penalties.size(); ++l) {
        const auto& p = data.penalties[l];
        const double tau = std::exp(hyper.log_tau(static_cast<Index>(l)));
        const auto a = x.segment(p.first, p.size);
        value += 0.5 * tau * a.squaredNorm();
        if (grad) out.gradient.segment(p.first, p.size) += tau * a;
        if (hess) Haa.diagonal().segment(p.first, p.size).array() += tau;
    }
    out.value = static_cast<double>(value);
    if (grad) out.gradient.head(d) += ga.cast<double>();

    if (hess) {
        for (Index b = 0; b < d; ++b)
            for (Index a = 0; a < d; ++a) trip.emplace_back(a, b, static_cast<double>(Haa(std::min(a, b), std::max(a, b))));
        out.hessian.resize(x.size(), x.size());
        out.hessian.setFromTriplets(trip.begin(), trip.end());
        out.hessian.makeCompressed();
    }
    return out;
}

}  // namespace mam
