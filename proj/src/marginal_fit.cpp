#include "mam/marginal_fit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace mam {

Matrix Projection::gram_solve(const Eigen::Ref<const Matrix>& M) const {
    const auto U = R.triangularView<Eigen::Upper>();
    return U.solve(U.transpose().solve(M));
}

Matrix Projection::gram_inverse() const { return gram_solve(Matrix::Identity(R.cols(), R.cols())); }

Projection project_ols(const Eigen::Ref<const Matrix>& B, const Eigen::Ref<const Vector>& lambda,
                       const std::function<std::string(Index)>& column_name) {
    const Index p = B.cols();
    if (B.rows() != lambda.size()) throw ValidationError("projection: basis and pseudo-outcome lengths differ");
    if (B.rows() < p) throw ValidationError("projection: fewer rows than marginal basis columns");
    Eigen::HouseholderQR<Matrix> qr(B);
    Projection out;
    out.R = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(out.R, Eigen::ComputeFullV);
    const Vector sv = svd.singularValues();
    const double smax = sv(0), smin = sv(p - 1);
    out.gram_condition = smin > 0 ? (smax / smin) * (smax / smin) : std::numeric_limits<double>::infinity();
    if (!(out.gram_condition <= 1e10)) {
        Index worst = 0;
        svd.matrixV().col(p - 1).cwiseAbs().maxCoeff(&worst);
        const std::string name = column_name ? column_name(worst) : "column " + std::to_string(worst);
        throw ValidationError("marginal basis is rank deficient (Gram condition " + std::to_string(out.gram_condition) +
                              "); offending term: " + name);
    }
    out.alpha = qr.solve(Vector(lambda));
    return out;
}

VarianceResult pointwise_var_conditional(const SparseCholesky& chol, const RowSparseMatrix& D,
                                         const Eigen::Ref<const Matrix>& B, const Projection& proj, const Matrix& E_in,
                                         Index batch, unsigned threads) {
    if (!chol.ok()) throw NumericalError("conditional Hessian not PD");
    const Index n = D.rows(), p = B.cols(), q = D.cols();
    if (B.rows() != n) throw ValidationError("Jacobian and marginal basis row counts differ");
    batch = std::max<Index>(1, batch);
    const Index nb = (n + batch - 1) / batch;

    // K = L^{-1} P D' B, accumulated batch by batch in fixed order.
    std::vector<Matrix> parts(static_cast<std::size_t>(nb));
    parallel_for(nb, threads, [&](Index b) {
        const Index r0 = b * batch, len = std::min(batch, n - r0);
        const SparseMatrix Dt = SparseMatrix(D.middleRows(r0, len).transpose());
        parts[static_cast<std::size_t>(b)] = chol.whiten(Dt) * B.middleRows(r0, len);
    });
    Matrix K = Matrix::Zero(q, p);
    for (const auto& part : parts) K += part;
    parts.clear();

    VarianceResult out;
    const Matrix M = proj.gram_solve(K.transpose()).transpose();  // q x p
    out.coef_cov = M.transpose() * M;
    const Matrix own = E_in.size() ? Matrix() : Matrix(B);
    const Matrix& E = E_in.size() ? E_in : own;
    const Index ne = E.rows();
    out.var.resize(ne);
    const Index eb = (ne + batch - 1) / batch;
    parallel_for(eb, threads, [&](Index b) {
        const Index r0 = b * batch, len = std::min(batch, ne - r0);
        out.var.segment(r0, len) = (M * E.middleRows(r0, len).transpose()).colwise().squaredNorm().transpose();
    });
    return out;
}

VarianceResult pointwise_var_correction(const Matrix& H_outer, const std::vector<bool>& use, const Matrix& D_outer,
                                        const Eigen::Ref<const Matrix>& B, const Projection& proj, const Matrix& E_in,
                                        Index batch) {
    const Index n = D_outer.rows(), p = B.cols();
    const Matrix own = E_in.size() ? Matrix() : Matrix(B);
    const Matrix& E = E_in.size() ? E_in : own;
    VarianceResult out;
    out.var = Vector::Zero(E.rows());
    out.coef_cov = Matrix::Zero(p, p);
    std::vector<Index> idx;
    for (Index k = 0; k < H_outer.rows(); ++k)
        if (k < static_cast<Index>(use.size()) && use[static_cast<std::size_t>(k)]) idx.push_back(k);
    if (idx.empty()) return out;
    const Index s = static_cast<Index>(idx.size());
    Matrix Hs(s, s), Ds(n, s);
    for (Index a = 0; a < s; ++a) {
        Ds.col(a) = D_outer.col(idx[static_cast<std::size_t>(a)]);
        for (Index b = 0; b < s; ++b) Hs(a, b) = H_outer(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    Eigen::LLT<Matrix> llt(Hs);
    if (llt.info() != Eigen::Success) {
        out.available = false;
        out.flag = "correction unavailable: boundary optimum";
        return out;
    }
    batch = std::max<Index>(1, batch);
    Matrix K = Matrix::Zero(s, p);
    for (Index r0 = 0; r0 < n; r0 += batch) {
        const Index len = std::min(batch, n - r0);
        const Matrix W = llt.matrixL().solve(Ds.middleRows(r0, len).transpose());
        K += W * B.middleRows(r0, len);
    }
    const Matrix M = proj.gram_solve(K.transpose()).transpose();
    out.coef_cov = M.transpose() * M;
    for (Index r0 = 0; r0 < E.rows(); r0 += batch) {
        const Index len = std::min(batch, E.rows() - r0);
        out.var.segment(r0, len) = (M * E.middleRows(r0, len).transpose()).colwise().squaredNorm().transpose();
    }
    return out;
}

Bands confidence_bands(const Eigen::Ref<const Vector>& f, const Eigen::Ref<const Vector>& vc,
                       const Eigen::Ref<const Vector>& vk, double level) {
    if (!(level > 0 && level < 1)) throw ValidationError("confidence level must lie in (0, 1)");
    if ((vc.array() < 0).any() || (vk.array() < 0).any()) throw ValidationError("negative variance");
    const double z = detail::std_normal_quantile(0.5 + 0.5 * level);
    Bands b;
    b.estimate = f;
    b.se = (vc + vk).cwiseSqrt();
    b.lower = f - z * b.se;
    b.upper = f + z * b.se;
    return b;
}

Bands response_scale(const Bands& bands, Link link) {
    Bands out = bands;
    for (Index i = 0; i < bands.estimate.size(); ++i) {
        out.estimate(i) = inverse_link(link, bands.estimate(i));
        out.lower(i) = inverse_link(link, bands.lower(i));
        out.upper(i) = inverse_link(link, bands.upper(i));
    }
    return out;
}

MAMFit fit_marginal(const ConditionalFit& fit, const MarginalizedMeans& means, Index batch, unsigned threads) {
    const Matrix B = fit.design.rows(means.grid);
    MAMFit out;
    out.projection = project_ols(B, means.lambda_hat, [&](Index col) {
        return fit.design.column_term(col, fit.covariate_names);
    });
    out.alpha_M = out.projection.alpha;
    out.f_M_hat = B * out.alpha_M;
    const VarianceResult vc = pointwise_var_conditional(fit.chol, means.D_joint, B, out.projection, Matrix(), batch,
                                                        threads);
    const VarianceResult vk = pointwise_var_correction(fit.H_outer, fit.identified, means.D_outer, B, out.projection,
                                                       Matrix(), batch);
    out.var_conditional = vc.var;
    out.var_correction = vk.var;
    out.cov_conditional = vc.coef_cov;
    out.cov_correction = vk.coef_cov;
    out.correction_available = vk.available;
    out.correction_flag = vk.flag;
    out.bands = confidence_bands(out.f_M_hat, out.var_conditional, out.var_correction);
    return out;
}

}  // namespace mam
