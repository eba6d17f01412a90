#pragma once

// Unpenalized projection of pseudo-outcomes onto the marginal basis and pointwise
// variances of the projected curve. The conditional part propagates H_joint^{-1}
// through the Jacobian D_joint; the correction propagates H_outer^{-1} through
// D_outer. Both are computed as
//
//   var_i = | M e_i |^2,   M = L^{-1} P D' B (B'B)^{-1}
//
// in row batches, so no n x n array is ever formed.

#include "mam/common.hpp"
#include "mam/marginalizer.hpp"
#include "mam/sparse_cholesky.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mam {

struct Projection {
    Vector alpha;           // alpha^M
    Matrix R;               // B = QR, Gram = R'R
    double gram_condition = 1.0;

    /// (B'B)^{-1} M.
    Matrix gram_solve(const Eigen::Ref<const Matrix>& M) const;
    /// (B'B)^{-1}.
    Matrix gram_inverse() const;
};

/// Least squares by Householder QR. `column_name` names the term owning a column for the
/// rank-deficiency error (Gram condition above 1e10).
Projection project_ols(const Eigen::Ref<const Matrix>& B_M, const Eigen::Ref<const Vector>& lambda_hat,
                       const std::function<std::string(Index)>& column_name = {});

struct VarianceResult {
    Vector var;           // per evaluation row
    Matrix coef_cov;      // covariance contribution for alpha^M, M'M
    bool available = true;
    std::string flag;
};

/// Conditional-part variance of E alpha^M. E defaults to B_M when empty.
VarianceResult pointwise_var_conditional(const SparseCholesky& chol, const RowSparseMatrix& D_joint,
                                         const Eigen::Ref<const Matrix>& B_M, const Projection& proj,
                                         const Matrix& E = Matrix(), Index batch = 256, unsigned threads = 1);

/// Correction for estimated (log tau, theta). Only coordinates flagged in `use` enter;
/// a non-PD block yields zeros with `available = false`.
VarianceResult pointwise_var_correction(const Matrix& H_outer, const std::vector<bool>& use, const Matrix& D_outer,
                                        const Eigen::Ref<const Matrix>& B_M, const Projection& proj,
                                        const Matrix& E = Matrix(), Index batch = 256);

struct Bands {
    Vector estimate;
    Vector se;
    Vector lower;
    Vector upper;
};

/// estimate +/- z_{(1+level)/2} sqrt(var_cond + var_corr) on the link scale.
Bands confidence_bands(const Eigen::Ref<const Vector>& f_hat, const Eigen::Ref<const Vector>& var_cond,
                       const Eigen::Ref<const Vector>& var_corr, double level = 0.95);

/// Applies g^{-1} to estimate and limits (se is left on the link scale).
Bands response_scale(const Bands& bands, Link link);

struct MAMFit {
    Projection projection;
    Vector alpha_M;
    Vector f_M_hat;            // B_M alpha^M at the training rows
    Vector var_conditional;
    Vector var_correction;
    Bands bands;
    Matrix cov_conditional;    // p x p
    Matrix cov_correction;     // p x p
    bool correction_available = true;
    std::string correction_flag;
};

/// Projection plus training-row variances given pseudo-outcomes at the training rows.
MAMFit fit_marginal(const ConditionalFit& fit, const MarginalizedMeans& means, Index batch = 256,
                    unsigned threads = 1);

}  // namespace mam
