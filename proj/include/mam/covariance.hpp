#pragma once

#include "mam/common.hpp"

#include <vector>

namespace mam {

/// Random-effect covariance Sigma(theta) = Lambda(theta) Lambda(theta)' with Lambda lower
/// triangular. theta lists the lower triangle column by column; diagonal entries are
/// stored as logs, off-diagonal entries unconstrained. For m = 2:
///   theta = (log l00, l10, log l11).
class CovarianceParam {
public:
    CovarianceParam() = default;
    CovarianceParam(Index m, Vector theta);

    /// Parameterization of a given covariance (via its Cholesky factor).
    static CovarianceParam from_covariance(const Matrix& sigma);
    /// Random intercept (sigma0) and optional slope (sigma1, rho).
    static CovarianceParam from_sd(double sigma0);
    static CovarianceParam from_sd(double sigma0, double sigma1, double rho);

    Index dim() const { return m_; }
    Index num_params() const { return theta_.size(); }
    const Vector& theta() const { return theta_; }

    bool is_diagonal_param(Index k) const { return diag_[static_cast<std::size_t>(k)]; }
    /// (row, col) of Lambda driven by theta_k.
    std::pair<Index, Index> position(Index k) const { return pos_[static_cast<std::size_t>(k)]; }

    Matrix lambda() const;
    Matrix sigma() const;
    /// d Lambda / d theta_k.
    Matrix lambda_deriv(Index k) const;

    /// Standard deviations and correlations: for m = 2 returns (sigma0, sigma1, rho).
    Vector natural() const;

    static Index num_params_for(Index m) { return m * (m + 1) / 2; }

private:
    Index m_ = 0;
    Vector theta_;
    std::vector<bool> diag_;
    std::vector<std::pair<Index, Index>> pos_;
};

}  // namespace mam
