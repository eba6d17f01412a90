#include "mam/covariance.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace mam {

CovarianceParam::CovarianceParam(Index m, Vector theta) : m_(m), theta_(std::move(theta)) {
    if (theta_.size() != num_params_for(m))
        throw ValidationError("covariance parameter has length " + std::to_string(theta_.size()) + ", expected " +
                              std::to_string(num_params_for(m)));
    for (Index j = 0; j < m; ++j)
        for (Index i = j; i < m; ++i) {
            pos_.emplace_back(i, j);
            diag_.push_back(i == j);
        }
}

CovarianceParam CovarianceParam::from_covariance(const Matrix& sigma) {
    const Index m = sigma.rows();
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw ValidationError("covariance is not positive definite");
    const Matrix L = llt.matrixL();
    Vector theta(num_params_for(m));
    Index k = 0;
    for (Index j = 0; j < m; ++j)
        for (Index i = j; i < m; ++i) theta(k++) = (i == j) ? std::log(L(i, i)) : L(i, j);
    return CovarianceParam(m, theta);
}

CovarianceParam CovarianceParam::from_sd(double sigma0) {
    if (!(sigma0 > 0)) throw ValidationError("sigma0 must be positive");
    Vector theta(1);
    theta << std::log(sigma0);
    return CovarianceParam(1, theta);
}

CovarianceParam CovarianceParam::from_sd(double sigma0, double sigma1, double rho) {
    if (!(sigma0 > 0) || !(sigma1 > 0) || !(std::abs(rho) < 1))
        throw ValidationError("invalid (sigma0, sigma1, rho)");
    Matrix S(2, 2);
    S << sigma0 * sigma0, rho * sigma0 * sigma1, rho * sigma0 * sigma1, sigma1 * sigma1;
    return from_covariance(S);
}

Matrix CovarianceParam::lambda() const {
    Matrix L = Matrix::Zero(m_, m_);
    for (Index k = 0; k < theta_.size(); ++k) {
        const auto [i, j] = pos_[static_cast<std::size_t>(k)];
        L(i, j) = diag_[static_cast<std::size_t>(k)] ? std::exp(theta_(k)) : theta_(k);
    }
    return L;
}

Matrix CovarianceParam::sigma() const {
    const Matrix L = lambda();
    return L * L.transpose();
}

Matrix CovarianceParam::lambda_deriv(Index k) const {
    Matrix D = Matrix::Zero(m_, m_);
    const auto [i, j] = pos_[static_cast<std::size_t>(k)];
    D(i, j) = diag_[static_cast<std::size_t>(k)] ? std::exp(theta_(k)) : 1.0;
    return D;
}

Vector CovarianceParam::natural() const {
    const Matrix S = sigma();
    Vector out(num_params_for(m_));
    Index k = 0;
    for (Index i = 0; i < m_; ++i) out(k++) = std::sqrt(S(i, i));
    for (Index j = 0; j < m_; ++j)
        for (Index i = j + 1; i < m_; ++i) out(k++) = S(i, j) / std::sqrt(S(i, i) * S(j, j));
    return out;
}

}  // namespace mam
