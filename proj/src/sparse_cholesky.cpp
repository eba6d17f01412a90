#include "mam/sparse_cholesky.hpp"

#include <cmath>

namespace mam {

Permutation arrow_permutation(Index num_fixed, Index num_random) {
    Permutation P(num_fixed + num_random);
    for (Index a = 0; a < num_fixed; ++a) P.indices()(a) = static_cast<int>(num_random + a);
    for (Index k = 0; k < num_random; ++k) P.indices()(num_fixed + k) = static_cast<int>(k);
    return P;
}

bool SparseCholesky::factorize(const SparseMatrix& H, const Permutation& P) {
    perm_ = P;
    ok_ = false;
    SparseMatrix Hp;
    Hp = H.twistedBy(P);
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(Hp);
    if (llt.info() != Eigen::Success) return false;
    L_ = llt.matrixL();
    long double ld = 0.0L;
    for (Index j = 0; j < L_.outerSize(); ++j) {
        // first stored entry of each column is the diagonal
        const double v = L_.valuePtr()[L_.outerIndexPtr()[j]];
        if (!(v > 0) || !std::isfinite(v)) return false;
        ld += std::log(v);
    }
    log_det_ = 2.0 * static_cast<double>(ld);
    ok_ = true;
    return true;
}

Index SparseCholesky::nonzeros() const {
    return ok_ ? static_cast<Index>(L_.nonZeros()) : 0;
}

Matrix SparseCholesky::solve(const Eigen::Ref<const Matrix>& b) const {
    Matrix x = perm_ * b;
    L_.triangularView<Eigen::Lower>().solveInPlace(x);
    L_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return perm_.transpose() * x;
}

Matrix SparseCholesky::whiten(const Eigen::Ref<const Matrix>& b) const {
    Matrix x = perm_ * b;
    L_.triangularView<Eigen::Lower>().solveInPlace(x);
    return x;
}

Matrix SparseCholesky::whiten(const SparseMatrix& b) const {
    Matrix x = perm_ * Matrix(b);
    L_.triangularView<Eigen::Lower>().solveInPlace(x);
    return x;
}

}  // namespace mam
