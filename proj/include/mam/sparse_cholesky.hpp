#pragma once

#include "mam/common.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace mam {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Permutation = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

/// Fill-reducing order for the (alpha, u) Hessian: every per-cluster u block first, the
/// dense alpha block last. The u-u block is block diagonal, so eliminating it first
/// produces no fill beyond the alpha rows of L ("arrow" structure), i.e. O(N) nonzeros.
/// Variable layout of H is (alpha[0..d), u[0..Nm)).
Permutation arrow_permutation(Index num_fixed, Index num_random);

/// P H P' = L L' for a symmetric positive definite sparse H. The factorization is done
/// by Eigen's simplicial LLT with the ordering fixed to P; only L is kept, so the object
/// is an ordinary copyable value.
class SparseCholesky {
public:
    SparseCholesky() = default;
    SparseCholesky(const SparseMatrix& H, const Permutation& P) { factorize(H, P); }

    /// Returns false (and leaves the object unusable) when H is not positive definite.
    bool factorize(const SparseMatrix& H, const Permutation& P);

    bool ok() const { return ok_; }
    Index size() const { return perm_.size(); }
    const Permutation& permutation() const { return perm_; }
    const SparseMatrix& matrix_L() const { return L_; }
    double log_determinant() const { return log_det_; }
    Index nonzeros() const;

    /// H^{-1} b.
    Matrix solve(const Eigen::Ref<const Matrix>& b) const;
    /// L^{-1} P b: columns whose squared norms give b' H^{-1} b.
    Matrix whiten(const Eigen::Ref<const Matrix>& b) const;
    /// Same for a sparse right-hand side.
    Matrix whiten(const SparseMatrix& b) const;

private:
    SparseMatrix L_;  // lower factor of P H P'
    Permutation perm_;
    double log_det_ = 0.0;
    bool ok_ = false;
};

}  // namespace mam
