#pragma once

// Pseudo-outcomes: linked marginal means of the conditional model,
//
//   lambda(x) = g( E[ g^{-1}( f(x) + z'u ) ] ),  u ~ N(0, Sigma),
//
// their Jacobians with respect to the conditional fit, and the inverse problem of
// finding the conditional intercept that produces a given marginal mean.

#include "mam/common.hpp"
#include "mam/conditional.hpp"
#include "mam/family.hpp"
#include "mam/quadrature.hpp"

#include <Eigen/Sparse>

namespace mam {

using RowSparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// g(E g^{-1}(eta + z'u)). Binary links reduce to the scalar z'u ~ N(0, |z Lambda|^2) and use a
/// trapezoid rule with step 0.5 / max(1, sd) on [-9, 9]; the log link uses the product rule.
/// The mean is clamped into the link's domain and `clamped` (if given) set when that happens.
double marginal_link(Link link, double eta, const Eigen::Ref<const RowVector>& z, const Matrix& Lambda,
                     const GhqRule& rule, bool* clamped = nullptr);

/// Same for a fitted model at one covariate row with an explicit RE design row.
double marginal_link(const ConditionalFit& fit, const Eigen::Ref<const RowVector>& x_row,
                     const Eigen::Ref<const RowVector>& z_row, const GhqRule& rule, bool* clamped = nullptr);

struct MarginalizedMeans {
    Matrix grid;             // covariate rows
    Vector lambda_hat;       // linked marginal means
    RowSparseMatrix D_joint; // n x (d + Nm); u columns are structurally zero
    Matrix D_outer;          // n x P total derivative in psi
    Index clamped = 0;       // rows whose mean had to be clamped
};

/// d(alpha_hat)/d(psi) by the implicit function theorem, d x P. The cross derivative of
/// the inner gradient is taken by central differences with step `h`.
Matrix mode_sensitivity(const ConditionalFit& fit, double h = 1e-4);

/// lambda_hat on the grid and, when `jacobians` is set, both Jacobians.
MarginalizedMeans marginalize(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& grid, const GhqRule& rule,
                              bool jacobians = true, unsigned threads = 1);

/// D_joint and D_outer only.
void jacobian_lambda(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& grid, const GhqRule& rule,
                     RowSparseMatrix& D_joint, Matrix& D_outer, unsigned threads = 1);

/// Delta with marginal_link(link, Delta, z, Lambda, rule) = target_lambda, by safeguarded
/// Newton on a bracket of half-width 10 (1 + |Sigma|). Throws NumericalError on bracket failure.
double solve_delta(double target_lambda, const Eigen::Ref<const RowVector>& z, const Matrix& Lambda,
                   const GhqRule& rule, Link link);

}  // namespace mam
