#pragma once

// Penalized B-spline (P-spline) smooth terms.
//
// A term owns a cubic B-spline basis on equally spaced knots covering the training
// range, a difference penalty S = D'D on the raw coefficients, a sum-to-zero
// constraint absorbed by a Householder reflection, and an eigen reparameterization
// that splits the constrained coefficients into an unpenalized null-space block and
// a range block whose penalty is the identity. The working basis handed to the
// model is
//
//     B_work = B_raw * Z * [U_F, U_R * D_+^{-1/2}]
//
// so a term with basis dimension d contributes d - 1 model columns, null space first.

#include "mam/common.hpp"
#include "mam/data.hpp"

#include <vector>

namespace mam {

// ---------------------------------------------------------------- B-spline kernels

/// Index k of the knot span with knots[k] <= x < knots[k+1], restricted to the
/// spans covering [knots[degree], knots[size - degree - 1]].
inline Index bspline_span(const std::vector<double>& knots, int degree, double x) {
    const Index first = degree;
    const Index last = static_cast<Index>(knots.size()) - degree - 2;
    if (x >= knots[static_cast<std::size_t>(last + 1)]) return last;
    if (x <= knots[static_cast<std::size_t>(first)]) return first;
    Index lo = first, hi = last + 1;
    while (hi - lo > 1) {
        const Index mid = (lo + hi) / 2;
        if (x < knots[static_cast<std::size_t>(mid)]) hi = mid;
        else lo = mid;
    }
    return lo;
}

/// Values of all basis functions at x (Cox-de Boor). `out` has knots.size() - degree - 1 entries.
template <class Scalar, class Derived>
void bspline_values(const std::vector<double>& knots, int degree, Scalar x, Eigen::MatrixBase<Derived> const& out_) {
    auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_);
    out.setZero();
    const Index k = bspline_span(knots, degree, static_cast<double>(x));
    std::vector<Scalar> n(static_cast<std::size_t>(degree + 1)), left(n.size()), right(n.size());
    n[0] = Scalar(1);
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - Scalar(knots[static_cast<std::size_t>(k + 1 - j)]);
        right[j] = Scalar(knots[static_cast<std::size_t>(k + j)]) - x;
        Scalar saved(0);
        for (int r = 0; r < j; ++r) {
            const Scalar tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    for (int r = 0; r <= degree; ++r) out(k - degree + r) = n[r];
}

/// First derivatives of all basis functions at x.
template <class Scalar, class Derived>
void bspline_derivs(const std::vector<double>& knots, int degree, Scalar x, Eigen::MatrixBase<Derived> const& out_) {
    auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_);
    out.setZero();
    if (degree == 0) return;
    const Index nb = out.size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lower(nb + 1);
    bspline_values(knots, degree - 1, x, lower);
    // N'_{i,p} = p/(t_{i+p}-t_i) N_{i,p-1} - p/(t_{i+p+1}-t_{i+1}) N_{i+1,p-1}
    for (Index i = 0; i < nb; ++i) {
        Scalar v(0);
        const double a = knots[static_cast<std::size_t>(i + degree)] - knots[static_cast<std::size_t>(i)];
        const double b = knots[static_cast<std::size_t>(i + degree + 1)] - knots[static_cast<std::size_t>(i + 1)];
        if (a > 0) v += Scalar(degree / a) * lower(i);
        if (b > 0) v -= Scalar(degree / b) * lower(i + 1);
        out(i) = v;
    }
}

/// k-th order difference matrix, (d - order) x d.
Matrix difference_matrix(Index d, Index order);

/// S = D'D for the order-`order` difference matrix.
Matrix difference_penalty(Index d, Index order);

// ---------------------------------------------------------------- reparameterization

struct Reparam {
    Matrix U_R;      // d x r, eigenvectors with positive eigenvalues (descending)
    Matrix U_F;      // d x M, null-space eigenvectors
    Vector D_plus;   // r positive eigenvalues, descending

    Index null_dim() const { return U_F.cols(); }
    Index range_dim() const { return U_R.cols(); }
};

/// Symmetric eigendecomposition of a PSD penalty. Eigenvalues below 1e-9 * lambda_max
/// are treated as null space. Throws ValidationError for asymmetric input.
Reparam eigen_reparameterize(const Matrix& S);

// ---------------------------------------------------------------- smooth term

struct SmoothTerm {
    Index covariate = 0;
    int degree = 3;
    Index penalty_order = 2;
    Index basis_dim = 0;         // d, raw B-spline count
    double lo = 0.0, hi = 1.0;   // training range; outside it the basis is extrapolated linearly
    std::vector<double> knots;   // d + degree + 1 equally spaced knots
    Matrix S;                    // d x d raw penalty
    Vector centering;            // c, column sums of the raw training basis
    Matrix Z;                    // d x (d-1), orthonormal basis of {a : c'a = 0}
    Reparam reparam;             // of Z' S Z
    Matrix transform;            // d x (d-1) raw -> working map

    Index num_columns() const { return transform.cols(); }
    Index null_dim() const { return reparam.null_dim(); }
    Index range_dim() const { return reparam.range_dim(); }
};

/// Builds the basis, penalty, constraint and reparameterization from training values.
/// Throws ValidationError when fewer than basis_dim distinct values are present.
SmoothTerm build_term(const SmoothTermSpec& spec, const Eigen::Ref<const Vector>& x_values);

/// Raw B-spline rows (n x d); rows sum to one on [lo, hi], linear extrapolation outside.
Matrix raw_basis(const SmoothTerm& term, const Eigen::Ref<const Vector>& x_new);

/// Working (constrained, reparameterized) rows, n x (d-1).
Matrix evaluate_basis(const SmoothTerm& term, const Eigen::Ref<const Vector>& x_new);

/// Recomputes Z, the reparameterization and the transform from the stored fields.
void finalize_term(SmoothTerm& term);

}  // namespace mam
