#include "mam/smooth.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace mam {

Matrix difference_matrix(Index d, Index order) {
    Matrix D = Matrix::Identity(d, d);
    for (Index k = 0; k < order; ++k) {
        const Index rows = D.rows() - 1;
        D = (D.bottomRows(rows) - D.topRows(rows)).eval();
    }
    return D;
}

Matrix difference_penalty(Index d, Index order) {
    const Matrix D = difference_matrix(d, order);
    return D.transpose() * D;
}

Reparam eigen_reparameterize(const Matrix& S) {
    if (S.rows() != S.cols()) throw ValidationError("penalty matrix is not square");
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ValidationError("penalty matrix is not symmetric");

    const Index d = S.rows();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of penalty failed");

    // Eigen returns ascending eigenvalues; reverse to descending.
    Vector values = eig.eigenvalues().reverse();
    Matrix vectors = eig.eigenvectors().rowwise().reverse();
    for (Index j = 0; j < d; ++j) {
        Index arg = 0;
        vectors.col(j).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, j) < 0) vectors.col(j) *= -1.0;
    }

    const double lmax = d > 0 ? values(0) : 0.0;
    Index r = 0;
    if (lmax > 0)
        while (r < d && values(r) > 1e-9 * lmax) ++r;

    Reparam out;
    out.U_R = vectors.leftCols(r);
    out.U_F = vectors.rightCols(d - r);
    out.D_plus = values.head(r);
    return out;
}

namespace {

// Orthonormal basis of the complement of c via a Householder reflection H = I - 2vv'/v'v
// with Hc proportional to e_1; the remaining columns of H span {a : c'a = 0}.
Matrix constraint_null_basis(const Vector& c) {
    const Index d = c.size();
    const double norm = c.norm();
    if (!(norm > 0)) throw NumericalError("degenerate centering constraint");
    Vector v = c;
    v(0) += (c(0) >= 0 ? norm : -norm);
    const Matrix H = Matrix::Identity(d, d) - (2.0 / v.squaredNorm()) * v * v.transpose();
    return H.rightCols(d - 1);
}

}  // namespace

void finalize_term(SmoothTerm& term) {
    term.Z = constraint_null_basis(term.centering);
    const Matrix Sc = term.Z.transpose() * term.S * term.Z;
    term.reparam = eigen_reparameterize(0.5 * (Sc + Sc.transpose()));
    const Index nf = term.reparam.null_dim();
    const Index nr = term.reparam.range_dim();
    term.transform.resize(term.basis_dim, nf + nr);
    term.transform.leftCols(nf) = term.Z * term.reparam.U_F;
    term.transform.rightCols(nr) =
        term.Z * term.reparam.U_R * term.reparam.D_plus.cwiseSqrt().cwiseInverse().asDiagonal();
}

SmoothTerm build_term(const SmoothTermSpec& spec, const Eigen::Ref<const Vector>& x_values) {
    const int degree = 3;
    if (spec.basis_dim < spec.penalty_order + 2 || spec.basis_dim < degree + 1)
        throw ValidationError("basis too small: d=" + std::to_string(spec.basis_dim));
    std::set<double> distinct(x_values.data(), x_values.data() + x_values.size());
    if (static_cast<Index>(distinct.size()) < spec.basis_dim)
        throw ValidationError("smooth on covariate " + std::to_string(spec.covariate) + " needs at least " +
                              std::to_string(spec.basis_dim) + " distinct values, found " +
                              std::to_string(distinct.size()));

    SmoothTerm term;
    term.covariate = spec.covariate;
    term.degree = degree;
    term.penalty_order = spec.penalty_order;
    term.basis_dim = spec.basis_dim;
    term.lo = *distinct.begin();
    term.hi = *distinct.rbegin();

    const Index d = spec.basis_dim;
    const double h = (term.hi - term.lo) / static_cast<double>(d - degree);
    term.knots.resize(static_cast<std::size_t>(d + degree + 1));
    for (Index j = 0; j < d + degree + 1; ++j)
        term.knots[static_cast<std::size_t>(j)] = term.lo + static_cast<double>(j - degree) * h;
    // pin the interior edges so the training range maps exactly onto the valid spans
    term.knots[static_cast<std::size_t>(degree)] = term.lo;
    term.knots[static_cast<std::size_t>(d)] = term.hi;

    term.S = difference_penalty(d, spec.penalty_order);
    term.centering = raw_basis(term, x_values).colwise().sum().transpose();
    finalize_term(term);
    return term;
}

Matrix raw_basis(const SmoothTerm& term, const Eigen::Ref<const Vector>& x_new) {
    const Index d = term.basis_dim;
    Matrix B(x_new.size(), d);
    Vector row(d), slope(d);
    for (Index i = 0; i < x_new.size(); ++i) {
        const double x = x_new(i);
        if (x < term.lo || x > term.hi) {
            const double edge = x < term.lo ? term.lo : term.hi;
            bspline_values(term.knots, term.degree, edge, row);
            bspline_derivs(term.knots, term.degree, edge, slope);
            B.row(i) = (row + (x - edge) * slope).transpose();
        } else {
            bspline_values(term.knots, term.degree, x, row);
            B.row(i) = row.transpose();
        }
    }
    return B;
}

Matrix evaluate_basis(const SmoothTerm& term, const Eigen::Ref<const Vector>& x_new) {
    return raw_basis(term, x_new) * term.transform;
}

}  // namespace mam
