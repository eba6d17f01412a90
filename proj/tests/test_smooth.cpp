#include "oracles.hpp"

#include "mam/design.hpp"
#include "mam/smooth.hpp"

#include "doctest.h"

#include <Eigen/Eigenvalues>

using namespace mam;

namespace {

Vector training_x(Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    RandomStream rng(seed, 3);
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = rng.uniform(lo, hi);
    return x;
}

Index numerical_rank(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    return (es.eigenvalues().array() > 1e-9 * top).count();
}

// Greville abscissae: coefficients that make a B-spline expansion reproduce x.
Vector greville(const SmoothTerm& t) {
    Vector g(t.basis_dim);
    for (Index j = 0; j < t.basis_dim; ++j) {
        double s = 0.0;
        for (int k = 1; k <= t.degree; ++k) s += t.knots[static_cast<std::size_t>(j + k)];
        g(j) = s / t.degree;
    }
    return g;
}

}  // namespace

TEST_SUITE("smooth-basis") {

TEST_CASE("order-2 difference penalty for d = 4 matches the hand product") {
    Matrix D(2, 4);
    D << 1, -2, 1, 0, 0, 1, -2, 1;
    CHECK(difference_matrix(4, 2) == D);
    const Matrix S = difference_penalty(4, 2);
    CHECK(S(0, 0) == 1.0);
    CHECK(S(1, 1) == 5.0);
    CHECK(S == D.transpose() * D);
}

TEST_CASE("penalties are symmetric PSD with rank d - order") {
    for (Index d : {4, 6, 10, 20})
        for (Index order : {1, 2, 3}) {
            if (d < order + 2) continue;
            const Matrix S = difference_penalty(d, order);
            CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
            Eigen::SelfAdjointEigenSolver<Matrix> es(S);
            CHECK(es.eigenvalues().minCoeff() >= -1e-10 * S.norm());
            CHECK(numerical_rank(S) == d - order);
        }
}

TEST_CASE("eigen reparameterization edge cases") {
    const Reparam I = eigen_reparameterize(Matrix::Identity(2, 2));
    CHECK(I.D_plus.size() == 2);
    CHECK(I.D_plus(0) == doctest::Approx(1.0));
    CHECK(I.null_dim() == 0);
    const Reparam Z = eigen_reparameterize(Matrix::Zero(3, 3));
    CHECK(Z.D_plus.size() == 0);
    CHECK(Z.null_dim() == 3);
    Matrix A(2, 2);
    A << 1, 2, 0, 1;
    CHECK_THROWS_AS(eigen_reparameterize(A), ValidationError);
}

TEST_CASE("penalty quadratic form is preserved by the reparameterization") {
    const Matrix S = difference_penalty(4, 2);
    const Reparam r = eigen_reparameterize(S);
    CHECK(r.null_dim() == 2);
    for (Index j = 1; j < r.D_plus.size(); ++j) CHECK(r.D_plus(j - 1) >= r.D_plus(j));
    Matrix U(4, 4);
    U << r.U_R, r.U_F;
    CHECK((U.transpose() * U - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10);
    RandomStream rng(5, 0);
    for (int k = 0; k < 100; ++k) {
        Vector a(4);
        for (Index j = 0; j < 4; ++j) a(j) = rng.normal() * 3.0;
        const double direct = a.dot(S * a);
        const Vector aR = r.U_R.transpose() * a;
        const double via = aR.dot(r.D_plus.asDiagonal() * aR);
        CHECK(std::abs(direct - via) <= 1e-10 * (1.0 + std::abs(direct)));
    }
}

TEST_CASE("built terms: orthonormal maps, penalty identity, constraint") {
    for (Index d : {5, 8, 12}) {
        const Vector x = training_x(200, static_cast<std::uint64_t>(d));
        const SmoothTerm t = build_term({0, d, 2}, x);
        CHECK(t.num_columns() == d - 1);
        CHECK(t.null_dim() == 1);  // the constant is removed by the constraint, the line remains
        CHECK(t.knots.size() == static_cast<std::size_t>(d + 4));
        CHECK(t.knots[3] == t.lo);
        CHECK(t.knots[static_cast<std::size_t>(d)] == t.hi);

        const Index k = d - 1;
        Matrix U(k, k);
        U << t.reparam.U_R, t.reparam.U_F;
        CHECK((U.transpose() * U - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() <= 1e-10);

        // working penalty is the identity on the range block, zero on the null block
        const Matrix Sw = t.transform.transpose() * t.S * t.transform;
        Matrix expected = Matrix::Zero(k, k);
        expected.bottomRightCorner(t.range_dim(), t.range_dim()).setIdentity();
        CHECK((Sw - expected).cwiseAbs().maxCoeff() <= 1e-9);

        // every working coefficient vector satisfies the centering constraint
        const RowVector ct = t.centering.transpose() * t.transform;
        CHECK(ct.cwiseAbs().maxCoeff() <= 1e-10 * t.centering.norm());

        // penalty invariance on random raw coefficients in the constrained space
        RandomStream rng(11, static_cast<std::uint64_t>(d));
        const Reparam& r = t.reparam;
        const Matrix Sc = t.Z.transpose() * t.S * t.Z;
        for (int it = 0; it < 50; ++it) {
            Vector a(k);
            for (Index j = 0; j < k; ++j) a(j) = rng.normal();
            const double direct = a.dot(Sc * a);
            const Vector aR = r.U_R.transpose() * a;
            CHECK(std::abs(direct - aR.dot(r.D_plus.asDiagonal() * aR)) <= 1e-9 * (1.0 + std::abs(direct)));
        }
    }
}

TEST_CASE("raw basis is a partition of unity on the training range") {
    const Vector x = training_x(100, 2, -2.0, 3.0);
    const SmoothTerm t = build_term({0, 9, 2}, x);
    const Matrix B = raw_basis(t, Vector::LinSpaced(301, t.lo, t.hi));
    CHECK((B.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-13);
    CHECK(B.minCoeff() >= 0.0);
}

TEST_CASE("evaluating at the training values reproduces the design block bit-exactly") {
    const auto data = oracle::toy_dataset(20, 5, Family::Bernoulli, oracle::intercepts(), 4);
    const ModelSpec spec = oracle::toy_spec(Family::Bernoulli, Link::Logit, oracle::intercepts(), 7);
    const ModelDesign design = ModelDesign::build(data, spec);
    const Matrix X = data.stacked_x();
    const Matrix full = design.rows(X);
    for (Index l = 0; l < design.num_smooths(); ++l) {
        const SmoothTerm& t = design.smooth_terms()[static_cast<std::size_t>(l)];
        const Matrix again = evaluate_basis(t, X.col(t.covariate));
        CHECK(again == full.middleCols(design.smooth_first_col(l), t.num_columns()));
    }
}

TEST_CASE("midpoint row sums to the transformed partition of unity") {
    const Vector x = training_x(80, 9);
    const SmoothTerm t = build_term({0, 8, 2}, x);
    Vector mid(1);
    mid << 0.5 * (t.lo + t.hi);
    const RowVector row = evaluate_basis(t, mid);
    const RowVector expected = RowVector::Ones(t.basis_dim) * t.transform;  // raw row sums to one
    CHECK((row - raw_basis(t, mid) * t.transform).cwiseAbs().maxCoeff() == 0.0);
    CHECK(raw_basis(t, mid).sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(expected.size() == row.size());
}

TEST_CASE("null-space image of a line reproduces the centred line") {
    const Vector x = training_x(150, 21);
    const SmoothTerm t = build_term({0, 10, 2}, x);
    // raw coefficients of x, shifted so that c'beta = 0 (subtracts the training mean)
    const Vector g = greville(t);
    const Vector beta = g - Vector::Constant(g.size(), t.centering.dot(g) / t.centering.sum());
    const Vector a = t.transform.colPivHouseholderQr().solve(beta);
    CHECK((t.transform * a - beta).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(a.tail(t.range_dim()).cwiseAbs().maxCoeff() <= 1e-8);  // a line is unpenalized
    const Vector grid = Vector::LinSpaced(41, t.lo, t.hi);
    const Vector fitted = evaluate_basis(t, grid) * a;
    const Vector truth = grid.array() - x.mean();
    CHECK((fitted - truth).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("outside the training range the basis extends linearly") {
    const Vector x = training_x(60, 8);
    const SmoothTerm t = build_term({0, 6, 2}, x);
    Vector pts(4);
    pts << t.hi, t.hi + 0.1, t.hi + 0.2, t.hi + 0.3;
    const Matrix B = raw_basis(t, pts);
    const RowVector d1 = B.row(2) - B.row(1), d2 = B.row(3) - B.row(2);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() <= 1e-12);
    // continuous at the edge
    Vector near(2);
    near << t.hi - 1e-9, t.hi + 1e-9;
    const Matrix Bn = raw_basis(t, near);
    CHECK((Bn.row(0) - Bn.row(1)).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("B-spline derivative kernel agrees with finite differences") {
    const Vector x = training_x(60, 31);
    const SmoothTerm t = build_term({0, 7, 2}, x);
    Vector v1(7), v2(7), dv(7);
    for (double p : {-0.8, -0.1, 0.33, 0.7}) {
        const double h = 1e-6;
        bspline_values(t.knots, 3, p + h, v1);
        bspline_values(t.knots, 3, p - h, v2);
        bspline_derivs(t.knots, 3, p, dv);
        CHECK((dv - (v1 - v2) / (2 * h)).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("too few distinct values is a construction error") {
    Vector x(12);
    x << 1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3;
    CHECK_THROWS_WITH_AS(build_term({0, 5, 2}, x), doctest::Contains("distinct"), ValidationError);
    CHECK_THROWS_WITH_AS(build_term({0, 3, 2}, Vector::LinSpaced(20, 0, 1)), doctest::Contains("basis too small"),
                         ValidationError);
}

TEST_CASE("design layout: intercept, linear terms, then smooths null-first") {
    const auto data = oracle::toy_dataset(10, 6, Family::Gaussian, oracle::intercepts(), 4);
    const ModelSpec spec = oracle::toy_spec(Family::Gaussian, Link::Identity, oracle::intercepts(), 6);
    const ModelDesign design = ModelDesign::build(data, spec);
    CHECK(design.num_fixed() == 1 + 1 + 5 + 5);
    CHECK(design.smooth_first_col(0) == 2);
    CHECK(design.range_first_col(0) == 3);
    CHECK(design.range_dim(1) == 4);
    const auto& names = data.covariate_names();
    CHECK(design.column_term(0, names) == "(Intercept)");
    CHECK(design.column_term(1, names) == "x3");
    CHECK(design.column_term(4, names) == "s(x1)");
    CHECK(design.column_term(11, names) == "s(x2)");
    const Matrix X = design.rows(data.stacked_x());
    CHECK(X.col(0) == Vector::Ones(X.rows()));
    CHECK(X.col(1) == data.stacked_x().col(2));
    // smooth columns are centred over the training data
    CHECK(X.rightCols(10).colwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
}

}  // TEST_SUITE
