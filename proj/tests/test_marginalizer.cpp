#include "oracles.hpp"

#include "mam/marginalizer.hpp"
#include "mam/quadrature.hpp"

#include "doctest.h"

using namespace mam;

namespace {

double gaussian_moment(int p) {  // E Z^p
    if (p % 2) return 0.0;
    double v = 1.0;
    for (int k = p - 1; k > 0; k -= 2) v *= k;
    return v;
}

RowVector one() { return RowVector::Ones(1); }
Matrix lam(double sigma) { return Matrix::Constant(1, 1, sigma); }

}  // namespace

TEST_SUITE("marginalizer") {

TEST_CASE("Gauss-Hermite rules: small cases and moments") {
    const GhqRule r1 = ghq_rule(1, 1);
    CHECK(r1.nodes(0, 0) == 0.0);
    CHECK(r1.weights(0) == 1.0);
    const GhqRule r2 = ghq_rule(1, 2);
    CHECK(r2.nodes(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(r2.nodes(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r2.weights(0) == doctest::Approx(0.5).epsilon(1e-14));
    const GhqRule r20 = ghq_rule(1, 20);
    CHECK(std::abs((r20.nodes.col(0).array().pow(4) * r20.weights.array()).sum() - 3.0) <= 1e-12);
    for (Index k : {1, 3, 8, 20, 25}) {
        for (Index m : {1, 2, 3}) {
            if (m == 3 && k > 8) continue;
            const GhqRule r = ghq_rule(m, k);
            CHECK(r.size() == static_cast<Index>(std::pow(k, m)));
            CHECK(std::abs(r.weights.sum() - 1.0) <= 1e-13);
        }
        const GhqRule r = ghq_rule(1, k);
        for (int p = 0; p <= 2 * k - 1; ++p) {
            const double q = (r.nodes.col(0).array().pow(p) * r.weights.array()).sum();
            // relative to the sum of absolute terms: odd moments cancel terms up to ~1e22
            const double scale = (r.nodes.col(0).array().abs().pow(p) * r.weights.array()).sum();
            CHECK(std::abs(q - gaussian_moment(p)) <= 1e-12 * std::max(1.0, scale));
        }
    }
    // tensor product: E[Z1^2 Z2^4] = 3
    const GhqRule r = ghq_rule(2, 5);
    CHECK(std::abs((r.nodes.col(0).array().square() * r.nodes.col(1).array().pow(4) * r.weights.array()).sum() - 3.0) <=
          1e-12);
    CHECK(ghq_rule(0, 5).size() == 1);
    CHECK_THROWS_AS(ghq_rule(4, 3), ValidationError);
    CHECK_THROWS_AS(ghq_rule(1, 0), ValidationError);
}

TEST_CASE("identity link marginal mean is the conditional predictor") {
    const GhqRule r = ghq_rule(2, 7);
    RowVector z(2);
    z << 1.0, 0.3;
    const Matrix L = CovarianceParam::from_sd(2.0, 1.0, 0.5).lambda();
    CHECK(marginal_link(Link::Identity, 0.731, z, L, r) == 0.731);
}

TEST_CASE("logit at zero stays zero by symmetry") {
    for (double s : {0.1, 1.0, 3.0}) CHECK(std::abs(marginal_link(Link::Logit, 0.0, one(), lam(s), ghq_rule(1, 20))) <= 1e-15);
}

TEST_CASE("probit marginalization has a closed form") {
    const double v = marginal_link(Link::Probit, 1.0, one(), lam(2.0), ghq_rule(1, 20));
    CHECK(std::abs(v - 1.0 / std::sqrt(5.0)) <= 1e-8);
    // the closed form itself against adaptive quadrature
    const double mu = oracle::normal_expectation([](double u) { return oracle::Phi(1.0 + u); }, 2.0);
    CHECK(std::abs(mu - oracle::Phi(1.0 / std::sqrt(5.0))) <= 1e-12);
}

TEST_CASE("logit marginalization matches adaptive quadrature") {
    const double v = marginal_link(Link::Logit, 1.0, one(), lam(2.0), ghq_rule(1, 25));
    const double mu = oracle::normal_expectation([](double u) { return oracle::expit(1.0 + u); }, 2.0);
    CHECK(std::abs(v - oracle::logit(mu)) <= 1e-7);
}

TEST_CASE("quadrature converges by k = 15 over the simulation ranges") {
    const GhqRule a = ghq_rule(1, 15), b = ghq_rule(1, 25);
    for (double eta = -3.0; eta <= 3.0; eta += 0.5)
        for (double s : {0.5, 1.0, 2.0, 3.0})
            CHECK(std::abs(marginal_link(Link::Logit, eta, one(), lam(s), a) -
                           marginal_link(Link::Logit, eta, one(), lam(s), b)) <= 1e-8);
}

TEST_CASE("marginal means are attenuated toward one half") {
    const GhqRule r = ghq_rule(1, 20);
    for (double eta : {0.2, 1.0, 2.5})
        for (double s : {0.3, 1.0, 2.0}) {
            const double mu = oracle::expit(marginal_link(Link::Logit, eta, one(), lam(s), r));
            CHECK(mu > 0.5);
            CHECK(mu < oracle::expit(eta));
        }
}

TEST_CASE("clamping is flagged") {
    bool clamped = false;
    const double v = marginal_link(Link::Logit, 60.0, one(), lam(0.01), ghq_rule(1, 5), &clamped);
    CHECK(clamped);
    CHECK(v == doctest::Approx(oracle::logit(1.0 - 1e-12)).epsilon(1e-6));
    marginal_link(Link::Logit, 1.0, one(), lam(1.0), ghq_rule(1, 5), &clamped);
    CHECK_FALSE(clamped);
}

TEST_CASE("solve_delta: limits, symmetry, closed form, round trip") {
    const GhqRule r = ghq_rule(1, 20);
    CHECK(std::abs(solve_delta(0.8, one(), lam(1e-8), r, Link::Logit) - 0.8) <= 1e-6);
    CHECK(std::abs(solve_delta(0.0, one(), lam(2.0), r, Link::Logit)) <= 1e-12);
    for (double l : {-1.5, 0.2, 0.9}) CHECK(std::abs(solve_delta(l, one(), lam(2.0), r, Link::Probit) - l * std::sqrt(5.0)) <= 1e-8);
    RandomStream rng(8, 8);
    for (int it = 0; it < 100; ++it) {
        const double target = rng.uniform(-3, 3), s = rng.uniform(0.1, 3.0);
        const double d = solve_delta(target, one(), lam(s), r, Link::Logit);
        CHECK(std::abs(marginal_link(Link::Logit, d, one(), lam(s), r) - target) <= 1e-9);
        CHECK(std::abs(solve_delta(marginal_link(Link::Logit, d, one(), lam(s), r), one(), lam(s), r, Link::Logit) - d) <=
              1e-9 * (1.0 + std::abs(d)) * 10);
    }
    CHECK_THROWS_AS(solve_delta(100.0, one(), lam(1.0), r, Link::Logit), ValidationError);
}

TEST_CASE("Jacobians: identity link and symmetric logit point") {
    const auto ds = oracle::toy_dataset(6, 5, Family::Gaussian, oracle::intercepts(), 31);
    const ModelSpec spec = oracle::toy_spec(Family::Gaussian, Link::Identity, oracle::intercepts(), 5);
    const ConditionalFit fit = oracle::fit_at(ds, spec, (Vector(4) << 1.0, 0.5, std::log(0.7), -0.2).finished());
    const Matrix grid = ds.stacked_x().topRows(9);
    const MarginalizedMeans mm = marginalize(fit, grid, ghq_rule(1, 10));
    const Matrix X = fit.design.rows(grid);
    CHECK((mm.lambda_hat - X * fit.alpha).cwiseAbs().maxCoeff() <= 1e-14);
    const Matrix Dj = Matrix(mm.D_joint);
    CHECK((Dj.leftCols(X.cols()) - X).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Dj.rightCols(fit.data.num_random()).cwiseAbs().maxCoeff() == 0.0);
    // no direct theta term: the total derivative is the mode sensitivity mapped through X
    CHECK((mm.D_outer - X * mode_sensitivity(fit)).cwiseAbs().maxCoeff() <= 1e-12);

    // logit, eta = 0: d lambda / d sigma vanishes
    const auto db = oracle::toy_dataset(6, 5, Family::Bernoulli, oracle::intercepts(), 32);
    ConditionalFit lf = oracle::fit_at(db, oracle::toy_spec(Family::Bernoulli, Link::Logit, oracle::intercepts(), 5),
                                       (Vector(3) << 1.0, 0.5, std::log(1.3)).finished());
    lf.alpha.setZero();
    Matrix g0 = db.stacked_x().topRows(1);
    const Matrix Xg = lf.design.rows(g0);
    // choose a covariate row whose smooth part is zero: only the intercept contributes
    CHECK(Xg(0, 0) == 1.0);
    const MarginalizedMeans m0 = marginalize(lf, g0, ghq_rule(1, 20), false);
    CHECK(std::abs(m0.lambda_hat(0)) <= 1e-15);
    Vector th = lf.hyper.theta.theta();
    th(0) += 1e-5;
    ConditionalFit lp = lf;
    lp.hyper.theta = CovarianceParam(1, th);
    CHECK(std::abs(marginalize(lp, g0, ghq_rule(1, 20), false).lambda_hat(0)) <= 1e-15);
}

TEST_CASE("D_joint agrees with finite differences holding theta fixed") {
    for (const ReStructure& re : {oracle::intercepts(), oracle::slopes()}) {
        const auto ds = oracle::toy_dataset(5, 6, Family::Bernoulli, re, 33);
        const ModelSpec spec = oracle::toy_spec(Family::Bernoulli, Link::Logit, re, 5);
        const Index P = 2 + CovarianceParam::num_params_for(re.dim());
        Vector psi = Vector::Constant(P, 0.5);
        psi(2) = std::log(1.5);
        const ConditionalFit fit = oracle::fit_at(ds, spec, psi);
        const Matrix grid = ds.stacked_x().topRows(12);
        const GhqRule rule = ghq_rule(re.dim(), 12);
        const MarginalizedMeans mm = marginalize(fit, grid, rule);
        const Matrix Dj = Matrix(mm.D_joint);
        const Index d = fit.data.num_fixed();
        for (Index a = 0; a < d; ++a) {
            ConditionalFit fp = fit, fm = fit;
            const double h = 1e-6;
            fp.alpha(a) += h;
            fm.alpha(a) -= h;
            const Vector fd = (marginalize(fp, grid, rule, false).lambda_hat - marginalize(fm, grid, rule, false).lambda_hat) /
                              (2 * h);
            const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
            CHECK((Dj.col(a) - fd).cwiseAbs().maxCoeff() / scale <= 1e-6);
        }
        CHECK(Dj.rightCols(fit.data.num_random()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("parallel marginalization is bit-identical") {
    const auto ds = oracle::toy_dataset(8, 6, Family::Bernoulli, oracle::slopes(), 34);
    const ConditionalFit fit = oracle::fit_at(ds, oracle::toy_spec(Family::Bernoulli, Link::Logit, oracle::slopes(), 5),
                                              (Vector(5) << 0.5, 0.5, 0.3, 0.2, -0.5).finished());
    const Matrix grid = ds.stacked_x();
    const MarginalizedMeans a = marginalize(fit, grid, ghq_rule(2, 10), true, 1);
    const MarginalizedMeans b = marginalize(fit, grid, ghq_rule(2, 10), true, 4);
    CHECK(a.lambda_hat == b.lambda_hat);
    CHECK(a.D_outer == b.D_outer);
    CHECK(Matrix(a.D_joint) == Matrix(b.D_joint));
}

}  // TEST_SUITE
