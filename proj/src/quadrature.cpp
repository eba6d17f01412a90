#include "mam/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace mam {

namespace {

// Orthonormal Hermite polynomials at x: p_{k-1}, p_k and p_k'.
void hermite_eval(Index k, double x, double& pkm1, double& pk, double& dpk) {
    double p0 = 1.0, p1 = x;
    if (k == 1) {
        pkm1 = p0;
        pk = p1;
        dpk = 1.0;
        return;
    }
    for (Index n = 1; n < k; ++n) {
        const double p2 = (x * p1 - std::sqrt(static_cast<double>(n)) * p0) / std::sqrt(static_cast<double>(n + 1));
        p0 = p1;
        p1 = p2;
    }
    pkm1 = p0;
    pk = p1;
    dpk = std::sqrt(static_cast<double>(k)) * p0;  // He_k' = k He_{k-1}
}

}  // namespace

void hermite_nodes(Index k, Vector& nodes, Vector& weights) {
    if (k < 1) throw ValidationError("quadrature needs at least one node");
    // Jacobi matrix of the monic He_n recurrence: He_{n+1} = x He_n - n He_{n-1}.
    Matrix J = Matrix::Zero(k, k);
    for (Index i = 1; i < k; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
    Eigen::SelfAdjointEigenSolver<Matrix> es(J, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("Golub-Welsch eigensolver failed");
    nodes = es.eigenvalues();
    weights.resize(k);
    // Newton polish on the positive half, mirrored; Christoffel weights 1 / sum p_n^2.
    for (Index i = k / 2; i < k; ++i) {
        double x = nodes(i), pkm1, pk, dpk;
        for (int it = 0; it < 5 && x != 0.0; ++it) {
            hermite_eval(k, x, pkm1, pk, dpk);
            x -= pk / dpk;
        }
        if (k % 2 == 1 && i == k / 2) x = 0.0;
        double p0 = 1.0, p1 = x, sum = 1.0;
        for (Index n = 1; n < k; ++n) {
            sum += p1 * p1;
            const double p2 = (x * p1 - std::sqrt(static_cast<double>(n)) * p0) / std::sqrt(static_cast<double>(n + 1));
            p0 = p1;
            p1 = p2;
        }
        nodes(i) = x;
        nodes(k - 1 - i) = -x;
        weights(i) = weights(k - 1 - i) = 1.0 / sum;
    }
    weights /= weights.sum();
}

GhqRule ghq_rule(Index m, Index k) {
    if (m < 0 || m > 3) throw ValidationError("quadrature dimension " + std::to_string(m) + " not supported (1..3)");
    GhqRule rule;
    rule.m = m;
    rule.k = k;
    Vector x, w;
    hermite_nodes(k, x, w);
    Index total = 1;
    for (Index a = 0; a < m; ++a) total *= k;
    rule.nodes.resize(total, m);
    rule.weights.resize(total);
    for (Index q = 0; q < total; ++q) {
        Index rest = q;
        double weight = 1.0;
        for (Index a = m - 1; a >= 0; --a) {
            const Index idx = rest % k;
            rest /= k;
            rule.nodes(q, a) = x(idx);
            weight *= w(idx);
        }
        rule.weights(q) = weight;
    }
    return rule;
}

}  // namespace mam
