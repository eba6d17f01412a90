#pragma once

#include "mam/common.hpp"

namespace mam {

/// Tensor-product Gauss-Hermite rule for E[f(Z)], Z ~ N(0, I_m). Weights already
/// include the standard normal density, so they sum to one.
struct GhqRule {
    Index m = 0;
    Index k = 0;
    Matrix nodes;    // k^m x m
    Vector weights;  // k^m

    Index size() const { return weights.size(); }
};

/// One-dimensional probabilists' Hermite nodes and weights (Golub-Welsch, Newton-polished), ascending.
void hermite_nodes(Index k, Vector& nodes, Vector& weights);

/// m in [0, 3]; m = 0 yields the single node with weight one.
GhqRule ghq_rule(Index m, Index k);

}  // namespace mam
