#pragma once

#include "mam/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mam {

using Objective = std::function<double(const Vector&)>;

/// Central differences, step h per coordinate. Non-finite values propagate.
Vector fd_gradient(const Objective& f, const Vector& x, double h);

/// Five-point central differences, O(h^4) truncation; less noise amplification at larger h.
Vector fd_gradient5(const Objective& f, const Vector& x, double h);

/// Central second differences (4 evaluations per off-diagonal pair, 2 + centre per diagonal).
Matrix fd_hessian(const Objective& f, const Vector& x, double h, double fx);

struct BoxBounds {
    Vector lower;
    Vector upper;

    Vector clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

struct BfgsOptions {
    double fd_step = 1e-4;
    double rel_ftol = 1e-6;      // relative objective change
    double rel_gtol = 1e-7;      // projected gradient, relative to 1 + |f|
    Index max_evaluations = 500;
    double max_step = 2.0;       // cap on any coordinate of a trial step
};

struct BfgsResult {
    Vector x;
    double f = 0.0;
    Vector gradient;
    Index iterations = 0;
    Index evaluations = 0;
    bool converged = false;
    std::vector<std::string> trace;  // one line per iteration
};

/// Minimizes f over a box by BFGS on the free coordinates with projected
/// backtracking steps. Gradients are central finite differences. `on_accept` is
/// called after each accepted iterate (used for warm starts).
BfgsResult bfgs_minimize(const Objective& f, Vector x0, const BoxBounds& bounds, const BfgsOptions& options,
                         const std::function<void(const Vector&)>& on_accept = {});

/// True for coordinates sitting on (within tol of) a bound.
std::vector<bool> at_bounds(const Vector& x, const BoxBounds& bounds, double tol = 1e-10);

}  // namespace mam
