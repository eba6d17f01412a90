#pragma once

// Conditional additive mixed model: inner penalized Newton over (alpha, u) nested in
// a Laplace-approximate REML outer problem over (log tau, theta[, log sd]).

#include "mam/common.hpp"
#include "mam/data.hpp"
#include "mam/design.hpp"
#include "mam/objective.hpp"
#include "mam/optimize.hpp"
#include "mam/sparse_cholesky.hpp"

#include <string>
#include <vector>

namespace mam {

struct InnerOptions {
    double rel_tol = 1e-8;
    Index max_iterations = 200;
};

struct InnerResult {
    Vector x;            // (alpha, u) at the mode
    JointEval eval;      // value, gradient and Hessian at x
    SparseCholesky chol;
    Index iterations = 0;  // Newton steps until the gradient test passed
    double grad_norm = 0.0;
};

/// Penalized Newton with Armijo backtracking and Levenberg shifts. Throws NumericalError
/// when the Hessian stays indefinite or the iteration limit is reached.
InnerResult inner_newton(const ModelData& data, const HyperParams& hyper, const Vector& warm_start = Vector(),
                         const InnerOptions& options = {});

/// Laplace-approximate restricted log marginal likelihood given a converged inner solve.
double laml_value(const ModelData& data, const HyperParams& hyper, const InnerResult& inner);

struct LamlResult {
    double value;
    InnerResult inner;
};
LamlResult laml(const ModelData& data, const HyperParams& hyper, const Vector& warm_start = Vector(),
                const InnerOptions& options = {});

struct FitOptions {
    BfgsOptions bfgs;
    InnerOptions inner;
    double hessian_step = 1e-3;
    double polish_step = 1e-2;   // five-point gradient step in the Newton polish
    Index polish_iterations = 8;
    double log_tau_min = -12.0, log_tau_max = 20.0;
    double log_sd_floor = -13.815510557964274;  // log(1e-6)
    double log_sd_cap = 6.907755278982137;      // log(1e3)
    double snap_log_sd = -6.907755278982137;    // log sd below this may snap to the floor if no worse
    double offdiag_cap = 1e3;
    Vector fixed_log_tau;   // when set, smoothing parameters are held at these values
    Vector initial_psi;     // optional starting point
};

struct FitDiagnostics {
    Index outer_iterations = 0;
    Index outer_evaluations = 0;
    Index polish_iterations = 0;
    Index inner_iterations = 0;
    double inner_grad_norm = 0.0;
    double outer_grad_norm = 0.0;
    bool converged = false;
    std::vector<std::string> boundary;  // names of hyperparameters at a bound
    std::vector<std::string> trace;
};

struct ConditionalFit {
    ModelDesign design;
    ModelData data;
    std::vector<std::string> covariate_names;

    Vector alpha;          // alpha^C
    Matrix u;              // N x m
    HyperParams hyper;     // log tau, theta, log sd
    Vector psi;            // packed hyper
    std::vector<std::string> psi_names;
    Permutation perm;
    SparseMatrix H_joint;
    SparseCholesky chol;
    Matrix H_outer;                // negative FD Hessian of laml in psi
    std::vector<bool> identified;  // psi coordinates entering the correction
    double laml = 0.0;
    FitDiagnostics diagnostics;
    Vector edf;                    // per smooth

    Vector x() const;  // packed (alpha, u)
};

ConditionalFit fit_conditional(const ClusteredDataset& dataset, const ModelSpec& spec, const FitOptions& options = {});

/// Fit on an already built design (the design's spec is used).
ConditionalFit fit_conditional(const ClusteredDataset& dataset, const ModelDesign& design,
                               const FitOptions& options = {});

/// g^{-1}(B(x) alpha + z' u_value) per covariate row; z is built from the model's RE structure.
Vector predict_conditional(const ConditionalFit& fit, const Eigen::Ref<const Matrix>& covariates,
                           const Eigen::Ref<const Vector>& u_value);

}  // namespace mam
