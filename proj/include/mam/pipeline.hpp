#pragma once

// End-to-end marginal additive model fit: conditional fit, pseudo-outcomes at the
// training rows, projection, variances, and per-term curves.

#include "mam/conditional.hpp"
#include "mam/marginal_fit.hpp"
#include "mam/marginalizer.hpp"
#include "mam/quadrature.hpp"

#include <string>
#include <vector>

namespace mam {

struct Curve {
    std::string term;
    Vector x;
    Vector estimate;
    Vector se;
    Vector lower;
    Vector upper;
};

struct MamOptions {
    FitOptions fit;
    Index grid_points = 100;
    Index batch = 256;
    unsigned threads = 1;
};

struct MamResult {
    ConditionalFit conditional;
    GhqRule rule;
    MarginalizedMeans means;  // at the training rows
    MAMFit marginal;
    std::vector<Curve> marginal_curves;
    std::vector<Curve> conditional_curves;
};

/// Equally spaced points spanning a smooth's training range.
Vector term_grid(const SmoothTerm& term, Index points);

/// Bands for smooth l of the marginal fit: variance e'(C_cond + C_corr)e per grid row.
Curve marginal_curve(const ModelDesign& design, Index l, const Vector& alpha_M, const Matrix& coef_cov,
                     const Eigen::Ref<const Vector>& x, const std::vector<std::string>& covariate_names);

/// Bands for smooth l of a conditional fit from the alpha block of H_joint^{-1}.
Curve conditional_curve(const ConditionalFit& fit, Index l, const Eigen::Ref<const Vector>& x);

/// Covariance of alpha^C from the alpha block of H_joint^{-1}.
Matrix alpha_covariance(const ConditionalFit& fit);

MamResult fit_mam(const ClusteredDataset& dataset, const ModelSpec& spec, const MamOptions& options = {});

/// Marginal stage on an existing conditional fit.
MamResult marginalize_fit(ConditionalFit conditional, const ClusteredDataset& dataset, const MamOptions& options);

}  // namespace mam
