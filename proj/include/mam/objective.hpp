#pragma once

// Penalized joint negative log-likelihood of the conditional additive mixed model:
//
//   -sum_ij log p(y_ij | eta_ij) - sum_i log phi(u_i; 0, Sigma(theta)) + 1/2 sum_l tau_l |a_l|^2
//
// with eta_ij = X_ij alpha + z_ij' u_i, where a_l is the (identity-penalized) range block
// of smooth l. Parameters are packed as x = (alpha, u_1, ..., u_N).

#include "mam/common.hpp"
#include "mam/covariance.hpp"
#include "mam/data.hpp"
#include "mam/design.hpp"
#include "mam/sparse_cholesky.hpp"

#include <string>
#include <vector>

namespace mam {

/// Everything the objective needs, stacked in cluster-major row order.
struct ModelData {
    Family family = Family::Bernoulli;
    Link link = Link::Logit;
    Matrix X;   // n x d fixed design
    Matrix Z;   // n x m random-effect design
    Vector y;
    std::vector<Index> offsets;  // first row of each cluster
    std::vector<Index> sizes;
    struct PenaltyBlock {
        Index first;
        Index size;
    };
    std::vector<PenaltyBlock> penalties;  // one per smooth, range columns only

    Index n() const { return y.size(); }
    Index num_fixed() const { return X.cols(); }
    Index re_dim() const { return Z.cols(); }
    Index num_clusters() const { return static_cast<Index>(sizes.size()); }
    Index num_random() const { return num_clusters() * re_dim(); }
    Index num_params() const { return num_fixed() + num_random(); }
    bool has_scale() const { return family == Family::Gaussian; }

    static ModelData build(const ClusteredDataset& dataset, const ModelDesign& design);
};

/// Variance components and smoothing parameters: the outer ("hyper") parameters.
/// Packed outer vector psi = (log tau_1..p_s, theta_1..s, [log residual sd]).
struct HyperParams {
    Vector log_tau;
    CovarianceParam theta;
    double log_sd = 0.0;  // Gaussian family only

    Index size(const ModelData& data) const {
        return log_tau.size() + theta.num_params() + (data.has_scale() ? 1 : 0);
    }
    Vector pack(const ModelData& data) const;
    static HyperParams unpack(const ModelData& data, const Eigen::Ref<const Vector>& psi);
    static std::vector<std::string> names(const ModelData& data, const ModelDesign& design,
                                          const std::vector<std::string>& covariate_names);
};

struct JointEval {
    double value = 0.0;
    Vector gradient;
    SparseMatrix hessian;  // full symmetric storage
};

enum class Want { Value, Gradient, Hessian };

/// Throws NumericalError naming the row when a linear predictor is non-finite.
JointEval penalized_joint_nll(const ModelData& data, const Eigen::Ref<const Vector>& x, const HyperParams& hyper,
                              Want want = Want::Hessian);

/// Splits packed x into alpha and an N x m matrix of u.
Vector alpha_part(const ModelData& data, const Eigen::Ref<const Vector>& x);
Matrix u_part(const ModelData& data, const Eigen::Ref<const Vector>& x);

}  // namespace mam
