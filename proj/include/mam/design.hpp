#pragma once

#include "mam/common.hpp"
#include "mam/data.hpp"
#include "mam/smooth.hpp"

#include <string>
#include <vector>

namespace mam {

/// Column layout of the fixed-effect design shared by the conditional model and the
/// marginal projection:
///
///   [ intercept | linear terms | smooth 1 (null, range) | smooth 2 (null, range) | ... ]
///
/// Only the range block of each smooth is penalized; everything else is unpenalized.
class ModelDesign {
public:
    ModelDesign() = default;

    /// Builds smooth terms from the dataset's training covariates.
    static ModelDesign build(const ClusteredDataset& dataset, const ModelSpec& spec);

    /// Reassembles a design from previously built terms (e.g. a saved fit).
    static ModelDesign from_terms(const ModelSpec& spec, std::vector<SmoothTerm> terms, Index num_covariates);

    const ModelSpec& spec() const { return spec_; }
    const std::vector<SmoothTerm>& smooth_terms() const { return terms_; }
    Index num_covariates() const { return num_covariates_; }

    Index num_fixed() const { return num_fixed_; }
    Index num_smooths() const { return static_cast<Index>(terms_.size()); }

    Index linear_col(Index k) const { return 1 + k; }
    Index smooth_first_col(Index l) const { return smooth_first_[static_cast<std::size_t>(l)]; }
    Index range_first_col(Index l) const { return smooth_first_col(l) + terms_[static_cast<std::size_t>(l)].null_dim(); }
    Index range_dim(Index l) const { return terms_[static_cast<std::size_t>(l)].range_dim(); }

    /// Name of the term owning a column, e.g. "(Intercept)", "x3", "s(x1)".
    std::string column_term(Index col, const std::vector<std::string>& covariate_names) const;

    /// Design rows for covariate rows (n x p) -> n x num_fixed.
    Matrix rows(const Eigen::Ref<const Matrix>& covariates) const;

    /// Rows selecting only smooth l evaluated at x (other columns zero), for curve reporting.
    Matrix smooth_rows(Index l, const Eigen::Ref<const Vector>& x) const;

private:
    void layout();

    ModelSpec spec_;
    std::vector<SmoothTerm> terms_;
    std::vector<Index> smooth_first_;
    Index num_covariates_ = 0;
    Index num_fixed_ = 0;
};

}  // namespace mam
