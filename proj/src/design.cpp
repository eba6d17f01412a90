#include "mam/design.hpp"

namespace mam {

ModelDesign ModelDesign::build(const ClusteredDataset& dataset, const ModelSpec& spec) {
    ModelDesign out;
    out.spec_ = spec;
    out.num_covariates_ = dataset.p();
    const Matrix X = dataset.stacked_x();
    for (const auto& ts : spec.smooth_terms) out.terms_.push_back(build_term(ts, X.col(ts.covariate)));
    out.layout();
    return out;
}

ModelDesign ModelDesign::from_terms(const ModelSpec& spec, std::vector<SmoothTerm> terms, Index num_covariates) {
    ModelDesign out;
    out.spec_ = spec;
    out.terms_ = std::move(terms);
    out.num_covariates_ = num_covariates;
    out.layout();
    return out;
}

void ModelDesign::layout() {
    Index col = 1 + static_cast<Index>(spec_.linear_terms.size());
    smooth_first_.clear();
    for (const auto& t : terms_) {
        smooth_first_.push_back(col);
        col += t.num_columns();
    }
    num_fixed_ = col;
}

std::string ModelDesign::column_term(Index col, const std::vector<std::string>& names) const {
    auto name_of = [&](Index cov) {
        return cov < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(cov)] : "x" + std::to_string(cov);
    };
    if (col == 0) return "(Intercept)";
    if (col <= static_cast<Index>(spec_.linear_terms.size()))
        return name_of(spec_.linear_terms[static_cast<std::size_t>(col - 1)]);
    for (Index l = num_smooths() - 1; l >= 0; --l)
        if (col >= smooth_first_col(l)) return "s(" + name_of(terms_[static_cast<std::size_t>(l)].covariate) + ")";
    return "?";
}

Matrix ModelDesign::rows(const Eigen::Ref<const Matrix>& covariates) const {
    const Index n = covariates.rows();
    Matrix X(n, num_fixed_);
    X.col(0).setOnes();
    for (std::size_t k = 0; k < spec_.linear_terms.size(); ++k)
        X.col(static_cast<Index>(k) + 1) = covariates.col(spec_.linear_terms[k]);
    for (Index l = 0; l < num_smooths(); ++l) {
        const auto& t = terms_[static_cast<std::size_t>(l)];
        X.middleCols(smooth_first_col(l), t.num_columns()) = evaluate_basis(t, covariates.col(t.covariate));
    }
    return X;
}

Matrix ModelDesign::smooth_rows(Index l, const Eigen::Ref<const Vector>& x) const {
    const auto& t = terms_[static_cast<std::size_t>(l)];
    Matrix E = Matrix::Zero(x.size(), num_fixed_);
    E.middleCols(smooth_first_col(l), t.num_columns()) = evaluate_basis(t, x);
    return E;
}

}  // namespace mam
