#pragma once

// Self-contained fit artifacts: fit_summary.json carries everything needed to
// evaluate the fitted curves on new grids (basis knots and transforms included).

#include "mam/config.hpp"
#include "mam/pipeline.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace mam {

inline constexpr int kSchemaVersion = 1;

nlohmann::json matrix_to_json(const Matrix& M);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

nlohmann::json fit_summary_json(const MamResult& result, const FitConfig& config, const ClusteredDataset& dataset);

struct SavedFit {
    FitConfig config;
    ModelDesign design;
    Vector alpha_C;
    CovarianceParam theta;
    Vector alpha_M;
    Matrix cov_conditional;
    Matrix cov_correction;

    /// A ConditionalFit carrying only what marginal_link needs (design, alpha, theta).
    ConditionalFit conditional_view() const;
};

/// Throws ValidationError for missing or stale (wrong schema_version) artifacts.
SavedFit load_fit_summary(const std::string& path);

void write_curves_csv(const std::string& path, const std::vector<Curve>& curves);
void write_text(const std::string& path, const std::string& text);

/// Human-readable convergence report.
std::string diagnostics_text(const MamResult& result);

/// UTC ISO-8601 timestamp.
std::string utc_timestamp();

}  // namespace mam
