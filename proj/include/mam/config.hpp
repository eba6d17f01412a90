#pragma once

// JSON configuration for model fits and evaluation grids.
//
// Fit config:
//   {
//     "columns": {"cluster": "id", "response": "y", "covariates": ["x1", "x2", "x3"]},
//     "family": "bernoulli", "link": "logit",
//     "smooth_terms": [{"covariate": "x1", "basis_dim": 10, "penalty_order": 2}],
//     "linear_terms": ["x3"],
//     "random_effects": {"type": "intercept+slope", "slope": "x3"},
//     "ghq_k": 20, "grid_points": 100
//   }
//
// Grid:
//   {"points": [{"x1": 0.1, "x2": 0, "x3": 0}, ...]}
// or
//   {"linspace": {"x1": [-1, 1, 50]}, "fixed": {"x2": 0, "x3": 0}}
// where linspace axes are expanded as a Cartesian product (first axis slowest).

#include "mam/common.hpp"
#include "mam/data.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace mam {

struct FitConfig {
    CsvSchema schema;
    ModelSpec spec;
    Index grid_points = 100;
};

nlohmann::json read_json_file(const std::string& path);

/// Throws ValidationError naming the offending field.
FitConfig fit_config_from_json(const nlohmann::json& j);
nlohmann::json fit_config_to_json(const FitConfig& config);

/// Model spec with covariates referenced by name.
ModelSpec spec_from_json(const nlohmann::json& j, const std::vector<std::string>& covariate_names);
nlohmann::json spec_to_json(const ModelSpec& spec, const std::vector<std::string>& covariate_names);

/// Grid rows (n x p) in the covariate order given; every covariate must be assigned.
Matrix grid_from_json(const nlohmann::json& j, const std::vector<std::string>& covariate_names);

}  // namespace mam
