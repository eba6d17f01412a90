#pragma once

// Simulation study: clustered binary data generated from a stated marginal model
// with random-effect dependence, fitted by GAM, GAMM and MAM, summarized by bias,
// band coverage, variance-component bias and random-effect prediction error.

#include "mam/common.hpp"
#include "mam/covariance.hpp"
#include "mam/data.hpp"
#include "mam/pipeline.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mam {

/// splitmix64 stream. Streams for (seed, replicate) pairs are derived by hashing,
/// so replicate r draws the same numbers whatever R or the execution order.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next();
    double uniform();                       // [0, 1), 53 random bits
    double uniform(double lo, double hi);
    double normal();                        // Box-Muller
    bool bernoulli(double p);

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct Scenario {
    std::string name = "scenario";
    Index clusters = 100;
    Index cluster_size = 10;
    RandomEffects re = RandomEffects::InterceptSlope;
    double sigma0 = 2.0;
    double sigma1 = 1.0;
    double rho = 0.5;
    std::string f1 = "sin_pi";     // sin_pi | quadratic | zero
    std::string f2 = "quadratic";
    double beta3 = 0.0;
    Index replicates = 200;
    std::uint64_t seed = 20240501;
    Index basis_dim = 10;
    Index ghq_k = 20;
    Index grid_points = 50;

    Matrix sigma() const;
    void validate() const;  // throws ValidationError
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

/// Named truth functions on [-1, 1].
std::function<double(double)> truth_function(const std::string& name);

/// Linked marginal mean of the generating model at one covariate row (x1, x2, x3).
double true_marginal_predictor(const Scenario& s, const Eigen::Ref<const RowVector>& x);

struct SimulatedData {
    ClusteredDataset data;
    Matrix u;  // N x m true random effects
};

/// Covariates x1..x3 ~ U(-1, 1), u_i ~ N(0, Sigma), y ~ Bernoulli(expit(Delta + z'u)) with
/// Delta solving the marginal constraint at each row.
SimulatedData generate_dataset(const Scenario& s, Index replicate);

/// Model spec used for the conditional/MAM fits (and, with RE removed, the GAM).
ModelSpec scenario_spec(const Scenario& s);

struct CurveMetrics {
    Vector error;     // estimate - centered truth, per grid point
    Vector covered;   // 1 when the band contains the truth
};

struct ReplicateResult {
    Index replicate = 0;
    bool ok = false;
    std::string error;
    CurveMetrics gam[2], mam[2];
    Vector theta_error;   // (sigma0, [sigma1, rho]) estimate - truth
    Vector rmsep;         // per RE component
    Vector theta_hat;
    bool correction_available = true;
    Index boundary = 0;
};

ReplicateResult run_replication(const Scenario& s, Index replicate);

struct Cell {
    bool present = false;
    double value = 0.0;
    double se = 0.0;
};

struct ModelRow {
    std::string model;  // GAM, GAMM, MAM
    Cell bias_f1, abs_bias_f1, cvg_f1, bias_f2, abs_bias_f2, cvg_f2;
    Cell bias_sigma0, bias_sigma1, bias_rho, rmsep_u0, rmsep_u1;
};

struct StudyReport {
    Scenario scenario;
    Index completed = 0;
    Index failed = 0;
    bool unreliable = false;
    std::vector<ModelRow> rows;
    std::vector<ReplicateResult> replicates;

    const ModelRow& row(const std::string& model) const;
};

StudyReport run_study(const Scenario& s, unsigned threads = 1,
                      const std::function<void(Index done, Index total)>& progress = {});

/// Table-like CSV: one row per model, value and Monte-Carlo SE columns.
std::string study_report_csv(const StudyReport& report);
/// Per-replicate audit dump.
std::string replicates_csv(const StudyReport& report);

}  // namespace mam
