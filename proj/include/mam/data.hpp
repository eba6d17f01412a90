#pragma once

#include "mam/common.hpp"
#include "mam/family.hpp"

#include <string>
#include <vector>

namespace mam {

/// Observations sharing one random-effect draw. Rows are stored column-wise:
/// y(j), x.row(j), z.row(j) describe observation j.
struct Cluster {
    std::string id;
    Vector y;
    Matrix x;  // n_i x p
    Matrix z;  // n_i x m

    Index size() const { return y.size(); }
};

class ClusteredDataset {
public:
    ClusteredDataset() = default;
    ClusteredDataset(std::vector<Cluster> clusters, std::vector<std::string> covariate_names);

    const std::vector<Cluster>& clusters() const { return clusters_; }
    const Cluster& cluster(Index i) const { return clusters_[static_cast<std::size_t>(i)]; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }

    Index num_clusters() const { return static_cast<Index>(clusters_.size()); }
    Index n_total() const { return n_total_; }
    Index p() const { return p_; }
    Index m() const { return m_; }

    /// Row offset of cluster i in the stacked (cluster-major) observation order.
    Index offset(Index i) const { return offsets_[static_cast<std::size_t>(i)]; }

    /// All covariates stacked in cluster-major order, n_total x p.
    Matrix stacked_x() const;
    Matrix stacked_z() const;
    Vector stacked_y() const;

private:
    std::vector<Cluster> clusters_;
    std::vector<std::string> covariate_names_;
    std::vector<Index> offsets_;
    Index n_total_ = 0;
    Index p_ = 0;
    Index m_ = 0;
};

enum class RandomEffects { None, Intercept, InterceptSlope };

struct ReStructure {
    RandomEffects kind = RandomEffects::Intercept;
    Index slope_covariate = -1;  // covariate index, only for InterceptSlope

    Index dim() const {
        switch (kind) {
            case RandomEffects::None: return 0;
            case RandomEffects::Intercept: return 1;
            case RandomEffects::InterceptSlope: return 2;
        }
        return 0;
    }
};

/// Builds z for one observation from its covariates.
RowVector re_design_row(const ReStructure& re, const Eigen::Ref<const RowVector>& x);

struct SmoothTermSpec {
    Index covariate = 0;
    Index basis_dim = 10;
    Index penalty_order = 2;
};

struct ModelSpec {
    Family family = Family::Bernoulli;
    Link link = Link::Logit;
    std::vector<SmoothTermSpec> smooth_terms;
    std::vector<Index> linear_terms;
    ReStructure re;
    Index ghq_k = 20;
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

ValidationReport validate(const ClusteredDataset& dataset, const ModelSpec& spec);

/// Column mapping for long-format CSV files.
struct CsvSchema {
    std::string cluster_column;
    std::string response_column;
    std::vector<std::string> covariate_columns;
};

/// Groups rows by cluster id (first-appearance order, file order within a cluster)
/// and derives z from `re`. Throws ParseError for malformed rows and ValidationError
/// for schema problems.
ClusteredDataset load_csv(const std::string& path, const CsvSchema& schema, const ReStructure& re);

/// Writes cluster, response and covariate columns using shortest round-trip formatting.
void write_csv(const ClusteredDataset& dataset, const CsvSchema& schema, const std::string& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace mam
