#include "mam/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mam {

ClusteredDataset::ClusteredDataset(std::vector<Cluster> clusters, std::vector<std::string> covariate_names)
    : clusters_(std::move(clusters)), covariate_names_(std::move(covariate_names)) {
    offsets_.reserve(clusters_.size());
    for (const auto& c : clusters_) {
        offsets_.push_back(n_total_);
        n_total_ += c.size();
    }
    if (!clusters_.empty()) {
        p_ = clusters_.front().x.cols();
        m_ = clusters_.front().z.cols();
    } else {
        p_ = static_cast<Index>(covariate_names_.size());
    }
}

Matrix ClusteredDataset::stacked_x() const {
    Matrix out(n_total_, p_);
    for (std::size_t i = 0; i < clusters_.size(); ++i)
        out.middleRows(offsets_[i], clusters_[i].size()) = clusters_[i].x;
    return out;
}

Matrix ClusteredDataset::stacked_z() const {
    Matrix out(n_total_, m_);
    for (std::size_t i = 0; i < clusters_.size(); ++i)
        out.middleRows(offsets_[i], clusters_[i].size()) = clusters_[i].z;
    return out;
}

Vector ClusteredDataset::stacked_y() const {
    Vector out(n_total_);
    for (std::size_t i = 0; i < clusters_.size(); ++i)
        out.segment(offsets_[i], clusters_[i].size()) = clusters_[i].y;
    return out;
}

RowVector re_design_row(const ReStructure& re, const Eigen::Ref<const RowVector>& x) {
    RowVector z(re.dim());
    if (re.kind == RandomEffects::None) return z;
    z(0) = 1.0;
    if (re.kind == RandomEffects::InterceptSlope) z(1) = x(re.slope_covariate);
    return z;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (const auto& v : violations) os << "  - " << v << "\n";
    return os.str();
}

ValidationReport validate(const ClusteredDataset& dataset, const ModelSpec& spec) {
    ValidationReport report;
    auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

    const Index p = dataset.p();
    if (dataset.num_clusters() == 0) fail("dataset has no clusters");

    std::set<std::string> ids;
    Index total = 0;
    bool support_reported = false;
    for (const auto& c : dataset.clusters()) {
        if (!ids.insert(c.id).second) fail("duplicate cluster id '" + c.id + "'");
        if (c.size() < 1) fail("cluster '" + c.id + "' has no rows");
        if (c.x.rows() != c.size() || c.z.rows() != c.size())
            fail("cluster '" + c.id + "' has inconsistent row counts");
        if (c.x.cols() != p) fail("cluster '" + c.id + "' has covariate arity " + std::to_string(c.x.cols()));
        if (c.z.cols() != dataset.m()) fail("cluster '" + c.id + "' has RE design arity " + std::to_string(c.z.cols()));
        if (!c.x.allFinite()) fail("cluster '" + c.id + "' has non-finite covariates");
        total += c.size();
        for (Index j = 0; j < c.size() && !support_reported; ++j) {
            const double y = c.y(j);
            bool ok = std::isfinite(y);
            if (spec.family == Family::Bernoulli) ok = ok && (y == 0.0 || y == 1.0);
            if (spec.family == Family::Poisson) ok = ok && y >= 0.0 && y == std::floor(y);
            if (!ok) {
                fail("response outside support of " + to_string(spec.family) + " (cluster '" + c.id +
                     "', value " + format_double(y) + ")");
                support_reported = true;
            }
        }
    }
    if (total != dataset.n_total()) fail("n_total does not match the sum of cluster sizes");

    if (!link_compatible(spec.family, spec.link))
        fail("link " + to_string(spec.link) + " incompatible with family " + to_string(spec.family));
    if (spec.ghq_k < 1) fail("ghq_k must be >= 1");
    if (spec.re.dim() != dataset.m())
        fail("RE design dimension " + std::to_string(dataset.m()) + " does not match re_structure");
    if (spec.re.kind == RandomEffects::InterceptSlope &&
        (spec.re.slope_covariate < 0 || spec.re.slope_covariate >= p))
        fail("random slope covariate index out of range");

    std::vector<int> uses(static_cast<std::size_t>(std::max<Index>(p, 0)), 0);
    auto mark = [&](Index cov, const std::string& what) {
        if (cov < 0 || cov >= p) {
            fail(what + " covariate index " + std::to_string(cov) + " out of range");
            return false;
        }
        if (++uses[static_cast<std::size_t>(cov)] > 1)
            fail("covariate " + std::to_string(cov) + " appears in more than one term");
        return true;
    };
    for (const auto& t : spec.smooth_terms) {
        if (!mark(t.covariate, "smooth term")) continue;
        if (t.penalty_order < 1) fail("penalty order must be >= 1");
        if (t.basis_dim < t.penalty_order + 2)
            fail("basis too small: d=" + std::to_string(t.basis_dim) + " for penalty order " +
                 std::to_string(t.penalty_order));
        std::set<double> distinct;
        for (const auto& c : dataset.clusters())
            for (Index j = 0; j < c.size(); ++j) distinct.insert(c.x(j, t.covariate));
        if (static_cast<Index>(distinct.size()) < t.basis_dim)
            fail("smooth on covariate " + std::to_string(t.covariate) + " has fewer distinct values than basis dimension");
    }
    for (Index cov : spec.linear_terms) mark(cov, "linear term");
    return report;
}

// ---------------------------------------------------------------- CSV

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    std::string out = s.substr(b, e - b + 1);
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') quoted = !quoted;
        if (ch == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

double parse_number(const std::string& field, const std::string& column, std::size_t line) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (field.empty() || res.ec != std::errc() || res.ptr != last)
        throw ParseError("line " + std::to_string(line) + ": column '" + column + "' value '" + field +
                             "' is not a number",
                         line);
    return v;
}

}  // namespace

ClusteredDataset load_csv(const std::string& path, const CsvSchema& schema, const ReStructure& re) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open data file '" + path + "'");

    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) {
            header = split_fields(line);
            break;
        }
    }
    if (header.empty()) throw ParseError("no observations in '" + path + "'", 0);
    if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
        header[0] = header[0].substr(3);

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ValidationError("schema error: column '" + name + "' not found in '" + path + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t cid = column(schema.cluster_column);
    const std::size_t yid = column(schema.response_column);
    std::vector<std::size_t> xid;
    for (const auto& c : schema.covariate_columns) xid.push_back(column(c));
    const Index p = static_cast<Index>(xid.size());
    if (re.kind == RandomEffects::InterceptSlope && (re.slope_covariate < 0 || re.slope_covariate >= p))
        throw ValidationError("schema error: random slope covariate index out of range");

    struct Rows {
        std::vector<double> y;
        std::vector<double> x;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Rows> groups;

    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                                 " fields, found " + std::to_string(fields.size()),
                             lineno);
        const std::string& id = fields[cid];
        if (id.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty cluster id", lineno);
        auto [it, inserted] = groups.try_emplace(id);
        if (inserted) order.push_back(id);
        it->second.y.push_back(parse_number(fields[yid], schema.response_column, lineno));
        for (std::size_t k = 0; k < xid.size(); ++k)
            it->second.x.push_back(parse_number(fields[xid[k]], schema.covariate_columns[k], lineno));
    }
    if (order.empty()) throw ParseError("no observations in '" + path + "'", lineno);

    std::vector<Cluster> clusters;
    clusters.reserve(order.size());
    for (const auto& id : order) {
        const Rows& r = groups.at(id);
        Cluster c;
        c.id = id;
        const Index n = static_cast<Index>(r.y.size());
        c.y = Eigen::Map<const Vector>(r.y.data(), n);
        c.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(r.x.data(), n, p);
        c.z.resize(n, re.dim());
        for (Index j = 0; j < n; ++j) c.z.row(j) = re_design_row(re, c.x.row(j));
        clusters.push_back(std::move(c));
    }
    return ClusteredDataset(std::move(clusters), schema.covariate_columns);
}

void write_csv(const ClusteredDataset& dataset, const CsvSchema& schema, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << schema.cluster_column << "," << schema.response_column;
    for (const auto& c : schema.covariate_columns) out << "," << c;
    out << "\n";
    for (const auto& c : dataset.clusters()) {
        for (Index j = 0; j < c.size(); ++j) {
            out << c.id << "," << format_double(c.y(j));
            for (Index k = 0; k < c.x.cols(); ++k) out << "," << format_double(c.x(j, k));
            out << "\n";
        }
    }
}

}  // namespace mam
