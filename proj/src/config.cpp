#include "mam/config.hpp"

#include <fstream>
#include <map>

namespace mam {

using nlohmann::json;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
}

namespace {

Index covariate_index(const std::vector<std::string>& names, const std::string& name, const std::string& where) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<Index>(i);
    throw ValidationError(where + ": unknown covariate '" + name + "'");
}

template <class T>
T get(const json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("field '" + key + "' has the wrong type");
    }
}

template <class T>
T require(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ValidationError("missing field '" + key + "'");
    return get<T>(j, key, T{});
}

}  // namespace

ModelSpec spec_from_json(const json& j, const std::vector<std::string>& names) {
    if (!j.is_object()) throw ValidationError("model config must be a JSON object");
    ModelSpec spec;
    spec.family = family_from_string(get<std::string>(j, "family", "bernoulli"));
    spec.link = link_from_string(get<std::string>(j, "link", "logit"));
    spec.ghq_k = get<Index>(j, "ghq_k", 20);
    if (j.contains("smooth_terms")) {
        for (const auto& t : j.at("smooth_terms")) {
            SmoothTermSpec s;
            s.covariate = covariate_index(names, require<std::string>(t, "covariate"), "smooth_terms");
            s.basis_dim = get<Index>(t, "basis_dim", 10);
            s.penalty_order = get<Index>(t, "penalty_order", 2);
            spec.smooth_terms.push_back(s);
        }
    }
    if (j.contains("linear_terms"))
        for (const auto& t : j.at("linear_terms")) spec.linear_terms.push_back(covariate_index(names, t.get<std::string>(), "linear_terms"));
    const json re = j.contains("random_effects") ? j.at("random_effects") : json{{"type", "intercept"}};
    const std::string type = get<std::string>(re, "type", "intercept");
    if (type == "none") {
        spec.re.kind = RandomEffects::None;
    } else if (type == "intercept") {
        spec.re.kind = RandomEffects::Intercept;
    } else if (type == "intercept+slope") {
        spec.re.kind = RandomEffects::InterceptSlope;
        spec.re.slope_covariate = covariate_index(names, require<std::string>(re, "slope"), "random_effects");
    } else {
        throw ValidationError("random_effects.type must be none, intercept or intercept+slope (got '" + type + "')");
    }
    return spec;
}

json spec_to_json(const ModelSpec& spec, const std::vector<std::string>& names) {
    json j;
    j["family"] = to_string(spec.family);
    j["link"] = to_string(spec.link);
    j["ghq_k"] = spec.ghq_k;
    j["smooth_terms"] = json::array();
    for (const auto& t : spec.smooth_terms)
        j["smooth_terms"].push_back({{"covariate", names.at(static_cast<std::size_t>(t.covariate))},
                                     {"basis_dim", t.basis_dim},
                                     {"penalty_order", t.penalty_order}});
    j["linear_terms"] = json::array();
    for (Index c : spec.linear_terms) j["linear_terms"].push_back(names.at(static_cast<std::size_t>(c)));
    switch (spec.re.kind) {
        case RandomEffects::None: j["random_effects"] = {{"type", "none"}}; break;
        case RandomEffects::Intercept: j["random_effects"] = {{"type", "intercept"}}; break;
        case RandomEffects::InterceptSlope:
            j["random_effects"] = {{"type", "intercept+slope"},
                                   {"slope", names.at(static_cast<std::size_t>(spec.re.slope_covariate))}};
            break;
    }
    return j;
}

FitConfig fit_config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("fit config must be a JSON object");
    FitConfig c;
    const json cols = j.contains("columns") ? j.at("columns") : json::object();
    c.schema.cluster_column = require<std::string>(cols, "cluster");
    c.schema.response_column = require<std::string>(cols, "response");
    c.schema.covariate_columns = require<std::vector<std::string>>(cols, "covariates");
    c.spec = spec_from_json(j, c.schema.covariate_columns);
    c.grid_points = get<Index>(j, "grid_points", 100);
    if (c.grid_points < 2) throw ValidationError("grid_points must be >= 2");
    return c;
}

json fit_config_to_json(const FitConfig& c) {
    json j = spec_to_json(c.spec, c.schema.covariate_columns);
    j["columns"] = {{"cluster", c.schema.cluster_column},
                    {"response", c.schema.response_column},
                    {"covariates", c.schema.covariate_columns}};
    j["grid_points"] = c.grid_points;
    return j;
}

Matrix grid_from_json(const json& j, const std::vector<std::string>& names) {
    const Index p = static_cast<Index>(names.size());
    if (j.contains("points")) {
        const json& pts = j.at("points");
        if (!pts.is_array() || pts.empty()) throw ValidationError("grid 'points' must be a non-empty array");
        Matrix G(static_cast<Index>(pts.size()), p);
        for (std::size_t r = 0; r < pts.size(); ++r)
            for (Index c = 0; c < p; ++c) {
                const auto& name = names[static_cast<std::size_t>(c)];
                if (!pts[r].contains(name))
                    throw ValidationError("grid point " + std::to_string(r) + " lacks covariate '" + name + "'");
                G(static_cast<Index>(r), c) = pts[r].at(name).get<double>();
            }
        return G;
    }
    if (!j.contains("linspace")) throw ValidationError("grid needs 'points' or 'linspace'");
    std::map<std::string, double> fixed;
    if (j.contains("fixed"))
        for (const auto& [k, v] : j.at("fixed").items()) fixed[k] = v.get<double>();
    std::vector<std::pair<Index, Vector>> axes;
    for (const auto& [k, v] : j.at("linspace").items()) {
        if (!v.is_array() || v.size() != 3) throw ValidationError("linspace '" + k + "' must be [min, max, count]");
        const Index count = v[2].get<Index>();
        if (count < 1) throw ValidationError("linspace '" + k + "' needs a positive count");
        axes.emplace_back(covariate_index(names, k, "grid"), Vector::LinSpaced(count, v[0].get<double>(), v[1].get<double>()));
    }
    // nlohmann orders object keys alphabetically; order axes by covariate position instead.
    std::sort(axes.begin(), axes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Index total = 1;
    for (const auto& a : axes) total *= a.second.size();
    Matrix G(total, p);
    for (Index c = 0; c < p; ++c) {
        const auto& name = names[static_cast<std::size_t>(c)];
        const bool on_axis = std::any_of(axes.begin(), axes.end(), [&](const auto& a) { return a.first == c; });
        if (!on_axis) {
            auto it = fixed.find(name);
            if (it == fixed.end()) throw ValidationError("grid does not assign covariate '" + name + "'");
            G.col(c).setConstant(it->second);
        }
    }
    for (Index r = 0; r < total; ++r) {
        Index rest = r;
        for (auto a = axes.rbegin(); a != axes.rend(); ++a) {
            const Index k = a->second.size();
            G(r, a->first) = a->second(rest % k);
            rest /= k;
        }
    }
    return G;
}

}  // namespace mam
