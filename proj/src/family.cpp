#include "mam/family.hpp"

#include "mam/common.hpp"

#include <cmath>

namespace mam {

std::string to_string(Family f) {
    switch (f) {
        case Family::Bernoulli: return "bernoulli";
        case Family::Gaussian: return "gaussian";
        case Family::Poisson: return "poisson";
    }
    return "?";
}

std::string to_string(Link l) {
    switch (l) {
        case Link::Logit: return "logit";
        case Link::Probit: return "probit";
        case Link::Identity: return "identity";
        case Link::Log: return "log";
    }
    return "?";
}

Family family_from_string(const std::string& s) {
    if (s == "bernoulli" || s == "binomial") return Family::Bernoulli;
    if (s == "gaussian") return Family::Gaussian;
    if (s == "poisson") return Family::Poisson;
    throw ValidationError("unknown family '" + s + "'");
}

Link link_from_string(const std::string& s) {
    if (s == "logit") return Link::Logit;
    if (s == "probit") return Link::Probit;
    if (s == "identity") return Link::Identity;
    if (s == "log") return Link::Log;
    throw ValidationError("unknown link '" + s + "'");
}

bool link_compatible(Family f, Link l) {
    switch (f) {
        case Family::Bernoulli: return l == Link::Logit || l == Link::Probit;
        case Family::Gaussian: return l == Link::Identity;
        case Family::Poisson: return l == Link::Log;
    }
    return false;
}

namespace {

// -log Phi(x)
double neg_log_normal_cdf(double x) {
    if (x > -30.0) return -std::log(detail::std_normal_cdf(x));
    // asymptotic: Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4)
    const double x2 = x * x;
    return 0.5 * x2 + 0.5 * kLogTwoPi + std::log(-x) - std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

}  // namespace

ObsTerms observation_nll(Family family, Link link, double y, double eta, double scale) {
    switch (family) {
        case Family::Bernoulli:
            if (link == Link::Logit) {
                const double mu = inverse_link(Link::Logit, eta);
                const double softplus = std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
                return {softplus - y * eta, mu - y, mu * (1.0 - mu)};
            } else {
                const double lp = detail::mills_inverse(eta);
                const double ln = detail::mills_inverse(-eta);
                const double value = y * neg_log_normal_cdf(eta) + (1.0 - y) * neg_log_normal_cdf(-eta);
                const double d1 = -y * lp + (1.0 - y) * ln;
                const double d2 = y * lp * (eta + lp) + (1.0 - y) * ln * (ln - eta);
                return {value, d1, d2};
            }
        case Family::Gaussian: {
            const double r = eta - y;
            return {0.5 * r * r / scale + 0.5 * (kLogTwoPi + std::log(scale)), r / scale, 1.0 / scale};
        }
        case Family::Poisson: {
            const double mu = std::exp(eta);
            return {mu - y * eta + std::lgamma(y + 1.0), mu - y, mu};
        }
    }
    return {0.0, 0.0, 0.0};
}

}  // namespace mam
