#pragma once

// Exponential-family response models and their link functions.
//
// Everything here is templated on the scalar so the same kernels serve the fitted
// doubles and any higher-precision oracle a test wants to run through them.

#include <cmath>
#include <limits>
#include <string>

namespace mam {

enum class Family { Bernoulli, Gaussian, Poisson };
enum class Link { Logit, Probit, Identity, Log };

std::string to_string(Family f);
std::string to_string(Link l);
Family family_from_string(const std::string& s);
Link link_from_string(const std::string& s);

/// True when the link maps the family's mean space onto the real line.
bool link_compatible(Family f, Link l);

namespace detail {

template <class Scalar>
Scalar std_normal_cdf(Scalar x) {
    using std::erfc;
    using std::sqrt;
    return Scalar(0.5) * erfc(-x / sqrt(Scalar(2)));
}

template <class Scalar>
Scalar std_normal_pdf(Scalar x) {
    using std::exp;
    return exp(Scalar(-0.5) * x * x) * Scalar(0.39894228040143267793994605993438);
}

// phi(x) / Phi(x), stable for large negative x.
template <class Scalar>
Scalar mills_inverse(Scalar x) {
    if (x > Scalar(-30)) return std_normal_pdf(x) / std_normal_cdf(x);
    const Scalar x2 = x * x;
    return -x / (Scalar(1) - Scalar(1) / x2 + Scalar(3) / (x2 * x2));
}

// Inverse standard normal cdf (Acklam's rational approximation plus one Halley step).
template <class Scalar>
Scalar std_normal_quantile(Scalar p) {
    using std::log;
    using std::sqrt;
    using std::exp;
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    Scalar x;
    if (p < Scalar(0.02425)) {
        Scalar q = sqrt(Scalar(-2) * log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p > Scalar(1) - Scalar(0.02425)) {
        Scalar q = sqrt(Scalar(-2) * log(Scalar(1) - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else {
        Scalar q = p - Scalar(0.5);
        Scalar r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    }
    for (int it = 0; it < 2; ++it) {
        Scalar e = std_normal_cdf(x) - p;
        Scalar u = e * sqrt(Scalar(2) * Scalar(3.14159265358979323846)) * exp(x * x / Scalar(2));
        x = x - u / (Scalar(1) + x * u / Scalar(2));
    }
    return x;
}

}  // namespace detail

/// Mean from linear predictor, g^{-1}(eta).
template <class Scalar>
Scalar inverse_link(Link link, Scalar eta) {
    using std::exp;
    switch (link) {
        case Link::Logit:
            return eta >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-eta))
                                    : exp(eta) / (Scalar(1) + exp(eta));
        case Link::Probit:
            return detail::std_normal_cdf(eta);
        case Link::Identity:
            return eta;
        case Link::Log:
            return exp(eta);
    }
    return eta;
}

/// d mu / d eta.
template <class Scalar>
Scalar inverse_link_deriv(Link link, Scalar eta) {
    using std::exp;
    using std::abs;
    switch (link) {
        case Link::Logit: {
            const Scalar e = exp(-abs(eta));
            return e / ((Scalar(1) + e) * (Scalar(1) + e));
        }
        case Link::Probit:
            return detail::std_normal_pdf(eta);
        case Link::Identity:
            return Scalar(1);
        case Link::Log:
            return exp(eta);
    }
    return Scalar(1);
}

/// d^2 mu / d eta^2.
template <class Scalar>
Scalar inverse_link_deriv2(Link link, Scalar eta) {
    using std::exp;
    switch (link) {
        case Link::Logit: {
            const Scalar mu = inverse_link(link, eta);
            return mu * (Scalar(1) - mu) * (Scalar(1) - Scalar(2) * mu);
        }
        case Link::Probit:
            return -eta * detail::std_normal_pdf(eta);
        case Link::Identity:
            return Scalar(0);
        case Link::Log:
            return exp(eta);
    }
    return Scalar(0);
}

/// Link function g(mu).
template <class Scalar>
Scalar link_fn(Link link, Scalar mu) {
    using std::log;
    switch (link) {
        case Link::Logit:
            return log(mu / (Scalar(1) - mu));
        case Link::Probit:
            return detail::std_normal_quantile(mu);
        case Link::Identity:
            return mu;
        case Link::Log:
            return log(mu);
    }
    return mu;
}

/// Open interval the mean lives in; means are clamped into [lo, hi] before g is applied.
struct MeanDomain {
    double lo;
    double hi;
};

inline MeanDomain mean_domain(Link link) {
    switch (link) {
        case Link::Logit:
        case Link::Probit:
            return {1e-12, 1.0 - 1e-12};
        case Link::Log:
            return {1e-300, std::numeric_limits<double>::infinity()};
        case Link::Identity:
            break;
    }
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
}

/// Negative log density of one response and its first two derivatives in eta.
struct ObsTerms {
    double value;
    double d1;
    double d2;
};

/// `scale` is the residual variance for the Gaussian family and ignored otherwise.
ObsTerms observation_nll(Family family, Link link, double y, double eta, double scale);

}  // namespace mam
