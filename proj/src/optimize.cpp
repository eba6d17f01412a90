#include "mam/optimize.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mam {

Vector fd_gradient(const Objective& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector xp = x;
    for (Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

Vector fd_gradient5(const Objective& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector xp = x;
    for (Index i = 0; i < x.size(); ++i) {
        double v[4];
        const double off[4] = {-2.0 * h, -h, h, 2.0 * h};
        for (int k = 0; k < 4; ++k) {
            xp(i) = x(i) + off[k];
            v[k] = f(xp);
        }
        xp(i) = x(i);
        g(i) = (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * h);
    }
    return g;
}

Matrix fd_hessian(const Objective& f, const Vector& x, double h, double fx) {
    const Index n = x.size();
    Matrix H(n, n);
    Vector xp = x;
    for (Index i = 0; i < n; ++i) {
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        H(i, i) = (fp - 2.0 * fx + fm) / (h * h);
    }
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (int a : {1, -1})
                for (int b : {1, -1}) {
                    xp(i) = x(i) + a * h;
                    xp(j) = x(j) + b * h;
                    s += a * b * f(xp);
                }
            xp(i) = x(i);
            xp(j) = x(j);
            H(i, j) = H(j, i) = s / (4.0 * h * h);
        }
    return H;
}

std::vector<bool> at_bounds(const Vector& x, const BoxBounds& bounds, double tol) {
    std::vector<bool> out(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i)
        out[static_cast<std::size_t>(i)] = x(i) <= bounds.lower(i) + tol || x(i) >= bounds.upper(i) - tol;
    return out;
}

namespace {

// Coordinates pinned at a bound with the gradient pushing outward.
std::vector<bool> active_set(const Vector& x, const Vector& g, const BoxBounds& b) {
    std::vector<bool> act(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i)
        act[static_cast<std::size_t>(i)] = (x(i) <= b.lower(i) && g(i) > 0) || (x(i) >= b.upper(i) && g(i) < 0);
    return act;
}

double projected_gradient_norm(const Vector& x, const Vector& g, const BoxBounds& b) {
    const Vector step = b.clamp(x - g) - x;
    return step.cwiseAbs().maxCoeff();
}

}  // namespace

BfgsResult bfgs_minimize(const Objective& f_raw, Vector x0, const BoxBounds& bounds, const BfgsOptions& opt,
                         const std::function<void(const Vector&)>& on_accept) {
    BfgsResult res;
    Index evals = 0;
    auto f = [&](const Vector& x) {
        ++evals;
        return f_raw(x);
    };
    const Index n = x0.size();
    Vector x = bounds.clamp(x0);
    double fx = f(x);
    if (!std::isfinite(fx)) throw NumericalError("outer objective not finite at the starting point");
    if (on_accept) on_accept(x);
    Vector g = fd_gradient(f, x, opt.fd_step);
    Matrix Hinv = Matrix::Identity(n, n);
    int small_changes = 0;

    auto trace_line = [&](double step) {
        std::ostringstream os;
        os.precision(10);
        os << "iter " << res.iterations << " evals " << evals << " f " << fx << " |pg| "
           << (n ? projected_gradient_norm(x, g, bounds) : 0.0) << " step " << step << " x " << x.transpose();
        res.trace.push_back(os.str());
    };
    trace_line(0.0);

    while (true) {
        if (n == 0 || projected_gradient_norm(x, g, bounds) <= opt.rel_gtol * (1.0 + std::abs(fx))) {
            res.converged = true;
            break;
        }
        if (evals >= opt.max_evaluations) break;
        const auto act = active_set(x, g, bounds);
        Vector p = Vector::Zero(n);
        {
            Vector gf = g;
            for (Index i = 0; i < n; ++i)
                if (act[static_cast<std::size_t>(i)]) gf(i) = 0.0;
            p = -Hinv * gf;
            for (Index i = 0; i < n; ++i)
                if (act[static_cast<std::size_t>(i)]) p(i) = 0.0;
            if (!(g.dot(p) < 0)) {
                Hinv.setIdentity();
                p = -gf;
            }
        }
        const double pmax = p.cwiseAbs().maxCoeff();
        if (pmax > opt.max_step) p *= opt.max_step / pmax;

        double t = 1.0;
        Vector xn;
        double fn = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xn = bounds.clamp(x + t * p);
            fn = f(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(xn - x)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (Hinv.isIdentity()) break;  // steepest descent failed too
            Hinv.setIdentity();
            ++res.iterations;
            trace_line(0.0);
            continue;
        }
        if (on_accept) on_accept(xn);
        const Vector gn = fd_gradient(f, xn, opt.fd_step);
        const Vector s = xn - x;
        const Vector y = gn - g;
        const double sy = s.dot(y);
        if (res.iterations == 0 && sy > 0) Hinv *= sy / y.squaredNorm();
        if (sy > 1e-10 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Matrix I = Matrix::Identity(n, n);
            Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        const double df = std::abs(fx - fn);
        x = xn;
        g = gn;
        fx = fn;
        ++res.iterations;
        trace_line(t);
        small_changes = df <= opt.rel_ftol * (1.0 + std::abs(fx)) ? small_changes + 1 : 0;
        if (small_changes >= 2) {
            res.converged = true;
            break;
        }
    }
    res.x = x;
    res.f = fx;
    res.gradient = g;
    res.evaluations = evals;
    return res;
}

}  // namespace mam
