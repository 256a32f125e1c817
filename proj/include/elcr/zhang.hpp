#pragma once

// Estimating-equation fit for the GPD in the reparametrization b = -gamma/sigma:
// the scalar root problem in b, the mapped (gamma, sigma) estimate, the
// asymptotic covariance of the standardized estimator, and the Wald statistic.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "elcr/errors.hpp"
#include "elcr/models.hpp"

namespace elcr {

// Symmetric 2x2 matrix; enough linear algebra for Wald statistics and
// ellipse tracing.
struct Sym2 {
    double a11 = 0.0, a12 = 0.0, a22 = 0.0;

    double det() const { return a11 * a22 - a12 * a12; }
    bool positive_definite() const { return a11 > 0.0 && det() > 0.0; }

    Sym2 inverse() const {
        const double d = det();
        if (!(std::fabs(d) > 0.0) || !std::isfinite(d))
            throw std::runtime_error("Sym2::inverse: singular matrix");
        return Sym2{a22 / d, -a12 / d, a11 / d};
    }

    // v' M v
    double quadform(double v1, double v2) const {
        return a11 * v1 * v1 + 2.0 * a12 * v1 * v2 + a22 * v2 * v2;
    }

    // eigenvalues, descending
    void eigenvalues(double& emax, double& emin) const {
        const double tr = a11 + a22;
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det()));
        emax = 0.5 * tr + disc;
        emin = 0.5 * tr - disc;
    }
};

using SigmaMatrix = Sym2;

namespace detail {

// Kahan-compensated mean of f over the sample; keeps evaluation noise near
// machine epsilon independently of k.
template <class F>
double compensated_mean(std::span<const double> xs, F&& f) {
    double sum = 0.0, comp = 0.0;
    for (const double x : xs) {
        const double y = f(x) - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(xs.size());
}

} // namespace detail

// gbar(b) = mean of log(1 - b*y); positive for b < 0.
inline double zhang_log_mean(double b, std::span<const double> excesses) {
    return detail::compensated_mean(excesses, [b](double y) { return std::log1p(-b * y); });
}

// Residual of the scalar estimating equation in b:
//   mean (1-b*y)^(r/gbar(b)) - 1/(1-r),  defined for b < 1/max(y), b != 0, r < 1/2.
inline double eq4_residual(double b, std::span<const double> excesses, double r) {
    if (excesses.empty()) throw std::invalid_argument("eq4_residual: empty sample");
    if (!(r < 0.5)) throw std::domain_error("eq4_residual: r must be < 1/2");
    const double ymax = *std::max_element(excesses.begin(), excesses.end());
    if (b == 0.0 || !(b < 1.0 / ymax)) throw std::domain_error("eq4_residual: b out of domain");
    const double gbar = zhang_log_mean(b, excesses);
    const double e = r / gbar;
    const double m =
        detail::compensated_mean(excesses, [b, e](double y) { return std::exp(e * std::log1p(-b * y)); });
    return m - 1.0 / (1.0 - r);
}

namespace detail {

// Brent root step on [a,b] with fa*fb < 0. Iterates until |f| <= ftol.
template <class F>
double brent_root(F&& f, double a, double b, double fa, double fb, double ftol, int maxit = 200) {
    double c = a, fc = fa;
    double d = b - a, e = d;
    double best_x = std::fabs(fa) < std::fabs(fb) ? a : b;
    double best_f = std::min(std::fabs(fa), std::fabs(fb));
    for (int it = 0; it < maxit; ++it) {
        if (std::fabs(fc) < std::fabs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        if (std::fabs(fb) < best_f) { best_f = std::fabs(fb); best_x = b; }
        if (best_f <= ftol) return best_x;
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(b) + 0.5e-16;
        const double xm = 0.5 * (c - b);
        if (std::fabs(xm) <= tol1) return best_x;
        if (std::fabs(e) >= tol1 && std::fabs(fa) > std::fabs(fb)) {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc;
                const double rr = fb / fc;
                p = s * (2.0 * xm * qq * (qq - rr) - (b - a) * (rr - 1.0));
                q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::fabs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::fabs(tol1 * q), std::fabs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::fabs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
        if ((fb > 0.0) == (fc > 0.0)) { c = a; fc = fa; d = b - a; e = d; }
    }
    return best_x;
}

} // namespace detail

// Root of eq4_residual in the heavy-tail bracket (-inf, 0): geometric bracket
// expansion from b0 = -1/mean(y), then Brent. Throws estimation_error when no
// sign change appears (gamma <= 0 regime or degenerate sample).
inline double solve_b(std::span<const double> excesses, double r) {
    if (!(r < 0.5)) throw std::domain_error("solve_b: r must be < 1/2");
    if (excesses.size() < 2) throw std::invalid_argument("solve_b: need at least 2 excesses");
    double mean = 0.0;
    for (const double y : excesses) mean += y;
    mean /= static_cast<double>(excesses.size());
    if (!(mean > 0.0)) throw estimation_error("solve_b: excesses must be positive");

    auto f = [&](double b) { return eq4_residual(b, excesses, r); };
    const double b0 = -1.0 / mean;
    double a = b0, fa = f(a);
    double b = b0, fb = fa;
    // residual is negative toward -inf and positive toward 0- for heavy tails;
    // expand both ways until the signs differ
    if (fa > 0.0) {
        for (int j = 0; j < 60; ++j) {
            b = a * 2.0;
            fb = f(b);
            if (fb <= 0.0) { std::swap(a, b); std::swap(fa, fb); break; }
            a = b; fa = fb;
        }
        if (fa > 0.0 && fb > 0.0)
            throw estimation_error("solve_b: no sign change after bracket expansion");
    } else {
        for (int j = 0; j < 60; ++j) {
            b = a / 2.0;
            fb = f(b);
            if (fb >= 0.0) break;
            a = b; fa = fb;
        }
        if (fb < 0.0)
            throw estimation_error("solve_b: no sign change after bracket expansion");
        std::swap(a, b); std::swap(fa, fb); // keep fa <= 0 <= fb with a < b ordering irrelevant to Brent
    }
    // now fa and fb have opposite signs (or one is an exact root)
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    return detail::brent_root(f, a, b, fa, fb, 1e-12);
}

// Result of the estimating-equation fit; b = -gamma/sigma < 0, and the two
// estimating equations evaluated at the solution stay below 1e-10.
struct ZhangFit {
    GpdParams params;
    double b = 0.0;
    double r = -0.5;
    double residual_log = 0.0;    // mean log(1+gamma*y/sigma) - gamma
    double residual_moment = 0.0; // mean (1+gamma*y/sigma)^(r/gamma) - 1/(1-r)
};

inline ZhangFit zhang_fit(const ExcessSample& s, double r) {
    std::span<const double> y(s.excesses);
    const double b = solve_b(y, r);
    const double gamma = zhang_log_mean(b, y);
    if (!(gamma > 0.0)) throw estimation_error("zhang_fit: non-positive shape estimate");
    const double sigma = -gamma / b;
    ZhangFit fit;
    fit.params = GpdParams{gamma, sigma};
    fit.b = b;
    fit.r = r;
    const double go = gamma / sigma;
    fit.residual_log =
        detail::compensated_mean(y, [&](double v) { return std::log1p(go * v); }) - gamma;
    const double e = r / gamma;
    fit.residual_moment =
        detail::compensated_mean(y, [&](double v) { return std::exp(e * std::log1p(go * v)); }) -
        1.0 / (1.0 - r);
    return fit;
}

// Asymptotic covariance of sqrt(k) * (gamma_hat - gamma, sigma_hat/sigma - 1)
// for the estimating-equation fit with tuning parameter r.
inline Sym2 sigma_matrix(double gamma, double r) {
    if (!(gamma > 0.0)) throw std::domain_error("sigma_matrix: gamma must be positive");
    if (!(r < 0.5)) throw std::domain_error("sigma_matrix: r must be < 1/2");
    const double q = 1.0 - 2.0 * r;
    Sym2 m;
    m.a11 = (1.0 - r) * (1.0 + (2.0 * gamma * gamma + 2.0 * gamma + r) / q);
    m.a12 = -1.0 - (r * r + gamma * gamma + gamma) / q;
    m.a22 = 2.0 + ((r - gamma) * (r - gamma) + 2.0 * gamma) / q;
    return m;
}

// k * v' cov^{-1} v with v = (gamma_hat - gamma0, sigma_hat/sigma0 - 1).
inline double wald_stat(const GpdParams& fitted, const GpdParams& hypothesized, long k,
                        const Sym2& cov) {
    if (!cov.positive_definite()) throw std::runtime_error("wald_stat: covariance not positive definite");
    if (!(hypothesized.sigma > 0.0)) throw std::domain_error("wald_stat: hypothesized sigma must be positive");
    const double v1 = fitted.gamma - hypothesized.gamma;
    const double v2 = fitted.sigma / hypothesized.sigma - 1.0;
    return static_cast<double>(k) * cov.inverse().quadform(v1, v2);
}

} // namespace elcr
