#pragma once

// GPD maximum likelihood: safeguarded Newton on (gamma, log sigma) started at
// the estimating-equation fit, plus the Wald covariance used for the
// ML comparison regions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "elcr/errors.hpp"
#include "elcr/models.hpp"
#include "elcr/zhang.hpp"

namespace elcr {

inline double gpd_loglik(const GpdParams& p, std::span<const double> excesses) {
    if (!(p.sigma > 0.0)) throw std::domain_error("gpd_loglik: sigma must be positive");
    const double ls = std::log(p.sigma);
    double sum = 0.0;
    for (const double y : excesses) {
        const double u = y / p.sigma;
        const double t = 1.0 + p.gamma * u;
        if (!(t > 0.0)) throw std::domain_error("gpd_loglik: support violation 1+gamma*y/sigma <= 0");
        double lterm;
        if (p.gamma == 0.0) {
            lterm = u;
        } else {
            const double lt = std::log1p(p.gamma * u);
            lterm = lt + lt / p.gamma;
        }
        sum += -ls - lterm;
    }
    return sum;
}

struct MleFit {
    GpdParams params;
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    double grad_norm = std::numeric_limits<double>::infinity(); // per-observation mean gradient
};

namespace detail {

// log1p(x) - x/(1+x); series below 1e-3 to avoid cancellation.
inline double log1p_minus_ratio(double x) {
    if (std::fabs(x) < 1e-3) {
        const double x2 = x * x;
        return x2 * (0.5 - (2.0 / 3.0) * x + 0.75 * x2 - 0.8 * x2 * x);
    }
    return std::log1p(x) - x / (1.0 + x);
}

// Mean gradient of the per-observation log likelihood in (gamma, s=log sigma).
// Returns false on a support violation.
inline bool gpd_grad(double gamma, double s, std::span<const double> excesses, double out[2]) {
    const double sigma = std::exp(s);
    double dg = 0.0, ds = 0.0;
    const double g2 = gamma * gamma;
    for (const double y : excesses) {
        const double u = y / sigma;
        const double t = 1.0 + gamma * u;
        if (!(t > 1e-300)) return false;
        if (gamma == 0.0)
            dg += u * u * 0.5 - u; // limit of phi(x)/g^2 - u/t... kept for completeness
        else
            dg += log1p_minus_ratio(gamma * u) / g2 - u / t;
        ds += -1.0 + (gamma + 1.0) * u / t;
    }
    const double k = static_cast<double>(excesses.size());
    out[0] = dg / k;
    out[1] = ds / k;
    return true;
}

inline bool gpd_support_ok(double gamma, double sigma, std::span<const double> excesses) {
    if (!(sigma > 0.0)) return false;
    for (const double y : excesses)
        if (!(1.0 + gamma * y / sigma > 1e-300)) return false;
    return true;
}

// Probability-weighted-moments start (fallback when the estimating-equation
// fit is unavailable).
inline GpdParams pwm_start(std::span<const double> excesses) {
    std::vector<double> s(excesses.begin(), excesses.end());
    std::sort(s.begin(), s.end());
    const double k = static_cast<double>(s.size());
    double b0 = 0.0, b1 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        b0 += s[i];
        b1 += s[i] * (k - 1.0 - static_cast<double>(i));
    }
    b0 /= k;
    b1 /= k * (k - 1.0);
    const double den = b0 - 2.0 * b1;
    if (!(den > 0.0)) return GpdParams{0.5, std::max(b0, 1e-300)};
    return GpdParams{2.0 - b0 / den, 2.0 * b0 * b1 / den};
}

} // namespace detail

// Local maximizer of gpd_loglik. Newton direction from a finite-difference
// Hessian of the analytic gradient, step-halving to keep the iterates inside
// {sigma > 0, 1 + gamma*y/sigma > 0} and the likelihood non-decreasing.
// Non-convergence is reported through the flag, not thrown.
inline MleFit mle_fit(const ExcessSample& sample) {
    std::span<const double> y(sample.excesses);
    if (y.size() < 5) throw std::invalid_argument("mle_fit: need k >= 5 excesses");

    double mean = 0.0;
    for (const double v : y) mean += v;
    mean /= static_cast<double>(y.size());

    double gamma = 0.5, s = std::log(std::max(mean / 2.0, 1e-300));
    bool have_start = false;
    try {
        const ZhangFit zf = zhang_fit(sample, -0.5);
        gamma = zf.params.gamma;
        s = std::log(zf.params.sigma);
        have_start = true;
    } catch (const estimation_error&) {
    }
    if (!have_start) {
        const GpdParams pw = detail::pwm_start(y);
        if (pw.sigma > 0.0 && pw.gamma > -0.49 &&
            detail::gpd_support_ok(pw.gamma, pw.sigma, y)) {
            gamma = std::min(pw.gamma, 20.0);
            s = std::log(pw.sigma);
        }
    }
    gamma = std::clamp(gamma, -0.49, 20.0);

    const double kGammaLo = -0.49, kGammaHi = 20.0;
    double ll = gpd_loglik(GpdParams{gamma, std::exp(s)}, y);
    MleFit fit;
    double grad[2];
    const double h = 1e-5;
    for (int it = 1; it <= 200; ++it) {
        fit.iterations = it;
        if (!detail::gpd_grad(gamma, s, y, grad)) break;
        fit.grad_norm = std::hypot(grad[0], grad[1]);
        if (fit.grad_norm <= 1e-9) {
            fit.converged = true;
            break;
        }
        // central-difference Hessian of the mean gradient; one-sided when a
        // perturbation leaves the support
        double gp[2], gm[2], H[2][2];
        bool okH = true;
        for (int j = 0; j < 2 && okH; ++j) {
            double gj = gamma, sj = s;
            (j == 0 ? gj : sj) += h;
            const bool okp = detail::gpd_grad(gj, sj, y, gp);
            (j == 0 ? gj : sj) -= 2.0 * h;
            const bool okm = detail::gpd_grad(gj, sj, y, gm);
            if (okp && okm) {
                H[0][j] = (gp[0] - gm[0]) / (2.0 * h);
                H[1][j] = (gp[1] - gm[1]) / (2.0 * h);
            } else if (okp) {
                H[0][j] = (gp[0] - grad[0]) / h;
                H[1][j] = (gp[1] - grad[1]) / h;
            } else if (okm) {
                H[0][j] = (grad[0] - gm[0]) / h;
                H[1][j] = (grad[1] - gm[1]) / h;
            } else {
                okH = false;
            }
        }
        double d0, d1;
        const double det = okH ? H[0][0] * H[1][1] - H[0][1] * H[1][0] : 0.0;
        if (okH && std::fabs(det) > 1e-300) {
            d0 = -(H[1][1] * grad[0] - H[0][1] * grad[1]) / det;
            d1 = -(H[0][0] * grad[1] - H[1][0] * grad[0]) / det;
        } else {
            d0 = d1 = 0.0;
        }
        if (d0 * grad[0] + d1 * grad[1] <= 0.0) {
            // not an ascent direction; fall back to scaled steepest ascent
            const double sc = 0.1 * (1.0 + std::fabs(gamma)) / std::max(fit.grad_norm, 1e-300);
            d0 = grad[0] * sc;
            d1 = grad[1] * sc;
        }
        double t = 1.0;
        bool moved = false;
        for (int half = 0; half < 60; ++half) {
            const double gn = std::clamp(gamma + t * d0, kGammaLo, kGammaHi);
            const double sn = s + t * d1;
            const double sig = std::exp(sn);
            if (detail::gpd_support_ok(gn, sig, y)) {
                const double lln = gpd_loglik(GpdParams{gn, sig}, y);
                if (lln > ll) {
                    if (gn == gamma && sn == s) break;
                    gamma = gn;
                    s = sn;
                    ll = lln;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!moved) {
            // near the maximum the likelihood improvement drops below the
            // floating-point resolution of ll; polish on the gradient norm
            double t2 = 1.0;
            for (int half = 0; half < 60; ++half, t2 *= 0.5) {
                const double gn = std::clamp(gamma + t2 * d0, kGammaLo, kGammaHi);
                const double sn = s + t2 * d1;
                if (!detail::gpd_support_ok(gn, std::exp(sn), y)) continue;
                double g2[2];
                if (!detail::gpd_grad(gn, sn, y, g2)) continue;
                if (std::hypot(g2[0], g2[1]) < fit.grad_norm) {
                    gamma = gn;
                    s = sn;
                    ll = gpd_loglik(GpdParams{gamma, std::exp(s)}, y);
                    moved = true;
                }
                break;
            }
        }
        if (!moved) break;
    }
    fit.params = GpdParams{gamma, std::exp(s)};
    fit.loglik = ll;
    if (!fit.converged && detail::gpd_grad(gamma, s, y, grad)) {
        fit.grad_norm = std::hypot(grad[0], grad[1]);
        fit.converged = fit.grad_norm <= 1e-8;
    }
    return fit;
}

// Asymptotic covariance of sqrt(k) * (gamma_hat - gamma, sigma_hat/sigma - 1)
// for the GPD maximum-likelihood estimator: (1+gamma) [[1+gamma, -1], [-1, 2]].
inline Sym2 mle_cov(double gamma) {
    if (!(gamma > -0.5)) throw std::domain_error("mle_cov: gamma must exceed -1/2");
    const double c = 1.0 + gamma;
    return Sym2{c * c, -c, 2.0 * c};
}

} // namespace elcr
