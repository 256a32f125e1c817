#pragma once

// Profile empirical likelihood over the scale, the profile-based confidence
// interval for the tail index, the Hill estimator, and the Hill-based
// empirical-likelihood interval with exponential calibration, plus the
// normal-approximation interval for the estimating-equation estimator.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "elcr/el_core.hpp"
#include "elcr/models.hpp"
#include "elcr/rng.hpp"
#include "elcr/statfun.hpp"
#include "elcr/zhang.hpp"

namespace elcr {

enum class Calibration { Chi2, Fisher };

inline const char* to_string(Calibration c) { return c == Calibration::Chi2 ? "chi2" : "fisher"; }

enum class CiMethod { Elw, Elp, ZhangWald };

inline const char* to_string(CiMethod m) {
    switch (m) {
        case CiMethod::Elw: return "elw";
        case CiMethod::Elp: return "elp";
        case CiMethod::ZhangWald: return "zhang";
    }
    return "?";
}

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
    double level = 0.95;
    CiMethod method = CiMethod::Elw;
    double critical_value = 0.0;
    bool converged = false;
    bool open_lo = false;
    bool open_hi = false;
};

namespace detail {

// Brent minimization on [a,c] given a bracketing triple with finite f(b).
// Infinite trial values are handled by ordinary comparisons.
template <class F>
void brent_min(F&& f, double a, double b, double c, double fb, double xtol, double& xmin,
               double& fmin) {
    const double gold = 0.3819660112501051;
    double x = b, w = b, v = b;
    double fx = fb, fw = fb, fv = fb;
    double d = 0.0, e = 0.0;
    if (a > c) std::swap(a, c);
    for (int it = 0; it < 200; ++it) {
        const double xm = 0.5 * (a + c);
        const double tol1 = xtol * std::fabs(x) + 1e-12;
        const double tol2 = 2.0 * tol1;
        if (std::fabs(x - xm) <= tol2 - 0.5 * (c - a)) break;
        bool golden = true;
        if (std::fabs(e) > tol1 && std::isfinite(fw) && std::isfinite(fv)) {
            const double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::fabs(q);
            const double etemp = e;
            e = d;
            if (std::fabs(p) < std::fabs(0.5 * q * etemp) && p > q * (a - x) && p < q * (c - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || c - u < tol2) d = (xm > x) ? tol1 : -tol1;
                golden = false;
            }
        }
        if (golden) {
            e = (x >= xm) ? a - x : c - x;
            d = gold * e;
        }
        const double u = (std::fabs(d) >= tol1) ? x + d : x + (d > 0.0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            if (u >= x)
                a = x;
            else
                c = x;
            v = w; w = x; x = u;
            fv = fw; fw = fx; fx = fu;
        } else {
            if (u < x)
                a = u;
            else
                c = u;
            if (fu <= fw || w == x) {
                v = w; w = u;
                fv = fw; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }
    xmin = x;
    fmin = fx;
}

} // namespace detail

// Result of minimizing sigma -> el_ratio(Y, gamma, sigma) for a fixed gamma.
// `ok` is false when every probed scale was infeasible; `interior` certifies
// that both bracket ends exceeded the minimum.
struct ProfileResult {
    double sigma_hat = 0.0;
    double l_profile = std::numeric_limits<double>::infinity();
    bool ok = false;
    bool interior = false;
};

// Profile over sigma on a log grid spanning sigma_center * 2^[-8, 8],
// refined by Brent. Infeasible evaluations count as +infinity.
inline ProfileResult profile_sigma(const ExcessSample& s, double gamma, double r,
                                   double sigma_center) {
    if (!(gamma > 0.0)) throw std::domain_error("profile_sigma: gamma must be positive");
    if (!(sigma_center > 0.0)) throw std::domain_error("profile_sigma: bad center");
    const double ln2 = std::log(2.0);
    const double x0 = std::log(sigma_center);
    auto f = [&](double x) { return el_ratio(s, gamma, std::exp(x), r); };

    constexpr int kHalf = 8;
    std::array<double, 2 * kHalf + 1> fx{};
    int best = -1;
    for (int j = -kHalf; j <= kHalf; ++j) {
        const double v = f(x0 + j * ln2);
        fx[static_cast<std::size_t>(j + kHalf)] = v;
        if (std::isfinite(v) && (best < 0 || v < fx[static_cast<std::size_t>(best)]))
            best = j + kHalf;
    }
    ProfileResult out;
    if (best < 0) return out; // entire bracket infeasible
    const int lo = std::max(0, best - 1);
    const int hi = std::min(2 * kHalf, best + 1);
    const double xa = x0 + (lo - kHalf) * ln2;
    const double xb = x0 + (best - kHalf) * ln2;
    const double xc = x0 + (hi - kHalf) * ln2;
    double xmin, fmin;
    detail::brent_min(f, xa, xb, xc, fx[static_cast<std::size_t>(best)], 1e-8, xmin, fmin);
    out.sigma_hat = std::exp(xmin);
    out.l_profile = fmin;
    out.ok = true;
    out.interior = best > 0 && best < 2 * kHalf;
    return out;
}

inline ProfileResult profile_sigma(const ExcessSample& s, double gamma, double r) {
    double center;
    try {
        center = zhang_fit(s, r).params.sigma;
    } catch (const estimation_error&) {
        double mean = 0.0;
        for (const double y : s.excesses) mean += y;
        center = std::max(mean / static_cast<double>(s.excesses.size()), 1e-300);
    }
    return profile_sigma(s, gamma, r, center);
}

namespace detail {

// Bisection for statistic(g) = critical on one side of the estimate.
// `phi` is statistic - critical: negative at g_in, positive (possibly +inf)
// at g_out. Converges on the statistic scale to 1e-6.
template <class Phi>
bool ci_bisect(Phi&& phi, double g_in, double g_out, double& root) {
    double a = g_out, b = g_in; // phi(a) > 0 >= phi(b)
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = phi(mid);
        if (std::isfinite(fm) && std::fabs(fm) <= 1e-6) {
            root = mid;
            return true;
        }
        if (fm > 0.0)
            a = mid;
        else
            b = mid;
        if (std::fabs(a - b) <= 1e-15 * (std::fabs(a) + std::fabs(b))) {
            root = 0.5 * (a + b);
            return false; // statistic jumps across the root (feasibility edge)
        }
    }
    root = 0.5 * (a + b);
    return false;
}

} // namespace detail

// Profile-likelihood interval for the tail index: all gamma with
// l(gamma, sigma_hat_gamma) <= critical value.
inline ConfidenceInterval elw_ci(const ExcessSample& s, double r, Probability level,
                                 Calibration calibration = Calibration::Chi2) {
    const ZhangFit fit = zhang_fit(s, r);
    const double c = calibration == Calibration::Chi2 ? chi2_quantile(level, 1)
                                                      : fisher_critical(s.k(), level, 1);
    const double sigma_hint = fit.params.sigma;
    auto phi = [&](double g) {
        const ProfileResult pr = profile_sigma(s, g, r, sigma_hint);
        return pr.ok ? pr.l_profile - c : std::numeric_limits<double>::infinity();
    };
    ConfidenceInterval ci;
    ci.level = level.value();
    ci.method = CiMethod::Elw;
    ci.critical_value = c;
    ci.converged = true;

    const double ghat = fit.params.gamma;
    double g_out = ghat, g_in = ghat;
    bool bracketed = false;
    for (int j = 1; j <= 40; ++j) {
        const double g = ghat / std::exp2(j);
        if (phi(g) > 0.0) {
            g_out = g;
            bracketed = true;
            break;
        }
        g_in = g;
    }
    if (!bracketed) {
        ci.open_lo = true;
        ci.lo = 0.0;
    } else {
        ci.converged = detail::ci_bisect(phi, g_in, g_out, ci.lo) && ci.converged;
    }
    g_out = g_in = ghat;
    bracketed = false;
    for (int j = 1; j <= 40; ++j) {
        const double g = ghat * std::exp2(j);
        if (phi(g) > 0.0) {
            g_out = g;
            bracketed = true;
            break;
        }
        g_in = g;
    }
    if (!bracketed) {
        ci.open_hi = true;
        ci.hi = std::numeric_limits<double>::infinity();
    } else {
        ci.converged = detail::ci_bisect(phi, g_in, g_out, ci.hi) && ci.converged;
    }
    return ci;
}

// Hill estimator: mean log excess ratio over the (k+1)-th largest value.
inline double hill_estimator(std::span<const double> data, long k) {
    const long n = static_cast<long>(data.size());
    if (k < 1 || k >= n) throw std::invalid_argument("hill_estimator: need 1 <= k < n");
    std::vector<double> top(data.begin(), data.end());
    std::nth_element(top.begin(), top.begin() + k, top.end(), std::greater<double>());
    const double u = top[static_cast<std::size_t>(k)];
    if (!(u > 0.0)) throw std::domain_error("hill_estimator: threshold must be positive");
    double sum = 0.0, comp = 0.0;
    for (long i = 0; i < k; ++i) {
        const double y = std::log(top[static_cast<std::size_t>(i)] / u) - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(k);
}

namespace detail {

// Univariate EL ratio for the mean of zs at value m; +inf when infeasible.
inline double el1_ratio(std::span<const double> zs, double m) {
    std::vector<ElVec<1>> gs;
    gs.reserve(zs.size());
    for (const double z : zs) gs.push_back(ElVec<1>{z - m});
    if (!el_feasible<1>(std::span<const ElVec<1>>(gs)))
        return std::numeric_limits<double>::infinity();
    const auto core = el_newton<1>(std::span<const ElVec<1>>(gs));
    if (!core.converged)
        throw std::runtime_error("el1_ratio: Newton failed to converge");
    return core.log_ratio;
}

// Log-spacings over the (k+1)-th largest order statistic.
inline std::vector<double> log_spacings(std::span<const double> data, long k) {
    const long n = static_cast<long>(data.size());
    if (k < 1 || k >= n) throw std::invalid_argument("log_spacings: need 1 <= k < n");
    std::vector<double> top(data.begin(), data.end());
    std::nth_element(top.begin(), top.begin() + k, top.end(), std::greater<double>());
    const double u = top[static_cast<std::size_t>(k)];
    if (!(u > 0.0)) throw std::domain_error("log_spacings: threshold must be positive");
    std::vector<double> zs(static_cast<std::size_t>(k));
    for (long i = 0; i < k; ++i) zs[static_cast<std::size_t>(i)] = std::log(top[static_cast<std::size_t>(i)] / u);
    return zs;
}

} // namespace detail

// Monte-Carlo critical value of the univariate EL ratio at the true mean of
// k i.i.d. standard exponentials ("exponential calibration"). Exact for pure
// Pareto tails, asymptotically the chi-square(1) quantile otherwise.
inline double elp_critical_value(long k, Probability level, long reps, CounterRng rng) {
    if (k < 2) throw std::invalid_argument("elp_critical_value: k too small");
    if (reps < 100) throw std::invalid_argument("elp_critical_value: need reps >= 100");
    std::vector<double> stats(static_cast<std::size_t>(reps));
    std::vector<double> es(static_cast<std::size_t>(k));
    for (long rep = 0; rep < reps; ++rep) {
        CounterRng sub = rng.substream(static_cast<std::uint64_t>(rep));
        for (auto& e : es) e = -std::log(sub.next_uniform());
        stats[static_cast<std::size_t>(rep)] = detail::el1_ratio(es, 1.0);
    }
    std::sort(stats.begin(), stats.end());
    const auto idx = static_cast<std::size_t>(
        std::min<long>(reps - 1, static_cast<long>(std::ceil(level.value() * reps)) - 1));
    return stats[idx];
}

// Hill-based empirical-likelihood interval with exponential calibration.
inline ConfidenceInterval elp_ci(std::span<const double> data, long k, Probability level,
                                 long calib_reps, CounterRng calib_rng) {
    if (k < 10) throw std::invalid_argument("elp_ci: need k >= 10");
    const std::vector<double> zs = detail::log_spacings(data, k);
    const double c = elp_critical_value(k, level, calib_reps, calib_rng);
    double hill = 0.0;
    for (const double z : zs) hill += z;
    hill /= static_cast<double>(zs.size());

    auto phi = [&](double g) { return detail::el1_ratio(zs, g) - c; };
    ConfidenceInterval ci;
    ci.level = level.value();
    ci.method = CiMethod::Elp;
    ci.critical_value = c;
    ci.converged = true;
    // the statistic blows up at the sample extremes, so both roots are
    // bracketed inside (min z, hill) and (hill, max z)
    const auto [zmin, zmax] = std::minmax_element(zs.begin(), zs.end());
    ci.converged = detail::ci_bisect(phi, hill, *zmin, ci.lo) && ci.converged;
    ci.converged = detail::ci_bisect(phi, hill, *zmax, ci.hi) && ci.converged;
    return ci;
}

// Normal-approximation interval for the estimating-equation tail index:
// gamma_hat +/- z * sqrt(Sigma_11(gamma_hat, r)/k).
inline ConfidenceInterval zhang_wald_ci(const ExcessSample& s, double r, Probability level) {
    const ZhangFit fit = zhang_fit(s, r);
    const double c = chi2_quantile(level, 1);
    const double s11 = sigma_matrix(fit.params.gamma, r).a11;
    const double hw = std::sqrt(c * s11 / static_cast<double>(s.k()));
    ConfidenceInterval ci;
    ci.level = level.value();
    ci.method = CiMethod::ZhangWald;
    ci.critical_value = c;
    ci.lo = fit.params.gamma - hw;
    ci.hi = fit.params.gamma + hw;
    ci.converged = true;
    return ci;
}

} // namespace elcr
