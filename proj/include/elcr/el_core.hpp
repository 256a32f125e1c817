#pragma once

// The empirical-likelihood engine: the bivariate estimating function g, the
// Lagrange-multiplier solve, the log likelihood ratio l(gamma,sigma), the
// implied probability weights, and the closed-form moment matrices used as
// test oracles.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "elcr/models.hpp"
#include "elcr/zhang.hpp"

namespace elcr {

template <int D>
using ElVec = std::array<double, D>;

// g(y,gamma,sigma) = ( log(1+gamma*y/sigma) - gamma,
//                      (1+gamma*y/sigma)^(r/gamma) - 1/(1-r) ).
inline ElVec<2> g_vec(double y, double gamma, double sigma, double r) {
    if (!(gamma > 0.0) || !(sigma > 0.0)) throw std::domain_error("g_vec: gamma, sigma must be positive");
    if (!(r < 0.5)) throw std::domain_error("g_vec: r must be < 1/2");
    if (!(y >= 0.0)) throw std::domain_error("g_vec: y must be non-negative");
    const double lt = std::log1p(gamma * y / sigma);
    return {lt - gamma, std::exp((r / gamma) * lt) - 1.0 / (1.0 - r)};
}

namespace detail {

template <int D>
double dot(const ElVec<D>& a, const ElVec<D>& b) {
    double s = 0.0;
    for (int i = 0; i < D; ++i) s += a[i] * b[i];
    return s;
}

template <int D>
double norm(const ElVec<D>& a) {
    return std::sqrt(dot<D>(a, a));
}

} // namespace detail

// Is the zero vector interior to the convex hull of the g values?
// d=1: a strict sign change. d=2: the directions of the nonzero points must
// not fit in any closed half-plane, i.e. the largest angular gap is < pi.
template <int D>
bool el_feasible(std::span<const ElVec<D>> gs) {
    if constexpr (D == 1) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& g : gs) {
            lo = std::min(lo, g[0]);
            hi = std::max(hi, g[0]);
        }
        return lo < 0.0 && hi > 0.0;
    } else {
        std::vector<double> angles;
        angles.reserve(gs.size());
        for (const auto& g : gs)
            if (g[0] != 0.0 || g[1] != 0.0) angles.push_back(std::atan2(g[1], g[0]));
        if (angles.empty()) return true; // all g exactly zero: lambda = 0 works
        std::sort(angles.begin(), angles.end());
        double max_gap = angles.front() + 2.0 * std::numbers::pi - angles.back();
        for (std::size_t i = 1; i < angles.size(); ++i)
            max_gap = std::max(max_gap, angles[i] - angles[i - 1]);
        return max_gap < std::numbers::pi - 1e-12;
    }
}

// Lagrange multiplier, log-ratio, weights and convergence diagnostics for
// one empirical-likelihood evaluation.
struct ElSolution {
    int d = 2;
    std::array<double, 2> lambda{0.0, 0.0};
    double log_ratio = 0.0;
    std::vector<double> weights;
    bool feasible = true;
    bool converged = false;
    double residual_norm = 0.0;
    int iterations = 0;
};

namespace detail {

template <int D>
struct ElCore {
    ElVec<D> lambda{};
    double log_ratio = 0.0;
    bool feasible = true;
    bool converged = false;
    double residual_norm = 0.0;
    int iterations = 0;
};

// Pseudo-logarithm: log(x) above eps, quadratic continuation below. Keeps
// the dual strictly concave and defined on all of lambda-space, which makes
// the solve an unconstrained Newton problem. The continuation penalizes any
// weight above 1 (w < 1/k) so hard that the maximizer coincides with the
// genuine EL solution, whose weights always satisfy w_i > 1/k.
struct PseudoLog {
    double eps;
    double log_eps;
    double value(double x) const {
        if (x >= eps) return std::log(x);
        const double z = x / eps;
        return log_eps - 1.5 + 2.0 * z - 0.5 * z * z;
    }
    double d1(double x) const { return x >= eps ? 1.0 / x : (2.0 - x / eps) / eps; }
    double d2(double x) const { return x >= eps ? -1.0 / (x * x) : -1.0 / (eps * eps); }
};

// Damped Newton on the extended dual sum(log*(1+<lambda,g_i>)).
// Feasibility must be checked by the caller; converged means the original
// Lagrange system residual fell below 1e-10.
template <int D>
ElCore<D> el_newton(std::span<const ElVec<D>> gs) {
    const std::size_t k = gs.size();
    const double kd = static_cast<double>(k);
    ElCore<D> out;
    const PseudoLog lp{1.0 / kd, std::log(1.0 / kd)};
    std::vector<double> w(k, 1.0), w_try(k), dw(k);
    auto dual = [&](const std::vector<double>& ws) {
        double s = 0.0, c = 0.0;
        for (const double wi : ws) {
            const double y = lp.value(wi) - c;
            const double t = s + y;
            c = (t - s) - y;
            s = t;
        }
        return s;
    };
    double h_cur = 0.0;
    for (int it = 1; it <= 100; ++it) {
        out.iterations = it;
        // gradient and Hessian of the extended dual, plus the original
        // Eq.-(5) residual used as the convergence certificate
        ElVec<D> grad{}, resid{};
        double h11 = 0.0, h12 = 0.0, h22 = 0.0;
        bool all_positive = true;
        for (std::size_t i = 0; i < k; ++i) {
            const double wi = w[i];
            const double d1 = lp.d1(wi);
            const double d2 = lp.d2(wi);
            for (int a = 0; a < D; ++a) grad[a] += gs[i][a] * d1;
            h11 += gs[i][0] * gs[i][0] * d2;
            if constexpr (D == 2) {
                h12 += gs[i][0] * gs[i][1] * d2;
                h22 += gs[i][1] * gs[i][1] * d2;
            }
            if (wi > 0.0)
                for (int a = 0; a < D; ++a) resid[a] += gs[i][a] / wi;
            else
                all_positive = false;
        }
        for (int a = 0; a < D; ++a) resid[a] /= kd;
        out.residual_norm = all_positive ? norm<D>(resid) : std::numeric_limits<double>::infinity();
        if (all_positive && out.residual_norm <= 1e-10) {
            out.converged = true;
            break;
        }
        // Newton step on the concave extended dual (Hessian negative definite)
        ElVec<D> step{};
        if constexpr (D == 1) {
            step[0] = -grad[0] / std::min(h11, -1e-300);
        } else {
            double det = h11 * h22 - h12 * h12;
            if (!(det > 1e-300)) {
                const double ridge = 1e-10 * (std::fabs(h11) + std::fabs(h22)) + 1e-300;
                h11 -= ridge;
                h22 -= ridge;
                det = h11 * h22 - h12 * h12;
            }
            step[0] = -(h22 * grad[0] - h12 * grad[1]) / det;
            step[1] = -(h11 * grad[1] - h12 * grad[0]) / det;
        }
        double descent = 0.0;
        for (int a = 0; a < D; ++a) descent += step[a] * grad[a];
        if (!(descent > 0.0)) break; // numerically flat
        for (std::size_t i = 0; i < k; ++i) {
            double si = 0.0;
            for (int a = 0; a < D; ++a) si += step[a] * gs[i][a];
            dw[i] = si;
        }
        double t = 1.0;
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            for (std::size_t i = 0; i < k; ++i) w_try[i] = w[i] + t * dw[i];
            const double h_new = dual(w_try);
            if (h_new >= h_cur + 1e-4 * t * descent - 1e-13) {
                for (int a = 0; a < D; ++a) out.lambda[a] += t * step[a];
                w.swap(w_try);
                h_cur = h_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break; // stalled; residual_norm reports how close we got
    }
    // at a converged solution every w_i exceeds 1/k, so log* is the plain log
    out.log_ratio = std::max(0.0, 2.0 * h_cur);
    return out;
}

} // namespace detail

// Full Lagrange solve for a set of d-dimensional g values (d = 1 or 2).
// Infeasible sets are signalled, not thrown; the caller treats them as
// log-ratio = +infinity.
template <int D>
ElSolution solve_lambda(std::span<const ElVec<D>> gs) {
    static_assert(D == 1 || D == 2);
    const std::size_t k = gs.size();
    if (k < D + 1) throw std::invalid_argument("solve_lambda: need at least d+1 points");
    ElSolution sol;
    sol.d = D;
    if (!el_feasible<D>(gs)) {
        sol.feasible = false;
        sol.log_ratio = std::numeric_limits<double>::infinity();
        return sol;
    }
    const auto core = detail::el_newton<D>(gs);
    for (int a = 0; a < D; ++a) sol.lambda[a] = core.lambda[a];
    sol.log_ratio = core.log_ratio;
    sol.converged = core.converged;
    sol.residual_norm = core.residual_norm;
    sol.iterations = core.iterations;
    sol.weights.resize(k);
    const double kd = static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
        double wi = 1.0;
        for (int a = 0; a < D; ++a) wi += core.lambda[a] * gs[i][a];
        sol.weights[i] = 1.0 / (kd * wi);
    }
    return sol;
}

namespace detail {

inline std::vector<ElVec<2>> build_g(std::span<const double> excesses, double gamma, double sigma,
                                     double r) {
    std::vector<ElVec<2>> gs;
    gs.reserve(excesses.size());
    for (const double y : excesses) gs.push_back(g_vec(y, gamma, sigma, r));
    return gs;
}

} // namespace detail

// Empirical log likelihood ratio l(gamma,sigma) = 2 sum log(1+<lambda,g_i>).
// Returns +infinity when the hull condition fails (point outside any region).
inline double el_ratio(const ExcessSample& s, double gamma, double sigma, double r) {
    const auto gs = detail::build_g(s.excesses, gamma, sigma, r);
    if (!el_feasible<2>(std::span<const ElVec<2>>(gs))) return std::numeric_limits<double>::infinity();
    const auto core = detail::el_newton<2>(std::span<const ElVec<2>>(gs));
    if (!core.converged)
        throw std::runtime_error("el_ratio: Newton failed to converge (residual " +
                                 std::to_string(core.residual_norm) + " after " +
                                 std::to_string(core.iterations) + " iterations)");
    return core.log_ratio;
}

// As el_ratio but with the full diagnostic solution.
inline ElSolution el_solve(const ExcessSample& s, double gamma, double sigma, double r) {
    const auto gs = detail::build_g(s.excesses, gamma, sigma, r);
    return solve_lambda<2>(std::span<const ElVec<2>>(gs));
}

// Closed-form moments of g under a unit-scale GPD at the true parameters:
// B = E[g g'] and A = E[d g / d theta] where theta multiplies the scale.
struct MomentOracles {
    std::array<double, 2> A{0.0, 0.0};
    Sym2 B;
};

inline MomentOracles moment_oracles(double gamma, double r) {
    if (!(gamma > 0.0)) throw std::domain_error("moment_oracles: gamma must be positive");
    if (!(r < 0.5)) throw std::domain_error("moment_oracles: r must be < 1/2");
    MomentOracles m;
    const double omr = 1.0 - r;
    m.B.a11 = gamma * gamma;
    m.B.a12 = gamma * r / (omr * omr);
    m.B.a22 = r * r / ((1.0 - 2.0 * r) * omr * omr);
    m.A[0] = -gamma / (gamma + 1.0);
    m.A[1] = -r / ((omr + gamma) * omr);
    return m;
}

} // namespace elcr
