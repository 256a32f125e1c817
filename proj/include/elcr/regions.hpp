#pragma once

// Two-dimensional confidence regions: empirical-likelihood sublevel sets
// contoured on a (gamma, sigma) grid by marching squares, Wald ellipses for
// the comparison methods, and direct-statistic membership tests.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

#include "elcr/el_core.hpp"
#include "elcr/mle.hpp"
#include "elcr/models.hpp"
#include "elcr/profile_ci.hpp"
#include "elcr/statfun.hpp"
#include "elcr/zhang.hpp"

namespace elcr {

struct GridSpec {
    double gamma_lo = 0.0, gamma_hi = 0.0;
    double sigma_lo = 0.0, sigma_hi = 0.0;
    int n_gamma = 96, n_sigma = 96;

    void validate() const {
        if (!(gamma_lo > 0.0) || !(gamma_lo < gamma_hi) || !(sigma_lo > 0.0) ||
            !(sigma_lo < sigma_hi))
            throw std::invalid_argument("GridSpec: ranges must be positive with lo < hi");
        if (n_gamma < 16 || n_sigma < 16)
            throw std::invalid_argument("GridSpec: need at least 16 points per axis");
    }
};

struct Polyline {
    std::vector<std::array<double, 2>> pts;
    bool closed = false;
};

// Shoelace area of a closed polyline (absolute value).
inline double polygon_area(const Polyline& p) {
    if (p.pts.size() < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < p.pts.size(); ++i) {
        const auto& a = p.pts[i];
        const auto& b = p.pts[(i + 1) % p.pts.size()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * std::fabs(acc);
}

namespace detail {

inline double polygon_signed_area(const std::vector<std::array<double, 2>>& pts) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& a = pts[i];
        const auto& b = pts[(i + 1) % pts.size()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * acc;
}

} // namespace detail

// Level-set extraction of {field <= iso} boundaries on a rectilinear grid.
// Crossings are linearly interpolated; edges with an infinite outside value
// and ambiguous saddle cells fall back to the exact field `fn`.
// Closed loops come out counterclockwise.
inline std::vector<Polyline> marching_squares(std::span<const double> xs,
                                              std::span<const double> ys,
                                              std::span<const double> field, double iso,
                                              const std::function<double(double, double)>& fn) {
    const long nx = static_cast<long>(xs.size());
    const long ny = static_cast<long>(ys.size());
    if (static_cast<long>(field.size()) != nx * ny)
        throw std::invalid_argument("marching_squares: field size mismatch");
    auto value = [&](long i, long j) { return field[static_cast<std::size_t>(i * ny + j)]; };
    auto inside = [&](long i, long j) { return value(i, j) <= iso; };

    // global edge ids: horizontal (along x) and vertical (along y)
    auto hedge = [&](long i, long j) { return static_cast<std::uint64_t>(i * ny + j); };
    auto vedge = [&](long i, long j) {
        return (1ULL << 62) | static_cast<std::uint64_t>(i * ny + j);
    };

    std::unordered_map<std::uint64_t, std::array<double, 2>> crossings;
    auto crossing = [&](std::uint64_t id, long i0, long j0, long i1, long j1) {
        auto it = crossings.find(id);
        if (it != crossings.end()) return it->second;
        // orient so that endpoint 0 is the inside one
        if (!inside(i0, j0)) {
            std::swap(i0, i1);
            std::swap(j0, j1);
        }
        const double fa = value(i0, j0) - iso; // <= 0
        const double fb = value(i1, j1) - iso; // > 0, possibly +inf
        const double ax = xs[static_cast<std::size_t>(i0)], ay = ys[static_cast<std::size_t>(j0)];
        const double bx = xs[static_cast<std::size_t>(i1)], by = ys[static_cast<std::size_t>(j1)];
        double t;
        if (std::isfinite(fb)) {
            t = fa == fb ? 0.5 : fa / (fa - fb);
        } else {
            // bisection against the exact field up to the feasibility boundary
            double tlo = 0.0, thi = 1.0;
            for (int it2 = 0; it2 < 40; ++it2) {
                const double tm = 0.5 * (tlo + thi);
                const double fm = fn(ax + tm * (bx - ax), ay + tm * (by - ay)) - iso;
                if (fm <= 0.0)
                    tlo = tm;
                else
                    thi = tm;
            }
            t = 0.5 * (tlo + thi);
        }
        const std::array<double, 2> p{ax + t * (bx - ax), ay + t * (by - ay)};
        crossings.emplace(id, p);
        return p;
    };

    struct Seg {
        std::uint64_t a, b;
    };
    std::vector<Seg> segs;
    auto emit = [&](std::uint64_t a, std::uint64_t b) { segs.push_back(Seg{a, b}); };

    for (long i = 0; i + 1 < nx; ++i) {
        for (long j = 0; j + 1 < ny; ++j) {
            const int mask = (inside(i, j) ? 1 : 0) | (inside(i + 1, j) ? 2 : 0) |
                             (inside(i + 1, j + 1) ? 4 : 0) | (inside(i, j + 1) ? 8 : 0);
            if (mask == 0 || mask == 15) continue;
            const std::uint64_t B = hedge(i, j), T = hedge(i, j + 1);
            const std::uint64_t L = vedge(i, j), R = vedge(i + 1, j);
            // make sure the crossing points exist in the cache
            auto cB = [&] { crossing(B, i, j, i + 1, j); };
            auto cT = [&] { crossing(T, i, j + 1, i + 1, j + 1); };
            auto cL = [&] { crossing(L, i, j, i, j + 1); };
            auto cR = [&] { crossing(R, i + 1, j, i + 1, j + 1); };
            switch (mask) {
                case 1: cB(); cL(); emit(B, L); break;
                case 2: cB(); cR(); emit(B, R); break;
                case 3: cL(); cR(); emit(L, R); break;
                case 4: cT(); cR(); emit(T, R); break;
                case 6: cB(); cT(); emit(B, T); break;
                case 7: cT(); cL(); emit(T, L); break;
                case 8: cT(); cL(); emit(T, L); break;
                case 9: cB(); cT(); emit(B, T); break;
                case 11: cR(); cT(); emit(R, T); break;
                case 12: cL(); cR(); emit(L, R); break;
                case 13: cB(); cR(); emit(B, R); break;
                case 14: cB(); cL(); emit(B, L); break;
                case 5:
                case 10: {
                    cB(); cT(); cL(); cR();
                    const double cx = 0.5 * (xs[static_cast<std::size_t>(i)] + xs[static_cast<std::size_t>(i + 1)]);
                    const double cy = 0.5 * (ys[static_cast<std::size_t>(j)] + ys[static_cast<std::size_t>(j + 1)]);
                    const bool center_in = fn(cx, cy) <= iso;
                    if (mask == 5) {
                        if (center_in) { emit(B, R); emit(T, L); }
                        else { emit(B, L); emit(T, R); }
                    } else {
                        if (center_in) { emit(B, L); emit(T, R); }
                        else { emit(B, R); emit(T, L); }
                    }
                    break;
                }
                default: break;
            }
        }
    }

    // stitch segments into chains by shared edge ids
    std::unordered_map<std::uint64_t, std::array<int, 2>> incident;
    incident.reserve(segs.size() * 2);
    for (int si = 0; si < static_cast<int>(segs.size()); ++si) {
        for (const std::uint64_t e : {segs[static_cast<std::size_t>(si)].a, segs[static_cast<std::size_t>(si)].b}) {
            auto [it, inserted] = incident.try_emplace(e, std::array<int, 2>{si, -1});
            if (!inserted) it->second[1] = si;
        }
    }
    std::vector<bool> used(segs.size(), false);
    std::vector<Polyline> out;
    for (int si = 0; si < static_cast<int>(segs.size()); ++si) {
        if (used[static_cast<std::size_t>(si)]) continue;
        std::vector<std::uint64_t> chain{segs[static_cast<std::size_t>(si)].a,
                                          segs[static_cast<std::size_t>(si)].b};
        used[static_cast<std::size_t>(si)] = true;
        bool closed = false;
        // extend forward
        for (;;) {
            int next = -1;
            const auto it = incident.find(chain.back());
            if (it != incident.end())
                for (const int cand : it->second)
                    if (cand >= 0 && !used[static_cast<std::size_t>(cand)]) next = cand;
            if (next < 0) break;
            const Seg& sg = segs[static_cast<std::size_t>(next)];
            used[static_cast<std::size_t>(next)] = true;
            chain.push_back(sg.a == chain.back() ? sg.b : sg.a);
            if (chain.back() == chain.front()) {
                closed = true;
                chain.pop_back();
                break;
            }
        }
        if (!closed) {
            // extend backward
            for (;;) {
                int next = -1;
                const auto it = incident.find(chain.front());
                if (it != incident.end())
                    for (const int cand : it->second)
                        if (cand >= 0 && !used[static_cast<std::size_t>(cand)]) next = cand;
                if (next < 0) break;
                const Seg& sg = segs[static_cast<std::size_t>(next)];
                used[static_cast<std::size_t>(next)] = true;
                chain.insert(chain.begin(), sg.a == chain.front() ? sg.b : sg.a);
            }
        }
        Polyline pl;
        pl.closed = closed;
        pl.pts.reserve(chain.size());
        for (const std::uint64_t e : chain) pl.pts.push_back(crossings.at(e));
        if (closed && detail::polygon_signed_area(pl.pts) < 0.0)
            std::reverse(pl.pts.begin(), pl.pts.end());
        out.push_back(std::move(pl));
    }
    return out;
}

enum class RegionMethod { El, ZhangWald, MlWald };

inline const char* to_string(RegionMethod m) {
    switch (m) {
        case RegionMethod::El: return "el";
        case RegionMethod::ZhangWald: return "zhang";
        case RegionMethod::MlWald: return "ml";
    }
    return "?";
}

struct ConfidenceRegion {
    RegionMethod method = RegionMethod::El;
    double level = 0.95;
    double critical_value = 0.0;
    GridSpec grid;
    std::vector<double> stat; // grid statistics, gamma-major (EL only)
    std::vector<Polyline> boundary;
    bool clipped = false; // Wald: part of the ellipse fell outside sigma > 0
    std::function<double(double, double)> stat_fn;
};

// Membership is decided by the statistic itself, never by the polygon.
inline bool region_contains(const ConfidenceRegion& region, double gamma, double sigma) {
    double v;
    try {
        v = region.stat_fn(gamma, sigma);
    } catch (const std::exception&) {
        return false;
    }
    return std::isfinite(v) && v <= region.critical_value;
}

// Default grid: estimate +/- 4 asymptotic standard deviations per axis,
// intersected with the positive quadrant.
inline GridSpec default_grid(const ZhangFit& fit, long k) {
    const Sym2 cov = sigma_matrix(fit.params.gamma, fit.r);
    const double sd_g = std::sqrt(cov.a11 / static_cast<double>(k));
    const double sd_s = fit.params.sigma * std::sqrt(cov.a22 / static_cast<double>(k));
    GridSpec g;
    g.gamma_lo = std::max(fit.params.gamma - 4.0 * sd_g, 1e-3 * fit.params.gamma);
    g.gamma_hi = fit.params.gamma + 4.0 * sd_g;
    g.sigma_lo = std::max(fit.params.sigma - 4.0 * sd_s, 1e-3 * fit.params.sigma);
    g.sigma_hi = fit.params.sigma + 4.0 * sd_s;
    return g;
}

// Empirical-likelihood region {(gamma,sigma): l(gamma,sigma) <= critical}.
// Grid evaluation parallelizes over gamma rows; infeasible vertices carry
// +infinity and are always outside.
inline ConfidenceRegion el_region(const ExcessSample& s, double r, Probability level,
                                  GridSpec grid, Calibration calibration = Calibration::Fisher,
                                  int threads = 1) {
    const ZhangFit fit = zhang_fit(s, r); // estimation errors propagate
    // the grid must cover the maximum-EL estimate; expand if it does not
    if (grid.gamma_lo >= fit.params.gamma) grid.gamma_lo = 0.5 * fit.params.gamma;
    if (grid.gamma_hi <= fit.params.gamma) grid.gamma_hi = 1.5 * fit.params.gamma;
    if (grid.sigma_lo >= fit.params.sigma) grid.sigma_lo = 0.5 * fit.params.sigma;
    if (grid.sigma_hi <= fit.params.sigma) grid.sigma_hi = 1.5 * fit.params.sigma;
    grid.validate();

    const double c = calibration == Calibration::Chi2 ? chi2_quantile(level, 2)
                                                      : fisher_critical(s.k(), level, 2);
    const long ng = grid.n_gamma, ns = grid.n_sigma;
    std::vector<double> xs(static_cast<std::size_t>(ng)), ys(static_cast<std::size_t>(ns));
    for (long i = 0; i < ng; ++i)
        xs[static_cast<std::size_t>(i)] =
            grid.gamma_lo + (grid.gamma_hi - grid.gamma_lo) * static_cast<double>(i) / (ng - 1);
    for (long j = 0; j < ns; ++j)
        ys[static_cast<std::size_t>(j)] =
            grid.sigma_lo + (grid.sigma_hi - grid.sigma_lo) * static_cast<double>(j) / (ns - 1);

    auto sample_ptr = std::make_shared<ExcessSample>(s);
    auto stat_fn = [sample_ptr, r](double gamma, double sigma) {
        if (!(gamma > 0.0) || !(sigma > 0.0)) return std::numeric_limits<double>::infinity();
        return el_ratio(*sample_ptr, gamma, sigma, r);
    };

    std::vector<double> stat(static_cast<std::size_t>(ng * ns));
    const int nthreads = std::max(1, threads);
    std::exception_ptr err;
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    auto worker = [&](long i_begin, long i_end) {
        try {
            for (long i = i_begin; i < i_end; ++i)
                for (long j = 0; j < ns; ++j)
                    stat[static_cast<std::size_t>(i * ns + j)] =
                        stat_fn(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(j)]);
        } catch (...) {
            const std::lock_guard<std::mutex> lock(err_mutex);
            if (!err) err = std::current_exception();
        }
    };
    if (nthreads == 1) {
        worker(0, ng);
    } else {
        const long chunk = (ng + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const long b = t * chunk, e = std::min<long>(ng, b + chunk);
            if (b < e) pool.emplace_back(worker, b, e);
        }
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);

    ConfidenceRegion region;
    region.method = RegionMethod::El;
    region.level = level.value();
    region.critical_value = c;
    region.grid = grid;
    region.boundary = marching_squares(xs, ys, stat, c, stat_fn);
    region.stat = std::move(stat);
    region.stat_fn = stat_fn;
    return region;
}

// Wald ellipse {(gamma,sigma): k v' cov^-1 v <= chi2(level,2)} with
// v = (gamma_hat - gamma, sigma_hat/sigma - 1), traced parametrically.
// Vertices that map outside the parameter space are dropped; `clipped` is
// set when the ellipse reaches sigma <= 0.
inline ConfidenceRegion wald_region(const GpdParams& fitted, const Sym2& cov, long k,
                                    Probability level, RegionMethod method, int n_points = 256) {
    if (!cov.positive_definite())
        throw std::runtime_error("wald_region: covariance not positive definite");
    if (n_points < 8) throw std::invalid_argument("wald_region: need n_points >= 8");
    const double c = chi2_quantile(level, 2);

    // symmetric square root of cov by eigendecomposition
    double emax, emin;
    cov.eigenvalues(emax, emin);
    const double theta = 0.5 * std::atan2(2.0 * cov.a12, cov.a11 - cov.a22);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double s1 = std::sqrt(emax), s2 = std::sqrt(emin);
    // sqrt = R diag(s1,s2) R' with R = [[ct,-st],[st,ct]]
    const double q11 = ct * ct * s1 + st * st * s2;
    const double q12 = ct * st * (s1 - s2);
    const double q22 = st * st * s1 + ct * ct * s2;

    const double scale = std::sqrt(c / static_cast<double>(k));
    ConfidenceRegion region;
    region.method = method;
    region.level = level.value();
    region.critical_value = c;
    Polyline pl;
    bool dropped = false;
    for (int m = 0; m < n_points; ++m) {
        const double t = 2.0 * std::numbers::pi * m / n_points;
        const double e1 = std::cos(t), e2 = std::sin(t);
        const double v1 = scale * (q11 * e1 + q12 * e2);
        const double v2 = scale * (q12 * e1 + q22 * e2);
        const double gamma = fitted.gamma - v1;
        const double denom = 1.0 + v2;
        if (!(denom > 0.0)) {
            region.clipped = true;
            dropped = true;
            continue;
        }
        const double sigma = fitted.sigma / denom;
        if (!(gamma > 0.0) || !(sigma > 0.0) || !std::isfinite(sigma)) {
            dropped = true;
            continue;
        }
        pl.pts.push_back({gamma, sigma});
    }
    pl.closed = !dropped;
    region.boundary.push_back(std::move(pl));
    const GpdParams fit_copy = fitted;
    const Sym2 cov_copy = cov;
    region.stat_fn = [fit_copy, cov_copy, k](double gamma, double sigma) {
        return wald_stat(fit_copy, GpdParams{gamma, sigma}, k, cov_copy);
    };
    return region;
}

} // namespace elcr
