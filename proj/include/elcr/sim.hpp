#pragma once

// Monte-Carlo coverage harness: generate samples, evaluate every requested
// method's membership statistic at the true (gamma0, sigma0n) or gamma0
// across a k-grid, and aggregate per-cell hit/failure counts. Deterministic
// for a fixed seed regardless of the thread count.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "elcr/el_core.hpp"
#include "elcr/errors.hpp"
#include "elcr/mle.hpp"
#include "elcr/models.hpp"
#include "elcr/profile_ci.hpp"
#include "elcr/rng.hpp"
#include "elcr/statfun.hpp"
#include "elcr/zhang.hpp"

namespace elcr {

// The scale of the approximating GPD at threshold u: sigma0(u) = t * U'(t)
// with t = 1/survival(u) and U the tail quantile function U(t) = F^{-1}(1-1/t).
// Closed form per family.
struct TrueScale {
    ModelSpec model;
    double u = 0.0;
    double sigma0 = 0.0;
};

namespace detail {

inline double tail_quantile_U(const ModelSpec& m, double t) {
    if (!(t > 1.0)) throw std::domain_error("tail_quantile_U: t must exceed 1");
    switch (m.family) {
        case Family::Gpd: return m.p2 * std::expm1(m.p1 * std::log(t)) / m.p1;
        case Family::Frechet: return std::pow(-std::log1p(-1.0 / t), -m.p1);
        case Family::Burr: return std::pow(std::expm1(m.p1 * std::log(t)), 1.0 / m.p2);
    }
    return 0.0;
}

inline double tail_quantile_U_prime(const ModelSpec& m, double t) {
    if (!(t > 1.0)) throw std::domain_error("tail_quantile_U_prime: t must exceed 1");
    switch (m.family) {
        case Family::Gpd: return m.p2 * std::pow(t, m.p1 - 1.0);
        case Family::Frechet: {
            const double w = -std::log1p(-1.0 / t); // = -log(1-1/t) > 0
            return m.p1 * std::pow(w, -m.p1 - 1.0) / (t * (t - 1.0));
        }
        case Family::Burr: {
            const double tl = std::pow(t, m.p1);
            return (m.p1 / m.p2) * std::pow(t, m.p1 - 1.0) * std::pow(tl - 1.0, 1.0 / m.p2 - 1.0);
        }
    }
    return 0.0;
}

} // namespace detail

inline TrueScale true_scale(const ModelSpec& model, double u) {
    const bool gpd = model.family == Family::Gpd;
    if (gpd ? !(u >= 0.0) : !(u > 0.0))
        throw std::domain_error("true_scale: threshold outside the model support");
    TrueScale ts;
    ts.model = model;
    ts.u = u;
    if (gpd) {
        ts.sigma0 = model.p2 + model.p1 * u; // threshold stability
        return ts;
    }
    const double t = 1.0 / model.survival(u);
    ts.sigma0 = t * detail::tail_quantile_U_prime(model, t);
    if (!(ts.sigma0 > 0.0)) throw std::domain_error("true_scale: non-positive scale");
    return ts;
}

// One (model, n, k, method) cell of the coverage study.
struct CoverageRecord {
    ModelSpec model;
    long n = 0;
    long k = 0;
    std::string method;
    double level = 0.95;
    std::string calibration;
    long reps = 0;
    long hits = 0;
    long valid = 0;
    long failures = 0;

    double coverage() const { return valid > 0 ? static_cast<double>(hits) / valid : 0.0; }
};

struct CoverageConfig {
    ModelSpec model;
    long n = 1000;
    long reps = 2000;
    std::vector<long> ks;
    std::vector<std::string> methods{"el", "zhang", "ml"};
    double level = 0.95;
    Calibration calibration = Calibration::Fisher; // for el and elw
    double r = -0.5;
    std::uint64_t seed = 1;
    int threads = 1;
    long elp_calib_reps = 10000;
};

namespace detail {

struct CellCounts {
    std::atomic<long> hits{0};
    std::atomic<long> valid{0};
    std::atomic<long> failures{0};
};

// Statistic thresholds shared by all replications of one k cell.
struct CellCriticals {
    double el = 0.0;
    double elw = 0.0;
    double wald2 = 0.0; // chi2(level,2) for both Wald regions
    double chi1 = 0.0;  // chi2(level,1) for the normal-approximation CI
    double elp = 0.0;
};

} // namespace detail

// Runs the coverage study. Failures (estimating-equation bracket failure,
// ML non-convergence, EL infeasibility at the truth) are counted per cell,
// never imputed.
inline std::vector<CoverageRecord> run_coverage(const CoverageConfig& cfg) {
    for (const long k : cfg.ks)
        if (k < 5 || k >= cfg.n) throw std::invalid_argument("run_coverage: need 5 <= k < n");
    const Probability level(cfg.level);
    const double gamma0 = cfg.model.tail_index();

    const std::size_t nk = cfg.ks.size();
    const std::size_t nm = cfg.methods.size();
    std::vector<detail::CellCounts> counts(nk * nm);
    std::vector<detail::CellCriticals> crits(nk);

    bool want_elp = false;
    for (const auto& m : cfg.methods)
        if (m == "elp") want_elp = true;
    for (std::size_t ki = 0; ki < nk; ++ki) {
        const long k = cfg.ks[ki];
        auto& c = crits[ki];
        c.el = cfg.calibration == Calibration::Chi2 ? chi2_quantile(level, 2)
                                                    : fisher_critical(k, level, 2);
        c.elw = cfg.calibration == Calibration::Chi2 ? chi2_quantile(level, 1)
                                                     : fisher_critical(k, level, 1);
        c.wald2 = chi2_quantile(level, 2);
        c.chi1 = chi2_quantile(level, 1);
        if (want_elp) {
            // calibration stream disjoint from the replication streams
            CounterRng calib_rng(cfg.seed, (1ULL << 40) + static_cast<std::uint64_t>(k));
            c.elp = elp_critical_value(k, level, cfg.elp_calib_reps, calib_rng);
        }
    }

    auto run_rep = [&](long rep) {
        CounterRng rng(cfg.seed, static_cast<std::uint64_t>(rep));
        const std::vector<double> data = sample(cfg.model, cfg.n, rng);
        for (std::size_t ki = 0; ki < nk; ++ki) {
            const long k = cfg.ks[ki];
            ExcessSample ex;
            try {
                ex = extract_excesses(data, k);
            } catch (const estimation_error&) {
                for (std::size_t mi = 0; mi < nm; ++mi)
                    counts[ki * nm + mi].failures.fetch_add(1, std::memory_order_relaxed);
                continue;
            }
            const double sigma0 = true_scale(cfg.model, ex.threshold).sigma0;

            bool have_fit = false, fit_failed = false;
            ZhangFit fit;
            auto ensure_fit = [&]() {
                if (!have_fit && !fit_failed) {
                    try {
                        fit = zhang_fit(ex, cfg.r);
                        have_fit = true;
                    } catch (const estimation_error&) {
                        fit_failed = true;
                    }
                }
                return have_fit;
            };

            for (std::size_t mi = 0; mi < nm; ++mi) {
                const std::string& method = cfg.methods[mi];
                auto& cell = counts[ki * nm + mi];
                bool hit = false, failed = false;
                try {
                    if (method == "el") {
                        const double l = el_ratio(ex, gamma0, sigma0, cfg.r);
                        if (!std::isfinite(l))
                            failed = true; // infeasible at the truth
                        else
                            hit = l <= crits[ki].el;
                    } else if (method == "zhang") {
                        if (!ensure_fit()) {
                            failed = true;
                        } else {
                            const Sym2 cov = sigma_matrix(fit.params.gamma, cfg.r);
                            hit = wald_stat(fit.params, GpdParams{gamma0, sigma0}, k, cov) <=
                                  crits[ki].wald2;
                        }
                    } else if (method == "ml") {
                        const MleFit mf = mle_fit(ex);
                        if (!mf.converged || !(mf.params.gamma > -0.5)) {
                            failed = true;
                        } else {
                            const Sym2 cov = mle_cov(mf.params.gamma);
                            hit = wald_stat(mf.params, GpdParams{gamma0, sigma0}, k, cov) <=
                                  crits[ki].wald2;
                        }
                    } else if (method == "elw") {
                        if (!ensure_fit()) {
                            failed = true;
                        } else {
                            const ProfileResult pr =
                                profile_sigma(ex, gamma0, cfg.r, fit.params.sigma);
                            if (!pr.ok)
                                failed = true;
                            else
                                hit = pr.l_profile <= crits[ki].elw;
                        }
                    } else if (method == "elp") {
                        const auto zs = detail::log_spacings(data, k);
                        const double l = detail::el1_ratio(zs, gamma0);
                        if (!std::isfinite(l))
                            failed = true;
                        else
                            hit = l <= crits[ki].elp;
                    } else if (method == "zhang-ci") {
                        if (!ensure_fit()) {
                            failed = true;
                        } else {
                            const double s11 = sigma_matrix(fit.params.gamma, cfg.r).a11;
                            const double d = fit.params.gamma - gamma0;
                            hit = static_cast<double>(k) * d * d / s11 <= crits[ki].chi1;
                        }
                    } else {
                        throw std::invalid_argument("run_coverage: unknown method '" + method + "'");
                    }
                } catch (const estimation_error&) {
                    failed = true;
                } catch (const std::runtime_error&) {
                    failed = true; // numerical failure in one replication is a failure cell
                }
                if (failed)
                    cell.failures.fetch_add(1, std::memory_order_relaxed);
                else {
                    cell.valid.fetch_add(1, std::memory_order_relaxed);
                    if (hit) cell.hits.fetch_add(1, std::memory_order_relaxed);
                }
            }
        }
    };

    const int nthreads = std::max(1, cfg.threads);
    if (nthreads == 1 || cfg.reps < 2) {
        for (long rep = 0; rep < cfg.reps; ++rep) run_rep(rep);
    } else {
        std::atomic<long> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(nthreads));
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&]() {
                for (;;) {
                    const long rep = next.fetch_add(1, std::memory_order_relaxed);
                    if (rep >= cfg.reps) break;
                    run_rep(rep);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::vector<CoverageRecord> out;
    out.reserve(nk * nm);
    for (std::size_t ki = 0; ki < nk; ++ki) {
        for (std::size_t mi = 0; mi < nm; ++mi) {
            const auto& cell = counts[ki * nm + mi];
            CoverageRecord rec;
            rec.model = cfg.model;
            rec.n = cfg.n;
            rec.k = cfg.ks[ki];
            rec.method = cfg.methods[mi];
            rec.level = cfg.level;
            if (rec.method == "el" || rec.method == "elw")
                rec.calibration = to_string(cfg.calibration);
            else if (rec.method == "elp")
                rec.calibration = "exp";
            else
                rec.calibration = "chi2";
            rec.reps = cfg.reps;
            rec.hits = cell.hits.load();
            rec.valid = cell.valid.load();
            rec.failures = cell.failures.load();
            out.push_back(std::move(rec));
        }
    }
    return out;
}

// CSV serialization: one row per cell, model field quoted (it contains commas).
inline std::string coverage_csv(std::span<const CoverageRecord> records) {
    std::string out = "model,n,k,method,level,calibration,reps,valid,failures,coverage\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "\"%s\",%ld,%ld,%s,%g,%s,%ld,%ld,%ld,%.6f\n",
                      r.model.to_string().c_str(), r.n, r.k, r.method.c_str(), r.level,
                      r.calibration.c_str(), r.reps, r.valid, r.failures, r.coverage());
        out += buf;
    }
    return out;
}

} // namespace elcr
