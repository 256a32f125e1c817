#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "elcr/models.hpp"
#include "elcr/rng.hpp"
#include "elcr/zhang.hpp"

using namespace elcr;

namespace {

ExcessSample as_excesses(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    ExcessSample s;
    s.threshold = 0.0;
    s.n_total = static_cast<long>(v.size());
    s.excesses = std::move(v);
    return s;
}

// independent long-double evaluation of the estimating-equation residual
long double eq4_oracle(long double b, const std::vector<double>& y, long double r) {
    long double gbar = 0.0L;
    for (const double v : y) gbar += std::log(1.0L - b * v);
    gbar /= static_cast<long double>(y.size());
    const long double e = r / gbar;
    long double m = 0.0L;
    for (const double v : y) m += std::pow(1.0L - b * v, e);
    m /= static_cast<long double>(y.size());
    return m - 1.0L / (1.0L - r);
}

} // namespace

TEST_CASE("estimating-equation residual matches a high-precision evaluation") {
    const std::vector<double> y{1.0, 2.0, 3.0};
    const double r = eq4_residual(-0.5, y, -1.0);
    CHECK(r == Catch::Approx(static_cast<double>(eq4_oracle(-0.5L, y, -1.0L))).margin(1e-14));
    CHECK_THROWS_AS(eq4_residual(0.0, y, -1.0), std::domain_error);
    CHECK_THROWS_AS(eq4_residual(0.5, y, -1.0), std::domain_error); // 1/max(y) = 1/3
    CHECK_THROWS_AS(eq4_residual(-0.5, y, 0.5), std::domain_error);
}

namespace {

// fine scan of (-50, 0) for a sign change, then bisection; false if the
// residual never changes sign (no heavy-tail root)
bool grid_scan_root(const std::vector<double>& y, double r, double& root) {
    double lo = 0.0, hi = 0.0;
    double prev_b = -50.0;
    double prev_f = static_cast<double>(eq4_oracle(prev_b, y, r));
    for (int i = 1; i <= 200000; ++i) {
        const double b = -50.0 + 50.0 * i / 200001.0;
        const double f = static_cast<double>(eq4_oracle(b, y, r));
        if ((f > 0.0) != (prev_f > 0.0)) {
            lo = prev_b;
            hi = b;
            break;
        }
        prev_b = b;
        prev_f = f;
    }
    if (lo == hi) return false;
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((static_cast<double>(eq4_oracle(mid, y, r)) > 0.0) ==
            (static_cast<double>(eq4_oracle(hi, y, r)) > 0.0))
            hi = mid;
        else
            lo = mid;
    }
    root = 0.5 * (lo + hi);
    return true;
}

} // namespace

TEST_CASE("solve_b agrees with a grid-scan oracle") {
    // a sample with a pronounced tail has a unique root in (-50, 0)
    const std::vector<double> heavy{1.0, 2.0, 30.0};
    double oracle = 0.0;
    REQUIRE(grid_scan_root(heavy, -1.0, oracle));
    CHECK(solve_b(heavy, -1.0) == Catch::Approx(oracle).margin(1e-9));
    CHECK(std::fabs(eq4_residual(solve_b(heavy, -1.0), heavy, -1.0)) <= 1e-12);

    // the oracle scan finds no sign change for the regular sample {1,2,3}:
    // the heavy-tail estimating equation has no root there and the solver
    // must report the failure instead of inventing a value
    const std::vector<double> regular{1.0, 2.0, 3.0};
    double unused = 0.0;
    CHECK_FALSE(grid_scan_root(regular, -1.0, unused));
    CHECK_THROWS_AS(solve_b(regular, -1.0), estimation_error);
}

TEST_CASE("fit composes the solved b with the closed-form maps") {
    const ExcessSample s = as_excesses({1.0, 2.0, 30.0});
    double oracle = 0.0;
    REQUIRE(grid_scan_root(s.excesses, -1.0, oracle));
    const ZhangFit fit = zhang_fit(s, -1.0);
    long double gbar = 0.0L;
    for (const double v : s.excesses) gbar += std::log(1.0L - static_cast<long double>(oracle) * v);
    gbar /= 3.0L;
    CHECK(fit.params.gamma == Catch::Approx(static_cast<double>(gbar)).epsilon(1e-9));
    CHECK(fit.params.sigma == Catch::Approx(static_cast<double>(-gbar / oracle)).epsilon(1e-9));
}

TEST_CASE("solved b is a fixed point of the residual") {
    CounterRng rng(11, 0);
    for (const char* name : {"gpd:1,1", "gpd:0.25,2", "burr:1,1"}) {
        CounterRng sub = rng.substream(static_cast<std::uint64_t>(name[0]) + 13 * name[1]);
        auto data = sample(ModelSpec::parse(name), 600, sub);
        const ExcessSample s = extract_excesses(data, 250);
        const double b = solve_b(s.excesses, -0.5);
        CHECK(std::fabs(eq4_residual(b, s.excesses, -0.5)) <= 1e-12);
        const ZhangFit fit = zhang_fit(s, -0.5);
        CHECK(std::fabs(fit.residual_log) <= 1e-10);
        CHECK(std::fabs(fit.residual_moment) <= 1e-10);
        CHECK(fit.b < 0.0);
        CHECK(fit.b < 1.0 / s.excesses.back());
        CHECK(fit.params.gamma > 0.0);
        CHECK(fit.params.sigma > 0.0);
    }
}

TEST_CASE("scale equivariance") {
    CounterRng rng(23, 5);
    auto data = sample(ModelSpec::parse("gpd:1,1"), 400, rng);
    const ExcessSample s = as_excesses(data);
    const ZhangFit base = zhang_fit(s, -0.5);
    for (const double c : {0.01, 3.0, 1e4}) {
        std::vector<double> scaled;
        scaled.reserve(data.size());
        for (const double v : data) scaled.push_back(c * v);
        const ZhangFit fit = zhang_fit(as_excesses(scaled), -0.5);
        CHECK(fit.params.gamma == Catch::Approx(base.params.gamma).epsilon(1e-9));
        CHECK(fit.params.sigma == Catch::Approx(c * base.params.sigma).epsilon(1e-9));
        CHECK(fit.b == Catch::Approx(base.b / c).epsilon(1e-9));
    }
}

TEST_CASE("estimator is consistent at the population value") {
    // GPD(1,1): b0 = -gamma/sigma = -1
    CounterRng rng(99, 1);
    auto data = sample(ModelSpec::parse("gpd:1,1"), 10000, rng);
    const ExcessSample s = as_excesses(data);
    const ZhangFit fit = zhang_fit(s, -0.5);
    const double sd = std::sqrt(sigma_matrix(1.0, -0.5).a11); // 4.125
    CHECK(std::fabs(fit.params.gamma - 1.0) <= 5.0 * sd / 100.0);
    CHECK(std::fabs(fit.b + 1.0) <= 0.1);
}

TEST_CASE("light-tailed samples are rejected") {
    // uniform excesses have gamma = -1: no root in (-inf, 0)
    std::vector<double> u;
    for (int i = 1; i <= 200; ++i) u.push_back(static_cast<double>(i) / 201.0);
    CHECK_THROWS_AS(solve_b(u, -0.5), estimation_error);
}

TEST_CASE("asymptotic covariance matrix") {
    const Sym2 m = sigma_matrix(1.0, -0.5);
    CHECK(m.a11 == Catch::Approx(4.125).margin(1e-12));
    CHECK(m.a12 == Catch::Approx(-2.125).margin(1e-12));
    CHECK(m.a22 == Catch::Approx(4.125).margin(1e-12));

    // independent substitution at gamma = 1/4, r = -1/2
    const Sym2 q = sigma_matrix(0.25, -0.5);
    CHECK(q.a11 == Catch::Approx(1.59375).margin(1e-12));
    CHECK(q.a12 == Catch::Approx(-1.28125).margin(1e-12));
    CHECK(q.a22 == Catch::Approx(2.53125).margin(1e-12));

    for (const double g : {0.1, 0.5, 1.0, 2.0})
        for (const double r : {-1.0, -0.5, 0.0, 0.3})
            CHECK(sigma_matrix(g, r).positive_definite());
    CHECK_THROWS_AS(sigma_matrix(-0.5, -0.5), std::domain_error);
    CHECK_THROWS_AS(sigma_matrix(1.0, 0.5), std::domain_error);
}

TEST_CASE("Wald statistic") {
    const GpdParams fit{1.0, 2.0};
    CHECK(wald_stat(fit, fit, 100, sigma_matrix(1.0, -0.5)) == Catch::Approx(0.0).margin(1e-14));

    // v = (1,0), identity covariance, k = 4
    CHECK(wald_stat(GpdParams{2.0, 1.0}, GpdParams{1.0, 1.0}, 4, Sym2{1.0, 0.0, 1.0}) ==
          Catch::Approx(4.0).margin(1e-12));

    // v = (0.1, -0.05) against Sigma(1,-1/2), k = 200; hand inversion gives 0.485
    const GpdParams hyp{1.0, 1.0};
    const GpdParams est{1.1, 0.95};
    CHECK(wald_stat(est, hyp, 200, sigma_matrix(1.0, -0.5)) == Catch::Approx(0.485).margin(1e-12));

    CHECK_THROWS_AS(wald_stat(fit, fit, 10, Sym2{1.0, 2.0, 1.0}), std::runtime_error);
}

TEST_CASE("RMSE decreases as k doubles") {
    const int reps = 500;
    const std::vector<long> ks{250, 500, 1000, 2000, 4000, 8000};
    std::vector<double> rmse;
    for (const long k : ks) {
        double sq = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            CounterRng rng(7100, static_cast<std::uint64_t>(rep)); // paired seeds across k
            auto data = sample(ModelSpec::parse("gpd:1,1"), k, rng);
            const ZhangFit fit = zhang_fit(as_excesses(data), -0.5);
            sq += (fit.params.gamma - 1.0) * (fit.params.gamma - 1.0);
        }
        rmse.push_back(std::sqrt(sq / reps));
    }
    for (std::size_t i = 1; i < rmse.size(); ++i) CHECK(rmse[i] < rmse[i - 1]);
}
