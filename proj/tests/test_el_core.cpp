#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "elcr/el_core.hpp"
#include "elcr/models.hpp"
#include "elcr/rng.hpp"
#include "elcr/statfun.hpp"
#include "elcr/zhang.hpp"

using namespace elcr;

namespace {

ExcessSample as_excesses(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    ExcessSample s;
    s.n_total = static_cast<long>(v.size());
    s.excesses = std::move(v);
    return s;
}

// coarse-to-fine grid maximization of the dual as an independent oracle
ElVec<2> lambda_grid_oracle(const std::vector<ElVec<2>>& gs) {
    auto dual = [&](double l1, double l2) {
        double s = 0.0;
        for (const auto& g : gs) {
            const double w = 1.0 + l1 * g[0] + l2 * g[1];
            if (!(w > 1.0 / static_cast<double>(gs.size()))) return -1e300;
            s += std::log(w);
        }
        return s;
    };
    double c1 = 0.0, c2 = 0.0, span = 4.0;
    for (int stage = 0; stage < 12; ++stage) {
        double best = -1e301, b1 = c1, b2 = c2;
        for (int i = -20; i <= 20; ++i) {
            for (int j = -20; j <= 20; ++j) {
                const double l1 = c1 + span * i / 20.0;
                const double l2 = c2 + span * j / 20.0;
                const double v = dual(l1, l2);
                if (v > best) {
                    best = v;
                    b1 = l1;
                    b2 = l2;
                }
            }
        }
        c1 = b1;
        c2 = b2;
        span /= 10.0;
    }
    return {c1, c2};
}

} // namespace

TEST_CASE("estimating function values") {
    const auto g0 = g_vec(0.0, 1.0, 1.0, -1.0);
    CHECK(g0[0] == Catch::Approx(-1.0).margin(1e-15));
    CHECK(g0[1] == Catch::Approx(0.5).margin(1e-15));

    const auto g1 = g_vec(std::exp(1.0) - 1.0, 1.0, 1.0, -0.5);
    CHECK(g1[0] == Catch::Approx(0.0).margin(1e-14));

    const auto g2 = g_vec(1.0, 0.5, 2.0, -0.5);
    CHECK(g2[0] == Catch::Approx(std::log(1.25) - 0.5).margin(1e-15));
    CHECK(g2[1] == Catch::Approx(1.0 / 1.25 - 2.0 / 3.0).margin(1e-15));

    CHECK_THROWS_AS(g_vec(1.0, -1.0, 1.0, -0.5), std::domain_error);
    CHECK_THROWS_AS(g_vec(1.0, 1.0, 1.0, 0.7), std::domain_error);
}

TEST_CASE("Lagrange solve on a zero-mean configuration") {
    const std::vector<ElVec<2>> gs{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const ElSolution sol = solve_lambda<2>(gs);
    REQUIRE(sol.feasible);
    REQUIRE(sol.converged);
    CHECK(std::fabs(sol.lambda[0]) < 1e-12);
    CHECK(std::fabs(sol.lambda[1]) < 1e-12);
    CHECK(sol.log_ratio == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("Lagrange solve matches the grid oracle") {
    const std::vector<ElVec<2>> gs{{1.0, 0.2}, {-0.5, 0.5}, {-0.4, -0.6}, {0.1, -0.15}};
    const ElSolution sol = solve_lambda<2>(gs);
    REQUIRE(sol.feasible);
    REQUIRE(sol.converged);
    const auto oracle = lambda_grid_oracle(gs);
    CHECK(sol.lambda[0] == Catch::Approx(oracle[0]).margin(2e-6));
    CHECK(sol.lambda[1] == Catch::Approx(oracle[1]).margin(2e-6));
    CHECK(sol.log_ratio > 0.0);
    CHECK(sol.iterations <= 50);
}

TEST_CASE("half-plane configurations are infeasible") {
    const std::vector<ElVec<2>> gs{{1.0, 0.5}, {0.2, -0.3}, {2.0, 1.0}, {0.4, 0.0}};
    CHECK_FALSE(el_feasible<2>(std::span<const ElVec<2>>(gs)));
    const ElSolution sol = solve_lambda<2>(gs);
    CHECK_FALSE(sol.feasible);
    CHECK(std::isinf(sol.log_ratio));

    const std::vector<ElVec<1>> g1{{0.5}, {0.1}, {2.0}};
    CHECK_FALSE(el_feasible<1>(std::span<const ElVec<1>>(g1)));
    const std::vector<ElVec<1>> g2{{0.5}, {-0.1}, {2.0}};
    CHECK(el_feasible<1>(std::span<const ElVec<1>>(g2)));
}

TEST_CASE("weight identities hold on converged solves") {
    CounterRng rng(314, 0);
    auto data = sample(ModelSpec::parse("gpd:1,1"), 300, rng);
    const ExcessSample s = as_excesses(data);
    // evaluate at parameters near but not at the fit
    for (const auto& [g, sg] : {std::pair{1.05, 1.0}, std::pair{0.9, 1.2}, std::pair{1.3, 0.8}}) {
        const ElSolution sol = el_solve(s, g, sg, -0.5);
        REQUIRE(sol.feasible);
        REQUIRE(sol.converged);
        CHECK(sol.residual_norm <= 1e-10);
        double total = 0.0;
        for (const double p : sol.weights) {
            CHECK(p > 0.0);
            CHECK(p <= 1.0 + 1e-12);
            total += p;
        }
        CHECK(total == Catch::Approx(1.0).margin(1e-10));
        CHECK(sol.log_ratio > 0.0);
        CHECK(sol.log_ratio >= 0.0);
    }
}

TEST_CASE("dual curvature is concave at random multipliers") {
    CounterRng rng(2718, 1);
    auto data = sample(ModelSpec::parse("gpd:1,1"), 120, rng);
    std::vector<ElVec<2>> gs;
    for (const double y : data) gs.push_back(g_vec(y, 1.1, 0.9, -0.5));
    CounterRng lam(2718, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const double l1 = (lam.next_uniform() - 0.5) * 0.2;
        const double l2 = (lam.next_uniform() - 0.5) * 0.2;
        double h11 = 0.0, h12 = 0.0, h22 = 0.0;
        bool in_domain = true;
        for (const auto& g : gs) {
            const double w = 1.0 + l1 * g[0] + l2 * g[1];
            if (!(w > 0.0)) {
                in_domain = false;
                break;
            }
            h11 += g[0] * g[0] / (w * w);
            h12 += g[0] * g[1] / (w * w);
            h22 += g[1] * g[1] / (w * w);
        }
        if (!in_domain) continue;
        // -H must be negative semidefinite, i.e. H PSD
        CHECK(h11 >= 0.0);
        CHECK(h22 >= 0.0);
        CHECK(h11 * h22 - h12 * h12 >= -1e-9 * (h11 * h22 + 1.0));
    }
}

TEST_CASE("log-ratio vanishes at the maximum-EL estimate") {
    CounterRng rng(5, 9);
    for (const char* name : {"gpd:1,1", "burr:1,1", "frechet:0.25"}) {
        CounterRng sub = rng.substream(static_cast<std::uint64_t>(name[0] * 131 + name[3]));
        auto data = sample(ModelSpec::parse(name), 900, sub);
        const ExcessSample s = extract_excesses(data, 300);
        const ZhangFit fit = zhang_fit(s, -0.5);
        CHECK(el_ratio(s, fit.params.gamma, fit.params.sigma, -0.5) <= 1e-9);
        // strictly positive away from the estimate
        CHECK(el_ratio(s, fit.params.gamma * 1.2, fit.params.sigma, -0.5) > 0.0);
    }
}

TEST_CASE("scale reparametrization identity") {
    CounterRng rng(808, 0);
    auto data = sample(ModelSpec::parse("gpd:1,1"), 200, rng);
    const ExcessSample s = as_excesses(data);
    const double c = 4.25;
    std::vector<double> scaled;
    for (const double y : data) scaled.push_back(y / c);
    const ExcessSample s2 = as_excesses(scaled);
    // g(y, gamma, sigma) = g(y/c, gamma, sigma/c) down to rounding
    for (std::size_t i = 0; i < 5; ++i) {
        const auto a = g_vec(s.excesses[i], 1.1, 0.9, -0.5);
        const auto b = g_vec(s.excesses[i] / c, 1.1, 0.9 / c, -0.5);
        CHECK(a[0] == Catch::Approx(b[0]).margin(1e-12));
        CHECK(a[1] == Catch::Approx(b[1]).margin(1e-12));
    }
    const double l1 = el_ratio(s, 1.1, 0.9, -0.5);
    const double l2 = el_ratio(s2, 1.1, 0.9 / c, -0.5);
    CHECK(l1 == Catch::Approx(l2).margin(1e-9));
}

TEST_CASE("sample mean of g vanishes at the truth at root-k rate") {
    for (const auto& [gamma, r] : {std::pair{1.0, -0.5}, std::pair{0.25, -0.5}}) {
        CounterRng rng(4242, static_cast<std::uint64_t>(gamma * 8));
        const long k = 4000;
        char spec[32];
        std::snprintf(spec, sizeof spec, "gpd:%g,1", gamma);
        auto data = sample(ModelSpec::parse(spec), k, rng);
        double m1 = 0.0, m2 = 0.0;
        for (const double y : data) {
            const auto g = g_vec(y, gamma, 1.0, r);
            m1 += g[0];
            m2 += g[1];
        }
        m1 /= k;
        m2 /= k;
        const Sym2 B = moment_oracles(gamma, r).B;
        const double bound = 5.0 * std::sqrt((B.a11 + B.a22) / k);
        CHECK(std::hypot(m1, m2) <= bound);
    }
}

TEST_CASE("closed-form moment matrices") {
    const MomentOracles m = moment_oracles(1.0, -0.5);
    CHECK(m.B.a11 == Catch::Approx(1.0).margin(1e-14));
    CHECK(m.B.a12 == Catch::Approx(-2.0 / 9.0).margin(1e-14));
    CHECK(m.B.a22 == Catch::Approx(1.0 / 18.0).margin(1e-14));
    CHECK(m.A[0] == Catch::Approx(-0.5).margin(1e-14));
    CHECK(m.A[1] == Catch::Approx(2.0 / 15.0).margin(1e-14));

    // Monte-Carlo sanity at reduced size (the acceptance suite runs 1e6)
    CounterRng rng(600, 3);
    const long n = 200000;
    double b11 = 0, b12 = 0, b22 = 0;
    for (long i = 0; i < n; ++i) {
        const double y = gpd_quantile(rng.next_uniform(), GpdParams{1.0, 1.0});
        const auto g = g_vec(y, 1.0, 1.0, -0.5);
        b11 += g[0] * g[0];
        b12 += g[0] * g[1];
        b22 += g[1] * g[1];
    }
    CHECK(b11 / n == Catch::Approx(m.B.a11).epsilon(0.03));
    CHECK(b12 / n == Catch::Approx(m.B.a12).epsilon(0.03));
    CHECK(b22 / n == Catch::Approx(m.B.a22).epsilon(0.03));
}

TEST_CASE("null distribution of the ratio is approximately chi-square(2)") {
    const int reps = 300;
    const long k = 300;
    std::vector<double> ls;
    ls.reserve(reps);
    for (int rep = 0; rep < reps; ++rep) {
        CounterRng rng(1900, static_cast<std::uint64_t>(rep));
        auto data = sample(ModelSpec::parse("gpd:1,1"), k, rng);
        const double l = el_ratio(as_excesses(data), 1.0, 1.0, -0.5);
        REQUIRE(std::isfinite(l));
        ls.push_back(l);
    }
    std::sort(ls.begin(), ls.end());
    double ks = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < ls.size(); ++i) {
        const double F = 1.0 - std::exp(-0.5 * ls[i]);
        ks = std::max(ks, std::fabs(F - static_cast<double>(i) / reps));
        ks = std::max(ks, std::fabs(F - static_cast<double>(i + 1) / reps));
        mean += ls[i];
    }
    mean /= reps;
    CHECK(ks < 0.12);
    CHECK(mean == Catch::Approx(2.0).margin(0.5));
}
