#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "elcr/mle.hpp"
#include "elcr/models.hpp"
#include "elcr/rng.hpp"
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

} // namespace

TEST_CASE("log likelihood anchors") {
    CHECK(gpd_loglik(GpdParams{1.0, 1.0}, std::vector<double>{1.0}) ==
          Catch::Approx(-2.0 * std::log(2.0)).margin(1e-13));
    CHECK(gpd_loglik(GpdParams{1.0, 1.0}, std::vector<double>{1.0, 3.0}) ==
          Catch::Approx(-2.0 * std::log(2.0) - 2.0 * std::log(4.0)).margin(1e-13));
    CHECK_THROWS_AS(gpd_loglik(GpdParams{-2.0, 1.0}, std::vector<double>{1.0}), std::domain_error);
}

TEST_CASE("fit on a population quantile grid recovers the parameters") {
    std::vector<double> y;
    const int k = 500;
    for (int i = 1; i <= k; ++i)
        y.push_back(gpd_quantile(static_cast<double>(i) / (k + 1), GpdParams{1.0, 1.0}));
    const MleFit fit = mle_fit(as_excesses(y));
    CHECK(fit.converged);
    CHECK(std::fabs(fit.params.gamma - 1.0) < 0.05);
    CHECK(std::fabs(fit.params.sigma - 1.0) < 0.05);
    CHECK(fit.grad_norm <= 1e-8);
}

TEST_CASE("likelihood at the fit dominates grid, start and truth") {
    CounterRng rng(5150, 0);
    auto data = sample(ModelSpec::parse("gpd:1,1"), 10000, rng);
    const ExcessSample s = as_excesses(data);
    const MleFit fit = mle_fit(s);
    REQUIRE(fit.converged);
    CHECK(std::fabs(fit.params.gamma - 1.0) < 0.1);
    CHECK(std::fabs(fit.params.sigma - 1.0) < 0.1);

    // coarse grid refinement oracle around the truth
    double best = -std::numeric_limits<double>::infinity();
    for (double g = 0.6; g <= 1.4; g += 0.02)
        for (double sg = 0.6; sg <= 1.4; sg += 0.02)
            best = std::max(best, gpd_loglik(GpdParams{g, sg}, s.excesses));
    CHECK(fit.loglik >= best);

    const ZhangFit zf = zhang_fit(s, -0.5);
    CHECK(fit.loglik >= gpd_loglik(zf.params, s.excesses) - 1e-9);
    CHECK(fit.loglik >= gpd_loglik(GpdParams{1.0, 1.0}, s.excesses));
}

TEST_CASE("scale equivariance of the ML fit") {
    CounterRng rng(31, 2);
    auto data = sample(ModelSpec::parse("gpd:0.5,2"), 800, rng);
    const MleFit base = mle_fit(as_excesses(data));
    REQUIRE(base.converged);
    const double c = 7.3;
    std::vector<double> scaled;
    for (const double v : data) scaled.push_back(c * v);
    const MleFit fit = mle_fit(as_excesses(scaled));
    REQUIRE(fit.converged);
    CHECK(fit.params.gamma == Catch::Approx(base.params.gamma).margin(1e-6));
    CHECK(fit.params.sigma == Catch::Approx(c * base.params.sigma).epsilon(1e-6));
}

TEST_CASE("consistency at gamma = 1/4") {
    CounterRng rng(7241, 3);
    auto data = sample(ModelSpec::parse("gpd:0.25,1"), 4000, rng);
    const MleFit fit = mle_fit(as_excesses(data));
    REQUIRE(fit.converged);
    const double sd = 1.0 + 0.25; // sqrt of the (1,1) entry of the ML covariance
    CHECK(std::fabs(fit.params.gamma - 0.25) <= 5.0 * sd / std::sqrt(4000.0));
}

TEST_CASE("ML Wald covariance") {
    const Sym2 c1 = mle_cov(1.0);
    CHECK(c1.a11 == Catch::Approx(4.0).margin(1e-14));
    CHECK(c1.a12 == Catch::Approx(-2.0).margin(1e-14));
    CHECK(c1.a22 == Catch::Approx(4.0).margin(1e-14));
    const Sym2 c0 = mle_cov(0.0);
    CHECK(c0.a11 == Catch::Approx(1.0).margin(1e-14));
    CHECK(c0.a12 == Catch::Approx(-1.0).margin(1e-14));
    CHECK(c0.a22 == Catch::Approx(2.0).margin(1e-14));
    for (const double g : {-0.4, -0.1, 0.0, 0.5, 1.0, 3.0}) {
        const Sym2 m = mle_cov(g);
        // det = (1+g)^2 (2(1+g) - 1) > 0 above -1/2
        CHECK(m.positive_definite());
        CHECK(m.det() == Catch::Approx((1 + g) * (1 + g) * (2 * (1 + g) - 1)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(mle_cov(-0.5), std::domain_error);
}
