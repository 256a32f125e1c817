#pragma once

// Parametric heavy-tailed models (GPD, Frechet, Burr), inverse-CDF sampling,
// and extraction of excesses over an order-statistic threshold.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "elcr/errors.hpp"
#include "elcr/rng.hpp"

namespace elcr {

// Shape/scale pair of the generalized Pareto distribution. The library works
// in the heavy-tail regime (gamma > 0); maximum-likelihood fits may carry a
// non-positive shape, so positivity is enforced at the consumers that need it.
struct GpdParams {
    double gamma = 0.0;
    double sigma = 1.0;
};

inline void require_gpd_domain(const GpdParams& p, const char* where) {
    if (!(p.sigma > 0.0)) throw std::domain_error(std::string(where) + ": sigma must be positive");
    if (!(p.gamma > 0.0)) throw std::domain_error(std::string(where) + ": gamma must be positive");
}

inline double gpd_quantile(double u, const GpdParams& p) {
    require_gpd_domain(p, "gpd_quantile");
    if (!(u > 0.0) || !(u < 1.0)) throw std::domain_error("gpd_quantile: u must be in (0,1)");
    return p.sigma * std::expm1(-p.gamma * std::log1p(-u)) / p.gamma;
}

inline double gpd_cdf(double x, const GpdParams& p) {
    require_gpd_domain(p, "gpd_cdf");
    if (x <= 0.0) return 0.0;
    return -std::expm1(-std::log1p(p.gamma * x / p.sigma) / p.gamma);
}

enum class Family { Gpd, Frechet, Burr };

// A sampling model: gpd:gamma,sigma | frechet:gamma | burr:lambda,tau.
// The Burr expression (1+x^tau)^(-1/lambda) is decreasing in x, so it is
// used as the survival function.
struct ModelSpec {
    Family family = Family::Gpd;
    double p1 = 1.0; // gpd gamma | frechet gamma | burr lambda
    double p2 = 1.0; // gpd sigma | unused       | burr tau

    double tail_index() const {
        switch (family) {
            case Family::Gpd: return p1;
            case Family::Frechet: return p1;
            case Family::Burr: return 1.0 / (p1 * p2);
        }
        return p1;
    }

    double quantile(double u) const {
        switch (family) {
            case Family::Gpd: return gpd_quantile(u, GpdParams{p1, p2});
            case Family::Frechet: return std::pow(-std::log(u), -p1);
            case Family::Burr: return std::pow(std::expm1(-p1 * std::log1p(-u)), 1.0 / p2);
        }
        return 0.0;
    }

    double cdf(double x) const {
        if (x <= 0.0) return 0.0;
        switch (family) {
            case Family::Gpd: return gpd_cdf(x, GpdParams{p1, p2});
            case Family::Frechet: return std::exp(-std::pow(x, -1.0 / p1));
            case Family::Burr: return -std::expm1(-std::log1p(std::pow(x, p2)) / p1);
        }
        return 0.0;
    }

    double survival(double x) const {
        if (x <= 0.0) return 1.0;
        switch (family) {
            case Family::Gpd: return std::exp(-std::log1p(p1 * x / p2) / p1);
            case Family::Frechet: return -std::expm1(-std::pow(x, -1.0 / p1));
            case Family::Burr: return std::exp(-std::log1p(std::pow(x, p2)) / p1);
        }
        return 0.0;
    }

    static ModelSpec parse(std::string_view s);
    std::string to_string() const;
};

inline ModelSpec ModelSpec::parse(std::string_view s) {
    const auto colon = s.find(':');
    if (colon == std::string_view::npos)
        throw std::invalid_argument("model: expected family:params, e.g. burr:1,1");
    const std::string_view fam = s.substr(0, colon);
    const std::string rest(s.substr(colon + 1));
    double a = 0.0, b = 0.0;
    const auto comma = rest.find(',');
    try {
        if (comma == std::string::npos) {
            std::size_t pos = 0;
            a = std::stod(rest, &pos);
            if (pos != rest.size()) throw std::invalid_argument("trailing characters");
        } else {
            std::size_t pos = 0;
            a = std::stod(rest.substr(0, comma), &pos);
            if (pos != comma) throw std::invalid_argument("trailing characters");
            const std::string second = rest.substr(comma + 1);
            b = std::stod(second, &pos);
            if (pos != second.size()) throw std::invalid_argument("trailing characters");
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("model: cannot parse parameters in '" + std::string(s) + "'");
    }
    ModelSpec m;
    if (fam == "gpd") {
        if (comma == std::string::npos) throw std::invalid_argument("model: gpd needs gamma,sigma");
        m = ModelSpec{Family::Gpd, a, b};
    } else if (fam == "frechet") {
        if (comma != std::string::npos) throw std::invalid_argument("model: frechet takes one parameter");
        m = ModelSpec{Family::Frechet, a, 0.0};
    } else if (fam == "burr") {
        if (comma == std::string::npos) throw std::invalid_argument("model: burr needs lambda,tau");
        m = ModelSpec{Family::Burr, a, b};
    } else {
        throw std::invalid_argument("model: unknown family '" + std::string(fam) + "'");
    }
    if (!(m.p1 > 0.0) || (m.family != Family::Frechet && !(m.p2 > 0.0)))
        throw std::invalid_argument("model: parameters must be strictly positive");
    return m;
}

inline std::string ModelSpec::to_string() const {
    char buf[64];
    switch (family) {
        case Family::Gpd: std::snprintf(buf, sizeof buf, "gpd:%g,%g", p1, p2); break;
        case Family::Frechet: std::snprintf(buf, sizeof buf, "frechet:%g", p1); break;
        case Family::Burr: std::snprintf(buf, sizeof buf, "burr:%g,%g", p1, p2); break;
    }
    return buf;
}

// i.i.d. draws by inverse transform; bit-identical for a given stream.
inline std::vector<double> sample(const ModelSpec& spec, long n, CounterRng& rng) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& x : out) x = spec.quantile(rng.next_uniform());
    return out;
}

// The excesses over an order-statistic threshold for one analysis:
// threshold u, the k excesses sorted ascending, and the original sample size.
struct ExcessSample {
    double threshold = 0.0;
    std::vector<double> excesses; // ascending, all > 0
    long n_total = 0;

    long k() const { return static_cast<long>(excesses.size()); }
};

// Threshold = (k+1)-th largest value, excesses = the k largest minus it.
// The mechanics work for any k >= 1; the statistical consumers require k >= 5.
inline ExcessSample extract_excesses(std::span<const double> data, long k) {
    const long n = static_cast<long>(data.size());
    if (k < 1 || k >= n) throw std::invalid_argument("extract_excesses: need 1 <= k < n");
    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    const double u = sorted[static_cast<std::size_t>(n - k - 1)];
    ExcessSample s;
    s.threshold = u;
    s.n_total = n;
    s.excesses.reserve(static_cast<std::size_t>(k));
    for (long i = n - k; i < n; ++i) s.excesses.push_back(sorted[static_cast<std::size_t>(i)] - u);
    if (!(s.excesses.front() > 0.0))
        throw estimation_error("extract_excesses: ties at the threshold leave non-positive excesses");
    return s;
}

} // namespace elcr
