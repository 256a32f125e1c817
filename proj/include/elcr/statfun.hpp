#pragma once

// Special functions and distribution quantiles used by the calibrations:
// log-gamma, regularized incomplete gamma/beta with inverses, and the
// chi-square, Fisher F and standard normal quantiles built on top of them.
// Everything is self-contained; no external numeric dependency.

#include <cmath>
#include <limits>
#include <stdexcept>

#include "elcr/errors.hpp"

namespace elcr {

// A probability strictly inside (0,1). Confidence levels and quantile
// arguments go through this type so the open-interval check happens once.
class Probability {
public:
    explicit Probability(double v) : v_(v) {
        if (!(v > 0.0) || !(v < 1.0))
            throw std::domain_error("Probability: value must lie strictly in (0,1)");
    }
    double value() const { return v_; }

private:
    double v_;
};

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

// Lanczos approximation, g = 7, 9 coefficients. Relative error below
// 1e-13 over the positive axis, which covers the 1e-12 contract.
inline double ln_gamma_lanczos(double x) {
    static const double c[9] = {
        0.99999999999980993,    676.5203681218851,     -1259.1392167224028,
        771.32342877765313,     -176.61502916214059,   12.507343278686905,
        -0.13857109526572012,   9.9843695780195716e-6, 1.5056327351493116e-7};
    const double z = x - 1.0;
    double a = c[0];
    for (int i = 1; i < 9; ++i) a += c[i] / (z + i);
    const double t = z + 7.5;
    return 0.5 * std::log(2.0 * kPi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

} // namespace detail

inline double ln_gamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("ln_gamma: argument must be positive");
    if (x < 0.5) {
        // reflection keeps the Lanczos sum on x >= 0.5
        return std::log(detail::kPi / std::sin(detail::kPi * x)) - detail::ln_gamma_lanczos(1.0 - x);
    }
    return detail::ln_gamma_lanczos(x);
}

namespace detail {

// Regularized lower incomplete gamma P(a,x), series branch (x < a+1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 10000; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16)
            return sum * std::exp(-x + a * std::log(x) - ln_gamma(a));
    }
    throw std::runtime_error("gamma_p_series: no convergence");
}

// Regularized upper incomplete gamma Q(a,x), continued fraction (x >= a+1),
// modified Lentz.
inline double gamma_q_cf(double a, double x) {
    const double fpmin = std::numeric_limits<double>::min() / 1e-16;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - ln_gamma(a)) * h;
}

} // namespace detail

// P(a,x) = gamma(a,x)/Gamma(a), monotone increasing in x.
inline double gamma_p(double a, double x) {
    if (!(a > 0.0)) throw std::domain_error("gamma_p: a must be positive");
    if (x < 0.0) throw std::domain_error("gamma_p: x must be non-negative");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    const double fpmin = std::numeric_limits<double>::min() / 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= 1e-16) break;
    }
    return h;
}

} // namespace detail

// Regularized incomplete beta I_x(a,b).
inline double inc_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("inc_beta: a,b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        a * std::log(x) + b * std::log1p(-x) - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

inline double chi2_cdf(double x, int df) {
    if (df < 1) throw std::domain_error("chi2_cdf: df must be >= 1");
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * df, 0.5 * x);
}

// Standard normal CDF via erfc (exact complement behaviour in the tails).
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Standard normal quantile: Acklam's rational approximation polished with
// two Halley steps on the erfc-based CDF. Absolute error well below 1e-12.
inline double normal_quantile(Probability p) {
    const double pv = p.value();
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (pv < plow) {
        const double q = std::sqrt(-2.0 * std::log(pv));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (pv > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - pv));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = pv - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    for (int it = 0; it < 2; ++it) {
        const double e = normal_cdf(x) - pv;
        const double u = e * std::sqrt(2.0 * detail::kPi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

namespace detail {

// Safeguarded Newton for a monotone-increasing CDF, with a maintained
// bisection bracket. `lo`/`hi` must already bracket the quantile.
template <class Cdf, class Pdf>
double invert_cdf(const Cdf& cdf, const Pdf& pdf, double p, double x0, double lo, double hi) {
    double x = x0;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = cdf(x) - p;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        const double dens = pdf(x);
        double step = dens > 0.0 ? f / dens : 0.0;
        double xn = x - step;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        const double dx = std::fabs(xn - x);
        x = xn;
        if (std::fabs(f) < 1e-15 && dx < 1e-12 * (1.0 + std::fabs(x))) break;
        if (hi - lo < 1e-15 * (1.0 + std::fabs(x))) break;
    }
    return x;
}

} // namespace detail

// Chi-square quantile, absolute error <= 1e-9; inverts the regularized
// incomplete gamma by safeguarded Newton from a Wilson-Hilferty start.
inline double chi2_quantile(Probability p, int df) {
    if (df < 1) throw std::domain_error("chi2_quantile: df must be >= 1");
    const double pv = p.value();
    const double a = 0.5 * df;
    const double z = normal_quantile(p);
    // Wilson-Hilferty start, clipped into the positive axis
    double x0 = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    if (!(x0 > 0.0)) x0 = 1e-8;
    double hi = std::max(4.0 * x0, df + 50.0 * std::sqrt(2.0 * df));
    while (chi2_cdf(hi, df) < pv) hi *= 2.0;
    const double lga = ln_gamma(a);
    auto cdf = [&](double x) { return chi2_cdf(x, df); };
    auto pdf = [&](double x) {
        if (x <= 0.0) return 0.0;
        return std::exp((a - 1.0) * std::log(0.5 * x) - 0.5 * x - lga) * 0.5;
    };
    return detail::invert_cdf(cdf, pdf, pv, x0, 0.0, hi);
}

inline double f_cdf(double x, int d1, int d2) {
    if (d1 < 1 || d2 < 1) throw std::domain_error("f_cdf: degrees of freedom must be >= 1");
    if (x <= 0.0) return 0.0;
    const double y = d1 * x / (d1 * x + d2);
    return inc_beta(0.5 * d1, 0.5 * d2, y);
}

// Fisher F quantile by inverting the incomplete beta, absolute error <= 1e-9.
inline double f_quantile(Probability p, int d1, int d2) {
    if (d1 < 1 || d2 < 1) throw std::domain_error("f_quantile: degrees of freedom must be >= 1");
    const double pv = p.value();
    const double a = 0.5 * d1, b = 0.5 * d2;
    const double ln_bab = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    auto cdf = [&](double x) { return f_cdf(x, d1, d2); };
    auto pdf = [&](double x) {
        if (x <= 0.0) return 0.0;
        // density of F(d1,d2) in log form
        const double lx = std::log(x);
        const double lf = a * std::log(static_cast<double>(d1) / d2) + (a - 1.0) * lx -
                          (a + b) * std::log1p(d1 * x / d2) - ln_bab;
        return std::exp(lf);
    };
    double hi = 4.0;
    while (cdf(hi) < pv) hi *= 2.0;
    return detail::invert_cdf(cdf, pdf, pv, 1.0, 0.0, hi);
}

// Critical value with the F-based small-sample calibration: for dim == 2 the
// scaled F(2, k-2) quantile, for dim == 1 Owen's q(k-1)/(k-q) rule at q = 1,
// i.e. the plain F(1, k-1) quantile. Always above the chi-square value and
// converging to it as k grows.
inline double fisher_critical(long k, Probability level, int dim) {
    if (dim != 1 && dim != 2) throw std::domain_error("fisher_critical: dim must be 1 or 2");
    if (k < 5 || k <= dim + 2)
        throw std::domain_error("fisher_critical: k too small for the calibration");
    if (dim == 2)
        return (2.0 * (k - 1.0) / (k - 2.0)) * f_quantile(level, 2, static_cast<int>(k) - 2);
    return f_quantile(level, 1, static_cast<int>(k) - 1);
}

} // namespace elcr
