// Command-line front end: fit, region, ci, coverage, calibrate.
// Exit codes: 0 success, 1 I/O error, 2 estimation failure, 3 open-ended
// interval, 64 usage error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "elcr/el_core.hpp"
#include "elcr/errors.hpp"
#include "elcr/mle.hpp"
#include "elcr/models.hpp"
#include "elcr/profile_ci.hpp"
#include "elcr/regions.hpp"
#include "elcr/rng.hpp"
#include "elcr/sim.hpp"
#include "elcr/statfun.hpp"
#include "elcr/zhang.hpp"

namespace {

struct io_error : std::runtime_error {
    explicit io_error(const std::string& w) : std::runtime_error(w) {}
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// Newline-delimited decimal numbers; '#' comments ignored, one optional
// non-numeric header line tolerated.
std::vector<double> read_data(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open input file '" + path + "'");
    std::vector<double> out;
    std::string line;
    long lineno = 0;
    bool seen_content = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t e = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(b, e - b + 1);
        if (tok[0] == '#') continue;
        char* endp = nullptr;
        const double v = std::strtod(tok.c_str(), &endp);
        const bool parsed = endp == tok.c_str() + tok.size();
        if (!parsed) {
            if (!seen_content) { // header line
                seen_content = true;
                continue;
            }
            throw io_error(path + ": line " + std::to_string(lineno) + ": not a number: '" + tok + "'");
        }
        if (!std::isfinite(v))
            throw io_error(path + ": line " + std::to_string(lineno) + ": non-finite value");
        seen_content = true;
        out.push_back(v);
    }
    if (out.empty()) throw io_error(path + ": no numeric data");
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::fputs(text.c_str(), stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open output file '" + path + "'");
    out << text;
    if (!out) throw io_error("error writing '" + path + "'");
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("GPD_ELCR_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

std::vector<long> parse_k_list(const std::string& s) {
    std::vector<long> ks;
    const auto colon1 = s.find(':');
    if (colon1 != std::string::npos) {
        const auto colon2 = s.find(':', colon1 + 1);
        if (colon2 == std::string::npos)
            throw std::invalid_argument("--k range must be lo:hi:step");
        const long lo = std::stol(s.substr(0, colon1));
        const long hi = std::stol(s.substr(colon1 + 1, colon2 - colon1 - 1));
        const long step = std::stol(s.substr(colon2 + 1));
        if (step < 1 || lo > hi) throw std::invalid_argument("--k range must be lo:hi:step with step >= 1");
        for (long k = lo; k <= hi; k += step) ks.push_back(k);
        return ks;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) ks.push_back(std::stol(tok));
    if (ks.empty()) throw std::invalid_argument("--k: empty list");
    return ks;
}

elcr::Calibration parse_calibration(const std::string& s) {
    if (s == "chi2") return elcr::Calibration::Chi2;
    if (s == "fisher") return elcr::Calibration::Fisher;
    throw std::invalid_argument("--calibration must be chi2 or fisher");
}

std::string region_csv(const elcr::ConfidenceRegion& region) {
    std::string out = "method,level,critical_value\n";
    out += std::string(elcr::to_string(region.method)) + "," + fmt(region.level) + "," +
           fmt(region.critical_value) + "\n";
    out += "polyline_id,vertex_id,gamma,sigma\n";
    for (std::size_t p = 0; p < region.boundary.size(); ++p) {
        const auto& pl = region.boundary[p];
        for (std::size_t v = 0; v < pl.pts.size(); ++v)
            out += std::to_string(p) + "," + std::to_string(v) + "," + fmt(pl.pts[v][0]) + "," +
                   fmt(pl.pts[v][1]) + "\n";
    }
    return out;
}

struct FitOptions {
    std::string input;
    long k = 0;
    double r = -0.5;
    bool with_mle = false;
};

void print_fit_summary(const elcr::ZhangFit& fit, const elcr::ExcessSample& ex) {
    std::printf("gamma %s\n", fmt(fit.params.gamma).c_str());
    std::printf("sigma %s\n", fmt(fit.params.sigma).c_str());
    std::printf("b %s\n", fmt(fit.b).c_str());
    std::printf("threshold %s\n", fmt(ex.threshold).c_str());
    std::printf("k %ld\n", ex.k());
    std::printf("n %ld\n", ex.n_total);
}

int cmd_fit(const FitOptions& opt) {
    const std::vector<double> data = read_data(opt.input);
    const elcr::ExcessSample ex = elcr::extract_excesses(data, opt.k);
    const elcr::ZhangFit fit = elcr::zhang_fit(ex, opt.r);
    print_fit_summary(fit, ex);
    if (opt.with_mle) {
        const elcr::MleFit mf = elcr::mle_fit(ex);
        std::printf("mle_gamma %s\n", fmt(mf.params.gamma).c_str());
        std::printf("mle_sigma %s\n", fmt(mf.params.sigma).c_str());
        std::printf("mle_loglik %s\n", fmt(mf.loglik).c_str());
        std::printf("mle_converged %d\n", mf.converged ? 1 : 0);
        std::printf("mle_iterations %d\n", mf.iterations);
    }
    return 0;
}

struct RegionOptions {
    std::string input;
    long k = 0;
    double r = -0.5;
    std::string method = "el";
    double level = 0.95;
    std::string calibration = "fisher";
    std::string grid;
    int points = 256;
    std::string dump_grid;
    std::string output;
    int threads = 0;
};

elcr::GridSpec parse_grid(const std::string& s) {
    // glo:ghi:n,slo:shi:n
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("--grid must be glo:ghi:n,slo:shi:n");
    auto parse_axis = [](const std::string& a, double& lo, double& hi, int& n) {
        const auto c1 = a.find(':');
        const auto c2 = a.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::invalid_argument("--grid axis must be lo:hi:n");
        lo = std::stod(a.substr(0, c1));
        hi = std::stod(a.substr(c1 + 1, c2 - c1 - 1));
        n = std::stoi(a.substr(c2 + 1));
    };
    elcr::GridSpec g;
    parse_axis(s.substr(0, comma), g.gamma_lo, g.gamma_hi, g.n_gamma);
    parse_axis(s.substr(comma + 1), g.sigma_lo, g.sigma_hi, g.n_sigma);
    g.validate();
    return g;
}

int cmd_region(const RegionOptions& opt) {
    const std::vector<double> data = read_data(opt.input);
    const elcr::ExcessSample ex = elcr::extract_excesses(data, opt.k);
    const elcr::ZhangFit fit = elcr::zhang_fit(ex, opt.r);
    const elcr::Probability level(opt.level);
    const int threads = resolve_threads(opt.threads);

    elcr::ConfidenceRegion region;
    if (opt.method == "el") {
        elcr::GridSpec grid =
            opt.grid.empty() ? elcr::default_grid(fit, ex.k()) : parse_grid(opt.grid);
        region = elcr::el_region(ex, opt.r, level, grid, parse_calibration(opt.calibration), threads);
    } else if (opt.method == "zhang") {
        region = elcr::wald_region(fit.params, elcr::sigma_matrix(fit.params.gamma, opt.r), ex.k(),
                                   level, elcr::RegionMethod::ZhangWald, opt.points);
    } else if (opt.method == "ml") {
        const elcr::MleFit mf = elcr::mle_fit(ex);
        if (!mf.converged) throw elcr::estimation_error("maximum-likelihood fit did not converge");
        region = elcr::wald_region(mf.params, elcr::mle_cov(mf.params.gamma), ex.k(), level,
                                   elcr::RegionMethod::MlWald, opt.points);
    } else {
        throw std::invalid_argument("--method must be el, zhang or ml");
    }

    if (!opt.dump_grid.empty()) {
        if (opt.method != "el") throw std::invalid_argument("--dump-grid requires --method el");
        std::string out = "gamma,sigma,stat\n";
        const auto& g = region.grid;
        for (int i = 0; i < g.n_gamma; ++i) {
            const double gamma =
                g.gamma_lo + (g.gamma_hi - g.gamma_lo) * static_cast<double>(i) / (g.n_gamma - 1);
            for (int j = 0; j < g.n_sigma; ++j) {
                const double sigma =
                    g.sigma_lo + (g.sigma_hi - g.sigma_lo) * static_cast<double>(j) / (g.n_sigma - 1);
                out += fmt(gamma) + "," + fmt(sigma) + "," +
                       fmt(region.stat[static_cast<std::size_t>(i) * g.n_sigma + j]) + "\n";
            }
        }
        write_text(opt.dump_grid, out);
    }

    const std::string csv = region_csv(region);
    if (opt.output.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_text(opt.output, csv);
        std::printf("method %s\n", opt.method.c_str());
        print_fit_summary(fit, ex);
        std::printf("critical_value %s\n", fmt(region.critical_value).c_str());
        std::printf("clipped %d\n", region.clipped ? 1 : 0);
        std::size_t nv = 0;
        for (const auto& pl : region.boundary) nv += pl.pts.size();
        std::printf("vertices %zu\n", nv);
    }
    return 0;
}

struct CiOptions {
    std::string input;
    long k = 0;
    double r = -0.5;
    std::string method = "elw";
    double level = 0.95;
    std::string calibration = "chi2";
    long calib_reps = 10000;
    std::uint64_t seed = 1;
};

int cmd_ci(const CiOptions& opt) {
    const std::vector<double> data = read_data(opt.input);
    const elcr::Probability level(opt.level);
    elcr::ConfidenceInterval ci;
    if (opt.method == "elw") {
        const elcr::ExcessSample ex = elcr::extract_excesses(data, opt.k);
        ci = elcr::elw_ci(ex, opt.r, level, parse_calibration(opt.calibration));
    } else if (opt.method == "elp") {
        ci = elcr::elp_ci(data, opt.k, level, opt.calib_reps,
                          elcr::CounterRng(opt.seed, 0x454C50));
    } else if (opt.method == "zhang") {
        const elcr::ExcessSample ex = elcr::extract_excesses(data, opt.k);
        ci = elcr::zhang_wald_ci(ex, opt.r, level);
    } else {
        throw std::invalid_argument("--method must be elw, elp or zhang");
    }
    std::printf("method %s\n", elcr::to_string(ci.method));
    std::printf("level %s\n", fmt(ci.level).c_str());
    if (opt.method == "elw")
        std::printf("calibration %s\n", opt.calibration.c_str());
    else if (opt.method == "elp")
        std::printf("calibration exp reps=%ld seed=%llu\n", opt.calib_reps,
                    static_cast<unsigned long long>(opt.seed));
    else
        std::printf("calibration chi2\n");
    std::printf("critical_value %s\n", fmt(ci.critical_value).c_str());
    std::printf("lo %s\n", fmt(ci.lo).c_str());
    std::printf("hi %s\n", fmt(ci.hi).c_str());
    std::printf("width %s\n", fmt(ci.hi - ci.lo).c_str());
    std::printf("converged %d\n", ci.converged ? 1 : 0);
    std::printf("open_lo %d\n", ci.open_lo ? 1 : 0);
    std::printf("open_hi %d\n", ci.open_hi ? 1 : 0);
    return (ci.open_lo || ci.open_hi) ? 3 : 0;
}

struct CoverageOptions {
    std::string model = "burr:1,1";
    long n = 1000;
    long reps = 2000;
    std::string k = "100:300:100";
    std::string methods = "el,zhang,ml";
    double level = 0.95;
    std::string calibration = "fisher";
    double r = -0.5;
    std::uint64_t seed = 1;
    int threads = 0;
    long calib_reps = 10000;
    std::string output;
};

int cmd_coverage(const CoverageOptions& opt) {
    elcr::CoverageConfig cfg;
    cfg.model = elcr::ModelSpec::parse(opt.model);
    cfg.n = opt.n;
    cfg.reps = opt.reps;
    cfg.ks = parse_k_list(opt.k);
    cfg.methods.clear();
    std::stringstream ss(opt.methods);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.methods.push_back(tok);
    if (cfg.methods.empty()) throw std::invalid_argument("--methods: empty list");
    cfg.level = opt.level;
    cfg.calibration = parse_calibration(opt.calibration);
    cfg.r = opt.r;
    cfg.seed = opt.seed;
    cfg.threads = resolve_threads(opt.threads);
    cfg.elp_calib_reps = opt.calib_reps;
    if (cfg.reps < 1) throw std::invalid_argument("--reps must be >= 1");
    const auto records = elcr::run_coverage(cfg);
    write_text(opt.output, elcr::coverage_csv(records));
    return 0;
}

struct CalibrateOptions {
    long k = 0;
    double level = 0.95;
    int dim = 2;
    bool elp = false;
    long calib_reps = 10000;
    std::uint64_t seed = 1;
};

int cmd_calibrate(const CalibrateOptions& opt) {
    const elcr::Probability level(opt.level);
    std::printf("k %ld\n", opt.k);
    std::printf("level %s\n", fmt(opt.level).c_str());
    std::printf("dim %d\n", opt.dim);
    std::printf("chi2 %s\n", fmt(elcr::chi2_quantile(level, opt.dim)).c_str());
    std::printf("fisher %s\n", fmt(elcr::fisher_critical(opt.k, level, opt.dim)).c_str());
    if (opt.elp) {
        const double c = elcr::elp_critical_value(opt.k, level, opt.calib_reps,
                                                  elcr::CounterRng(opt.seed, 0x454C50));
        std::printf("elp %s\n", fmt(c).c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Empirical-likelihood confidence regions and intervals for "
                 "generalized Pareto tails (peaks over threshold)"};
    app.require_subcommand(1);

    FitOptions fit_opt;
    auto* fit = app.add_subcommand("fit", "Fit the GPD to excesses over an order-statistic threshold");
    fit->add_option("-i,--input", fit_opt.input, "newline-delimited data file")->required();
    fit->add_option("-k,--k", fit_opt.k, "number of upper order statistics")->required();
    fit->add_option("-r,--r", fit_opt.r, "tuning parameter r < 1/2");
    fit->add_flag("--mle", fit_opt.with_mle, "also report the maximum-likelihood fit");

    RegionOptions region_opt;
    auto* region = app.add_subcommand("region", "Confidence region for (gamma, sigma)");
    region->add_option("-i,--input", region_opt.input)->required();
    region->add_option("-k,--k", region_opt.k)->required();
    region->add_option("-r,--r", region_opt.r);
    region->add_option("-m,--method", region_opt.method, "el | zhang | ml");
    region->add_option("-l,--level", region_opt.level);
    region->add_option("--calibration", region_opt.calibration, "chi2 | fisher (el only)");
    region->add_option("--grid", region_opt.grid, "glo:ghi:n,slo:shi:n");
    region->add_option("--points", region_opt.points, "ellipse vertices (wald methods)");
    region->add_option("--dump-grid", region_opt.dump_grid, "write gamma,sigma,stat rows here");
    region->add_option("-o,--output", region_opt.output, "boundary CSV path (default stdout)");
    region->add_option("-t,--threads", region_opt.threads);

    CiOptions ci_opt;
    auto* ci = app.add_subcommand("ci", "Confidence interval for the tail index");
    ci->add_option("-i,--input", ci_opt.input)->required();
    ci->add_option("-k,--k", ci_opt.k)->required();
    ci->add_option("-r,--r", ci_opt.r);
    ci->add_option("-m,--method", ci_opt.method, "elw | elp | zhang");
    ci->add_option("-l,--level", ci_opt.level);
    ci->add_option("--calibration", ci_opt.calibration, "chi2 | fisher (elw only)");
    ci->add_option("--calib-reps", ci_opt.calib_reps, "Monte-Carlo calibration replications (elp)");
    ci->add_option("--seed", ci_opt.seed, "calibration seed (elp)");

    CoverageOptions cov_opt;
    auto* cov = app.add_subcommand("coverage", "Monte-Carlo coverage study");
    cov->add_option("--model", cov_opt.model, "gpd:g,s | frechet:g | burr:l,t")->required();
    cov->add_option("--n", cov_opt.n, "sample size per replication");
    cov->add_option("--reps", cov_opt.reps, "replications");
    cov->add_option("-k,--k", cov_opt.k, "single k, comma list, or lo:hi:step")->required();
    cov->add_option("--methods", cov_opt.methods, "subset of el,zhang,ml,elw,elp,zhang-ci");
    cov->add_option("-l,--level", cov_opt.level);
    cov->add_option("--calibration", cov_opt.calibration, "chi2 | fisher (el, elw)");
    cov->add_option("-r,--r", cov_opt.r);
    cov->add_option("--seed", cov_opt.seed);
    cov->add_option("-t,--threads", cov_opt.threads);
    cov->add_option("--calib-reps", cov_opt.calib_reps, "elp calibration replications");
    cov->add_option("-o,--output", cov_opt.output, "coverage CSV path (default stdout)");

    CalibrateOptions cal_opt;
    auto* cal = app.add_subcommand("calibrate", "Print calibration critical values");
    cal->add_option("-k,--k", cal_opt.k)->required();
    cal->add_option("-l,--level", cal_opt.level);
    cal->add_option("--dim", cal_opt.dim, "1 | 2");
    cal->add_flag("--elp", cal_opt.elp, "also compute the Monte-Carlo exponential calibration");
    cal->add_option("--calib-reps", cal_opt.calib_reps);
    cal->add_option("--seed", cal_opt.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 64;
    }

    try {
        if (*fit) {
            if (fit_opt.k < 5) throw std::invalid_argument("--k must be >= 5");
            if (!(fit_opt.r < 0.5)) throw std::invalid_argument("--r must be < 1/2");
            return cmd_fit(fit_opt);
        }
        if (*region) {
            if (region_opt.k < 5) throw std::invalid_argument("--k must be >= 5");
            if (!(region_opt.r < 0.5)) throw std::invalid_argument("--r must be < 1/2");
            return cmd_region(region_opt);
        }
        if (*ci) {
            if (ci_opt.k < 5) throw std::invalid_argument("--k must be >= 5");
            if (!(ci_opt.r < 0.5)) throw std::invalid_argument("--r must be < 1/2");
            return cmd_ci(ci_opt);
        }
        if (*cov) {
            if (!(cov_opt.r < 0.5)) throw std::invalid_argument("--r must be < 1/2");
            return cmd_coverage(cov_opt);
        }
        if (*cal) return cmd_calibrate(cal_opt);
    } catch (const io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const elcr::estimation_error& e) {
        std::fprintf(stderr, "estimation failure: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 64;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 64;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "estimation failure: %s\n", e.what());
        return 2;
    }
    return 0;
}
