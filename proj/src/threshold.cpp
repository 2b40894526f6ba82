#include "metde/threshold.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace metde {

RunResult run_method(const MetEnsemble& e, double sigma_n, Method method, const HybridConfig& cfg)
{
    switch (method) {
    case Method::full: return run_full_de(e, sigma_n, cfg);
    case Method::hybrid: return run_hybrid(e, sigma_n, cfg);
    default: return run_approx(e, sigma_n, method, cfg);
    }
}

double sigma_shannon(double rate)
{
    if (!(rate > 0 && rate < 1)) throw std::invalid_argument("rate must lie in (0, 1)");
    // capacity is increasing in m = 2 / sigma^2
    const auto& tab = CapacityTable::get();
    return std::sqrt(2.0 / tab.capacity_inv(rate));
}

ThresholdResult find_threshold(const MetEnsemble& e, Method method, const HybridConfig& cfg, SearchSpec search)
{
    using Clock = std::chrono::steady_clock;
    if (method == Method::hybrid) cfg.check();
    else cfg.DeConfig::check();
    if (!(search.tol > 0)) throw std::invalid_argument("tol must be positive");
    auto t0 = Clock::now();
    ThresholdResult res;
    res.method = method;
    double lo = search.sigma_lo, hi = search.sigma_hi;
    if (lo <= 0 || hi <= 0) {
        double s = sigma_shannon(rate(e));
        if (lo <= 0) lo = 0.5 * s;
        if (hi <= 0) hi = 1.2 * s;
    }
    if (!(lo < hi)) throw std::invalid_argument("sigma_lo must be below sigma_hi");

    auto probe = [&](double sigma) {
        auto r = run_method(e, sigma, method, cfg);
        res.probes.push_back({sigma, r.converged, (int)r.trace.iters.size(), r.seconds});
        return r.converged;
    };

    int n = 0;
    while (!probe(lo)) {
        if (++n > search.max_expand) throw BracketError("no converging noise level found down to " + std::to_string(lo));
        hi = lo;
        lo /= 2;
    }
    n = 0;
    while (probe(hi)) {
        if (++n > search.max_expand) throw BracketError("still converging at noise level " + std::to_string(hi));
        lo = hi;
        hi *= 2;
    }
    while (hi - lo > search.tol) {
        double mid = 0.5 * (lo + hi);
        if (probe(mid)) lo = mid;
        else hi = mid;
        ++res.bisection_steps;
    }
    res.sigma_star = lo;
    res.sigma_lo = lo;
    res.sigma_hi = hi;
    res.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

double threshold_error(double sigma_app, double sigma_de)
{
    if (!(sigma_de > 0)) throw std::invalid_argument("sigma_de must be positive");
    return std::abs(1.0 - sigma_app / sigma_de);
}

double cpu_time_gain(double t_de, double t_app)
{
    if (!(t_app > 0)) throw std::invalid_argument("t_app must be positive");
    return std::abs(t_de / t_app);
}

} // namespace metde
