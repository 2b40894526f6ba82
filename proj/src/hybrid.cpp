#include "metde/hybrid.hpp"

#include <chrono>
#include <stdexcept>

namespace metde {

void HybridConfig::check() const
{
    DeConfig::check();
    if (max_full_de_iterations < 0 || max_full_de_iterations > max_iterations)
        throw std::invalid_argument("max_full_de_iterations must lie in [0, max_iterations]");
    if (!(kl_target >= 0)) throw std::invalid_argument("kl_target must be non-negative");
    if (kl_check_interval < 1) throw std::invalid_argument("kl_check_interval must be at least 1");
}

RunResult run_hybrid(const MetEnsemble& e, double sigma_n, const HybridConfig& cfg, const DeObserver& observe)
{
    using Clock = std::chrono::steady_clock;
    cfg.check();
    auto t0 = Clock::now();
    auto since = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };
    RunResult res;
    auto p = edge_perspective(e);
    MeanState s = initial_mean_state(e);
    int it = 0;
    if (cfg.max_full_de_iterations > 0) {
        FullDeStepper st(e, sigma_n, cfg);
        StallMonitor stall(cfg.stall_window, cfg.stall_rel);
        while (it < cfg.max_full_de_iterations) {
            ++it;
            IterRecord r = st.step(it % cfg.kl_check_interval == 0);
            r.elapsed = since();
            double ber = r.ber, kl = r.kl;
            if (observe) observe(st.state(), r);
            res.trace.iters.push_back(std::move(r));
            if (st.converged()) {
                res.converged = true;
                res.seconds = since();
                return res;
            }
            if (stall.update(ber)) {
                res.seconds = since();
                return res;
            }
            // NaN (KL undefined or not evaluated) never triggers the switch.
            if (kl < cfg.kl_target) break;
        }
        s = st.project();
        if (cfg.reseed == Reseed::check_first) s.m_u = cn_means(e, p, s.m_v);
    }
    res.trace.switch_iteration = it;
    res.converged = continue_approx1(e, p, s, sigma_n, cfg, it + 1, res.trace, since());
    res.seconds = since();
    return res;
}

} // namespace metde
