#include "metde/trace.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace metde {

void DeConfig::check() const
{
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
    if (!(target_ber > 0 && target_ber < 0.5)) throw std::invalid_argument("target_ber must lie in (0, 0.5)");
    if (kl_monitor_interval < 1) throw std::invalid_argument("kl interval must be at least 1");
    if (grid_points < 4) throw std::invalid_argument("grid needs at least 4 points");
    if (!(llr_max > 0)) throw std::invalid_argument("llr_max must be positive");
}

std::string trace_csv(const DeTrace& t, bool timing)
{
    std::ostringstream os;
    os << std::setprecision(10);
    std::size_t me = t.iters.empty() ? 0 : t.iters.front().mean_v.size();
    os << "iteration,phase,ber";
    for (std::size_t i = 0; i < me; ++i) os << ",ber_v" << i + 1;
    for (std::size_t i = 0; i < me; ++i) os << ",mean_v" << i + 1;
    for (std::size_t i = 0; i < me; ++i) os << ",var_v" << i + 1;
    for (std::size_t i = 0; i < me; ++i) os << ",mean_u" << i + 1;
    os << ",kl_monitored" << (timing ? ",elapsed_s" : "") << '\n';
    for (const auto& r : t.iters) {
        os << r.iteration << ',' << (r.phase == Phase::full ? "full" : "gauss") << ',' << r.ber;
        for (std::size_t i = 0; i < me; ++i) os << ',' << (i < r.ber_v.size() ? r.ber_v[i] : NAN);
        for (std::size_t i = 0; i < me; ++i) os << ',' << (i < r.mean_v.size() ? r.mean_v[i] : NAN);
        for (std::size_t i = 0; i < me; ++i) os << ',' << (i < r.var_v.size() ? r.var_v[i] : NAN);
        for (std::size_t i = 0; i < me; ++i) os << ',' << (i < r.mean_u.size() ? r.mean_u[i] : NAN);
        os << ',';
        if (!std::isnan(r.kl)) os << r.kl;
        if (timing) os << ',' << r.elapsed;
        os << '\n';
    }
    return os.str();
}

} // namespace metde
