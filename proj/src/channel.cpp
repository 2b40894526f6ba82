#include "metde/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace metde {

double channel_llr_mean(const ChannelSpec& c)
{
    if (!(c.sigma_n > 0)) throw std::invalid_argument("sigma_n must be positive");
    return c.punctured ? 0.0 : 2.0 / (c.sigma_n * c.sigma_n);
}

QuantizedDensity channel_llr_density(const ChannelSpec& c, const Grid& g)
{
    double m = channel_llr_mean(c);
    if (c.punctured) return delta_at_zero(g);
    return gaussian_density(m, 2 * m, g);
}

double sigma_from_ebn0_db(double ebn0_db, double rate)
{
    if (!(rate > 0)) throw std::invalid_argument("rate must be positive");
    return 1.0 / std::sqrt(2.0 * rate * std::pow(10.0, ebn0_db / 10.0));
}

} // namespace metde
