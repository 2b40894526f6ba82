#pragma once

#include "metde/density.hpp"

namespace metde {

// BI-AWGN with unit symbol energy.
struct ChannelSpec {
    double sigma_n = 1.0;
    bool punctured = false;
};

double channel_llr_mean(const ChannelSpec& c);
QuantizedDensity channel_llr_density(const ChannelSpec& c, const Grid& g);

// sigma_n = (2 r 10^{EbN0/10})^{-1/2}
double sigma_from_ebn0_db(double ebn0_db, double rate);

} // namespace metde
