#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "metde/ensemble.hpp"

namespace metde {

// Per edge-type message samples; +-infinity is stored as +-kMcInf.
struct SampleBank {
    std::vector<std::vector<double>> v; // variable-to-check
    std::vector<std::vector<double>> u; // check-to-variable
    std::uint64_t seed = 0;
};

inline constexpr double kMcInf = 500.0;

struct McPoint {
    int iteration;
    double ber;
    double se; // sqrt(p (1 - p) / N)
};

// Called after each iteration with the banks of that iteration; the
// variable banks hold the messages computed from the previous check banks.
using McObserver = std::function<void(int iteration, const SampleBank&)>;

// Sample-wise density evolution. Iteration l reports the posterior BER from
// the check messages of iteration l-1, matching run_full_de.
std::vector<McPoint> mc_de_run(const MetEnsemble& e, double sigma_n, int iterations, int samples,
                               std::uint64_t seed, const McObserver& observe = {});

// Splits `samples` over `replicas` independent populations seeded seed,
// seed+1, ... and reports the pooled BER. The error of one population carries
// into the next iteration and grows near threshold, so the binomial se of a
// single run understates it; here se is the spread of the replica means,
// with the relative error kept non-decreasing over iterations.
std::vector<McPoint> mc_de_replicated(const MetEnsemble& e, double sigma_n, int iterations, int samples,
                                      int replicas, std::uint64_t seed);

// Tanh rule on magnitudes in the log domain: -ln tanh(x/2), an involution.
double log_tanh_map(double x);

} // namespace metde
