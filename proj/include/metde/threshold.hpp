#pragma once

#include <functional>
#include <vector>

#include "metde/hybrid.hpp"

namespace metde {

struct SearchSpec {
    double sigma_lo = 0.0; // 0 selects the rate-based default
    double sigma_hi = 0.0;
    double tol = 1e-4;
    int max_expand = 4;
};

struct Probe {
    double sigma;
    bool converged;
    int iterations;
    double seconds;
};

struct ThresholdResult {
    double sigma_star = 0.0;
    Method method = Method::full;
    int bisection_steps = 0;
    double sigma_lo = 0.0, sigma_hi = 0.0;
    std::vector<Probe> probes;
    double wall_time = 0.0;
};

struct BracketError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runs one DE of the given method at sigma_n. HybridConfig carries every
// knob; non-hybrid methods use only its DeConfig part.
RunResult run_method(const MetEnsemble& e, double sigma_n, Method method, const HybridConfig& cfg);

// Bisection for the largest converging sigma. The returned sigma_star is the
// last converging probe.
ThresholdResult find_threshold(const MetEnsemble& e, Method method, const HybridConfig& cfg,
                               SearchSpec search = {});

// Noise level where the BI-AWGN capacity equals the rate.
double sigma_shannon(double rate);

double threshold_error(double sigma_app, double sigma_de);
double cpu_time_gain(double t_de, double t_app);

} // namespace metde
