#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metde/density.hpp"

namespace metde {

enum class BerMode { posterior, edge };

struct DeConfig {
    int max_iterations = 1000;
    double target_ber = 1e-10;
    int grid_points = 9800;
    double llr_max = 50.0;
    int kl_monitor_interval = 5;
    BerMode ber_mode = BerMode::posterior;
    // A run stops as non-converged once the BER changed by less than
    // stall_rel (relative) for stall_window consecutive iterations.
    int stall_window = 50;
    double stall_rel = 1e-6;

    Grid grid() const { return make_grid(grid_points, llr_max); }
    void check() const;
};

enum class Phase { full, gauss };

struct IterRecord {
    int iteration = 0;
    Phase phase = Phase::full;
    double ber = 0.5;                 // convergence functional
    std::vector<double> ber_v;        // per edge-type variable-to-check BER
    std::vector<double> mean_v, var_v;
    std::vector<double> mean_u;
    double kl = NAN;                  // monitored check message, when evaluated
    double elapsed = 0.0;             // seconds since the run started
};

struct DeTrace {
    std::vector<IterRecord> iters;
    int switch_iteration = -1;        // hybrid only; -1 when no switch happened
};

struct RunResult {
    bool converged = false;
    DeTrace trace;
    double seconds = 0.0;
};

// timing adds the elapsed column, which differs between runs.
std::string trace_csv(const DeTrace& t, bool timing = true);

// Tracks the stagnation exit rule.
class StallMonitor {
public:
    StallMonitor(int window, double rel) : window_(window), rel_(rel) {}
    // Returns true when the run should stop.
    bool update(double ber)
    {
        if (have_ && std::abs(ber - prev_) <= rel_ * std::abs(prev_)) {
            if (++count_ >= window_) return true;
        } else {
            count_ = 0;
        }
        prev_ = ber;
        have_ = true;
        return false;
    }

private:
    int window_;
    double rel_;
    int count_ = 0;
    double prev_ = 0;
    bool have_ = false;
};

} // namespace metde
