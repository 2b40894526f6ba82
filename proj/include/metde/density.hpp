#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace metde {

// Symmetric LLR grid with 2K+1 points x_j = (j - K) * delta, delta = llr_max / K.
struct Grid {
    int K = 4900;
    double llr_max = 50.0;

    int n() const { return 2 * K + 1; }
    double delta() const { return llr_max / K; }
    double x(int idx) const { return (idx - K) * llr_max / K; }
    bool operator==(const Grid& o) const { return K == o.K && llr_max == o.llr_max; }
};

// points is the nominal quantization count; the grid uses points/2 bins per side.
Grid make_grid(int points = 9800, double llr_max = 50.0);

struct GridMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct QuantizedDensity {
    Grid grid;
    Eigen::ArrayXd mass;   // n() entries
    double sat_neg = 0.0;  // mass below -llr_max
    double sat_pos = 0.0;  // mass above +llr_max

    double total() const { return mass.sum() + sat_neg + sat_pos; }
    double at_zero() const { return mass[grid.K]; }
};

QuantizedDensity gaussian_density(double m, double var, const Grid& g);
QuantizedDensity delta_at_zero(const Grid& g);
QuantizedDensity saturated_density(const Grid& g, bool positive = true);

// Weighted mixture sum_k w_k p_k; weights need not be normalized.
QuantizedDensity mixture(const std::vector<std::pair<double, const QuantizedDensity*>>& parts);

QuantizedDensity convolve(const QuantizedDensity& p, const QuantizedDensity& q);
QuantizedDensity checknode_combine(const QuantizedDensity& p, const QuantizedDensity& q);

double error_probability(const QuantizedDensity& p);
double mean(const QuantizedDensity& p);
double variance(const QuantizedDensity& p);

// D(p || N(m, 2m)) with m = mean(p), both discretized on p's grid including
// the saturation bins. Throws std::domain_error when mean(p) <= 0.
double kl_to_symmetric_gaussian(const QuantizedDensity& p);

// max_j |f(x_j) - e^{x_j} f(-x_j)| over bins with x_j in (0, x_cap], relative
// to the largest mass. Small for symmetric densities.
double symmetry_defect(const QuantizedDensity& p, double x_cap = 10.0);

// Clamps negatives to zero and rescales the total to one.
void normalize(QuantizedDensity& p);

} // namespace metde
