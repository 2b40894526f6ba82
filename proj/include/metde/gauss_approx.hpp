#pragma once

#include <string>
#include <vector>

#include "metde/channel.hpp"
#include "metde/ensemble.hpp"
#include "metde/trace.hpp"

namespace metde {

inline constexpr double kMeanCap = 1000.0;

double qfunc(double x);
// Inverse of qfunc on (0, 1); qinv(0.5) = 0.
double qinv(double p);

// Direct quadrature of phi(m) = 1 - E[tanh(u/2)], u ~ N(m, 2m).
double phi_direct(double m);
// Direct quadrature of the BI-AWGN capacity in bits and of its complement.
double capacity_direct(double m);
double capacity_complement_direct(double m);

class PhiTable {
public:
    static constexpr int kSize = 10001;
    static constexpr double kMax = 90.0;

    static const PhiTable& get();

    double phi(double m) const;
    double inv(double y) const;
    double m_max() const { return kMax; }
    const std::vector<double>& log_values() const { return lv_; }

private:
    PhiTable();
    double interp(double m) const;
    std::vector<double> lv_; // ln phi at m_k = k h
    double h_;
};

class CapacityTable {
public:
    static constexpr int kSize = 38302;
    static constexpr double kMinMean = 1e-9;
    static constexpr double kTMax = 100.0;

    static const CapacityTable& get();

    double capacity(double m) const;
    double complement(double m) const; // 1 - C(m) without cancellation
    double capacity_inv(double c) const;
    // psi(m) = C^{-1}(1 - C(m)); psi(0) = inf, psi(inf) = 0 (returned as kMeanCap / 0).
    double psi(double m) const;

private:
    CapacityTable();
    double t_of(double m) const;
    double m_of(double t) const;
    double interp(const std::vector<double>& v, double t) const;
    double solve(const std::vector<double>& v, double target, bool increasing) const;
    std::vector<double> lc_, lcc_; // ln C and ln(1 - C) on a uniform grid in t
    double t0_, h_;
};

double phi(double m);
double phi_inv(double y);
double capacity_awgn(double m);
double psi(double m);

struct MeanState {
    std::vector<double> m_v, m_u;
};

struct BerState {
    std::vector<double> p_v, p_u;
};

double class_channel_mean(const VariableNodeClass& c, double sigma_n);

MeanState initial_mean_state(const MetEnsemble& e);
BerState initial_ber_state(const MetEnsemble& e);

// One variable-node then check-node update.
MeanState approx1_iteration(const MetEnsemble& e, const EdgePerspective& p, const MeanState& s, double sigma_n);
BerState approx2_iteration(const MetEnsemble& e, const EdgePerspective& p, const BerState& s, double sigma_n);
MeanState approx3_iteration(const MetEnsemble& e, const EdgePerspective& p, const MeanState& s, double sigma_n);

// Variable-node half only (shared by approx1 and approx3).
std::vector<double> vn_means(const MetEnsemble& e, const EdgePerspective& p, const std::vector<double>& m_u,
                             double sigma_n);

// Check-node half of approx1.
std::vector<double> cn_means(const MetEnsemble& e, const EdgePerspective& p, const std::vector<double>& m_v);

// Posterior BER from check-to-variable means: coef-weighted Q(sqrt(m/2)).
double posterior_ber_means(const MetEnsemble& e, const std::vector<double>& m_u, double sigma_n);

RunResult run_approx(const MetEnsemble& e, double sigma_n, Method method, const DeConfig& cfg);

// Continues approx1 from a given state; iterations are numbered from first_iter.
// Used by the hybrid method after the switch.
bool continue_approx1(const MetEnsemble& e, const EdgePerspective& p, MeanState s, double sigma_n,
                      const DeConfig& cfg, int first_iter, DeTrace& trace, double t_offset);

std::string table_cache_dir();

} // namespace metde
