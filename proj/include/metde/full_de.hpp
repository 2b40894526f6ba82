#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "metde/channel.hpp"
#include "metde/density.hpp"
#include "metde/ensemble.hpp"
#include "metde/gauss_approx.hpp"
#include "metde/kernels.hpp"
#include "metde/trace.hpp"

namespace metde {

struct DensityState {
    std::vector<QuantizedDensity> f_v; // variable-to-check, per edge-type
    std::vector<QuantizedDensity> f_u; // check-to-variable, per edge-type
    int iteration = 0;
};

// Mixture over variable classes of the leave-one-out product on edge-type i.
QuantizedDensity vn_update(const MetEnsemble& e, const EdgePerspective& p, const std::vector<QuantizedDensity>& f_u,
                           double sigma_n, int i);
// Mixture over check classes of the leave-one-out tanh-rule combination on edge-type i.
QuantizedDensity cn_update(const MetEnsemble& e, const EdgePerspective& p, const std::vector<QuantizedDensity>& f_v,
                           int i);

// Check class with the largest total degree (lowest index on ties) and its
// largest-degree edge-type.
struct Monitored {
    int cls = 0;
    int edge = 0;
};
Monitored monitored_message(const MetEnsemble& e);

// KL of the monitored check message computed from the variable messages on a
// magnitude grid wide enough for products far below the LLR resolution.
// NaN when the message mean is not positive.
double monitored_kl(const MetEnsemble& e, const Monitored& mon, const std::vector<QuantizedDensity>& f_v);

// Iteration-by-iteration driver. Each step computes the posterior BER from
// the current check messages, then the variable and check updates.
class FullDeStepper {
public:
    FullDeStepper(const MetEnsemble& e, double sigma_n, const DeConfig& cfg);

    // Runs one iteration. When the BER is already below target the check
    // update is skipped. eval_kl evaluates the monitored-message KL.
    IterRecord step(bool eval_kl);

    const DensityState& state() const { return st_; }
    const QuantizedDensity& monitored() const { return mon_; }
    bool converged() const { return converged_; }

    // Symmetric-Gaussian projection of the current messages (means clamped at 0).
    MeanState project() const;

private:
    const MetEnsemble& e_;
    EdgePerspective p_;
    DeConfig cfg_;
    double sigma_;
    Grid grid_;
    Monitored mon_id_;
    std::shared_ptr<const kernels::XElem> channel_;
    QuantizedDensity mon_;
    DensityState st_;
    bool converged_ = false;
};

// Called after every iteration with the updated state and its record.
using DeObserver = std::function<void(const DensityState&, const IterRecord&)>;

RunResult run_full_de(const MetEnsemble& e, double sigma_n, const DeConfig& cfg, const DeObserver& observe = {});

} // namespace metde
