#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metde/threshold.hpp"

namespace metde {

// coef = constant + sum_p k_p * value_p
struct AffineCoef {
    double constant = 0.0;
    std::map<std::string, double> terms;

    double eval(const std::map<std::string, double>& v) const;
};

struct TemplateVn {
    AffineCoef coef;
    std::vector<int> b, d;
};

struct TemplateCn {
    AffineCoef coef;
    std::vector<int> d;
};

struct EnsembleTemplate {
    int m_e = 0, m_r = 1;
    std::vector<TemplateVn> vn;
    std::vector<TemplateCn> cn;
    std::vector<std::string> free;
    std::map<std::string, std::pair<double, double>> bounds;
    std::map<std::string, double> init;
    double target_rate = 0.0; // 0 disables the rate check
    // Project the check-side coefficients onto socket balance and the target
    // rate (least change) after evaluating the affine expressions.
    bool repair = false;

    // Throws ValidationError with the reason when the point is infeasible.
    MetEnsemble instantiate(const std::map<std::string, double>& values) const;
};

EnsembleTemplate parse_template(const std::string& text);
EnsembleTemplate load_template(const std::string& path);

// Every variable coefficient becomes a free parameter L1, L2, ...; the check
// side follows by repair. Bounds default to [0, 1].
EnsembleTemplate template_from_ensemble(const MetEnsemble& e);

struct SweepPoint {
    double value = 0.0;
    bool valid = false;
    double sigma_star = 0.0;
    double seconds = 0.0;
    std::string reason; // why the point was skipped
};

std::vector<SweepPoint> sweep_parameter(const EnsembleTemplate& t, const std::string& param,
                                        const std::vector<double>& grid, Method method, const HybridConfig& cfg,
                                        const SearchSpec& search = {}, int jobs = 1);

struct OptimizeResult {
    MetEnsemble best;
    std::map<std::string, double> params;
    double sigma_star = 0.0;
    int evaluations = 0;
    int accepted = 0;
};

// Seeded randomized local search with decaying step. Each evaluation first
// probes just above the incumbent, so rejected candidates cost one DE run.
OptimizeResult optimize_ensemble(const EnsembleTemplate& t, Method method, const HybridConfig& cfg, int budget,
                                 std::uint64_t seed, const SearchSpec& search = {});

} // namespace metde
