#pragma once

#include "metde/full_de.hpp"

namespace metde {

// How phase 2 is seeded from the projected densities.
enum class Reseed {
    both,       // project m_v and m_u; phase 2 starts with a variable update
    check_first // project m_v only; phase 2 starts with a check update
};

struct HybridConfig : DeConfig {
    int max_full_de_iterations = 100;
    double kl_target = 0.04;
    int kl_check_interval = 5;
    Reseed reseed = Reseed::both;

    void check() const;
};

// observe sees the full-DE phase only.
RunResult run_hybrid(const MetEnsemble& e, double sigma_n, const HybridConfig& cfg, const DeObserver& observe = {});

} // namespace metde
