#include "metde/mc_oracle.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace metde {

double log_tanh_map(double x)
{
    if (x <= 0) return INFINITY;
    double t = std::exp(-x);
    if (x > 1) return std::log1p(t) - std::log1p(-t);
    return std::log1p(t) - std::log(-std::expm1(-x));
}

namespace {

double clamp_llr(double x) { return std::max(-kMcInf, std::min(kMcInf, x)); }

std::discrete_distribution<int> class_picker(const std::vector<EdgeWeight>& ws, std::vector<int>& ids)
{
    std::vector<double> w;
    ids.clear();
    for (const auto& x : ws) {
        ids.push_back(x.cls);
        w.push_back(x.w);
    }
    return std::discrete_distribution<int>(w.begin(), w.end());
}

} // namespace

std::vector<McPoint> mc_de_run(const MetEnsemble& e, double sigma_n, int iterations, int samples,
                               std::uint64_t seed, const McObserver& observe)
{
    if (samples < 1) throw std::invalid_argument("sample count must be positive");
    if (iterations < 1) throw std::invalid_argument("iteration count must be positive");
    if (!(sigma_n > 0)) throw std::invalid_argument("sigma_n must be positive");
    const auto p = edge_perspective(e);
    const int me = e.m_e, N = samples;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma_n);
    std::uniform_int_distribution<int> pick(0, N - 1);
    const double scale = 2.0 / (sigma_n * sigma_n);
    // all-zero codeword: y = 1 + z, u0 = 2y / sigma^2
    auto channel = [&](const VariableNodeClass& c) { return c.punctured() ? 0.0 : scale * (1.0 + noise(rng)); };

    SampleBank bank;
    bank.seed = seed;
    bank.v.assign(me, std::vector<double>(N, 0.0));
    bank.u.assign(me, std::vector<double>(N, 0.0));

    std::vector<double> coefs;
    for (const auto& c : e.vn) coefs.push_back(c.coef);
    std::discrete_distribution<int> post_pick(coefs.begin(), coefs.end());
    std::vector<std::vector<int>> lam_ids(me), rho_ids(me);
    std::vector<std::discrete_distribution<int>> lam, rho;
    for (int i = 0; i < me; ++i) {
        lam.push_back(class_picker(p.lambda[i], lam_ids[i]));
        rho.push_back(class_picker(p.rho[i], rho_ids[i]));
    }

    std::vector<McPoint> out;
    for (int it = 1; it <= iterations; ++it) {
        // posterior
        double errs = 0;
        for (int n = 0; n < N; ++n) {
            const auto& c = e.vn[post_pick(rng)];
            double x = channel(c);
            for (int k = 0; k < me; ++k)
                for (int j = 0; j < c.d[k]; ++j) x += bank.u[k][pick(rng)];
            if (x < 0) errs += 1;
            else if (x == 0) errs += 0.5;
        }
        double ber = errs / N;
        out.push_back({it, ber, std::sqrt(ber * (1 - ber) / N)});

        for (int i = 0; i < me; ++i) {
            auto& dst = bank.v[i];
            for (int n = 0; n < N; ++n) {
                const auto& c = e.vn[lam_ids[i][lam[i](rng)]];
                double x = channel(c);
                for (int k = 0; k < me; ++k) {
                    int cnt = c.d[k] - (k == i ? 1 : 0);
                    for (int j = 0; j < cnt; ++j) x += bank.u[k][pick(rng)];
                }
                dst[n] = clamp_llr(x);
            }
        }
        for (int i = 0; i < me; ++i) {
            auto& dst = bank.u[i];
            for (int n = 0; n < N; ++n) {
                const auto& c = e.cn[rho_ids[i][rho[i](rng)]];
                double s = 0;
                bool neg = false, zero = false;
                for (int k = 0; k < me; ++k) {
                    int cnt = c.d[k] - (k == i ? 1 : 0);
                    for (int j = 0; j < cnt; ++j) {
                        double x = bank.v[k][pick(rng)];
                        if (std::abs(x) < 1e-30) zero = true;
                        if (x < 0) neg = !neg;
                        s += log_tanh_map(std::abs(x));
                    }
                }
                double m = zero ? 0.0 : std::min(kMcInf, log_tanh_map(s));
                dst[n] = neg ? -m : m;
            }
        }
        if (observe) observe(it, bank);
    }
    return out;
}

std::vector<McPoint> mc_de_replicated(const MetEnsemble& e, double sigma_n, int iterations, int samples,
                                      int replicas, std::uint64_t seed)
{
    if (replicas < 2) throw std::invalid_argument("need at least two replicas");
    const int n = samples / replicas;
    std::vector<std::vector<McPoint>> runs;
    for (int r = 0; r < replicas; ++r) runs.push_back(mc_de_run(e, sigma_n, iterations, n, seed + r));
    std::vector<McPoint> out;
    double rel = 0;
    for (int it = 0; it < iterations; ++it) {
        double sum = 0, sq = 0;
        for (const auto& run : runs) sum += run[it].ber;
        double mean = sum / replicas;
        for (const auto& run : runs) sq += (run[it].ber - mean) * (run[it].ber - mean);
        double se = std::sqrt(sq / (replicas - 1) / replicas);
        // never below the binomial error of the pooled sample
        se = std::max(se, std::sqrt(mean * (1 - mean) / (double(n) * replicas)));
        // Population error only accumulates, so the relative error is carried
        // forward; this steadies the few-replica estimate.
        if (mean > 0) {
            rel = std::max(rel, se / mean);
            se = rel * mean;
        }
        out.push_back({it + 1, mean, se});
    }
    return out;
}

} // namespace metde
