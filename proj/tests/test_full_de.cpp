#include <doctest.h>

#include <cmath>

#include "metde/full_de.hpp"
#include "metde/hybrid.hpp"
#include "metde/mc_oracle.hpp"
#include "metde/threshold.hpp"

using namespace metde;

namespace {

const Grid G = make_grid(9800, 50.0);

MetEnsemble load(const char* name) { return load_ensemble(std::string(METDE_DATA_DIR) + "/ensembles/" + name); }

MetEnsemble single_edge(int dv, int dc, bool punctured = false)
{
    MetEnsemble e;
    e.m_e = 1;
    e.vn.push_back({1.0, punctured ? std::vector<int>{1, 0} : std::vector<int>{0, 1}, {dv}});
    e.cn.push_back({double(dv) / dc, {dc}});
    return e;
}

double Q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

} // namespace

TEST_CASE("variable update at the first iteration")
{
    auto e = load("fig1.json");
    auto p = edge_perspective(e);
    std::vector<QuantizedDensity> f_u(e.m_e, delta_at_zero(G));
    auto ch = channel_llr_density({1.0, false}, G);
    // edge-type 1 only touches transmitted classes
    auto v1 = vn_update(e, p, f_u, 1.0, 0);
    CHECK((v1.mass - ch.mass).abs().maxCoeff() < 1e-12);
    // edge-type 2 only touches the punctured class
    auto v2 = vn_update(e, p, f_u, 1.0, 1);
    CHECK(v2.at_zero() == doctest::Approx(1.0));
}

TEST_CASE("variable update keeps Gaussians Gaussian")
{
    auto e = single_edge(3, 6);
    auto p = edge_perspective(e);
    const double m = 1.5;
    std::vector<QuantizedDensity> f_u{gaussian_density(m, 2 * m, G)};
    auto v = vn_update(e, p, f_u, 1.0, 0);
    CHECK(mean(v) == doctest::Approx(2.0 + 2 * m).epsilon(1e-3));
    CHECK(variance(v) == doctest::Approx(2 * (2.0 + 2 * m)).epsilon(2e-3));
}

TEST_CASE("check update laws")
{
    auto e = single_edge(2, 2);
    auto p = edge_perspective(e);
    std::vector<QuantizedDensity> f_v{gaussian_density(3.0, 6.0, G)};
    auto u = cn_update(e, p, f_v, 0);
    CHECK((u.mass - f_v[0].mass).abs().maxCoeff() < 1e-15);

    auto e6 = single_edge(3, 6);
    auto p6 = edge_perspective(e6);
    auto z = cn_update(e6, p6, {delta_at_zero(G)}, 0);
    CHECK(z.at_zero() == doctest::Approx(1.0));
}

TEST_CASE("monitored message")
{
    auto m = monitored_message(load("fig1.json"));
    CHECK(m.cls == 0);
    CHECK(m.edge == 0);
    auto r = monitored_message(load("tab2_reference.json"));
    CHECK(r.cls == 0);
    CHECK(r.edge == 0);
}

TEST_CASE("full DE basics")
{
    auto e = load("ldpc_3_6.json");
    DeConfig cfg;
    auto quiet = run_full_de(e, 1e-3, cfg);
    CHECK(quiet.converged);
    CHECK(quiet.trace.iters.size() <= 3);

    auto r = run_full_de(e, 0.85, cfg);
    CHECK(r.converged);
    CHECK(r.trace.iters[0].ber == doctest::Approx(Q(1 / 0.85)).epsilon(1e-3));
    for (std::size_t k = 1; k < r.trace.iters.size(); ++k)
        CHECK(r.trace.iters[k].ber <= r.trace.iters[k - 1].ber + 1e-12);
    CHECK_FALSE(run_full_de(e, 0.9, cfg).converged);
}

TEST_CASE("degree-one classes keep the channel message")
{
    auto e = load("fig1.json");
    DeConfig cfg;
    FullDeStepper st(e, 0.9, cfg);
    auto ch = channel_llr_density({0.9, false}, G);
    for (int it = 0; it < 5; ++it) {
        st.step(false);
        CHECK((st.state().f_v[3].mass - ch.mass).abs().maxCoeff() < 1e-12);
        CHECK(std::abs(st.state().f_v[0].total() - 1) < 1e-9);
        CHECK(std::abs(st.state().f_u[0].total() - 1) < 1e-9);
    }
}

TEST_CASE("hybrid degeneracies on a regular code")
{
    auto e = load("ldpc_3_6.json");
    HybridConfig h;
    h.max_full_de_iterations = 0;
    auto a = run_hybrid(e, 0.85, h);
    auto b = run_approx(e, 0.85, Method::mean, h);
    REQUIRE(a.trace.iters.size() == b.trace.iters.size());
    for (std::size_t k = 0; k < a.trace.iters.size(); ++k) CHECK(a.trace.iters[k].ber == b.trace.iters[k].ber);
    CHECK(a.trace.switch_iteration == 0);

    h.max_full_de_iterations = h.max_iterations;
    h.kl_target = 0;
    auto c = run_hybrid(e, 0.85, h);
    auto d = run_full_de(e, 0.85, h);
    REQUIRE(c.trace.iters.size() == d.trace.iters.size());
    for (std::size_t k = 0; k < c.trace.iters.size(); ++k) CHECK(c.trace.iters[k].ber == d.trace.iters[k].ber);

    HybridConfig s;
    auto sw = run_hybrid(e, 0.85, s);
    CHECK(sw.converged);
    CHECK(sw.trace.switch_iteration <= s.max_full_de_iterations);
    CHECK(sw.trace.switch_iteration > 0);
}

TEST_CASE("threshold helpers")
{
    CHECK(threshold_error(2.5346, 2.5346) == 0.0);
    CHECK(threshold_error(2.4661, 2.4965) == doctest::Approx(0.012177).epsilon(1e-3));
    CHECK(threshold_error(0, 1.3) == 1.0);
    CHECK_THROWS(threshold_error(1, 0));
    CHECK(cpu_time_gain(100, 10) == 10.0);
    CHECK(cpu_time_gain(3, 3) == 1.0);
    CHECK_THROWS(cpu_time_gain(1, 0));
    CHECK(sigma_shannon(0.5) == doctest::Approx(0.97869412461570119).epsilon(1e-8));
    CHECK(sigma_shannon(0.1) == doctest::Approx(2.5927695317609136).epsilon(1e-8));

    auto e = load("ldpc_3_6.json");
    HybridConfig cfg;
    auto r = find_threshold(e, Method::mean, cfg, {0.8, 0.9, 0.1});
    CHECK(r.bisection_steps == 0);
    CHECK(r.sigma_star == 0.8);
    auto t = find_threshold(e, Method::rca, cfg, {0.5, 0.6, 1e-4});
    CHECK(t.sigma_hi - t.sigma_lo <= 1e-4);
    auto t2 = find_threshold(e, Method::rca, cfg, {0.5, 0.6, 1e-4});
    CHECK(t.sigma_star == t2.sigma_star);
    CHECK_THROWS_AS(find_threshold(e, Method::mean, cfg, {5.0, 6.0, 1e-3, 1}), BracketError);
}

TEST_CASE("monte carlo oracle")
{
    auto e = load("ldpc_3_6.json");
    auto r = mc_de_run(e, 0.85, 3, 20000, 7);
    CHECK(std::abs(r[0].ber - Q(1 / 0.85)) < 3 * r[0].se + 1e-12);
    auto r2 = mc_de_run(e, 0.85, 3, 20000, 7);
    for (int k = 0; k < 3; ++k) CHECK(r[k].ber == r2[k].ber);

    auto punct = single_edge(3, 6, true);
    for (const auto& pt : mc_de_run(punct, 0.85, 4, 10000, 1)) CHECK(pt.ber == 0.5);

    for (double x : {1e-20, 1e-3, 0.5, 3.0, 30.0, 300.0})
        CHECK(log_tanh_map(log_tanh_map(x)) == doctest::Approx(x).epsilon(1e-9));
}

TEST_CASE("monitored KL on the wide magnitude grid")
{
    // degree-2 check: the monitored message is the input itself
    auto e2 = single_edge(3, 2);
    std::vector<QuantizedDensity> g{gaussian_density(3.0, 6.0, G)};
    CHECK(monitored_kl(e2, {0, 0}, g) < 2e-3);
    CHECK(monitored_kl(e2, {0, 0}, g) == doctest::Approx(kl_to_symmetric_gaussian(g[0])).epsilon(0.5).scale(1e-3));

    // well resolved on the LLR grid: both evaluations agree
    auto e6 = single_edge(3, 6);
    std::vector<QuantizedDensity> v{gaussian_density(4.0, 8.0, G)};
    auto u = cn_update(e6, edge_perspective(e6), v, 0);
    CHECK(monitored_kl(e6, {0, 0}, v) == doctest::Approx(kl_to_symmetric_gaussian(u)).epsilon(0.1));

    // weak inputs into a wide check: far narrower than a grid step, so the
    // LLR grid sees a point mass, but the product is far from Gaussian
    auto e15 = single_edge(3, 15);
    std::vector<QuantizedDensity> w{gaussian_density(0.3, 0.6, G)};
    CHECK(monitored_kl(e15, {0, 0}, w) > 1.0);

    // a punctured-only input has zero mean: undefined
    std::vector<QuantizedDensity> z{delta_at_zero(G)};
    CHECK(std::isnan(monitored_kl(e6, {0, 0}, z)));
}
