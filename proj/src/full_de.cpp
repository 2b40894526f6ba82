#include "metde/full_de.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <stdexcept>

namespace metde {

using kernels::GElem;
using kernels::GOps;
using kernels::PowerCache;
using kernels::XElem;
using kernels::XOps;

namespace {

using XPtr = std::shared_ptr<const XElem>;
using GPtr = std::shared_ptr<const GElem>;

struct VnResult {
    std::vector<QuantizedDensity> f_v;
    std::vector<double> post_ber; // per variable class, when requested
};

// Weight of class c in an edge perspective list, 0 when absent.
double weight_of(const std::vector<EdgeWeight>& ws, int c)
{
    for (const auto& w : ws)
        if (w.cls == c) return w.w;
    return 0.0;
}

VnResult vn_half(const MetEnsemble& e, const EdgePerspective& p, const std::vector<QuantizedDensity>& f_u,
                 const XPtr& channel, bool posterior, int only_edge = -1)
{
    const Grid& g = f_u.front().grid;
    const auto& xe = kernels::x_engine(g);
    XOps ops{xe};
    std::vector<XPtr> bases;
    for (const auto& f : f_u) bases.push_back(std::make_shared<const XElem>(XElem{f, nullptr}));
    PowerCache<XOps> pc(ops, bases);
    auto delta = std::make_shared<const XElem>(XElem{delta_at_zero(g), nullptr});

    VnResult out;
    std::vector<std::vector<std::pair<double, const QuantizedDensity*>>> parts(e.m_e);
    std::vector<XPtr> keep;
    for (int c = 0; c < (int)e.vn.size(); ++c) {
        const auto& vc = e.vn[c];
        XPtr extra = vc.punctured() ? nullptr : channel;
        XPtr first;
        int first_i = -1;
        for (int i = 0; i < e.m_e; ++i) {
            if (vc.d[i] == 0 || (only_edge >= 0 && i != only_edge)) continue;
            std::vector<int> exps = vc.d;
            --exps[i];
            XPtr r = pc.product(exps, extra);
            if (!r) r = delta;
            keep.push_back(r);
            if (first_i < 0) {
                first_i = i;
                first = r;
            }
            if (only_edge < 0 || i == only_edge) parts[i].emplace_back(weight_of(p.lambda[i], c), &r->d);
        }
        if (posterior) {
            XElem post = xe.mul(*first, *bases[first_i]);
            out.post_ber.push_back(error_probability(post.d));
        }
    }
    out.f_v.resize(e.m_e);
    for (int i = 0; i < e.m_e; ++i) {
        if (only_edge >= 0 && i != only_edge) continue;
        if (parts[i].empty()) throw std::invalid_argument("vn_update: edge-type absent from all variable classes");
        out.f_v[i] = mixture(parts[i]);
    }
    return out;
}

std::vector<QuantizedDensity> cn_half(const MetEnsemble& e, const EdgePerspective& p,
                                      const std::vector<QuantizedDensity>& f_v, const Monitored* mon,
                                      QuantizedDensity* mon_out, int only_edge = -1)
{
    const Grid& g = f_v.front().grid;
    const auto& ge = kernels::g_engine(g);

    struct Task {
        int c, i;
        std::vector<int> exps;
        int levels = 0;
        int pass = -1; // single factor with exponent one: the input itself
    };
    std::vector<Task> tasks;
    std::vector<std::vector<double>> T(e.m_e);
    std::vector<double> S(e.m_e);
    for (int k = 0; k < e.m_e; ++k) {
        T[k] = ge.level_mass(f_v[k]);
        S[k] = f_v[k].sat_pos + f_v[k].sat_neg;
    }
    std::vector<const std::vector<double>*> Tp;
    for (auto& t : T) Tp.push_back(&t);
    int lmax = 0;
    for (int c = 0; c < (int)e.cn.size(); ++c) {
        for (int i = 0; i < e.m_e; ++i) {
            if (e.cn[c].d[i] == 0 || (only_edge >= 0 && i != only_edge)) continue;
            Task t{c, i, e.cn[c].d, 0, -1};
            --t.exps[i];
            int nf = 0, tot = 0, last = -1;
            for (int k = 0; k < e.m_e; ++k)
                if (t.exps[k] > 0) {
                    ++nf;
                    tot += t.exps[k];
                    last = k;
                }
            if (tot == 1 && nf == 1) t.pass = last;
            else {
                t.levels = ge.levels_needed(Tp, S, t.exps);
                lmax = std::max(lmax, t.levels);
            }
            tasks.push_back(std::move(t));
        }
    }
    std::vector<GPtr> bases(e.m_e);
    for (int k = 0; k < e.m_e; ++k) bases[k] = std::make_shared<const GElem>(ge.from_density(f_v[k], lmax));
    GOps ops{ge, 0};
    PowerCache<GOps> pc(ops, bases);

    std::vector<QuantizedDensity> outs(tasks.size());
    std::vector<std::vector<std::pair<double, const QuantizedDensity*>>> parts(e.m_e);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const Task& tk = tasks[t];
        const QuantizedDensity* q;
        if (tk.pass >= 0) {
            q = &f_v[tk.pass];
        } else {
            outs[t] = ge.to_density(*pc.product(tk.exps));
            q = &outs[t];
        }
        if (mon && mon_out && tk.c == mon->cls && tk.i == mon->edge) *mon_out = *q;
        parts[tk.i].emplace_back(weight_of(p.rho[tk.i], tk.c), q);
    }
    std::vector<QuantizedDensity> f_u(e.m_e);
    for (int i = 0; i < e.m_e; ++i) {
        if (only_edge >= 0 && i != only_edge) continue;
        if (parts[i].empty()) throw std::invalid_argument("cn_update: edge-type absent from all check classes");
        f_u[i] = mixture(parts[i]);
    }
    return f_u;
}

XPtr channel_elem(double sigma_n, const Grid& g)
{
    return std::make_shared<const XElem>(XElem{channel_llr_density(ChannelSpec{sigma_n, false}, g), nullptr});
}

} // namespace

QuantizedDensity vn_update(const MetEnsemble& e, const EdgePerspective& p, const std::vector<QuantizedDensity>& f_u,
                           double sigma_n, int i)
{
    if (i < 0 || i >= e.m_e) throw std::out_of_range("vn_update: edge-type out of range");
    return vn_half(e, p, f_u, channel_elem(sigma_n, f_u.front().grid), false, i).f_v[i];
}

QuantizedDensity cn_update(const MetEnsemble& e, const EdgePerspective& p, const std::vector<QuantizedDensity>& f_v,
                           int i)
{
    if (i < 0 || i >= e.m_e) throw std::out_of_range("cn_update: edge-type out of range");
    return cn_half(e, p, f_v, nullptr, nullptr, i)[i];
}

namespace {

const kernels::GEngine& kl_engine(const Grid& g, int max_factors)
{
    static std::mutex mu;
    static std::map<std::tuple<int, double, int>, std::unique_ptr<kernels::GEngine>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{g.K, g.llr_max, max_factors}];
    if (!slot) {
        kernels::GConfig c;
        c.N = 4096;
        c.split_zero = true;
        // factors reach y = -ln tanh(x/2) at x = delta/200 before their tail
        // mass is negligible; sums of max_factors of them must stay in range
        double yz = -std::log(std::tanh(g.delta() / 400));
        c.y_range = max_factors * yz;
        slot = std::make_unique<kernels::GEngine>(g, c);
    }
    return *slot;
}

} // namespace

double monitored_kl(const MetEnsemble& e, const Monitored& mon, const std::vector<QuantizedDensity>& f_v)
{
    std::vector<int> exps = e.cn[mon.cls].d;
    --exps[mon.edge];
    int nf = 0;
    for (int x : exps) nf += x;
    if (nf == 0) return NAN;
    const auto& ge = kl_engine(f_v.front().grid, nf);
    std::vector<std::vector<double>> T(e.m_e);
    std::vector<const std::vector<double>*> Tp;
    std::vector<double> S(e.m_e);
    for (int k = 0; k < e.m_e; ++k) {
        T[k] = ge.level_mass(f_v[k]);
        Tp.push_back(&T[k]);
        S[k] = f_v[k].sat_pos + f_v[k].sat_neg;
    }
    int levels = ge.levels_needed(Tp, S, exps);
    std::vector<GPtr> bases(e.m_e);
    for (int k = 0; k < e.m_e; ++k)
        if (exps[k] > 0) bases[k] = std::make_shared<const GElem>(ge.from_density(f_v[k], std::max(levels, 1)));
    GOps ops{ge, 0};
    PowerCache<GOps> pc(ops, bases);
    try {
        return ge.kl_to_symmetric_gaussian(*pc.product(exps));
    } catch (const std::domain_error&) {
        return NAN;
    }
}

Monitored monitored_message(const MetEnsemble& e)
{
    Monitored m;
    int best = -1;
    for (int c = 0; c < (int)e.cn.size(); ++c)
        if (e.cn[c].degree() > best) {
            best = e.cn[c].degree();
            m.cls = c;
        }
    const auto& d = e.cn[m.cls].d;
    for (int i = 0; i < (int)d.size(); ++i)
        if (d[i] > d[m.edge]) m.edge = i;
    return m;
}

FullDeStepper::FullDeStepper(const MetEnsemble& e, double sigma_n, const DeConfig& cfg)
    : e_(e), p_(edge_perspective(e)), cfg_(cfg), sigma_(sigma_n), grid_(cfg.grid()), mon_id_(monitored_message(e))
{
    cfg_.check();
    channel_ = channel_elem(sigma_n, grid_);
    st_.f_u.assign(e.m_e, delta_at_zero(grid_));
    st_.f_v.assign(e.m_e, delta_at_zero(grid_));
    mon_ = delta_at_zero(grid_);
}

IterRecord FullDeStepper::step(bool eval_kl)
{
    IterRecord r;
    r.iteration = ++st_.iteration;
    r.phase = Phase::full;
    bool post = cfg_.ber_mode == BerMode::posterior;
    auto vn = vn_half(e_, p_, st_.f_u, channel_, post);
    st_.f_v = std::move(vn.f_v);
    if (post) {
        double acc = 0, tot = 0;
        for (std::size_t c = 0; c < e_.vn.size(); ++c) {
            acc += e_.vn[c].coef * vn.post_ber[c];
            tot += e_.vn[c].coef;
        }
        r.ber = acc / tot;
    } else {
        auto s = e_.vn_sockets();
        double acc = 0, tot = 0;
        for (int i = 0; i < e_.m_e; ++i) {
            acc += s[i] * error_probability(st_.f_v[i]);
            tot += s[i];
        }
        r.ber = acc / tot;
    }
    for (int i = 0; i < e_.m_e; ++i) {
        r.ber_v.push_back(error_probability(st_.f_v[i]));
        r.mean_v.push_back(mean(st_.f_v[i]));
        r.var_v.push_back(variance(st_.f_v[i]));
    }
    if (r.ber < cfg_.target_ber) {
        converged_ = true;
    } else {
        st_.f_u = cn_half(e_, p_, st_.f_v, &mon_id_, &mon_);
        if (eval_kl) r.kl = monitored_kl(e_, mon_id_, st_.f_v);
    }
    for (int i = 0; i < e_.m_e; ++i) r.mean_u.push_back(mean(st_.f_u[i]));
    return r;
}

MeanState FullDeStepper::project() const
{
    MeanState s;
    for (int i = 0; i < e_.m_e; ++i) {
        s.m_v.push_back(std::max(0.0, mean(st_.f_v[i])));
        s.m_u.push_back(std::max(0.0, mean(st_.f_u[i])));
    }
    return s;
}

RunResult run_full_de(const MetEnsemble& e, double sigma_n, const DeConfig& cfg, const DeObserver& observe)
{
    using Clock = std::chrono::steady_clock;
    auto t0 = Clock::now();
    FullDeStepper st(e, sigma_n, cfg);
    StallMonitor stall(cfg.stall_window, cfg.stall_rel);
    RunResult res;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        IterRecord r = st.step(it % cfg.kl_monitor_interval == 0);
        r.elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
        double ber = r.ber;
        if (observe) observe(st.state(), r);
        res.trace.iters.push_back(std::move(r));
        if (st.converged()) {
            res.converged = true;
            break;
        }
        if (stall.update(ber)) break;
    }
    res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

} // namespace metde
