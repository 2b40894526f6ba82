#include "metde/gauss_approx.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace metde {

namespace fs = std::filesystem;

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double softplus(double u) { return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

// E[g(u)] for u ~ N(m, 2m) by trapezoid in the standard normal variable z.
// g is supplied in log form; the range covers the region where the weight
// e^{-u} N(m, 2m) concentrates (around u = -m).
double gauss_expect_log(double m, const std::function<double(double)>& log_g)
{
    double s = std::sqrt(2 * m);
    double lo = -(s + 10.0), hi = 10.0, h = 0.02;
    int n = static_cast<int>(std::ceil((hi - lo) / h));
    h = (hi - lo) / n;
    double acc = 0;
    for (int k = 0; k <= n; ++k) {
        double z = lo + k * h;
        double w = (k == 0 || k == n) ? 0.5 : 1.0;
        acc += w * std::exp(log_g(m + s * z) - 0.5 * z * z);
    }
    return acc * h * kInvSqrt2Pi;
}

double catmull(const std::vector<double>& v, double pos)
{
    int n = static_cast<int>(v.size());
    int k = std::clamp(static_cast<int>(std::floor(pos)), 0, n - 2);
    double t = pos - k;
    double p1 = v[k], p2 = v[k + 1];
    double p0 = k > 0 ? v[k - 1] : 2 * p1 - p2;
    double p3 = k + 2 < n ? v[k + 2] : 2 * p2 - p1;
    return p1 + 0.5 * t * (p2 - p0 + t * (2 * p0 - 5 * p1 + 4 * p2 - p3 + t * (3 * (p1 - p2) + p3 - p0)));
}

// Binary sidecar: magic, count, two domain doubles, payload.
constexpr std::uint64_t kMagic = 0x6d65746465746231ULL;

bool read_table(const fs::path& p, std::size_t count, double a, double b, std::vector<std::vector<double>*> out)
{
    std::ifstream f(p, std::ios::binary);
    if (!f) return false;
    std::uint64_t magic = 0, n = 0;
    double da = 0, db = 0;
    f.read(reinterpret_cast<char*>(&magic), 8);
    f.read(reinterpret_cast<char*>(&n), 8);
    f.read(reinterpret_cast<char*>(&da), 8);
    f.read(reinterpret_cast<char*>(&db), 8);
    if (!f || magic != kMagic || n != count || da != a || db != b) return false;
    for (auto* v : out) {
        v->resize(count);
        f.read(reinterpret_cast<char*>(v->data()), static_cast<std::streamsize>(count * sizeof(double)));
        if (!f) return false;
        for (double x : *v)
            if (std::isnan(x)) return false;
    }
    return true;
}

void write_table(const fs::path& p, std::size_t count, double a, double b,
                 std::vector<const std::vector<double>*> in)
{
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    fs::path tmp = p;
    tmp += ".tmp" + std::to_string(std::rand());
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) return;
        std::uint64_t magic = kMagic, n = count;
        f.write(reinterpret_cast<const char*>(&magic), 8);
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(reinterpret_cast<const char*>(&a), 8);
        f.write(reinterpret_cast<const char*>(&b), 8);
        for (auto* v : in) f.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(count * sizeof(double)));
        if (!f) {
            fs::remove(tmp, ec);
            return;
        }
    }
    fs::rename(tmp, p, ec);
    if (ec) fs::remove(tmp, ec);
}

} // namespace

std::string table_cache_dir()
{
    if (const char* d = std::getenv("METDE_CACHE_DIR"); d && *d) return d;
    if (const char* d = std::getenv("XDG_CACHE_HOME"); d && *d) return (fs::path(d) / "metde").string();
    if (const char* d = std::getenv("HOME"); d && *d) return (fs::path(d) / ".cache" / "metde").string();
    return (fs::temp_directory_path() / "metde").string();
}

double qfunc(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double qinv(double p)
{
    if (!(p >= 0 && p <= 1)) throw std::domain_error("qinv: argument outside [0, 1]");
    if (p == 0) return std::numeric_limits<double>::infinity();
    if (p == 1) return -std::numeric_limits<double>::infinity();
    return std::sqrt(2.0) * boost::math::erfc_inv(2 * p);
}

double phi_direct(double m)
{
    if (m < 0) throw std::domain_error("phi: negative mean");
    if (m == 0) return 1.0;
    // 1 - tanh(u/2) = 2 / (1 + e^u)
    return gauss_expect_log(m, [](double u) { return kLn2 - softplus(u); });
}

double capacity_complement_direct(double m)
{
    if (m < 0) throw std::domain_error("capacity: negative mean");
    if (m == 0) return 1.0;
    return gauss_expect_log(m, [](double u) { return std::log(softplus(-u)); }) / kLn2;
}

double capacity_direct(double m)
{
    if (m < 0) throw std::domain_error("capacity: negative mean");
    if (m == 0) return 0.0;
    // 1 - log2(1 + e^{-u}) = -log1p(expm1(-u) / 2) / ln 2; the sign of the
    // integrand changes, so split into positive and negative parts.
    auto g = [](double u) { return -std::log1p(std::expm1(-u) / 2); };
    double pos = gauss_expect_log(m, [&](double u) { double v = g(u); return v > 0 ? std::log(v) : -INFINITY; });
    double neg = gauss_expect_log(m, [&](double u) { double v = g(u); return v < 0 ? std::log(-v) : -INFINITY; });
    return (pos - neg) / kLn2;
}

// ---------------------------------------------------------------- phi table

PhiTable::PhiTable() : h_(kMax / (kSize - 1))
{
    fs::path p = fs::path(table_cache_dir()) / "phi_10001_0_90.bin";
    if (read_table(p, kSize, 0.0, kMax, {&lv_})) return;
    lv_.resize(kSize);
    for (int k = 0; k < kSize; ++k) lv_[k] = std::log(phi_direct(k * h_));
    write_table(p, kSize, 0.0, kMax, {&lv_});
}

const PhiTable& PhiTable::get()
{
    static const PhiTable t;
    return t;
}

double PhiTable::interp(double m) const
{
    if (m <= kMax) return catmull(lv_, m / h_);
    double slope = (lv_[kSize - 1] - lv_[kSize - 2]) / h_;
    return lv_[kSize - 1] + slope * (m - kMax);
}

double PhiTable::phi(double m) const
{
    if (m < 0) throw std::domain_error("phi: negative mean");
    if (m == 0) return 1.0;
    return std::exp(interp(m));
}

double PhiTable::inv(double y) const
{
    if (!(y > 0 && y <= 1)) throw std::domain_error("phi_inv: argument outside (0, 1]");
    if (y == 1) return 0.0;
    double ly = std::log(y);
    if (ly < lv_.back()) {
        double slope = (lv_[kSize - 1] - lv_[kSize - 2]) / h_;
        return std::min(kMeanCap, kMax + (ly - lv_.back()) / slope);
    }
    // lv_ is decreasing: find the bracketing interval, then bisect the interpolant.
    auto it = std::lower_bound(lv_.begin(), lv_.end(), ly, std::greater<double>());
    int k = static_cast<int>(it - lv_.begin());
    if (k == 0) return 0.0;
    double lo = (k - 1) * h_, hi = k * h_;
    for (int it2 = 0; it2 < 60 && hi - lo > 1e-15 * std::max(1.0, hi); ++it2) {
        double mid = 0.5 * (lo + hi);
        if (interp(mid) > ly) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

// ----------------------------------------------------------- capacity table

double CapacityTable::m_of(double t) const { return softplus(t); }

double CapacityTable::t_of(double m) const
{
    return m > 30 ? m + std::log(-std::expm1(-m)) : std::log(std::expm1(m));
}

CapacityTable::CapacityTable()
{
    t0_ = std::log(kMinMean);
    h_ = (kTMax - t0_) / (kSize - 1);
    fs::path p = fs::path(table_cache_dir()) / "cap_38302.bin";
    if (read_table(p, kSize, t0_, kTMax, {&lc_, &lcc_})) return;
    lc_.resize(kSize);
    lcc_.resize(kSize);
    for (int k = 0; k < kSize; ++k) {
        double m = m_of(t0_ + k * h_);
        lc_[k] = std::log(capacity_direct(m));
        lcc_[k] = std::log(capacity_complement_direct(m));
    }
    write_table(p, kSize, t0_, kTMax, {&lc_, &lcc_});
}

const CapacityTable& CapacityTable::get()
{
    static const CapacityTable t;
    return t;
}

double CapacityTable::interp(const std::vector<double>& v, double t) const { return catmull(v, (t - t0_) / h_); }

double CapacityTable::capacity(double m) const
{
    if (m < 0) throw std::domain_error("capacity: negative mean");
    if (m == 0) return 0.0;
    if (m < kMinMean) return std::exp(lc_.front()) * (m / kMinMean); // C is linear near 0
    // near 1, ln C carries too few significant bits to stay monotone
    if (m > 10) return 1.0 - complement(m);
    return std::exp(interp(lc_, t_of(m)));
}

double CapacityTable::complement(double m) const
{
    if (m < 0) throw std::domain_error("capacity: negative mean");
    if (m == 0) return 1.0;
    if (m < kMinMean) return 1.0 - capacity(m);
    double mmax = m_of(kTMax);
    if (m <= mmax) return std::exp(interp(lcc_, t_of(m)));
    // log-linear extrapolation in m past the table end
    double m1 = m_of(kTMax - h_);
    double slope = (lcc_[kSize - 1] - lcc_[kSize - 2]) / (mmax - m1);
    return std::exp(lcc_.back() + slope * (m - mmax));
}

// Solves ln-table(m) = target on the table (v increasing or decreasing in t).
double CapacityTable::solve(const std::vector<double>& v, double target, bool increasing) const
{
    int k;
    if (increasing) k = static_cast<int>(std::lower_bound(v.begin(), v.end(), target) - v.begin());
    else k = static_cast<int>(std::lower_bound(v.begin(), v.end(), target, std::greater<double>()) - v.begin());
    k = std::clamp(k, 1, kSize - 1);
    double lo = t0_ + (k - 1) * h_, hi = t0_ + k * h_;
    for (int it = 0; it < 80 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        bool below = interp(v, mid) < target;
        if (below == increasing) lo = mid;
        else hi = mid;
    }
    return m_of(0.5 * (lo + hi));
}

double CapacityTable::capacity_inv(double c) const
{
    if (!(c >= 0 && c < 1)) throw std::domain_error("capacity_inv: argument outside [0, 1)");
    if (c == 0) return 0.0;
    if (c <= 0.5) {
        double lc = std::log(c);
        if (lc < lc_.front()) return kMinMean * std::exp(lc - lc_.front());
        return solve(lc_, lc, true);
    }
    double lcc = std::log1p(-c);
    if (lcc < lcc_.back()) {
        double mmax = m_of(kTMax), m1 = m_of(kTMax - h_);
        double slope = (lcc_[kSize - 1] - lcc_[kSize - 2]) / (mmax - m1);
        return std::min(kMeanCap, mmax + (lcc - lcc_.back()) / slope);
    }
    return solve(lcc_, lcc, false);
}

double CapacityTable::psi(double m) const
{
    if (m < 0) throw std::domain_error("psi: negative mean");
    if (m == 0) return kMeanCap;
    if (std::isinf(m)) return 0.0;
    // psi solves C(m') = 1 - C(m); work with whichever side is small.
    double c = capacity(m);
    if (c <= 0.5) {
        // target 1 - C(m') = C(m) with m' large
        double lt = m < kMinMean ? lc_.front() + std::log(m / kMinMean) : std::log(c);
        if (lt < lcc_.back()) {
            double mmax = m_of(kTMax), m1 = m_of(kTMax - h_);
            double slope = (lcc_[kSize - 1] - lcc_[kSize - 2]) / (mmax - m1);
            return std::min(kMeanCap, mmax + (lt - lcc_.back()) / slope);
        }
        return solve(lcc_, lt, false);
    }
    double lt = std::log(complement(m));
    if (lt < lc_.front()) return kMinMean * std::exp(lt - lc_.front());
    return solve(lc_, lt, true);
}

double phi(double m) { return PhiTable::get().phi(m); }
double phi_inv(double y) { return PhiTable::get().inv(y); }
double capacity_awgn(double m) { return CapacityTable::get().capacity(m); }
double psi(double m) { return CapacityTable::get().psi(m); }

// ------------------------------------------------------------- recursions

double class_channel_mean(const VariableNodeClass& c, double sigma_n)
{
    return channel_llr_mean(ChannelSpec{sigma_n, c.punctured()});
}

MeanState initial_mean_state(const MetEnsemble& e)
{
    return MeanState{std::vector<double>(e.m_e, 0.0), std::vector<double>(e.m_e, 0.0)};
}

BerState initial_ber_state(const MetEnsemble& e)
{
    return BerState{std::vector<double>(e.m_e, 0.5), std::vector<double>(e.m_e, 0.5)};
}

namespace {

// Class-conditional variable-to-check mean on edge-type i.
double vn_class_mean(const VariableNodeClass& c, const std::vector<double>& m_u, double m_ch, int i)
{
    double m = m_ch - m_u[i];
    for (std::size_t k = 0; k < m_u.size(); ++k) m += c.d[k] * m_u[k];
    return std::clamp(m, 0.0, kMeanCap);
}

double vn_posterior_mean(const VariableNodeClass& c, const std::vector<double>& m_u, double m_ch)
{
    double m = m_ch;
    for (std::size_t k = 0; k < m_u.size(); ++k) m += c.d[k] * m_u[k];
    return std::clamp(m, 0.0, kMeanCap);
}

double ber_of_mean(double m) { return qfunc(std::sqrt(std::max(m, 0.0) / 2)); }

double mean_of_ber(double p)
{
    if (p >= 0.5) return 0.0;
    double q = qinv(std::max(p, 0.0));
    return std::min(kMeanCap, 2 * q * q);
}

} // namespace

std::vector<double> vn_means(const MetEnsemble& e, const EdgePerspective& p, const std::vector<double>& m_u,
                             double sigma_n)
{
    std::vector<double> m_v(e.m_e, 0.0);
    for (int i = 0; i < e.m_e; ++i) {
        double acc = 0;
        for (const auto& w : p.lambda[i]) {
            const auto& c = e.vn[w.cls];
            acc += w.w * vn_class_mean(c, m_u, class_channel_mean(c, sigma_n), i);
        }
        m_v[i] = std::min(acc, kMeanCap);
    }
    return m_v;
}

double posterior_ber_means(const MetEnsemble& e, const std::vector<double>& m_u, double sigma_n)
{
    double acc = 0, tot = 0;
    for (const auto& c : e.vn) {
        acc += c.coef * ber_of_mean(vn_posterior_mean(c, m_u, class_channel_mean(c, sigma_n)));
        tot += c.coef;
    }
    return acc / tot;
}

std::vector<double> cn_means(const MetEnsemble& e, const EdgePerspective& p, const std::vector<double>& m_v)
{
    const auto& tab = PhiTable::get();
    std::vector<double> l1mphi(e.m_e);
    for (int k = 0; k < e.m_e; ++k) l1mphi[k] = std::log1p(-tab.phi(m_v[k]));
    std::vector<double> m_u(e.m_e, 0.0);
    for (int i = 0; i < e.m_e; ++i) {
        double acc = 0;
        for (const auto& w : p.rho[i]) {
            const auto& c = e.cn[w.cls];
            double lp = 0;
            for (int k = 0; k < e.m_e; ++k) {
                int ex = c.d[k] - (k == i ? 1 : 0);
                if (ex > 0) lp += ex * l1mphi[k];
            }
            double y = -std::expm1(lp);
            acc += w.w * (y <= 0 ? kMeanCap : tab.inv(std::min(y, 1.0)));
        }
        m_u[i] = std::min(acc, kMeanCap);
    }
    return m_u;
}

MeanState approx1_iteration(const MetEnsemble& e, const EdgePerspective& p, const MeanState& s, double sigma_n)
{
    MeanState out;
    out.m_v = vn_means(e, p, s.m_u, sigma_n);
    out.m_u = cn_means(e, p, out.m_v);
    return out;
}

BerState approx2_iteration(const MetEnsemble& e, const EdgePerspective& p, const BerState& s, double sigma_n)
{
    BerState out;
    std::vector<double> m_u(e.m_e);
    for (int k = 0; k < e.m_e; ++k) m_u[k] = mean_of_ber(s.p_u[k]);
    out.p_v.assign(e.m_e, 0.0);
    for (int i = 0; i < e.m_e; ++i) {
        double acc = 0;
        for (const auto& w : p.lambda[i]) {
            const auto& c = e.vn[w.cls];
            acc += w.w * ber_of_mean(vn_class_mean(c, m_u, class_channel_mean(c, sigma_n), i));
        }
        out.p_v[i] = std::clamp(acc, 0.0, 0.5);
    }
    std::vector<double> l12p(e.m_e);
    for (int k = 0; k < e.m_e; ++k) l12p[k] = std::log1p(-2 * out.p_v[k]);
    out.p_u.assign(e.m_e, 0.0);
    for (int i = 0; i < e.m_e; ++i) {
        double acc = 0;
        for (const auto& w : p.rho[i]) {
            const auto& c = e.cn[w.cls];
            double lp = 0;
            for (int k = 0; k < e.m_e; ++k) {
                int ex = c.d[k] - (k == i ? 1 : 0);
                if (ex > 0) lp += ex * l12p[k];
            }
            acc += w.w * (-0.5 * std::expm1(lp));
        }
        out.p_u[i] = std::clamp(acc, 0.0, 0.5);
    }
    return out;
}

MeanState approx3_iteration(const MetEnsemble& e, const EdgePerspective& p, const MeanState& s, double sigma_n)
{
    MeanState out;
    out.m_v = vn_means(e, p, s.m_u, sigma_n);
    const auto& tab = CapacityTable::get();
    std::vector<double> ps(e.m_e);
    for (int k = 0; k < e.m_e; ++k) ps[k] = out.m_v[k] > 0 ? tab.psi(out.m_v[k]) : INFINITY;
    out.m_u.assign(e.m_e, 0.0);
    for (int i = 0; i < e.m_e; ++i) {
        double acc = 0;
        for (const auto& w : p.rho[i]) {
            const auto& c = e.cn[w.cls];
            double sum = 0;
            for (int k = 0; k < e.m_e; ++k) {
                int ex = c.d[k] - (k == i ? 1 : 0);
                if (ex > 0) sum += ex * ps[k];
            }
            double mu = std::isinf(sum) ? 0.0 : tab.psi(sum);
            acc += w.w * mu;
        }
        out.m_u[i] = std::min(acc, kMeanCap);
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double edge_ber_means(const EdgePerspective&, const std::vector<double>& m_v, const MetEnsemble& e)
{
    // socket-weighted average of the per-edge message BER
    auto s = e.vn_sockets();
    double acc = 0, tot = 0;
    for (int i = 0; i < e.m_e; ++i) {
        acc += s[i] * ber_of_mean(m_v[i]);
        tot += s[i];
    }
    return acc / tot;
}

IterRecord mean_record(int it, Phase ph, double ber, const MeanState& s)
{
    IterRecord r;
    r.iteration = it;
    r.phase = ph;
    r.ber = ber;
    r.mean_v = s.m_v;
    r.mean_u = s.m_u;
    r.var_v.resize(s.m_v.size());
    r.ber_v.resize(s.m_v.size());
    for (std::size_t k = 0; k < s.m_v.size(); ++k) {
        r.var_v[k] = 2 * s.m_v[k];
        r.ber_v[k] = ber_of_mean(s.m_v[k]);
    }
    return r;
}

} // namespace

bool continue_approx1(const MetEnsemble& e, const EdgePerspective& p, MeanState s, double sigma_n,
                      const DeConfig& cfg, int first_iter, DeTrace& trace, double t_offset)
{
    auto t0 = Clock::now();
    StallMonitor stall(cfg.stall_window, cfg.stall_rel);
    for (int it = first_iter; it <= cfg.max_iterations; ++it) {
        double ber = cfg.ber_mode == BerMode::posterior ? posterior_ber_means(e, s.m_u, sigma_n)
                                                        : edge_ber_means(p, vn_means(e, p, s.m_u, sigma_n), e);
        s = approx1_iteration(e, p, s, sigma_n);
        IterRecord r = mean_record(it, Phase::gauss, ber, s);
        r.elapsed = t_offset + seconds_since(t0);
        trace.iters.push_back(std::move(r));
        if (ber < cfg.target_ber) return true;
        if (stall.update(ber)) return false;
    }
    return false;
}

RunResult run_approx(const MetEnsemble& e, double sigma_n, Method method, const DeConfig& cfg)
{
    cfg.check();
    if (method != Method::mean && method != Method::ber && method != Method::rca)
        throw std::invalid_argument("run_approx: method must be mean, ber or rca");
    auto t0 = Clock::now();
    RunResult res;
    auto p = edge_perspective(e);
    if (method == Method::mean) {
        res.converged = continue_approx1(e, p, initial_mean_state(e), sigma_n, cfg, 1, res.trace, 0.0);
    } else if (method == Method::rca) {
        StallMonitor stall(cfg.stall_window, cfg.stall_rel);
        MeanState s = initial_mean_state(e);
        for (int it = 1; it <= cfg.max_iterations; ++it) {
            double ber = cfg.ber_mode == BerMode::posterior ? posterior_ber_means(e, s.m_u, sigma_n)
                                                            : edge_ber_means(p, vn_means(e, p, s.m_u, sigma_n), e);
            s = approx3_iteration(e, p, s, sigma_n);
            IterRecord r = mean_record(it, Phase::gauss, ber, s);
            r.elapsed = seconds_since(t0);
            res.trace.iters.push_back(std::move(r));
            if (ber < cfg.target_ber) {
                res.converged = true;
                break;
            }
            if (stall.update(ber)) break;
        }
    } else {
        StallMonitor stall(cfg.stall_window, cfg.stall_rel);
        BerState s = initial_ber_state(e);
        for (int it = 1; it <= cfg.max_iterations; ++it) {
            std::vector<double> m_u(e.m_e);
            for (int k = 0; k < e.m_e; ++k) m_u[k] = mean_of_ber(s.p_u[k]);
            double ber = cfg.ber_mode == BerMode::posterior ? posterior_ber_means(e, m_u, sigma_n)
                                                            : edge_ber_means(p, vn_means(e, p, m_u, sigma_n), e);
            s = approx2_iteration(e, p, s, sigma_n);
            IterRecord r;
            r.iteration = it;
            r.phase = Phase::gauss;
            r.ber = ber;
            r.ber_v = s.p_v;
            r.mean_v.resize(e.m_e);
            r.var_v.resize(e.m_e);
            r.mean_u.resize(e.m_e);
            for (int k = 0; k < e.m_e; ++k) {
                r.mean_v[k] = mean_of_ber(s.p_v[k]);
                r.var_v[k] = 2 * r.mean_v[k];
                r.mean_u[k] = mean_of_ber(s.p_u[k]);
            }
            r.elapsed = seconds_since(t0);
            res.trace.iters.push_back(std::move(r));
            if (ber < cfg.target_ber) {
                res.converged = true;
                break;
            }
            if (stall.update(ber)) break;
        }
    }
    res.seconds = seconds_since(t0);
    return res;
}

} // namespace metde
