#include "metde/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace metde::kernels {

namespace {

std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

// y = -ln tanh(x/2), which is its own inverse.
double phi_map(double x)
{
    if (x <= 0) return INFINITY;
    double t = std::exp(-x);
    if (x > 1) return std::log1p(t) - std::log1p(-t);
    return std::log1p(t) - std::log(-std::expm1(-x));
}

// Plain product; std::complex's operator* adds NaN/inf recovery we never need.
inline std::complex<double> cmul(std::complex<double> a, std::complex<double> b)
{
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

} // namespace

void* fft_alloc(std::size_t bytes) { return fftw_malloc(bytes); }
void fft_free(void* p) noexcept { fftw_free(p); }

int next_fast_size(int n)
{
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int f : {2, 3, 5, 7})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

RealFft::RealFft(int n) : n_(n)
{
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, out, in, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    if (!fwd_ || !inv_) throw std::runtime_error("FFTW planning failed");
}

RealFft::~RealFft()
{
    fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

const RealFft& RealFft::get(int size)
{
    static std::map<int, std::unique_ptr<RealFft>> plans;
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto& slot = plans[size];
    if (!slot) slot.reset(new RealFft(size));
    return *slot;
}

void RealFft::forward(const double* in, std::complex<double>* out) const
{
    fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
}

void RealFft::inverse(const std::complex<double>* in, double* out) const
{
    // c2r destroys its input, so work on a copy.
    CVec tmp(in, in + bins());
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_), reinterpret_cast<fftw_complex*>(tmp.data()), out);
}

// ---------------------------------------------------------------------------

XEngine::XEngine(const Grid& g) : grid_(g)
{
    // Cyclic length 3K+1 keeps output indices K..3K of the linear
    // convolution free of wrap-around; the tails are summed exactly below.
    M_ = next_fast_size(3 * g.K + 1);
    fft_ = &RealFft::get(M_);
}

const CVec& XEngine::spectrum(const XElem& a) const
{
    if (!a.spec) {
        RVec buf(M_, 0.0);
        std::copy(a.d.mass.data(), a.d.mass.data() + grid_.n(), buf.begin());
        auto s = std::make_shared<CVec>(fft_->bins());
        fft_->forward(buf.data(), s->data());
        a.spec = std::move(s);
    }
    return *a.spec;
}

XElem XEngine::mul(const XElem& a, const XElem& b) const
{
    if (!(a.d.grid == grid_) || !(b.d.grid == grid_)) throw GridMismatch("convolve: grid mismatch");
    const int K = grid_.K, n = grid_.n();
    const CVec& fa = spectrum(a);
    const CVec& fb = spectrum(b);
    CVec prod(fa.size());
    for (std::size_t i = 0; i < fa.size(); ++i) prod[i] = cmul(fa[i], fb[i]);
    RVec c(M_);
    fft_->inverse(prod.data(), c.data());

    XElem out;
    out.d.grid = grid_;
    out.d.mass.resize(n);
    const double scale = 1.0 / M_;
    for (int o = 0; o < n; ++o) out.d.mass[o] = std::max(0.0, c[o + K] * scale);

    const auto& am = a.d.mass;
    const auto& bm = b.d.mass;
    const double Ba = am.sum(), Bb = bm.sum();

    // Exact tails: P(i + j < K) and P(i + j > 3K).
    std::vector<double> cum(n + 1, 0.0);
    for (int j = 0; j < n; ++j) cum[j + 1] = cum[j] + bm[j];
    double ovf_neg = 0, ovf_pos = 0;
    for (int i = 0; i < K; ++i) ovf_neg += am[i] * cum[K - i];
    for (int i = K + 1; i < n; ++i) ovf_pos += am[i] * (cum[n] - cum[3 * K + 1 - i]);

    double bulk = std::max(0.0, Ba * Bb - ovf_neg - ovf_pos);
    double got = out.d.mass.sum();
    if (got > 0) out.d.mass *= bulk / got;

    out.d.sat_pos = a.d.sat_pos * (Bb + b.d.sat_pos) + Ba * b.d.sat_pos + ovf_pos;
    out.d.sat_neg = a.d.sat_neg * (Bb + b.d.sat_neg) + Ba * b.d.sat_neg + ovf_neg;
    out.d.mass[K] += a.d.sat_pos * b.d.sat_neg + a.d.sat_neg * b.d.sat_pos;
    return out;
}

// ---------------------------------------------------------------------------

GEngine::GEngine(const Grid& g, GConfig cfg) : grid_(g), cfg_(cfg)
{
    const int K = g.K, N = cfg.N;
    const double D = g.delta();
    if (N < 4 * cfg.guard || cfg.ratio < 2) throw std::invalid_argument("bad magnitude grid configuration");
    fft_ = &RealFft::get(2 * N);

    y_.assign(K + 1, INFINITY);
    y_edge_.assign(K + 1, 0.0);
    for (int j = 1; j <= K; ++j) y_[j] = phi_map(j * D);
    for (int j = 0; j <= K; ++j) y_edge_[j] = phi_map((j + 0.5) * D);

    const double usable = N - cfg.guard;
    const double dy0 = std::max(cfg.y_range, y_edge_[0]) / usable * (1 + 1e-9);
    // Finest level whose usable range still contains the saturation edge.
    int last = (int)std::floor(std::log(usable * dy0 / y_edge_[K]) / std::log((double)cfg.ratio));
    last = std::max(last, 0);
    for (int L = 0; L <= last; ++L) dy_.push_back(dy0 / std::pow((double)cfg.ratio, L));

    first_bin_.resize(dy_.size());
    for (std::size_t L = 0; L < dy_.size(); ++L) {
        int j = 1;
        while (j <= K && y_[j] > (N - 2) * dy_[L]) ++j;
        first_bin_[L] = j;
    }
    if (cfg.split_zero) {
        // |x| uniform on (0, delta/2): bin k of a level takes the x-length of
        // [(k - 1/2) dy, (k + 1/2) dy) that lies beyond y_edge_[0]
        for (std::size_t L = 0; L < dy_.size(); ++L) {
            const double top = (N - 2) * dy_[L];
            if (top <= y_edge_[0]) break;
            std::vector<std::pair<int, double>> w;
            int k0 = (int)std::floor(y_edge_[0] / dy_[L] + 0.5);
            for (int k = k0; k <= N - 2; ++k) {
                double a = std::max(y_edge_[0], (k - 0.5) * dy_[L]), b = std::min(top, (k + 0.5) * dy_[L]);
                if (b > a) w.emplace_back(k, (phi_map(a) - phi_map(b)) / (0.5 * D));
            }
            zero_w_.push_back(std::move(w));
        }
    }
    edge_level_.resize(K + 1);
    for (int j = 0; j <= K; ++j) {
        int L = 0;
        while (L + 1 < (int)dy_.size() && y_edge_[j] <= usable * dy_[L + 1]) ++L;
        edge_level_[j] = L;
    }
}

std::vector<double> GEngine::level_mass(const QuantizedDensity& p) const
{
    const int K = grid_.K;
    std::vector<double> suffix(K + 2, 0.0);
    for (int j = K; j >= 1; --j) suffix[j] = suffix[j + 1] + p.mass[K + j] + p.mass[K - j];
    std::vector<double> B(dy_.size());
    for (std::size_t L = 0; L < dy_.size(); ++L) B[L] = suffix[first_bin_[L]];
    for (std::size_t L = 0; L < zero_w_.size() && L < B.size(); ++L) B[L] += p.mass[K];
    return B;
}

GElem GEngine::from_density(const QuantizedDensity& p, int levels) const
{
    if (!(p.grid == grid_)) throw GridMismatch("checknode_combine: grid mismatch");
    const int K = grid_.K, N = cfg_.N;
    levels = std::min(levels, (int)dy_.size());
    GElem e;
    e.sp = p.sat_pos;
    e.sn = p.sat_neg;
    e.lv.resize(levels);
    for (int L = 0; L < levels; ++L) {
        GLevel& l = e.lv[L];
        l.P.assign(N, 0.0);
        l.M.assign(N, 0.0);
        l.P[0] = p.sat_pos;
        l.M[0] = p.sat_neg;
        const double inv = 1.0 / dy_[L];
        for (int j = first_bin_[L]; j <= K; ++j) {
            double mp = p.mass[K + j], mm = p.mass[K - j];
            if (mp == 0.0 && mm == 0.0) continue;
            double u = y_[j] * inv;
            int k = (int)u;
            double w = u - k;
            l.P[k] += mp * (1 - w);
            l.P[k + 1] += mp * w;
            l.M[k] += mm * (1 - w);
            l.M[k + 1] += mm * w;
        }
        if (cfg_.split_zero && p.mass[K] > 0 && L < (int)zero_w_.size())
            for (const auto& [k, w] : zero_w_[L]) {
                l.P[k] += 0.5 * p.mass[K] * w;
                l.M[k] += 0.5 * p.mass[K] * w;
            }
    }
    return e;
}

void GEngine::spectra(const GLevel& l) const
{
    if (l.FP) return;
    const int N = cfg_.N;
    RVec buf(2 * N, 0.0);
    auto fp = std::make_shared<CVec>(fft_->bins());
    auto fm = std::make_shared<CVec>(fft_->bins());
    std::copy(l.P.begin(), l.P.end(), buf.begin());
    fft_->forward(buf.data(), fp->data());
    std::copy(l.M.begin(), l.M.end(), buf.begin());
    fft_->forward(buf.data(), fm->data());
    l.FP = std::move(fp);
    l.FM = std::move(fm);
}

GElem GEngine::mul(const GElem& a, const GElem& b) const
{
    const int N = cfg_.N;
    const int levels = (int)std::min(a.lv.size(), b.lv.size());
    const int nb = fft_->bins();
    const double scale = 1.0 / (2 * N);
    GElem out;
    out.sp = a.sp * b.sp + a.sn * b.sn;
    out.sn = a.sp * b.sn + a.sn * b.sp;
    out.lv.resize(levels);
    CVec cp(nb), cm(nb);
    RVec buf(2 * N);
    for (int L = 0; L < levels; ++L) {
        spectra(a.lv[L]);
        spectra(b.lv[L]);
        const CVec &ap = *a.lv[L].FP, &am = *a.lv[L].FM, &bp = *b.lv[L].FP, &bm = *b.lv[L].FM;
        for (int i = 0; i < nb; ++i) {
            cp[i] = cmul(ap[i], bp[i]) + cmul(am[i], bm[i]);
            cm[i] = cmul(ap[i], bm[i]) + cmul(am[i], bp[i]);
        }
        GLevel& o = out.lv[L];
        o.P.resize(N);
        o.M.resize(N);
        fft_->inverse(cp.data(), buf.data());
        for (int k = 0; k < N; ++k) o.P[k] = std::max(0.0, buf[k] * scale);
        fft_->inverse(cm.data(), buf.data());
        for (int k = 0; k < N; ++k) o.M[k] = std::max(0.0, buf[k] * scale);
    }
    return out;
}

QuantizedDensity GEngine::to_density(const GElem& a) const
{
    const int K = grid_.K, N = cfg_.N;
    const int levels = (int)a.lv.size();
    std::vector<std::vector<double>> CP(levels), CM(levels);
    for (int L = 0; L < levels; ++L) {
        CP[L].assign(N + 1, 0.0);
        CM[L].assign(N + 1, 0.0);
        for (int k = 0; k < N; ++k) {
            CP[L][k + 1] = CP[L][k] + a.lv[L].P[k];
            CM[L][k + 1] = CM[L][k] + a.lv[L].M[k];
        }
    }
    // Signed mass with magnitude y below y_edge_[j], i.e. |x| above (j + 1/2) delta.
    std::vector<double> cp(K + 1), cm(K + 1);
    for (int j = 0; j <= K; ++j) {
        int L = edge_level_[j];
        if (L >= levels) {
            cp[j] = a.sp;
            cm[j] = a.sn;
            continue;
        }
        double u = y_edge_[j] / dy_[L] + 0.5;
        int k = (int)u;
        double f = u - k;
        cp[j] = CP[L][k] + a.lv[L].P[k] * f;
        cm[j] = CM[L][k] + a.lv[L].M[k] * f;
    }

    QuantizedDensity out;
    out.grid = grid_;
    out.mass = Eigen::ArrayXd::Zero(grid_.n());
    for (int j = 1; j <= K; ++j) {
        out.mass[K + j] = std::max(0.0, cp[j - 1] - cp[j]);
        out.mass[K - j] = std::max(0.0, cm[j - 1] - cm[j]);
    }
    out.sat_pos = std::max(0.0, cp[K]);
    out.sat_neg = std::max(0.0, cm[K]);
    double assigned = out.mass.sum() + out.sat_pos + out.sat_neg;
    out.mass[K] = std::max(0.0, 1.0 - assigned);
    normalize(out);
    return out;
}

namespace {

// Mass of N(m, s^2) on [lo, hi), accurate in both tails and near the mean.
double gauss_mass(double lo, double hi, double m, double s)
{
    const double c = 1.0 / (s * std::sqrt(2.0));
    double a = (lo - m) * c, b = (hi - m) * c;
    if (a >= 0) return 0.5 * (std::erfc(a) - std::erfc(b));
    if (b <= 0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
    return 0.5 * (std::erf(b) - std::erf(a));
}

} // namespace

double GEngine::kl_to_symmetric_gaussian(const GElem& a) const
{
    const int N = cfg_.N, levels = (int)a.lv.size();
    const double usable = N - cfg_.guard;
    struct Bin {
        double y0, y1, p, n;
    };
    std::vector<Bin> bins;
    // finest level first: it owns [0, usable * dy); each coarser level owns
    // the stretch up to its own usable range
    double lo = 0.0;
    for (int L = levels - 1; L >= 0; --L) {
        const double dy = dy_[L];
        const double hi = L == 0 ? (N - 1) * dy : usable * dy;
        std::vector<double> CP(N + 1, 0.0), CM(N + 1, 0.0);
        for (int k = 0; k < N; ++k) {
            CP[k + 1] = CP[k] + a.lv[L].P[k];
            CM[k + 1] = CM[k] + a.lv[L].M[k];
        }
        // cumulative signed mass below y; bin k holds mass spread over [(k-1/2)dy, (k+1/2)dy)
        auto cum = [&](const std::vector<double>& C, const RVec& X, double y) {
            double u = y / dy + 0.5;
            int k = std::min((int)u, N - 1);
            return C[k] + X[k] * (u - k);
        };
        double y = lo;
        while (y < hi) {
            double next = std::min(hi, (std::floor(y / dy + 0.5) + 0.5) * dy);
            if (next <= y) next = std::min(hi, y + dy);
            // bin 0 (saturation included) sits at y = 0 exactly
            double p = cum(CP, a.lv[L].P, next) - (y == 0.0 ? 0.0 : cum(CP, a.lv[L].P, y));
            double n = cum(CM, a.lv[L].M, next) - (y == 0.0 ? 0.0 : cum(CM, a.lv[L].M, y));
            bins.push_back({y, next, std::max(0.0, p), std::max(0.0, n)});
            y = next;
        }
        lo = hi;
    }
    // Merge to no finer than the LLR cells: cut only once the next cell edge
    // y_edge_[j] is passed. Beyond y_edge_[0] the fine bins stand alone.
    {
        std::vector<Bin> merged;
        int j = grid_.K;
        bool open = false;
        Bin cur{};
        for (const auto& b : bins) {
            if (!open) cur = b;
            else {
                cur.y1 = b.y1;
                cur.p += b.p;
                cur.n += b.n;
            }
            open = true;
            if (j < 0 || cur.y1 >= y_edge_[j]) {
                merged.push_back(cur);
                open = false;
                while (j >= 0 && y_edge_[j] <= cur.y1) --j;
            }
        }
        if (open) merged.push_back(cur);
        bins.swap(merged);
    }
    const double xmax = grid_.llr_max;
    auto x_of = phi_map;
    double total = 0.0, m = 0.0;
    for (const auto& b : bins) {
        double x = std::min(xmax, x_of(0.5 * (b.y0 + b.y1)));
        total += b.p + b.n;
        m += (b.p - b.n) * x;
    }
    double lost = std::max(0.0, 1.0 - total);
    if (total <= 0) throw std::domain_error("kl: empty density");
    m /= std::max(total, 1.0);
    if (!(m > 0)) throw std::domain_error("kl: mean must be positive");
    const double s = std::sqrt(2 * m), floor = 1e-30;
    const double norm = total + lost;
    double kl = 0.0;
    auto term = [&](double p, double q) {
        p /= norm;
        if (p > 0) kl += p * std::log(p / std::max(q, floor));
    };
    for (const auto& b : bins) {
        double x0 = x_of(b.y1), x1 = x_of(b.y0);
        term(b.p, gauss_mass(x0, x1, m, s));
        term(b.n, gauss_mass(-x1, -x0, m, s));
    }
    double xe = x_of(bins.empty() ? 0.0 : bins.back().y1);
    term(lost, gauss_mass(-xe, xe, m, s));
    return std::max(0.0, kl);
}

int GEngine::levels_needed(const std::vector<const std::vector<double>*>& B,
                           const std::vector<double>& S, const std::vector<int>& exps) const
{
    const std::size_t nf = exps.size();
    for (int L = 0; L < (int)dy_.size(); ++L) {
        // prod (S+B)^e - prod S^e, expanded so nothing cancels.
        double bound = 0.0;
        for (std::size_t k = 0; k < nf; ++k) {
            if (exps[k] == 0) continue;
            double term = exps[k] * (*B[k])[L] * std::pow(S[k] + (*B[k])[L], exps[k] - 1);
            for (std::size_t q = 0; q < nf; ++q) {
                if (q == k || exps[q] == 0) continue;
                term *= q < k ? std::pow(S[q] + (*B[q])[L], exps[q]) : std::pow(S[q], exps[q]);
            }
            bound += term;
        }
        if (bound < cfg_.prune) return L;
    }
    return (int)dy_.size();
}

// ---------------------------------------------------------------------------

namespace {

struct GridKey {
    int K;
    double L;
    bool operator<(const GridKey& o) const { return K != o.K ? K < o.K : L < o.L; }
};

} // namespace

const XEngine& x_engine(const Grid& g)
{
    static std::mutex m;
    static std::map<GridKey, std::unique_ptr<XEngine>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto& slot = cache[{g.K, g.llr_max}];
    if (!slot) slot = std::make_unique<XEngine>(g);
    return *slot;
}

const GEngine& g_engine(const Grid& g)
{
    static std::mutex m;
    static std::map<GridKey, std::unique_ptr<GEngine>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto& slot = cache[{g.K, g.llr_max}];
    if (!slot) slot = std::make_unique<GEngine>(g);
    return *slot;
}

} // namespace metde::kernels
