#pragma once
// Engines behind convolve() and checknode_combine(). full_de uses them
// directly so spectra and partial products can be shared within an iteration.

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <new>
#include <utility>
#include <vector>

#include "metde/density.hpp"

namespace metde::kernels {

void* fft_alloc(std::size_t bytes);
void fft_free(void* p) noexcept;

template <class T>
struct FftAllocator {
    using value_type = T;
    FftAllocator() = default;
    template <class U>
    FftAllocator(const FftAllocator<U>&) {}
    T* allocate(std::size_t n)
    {
        void* p = fft_alloc(n * sizeof(T));
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { fft_free(p); }
    template <class U>
    bool operator==(const FftAllocator<U>&) const { return true; }
};

using RVec = std::vector<double, FftAllocator<double>>;
using CVec = std::vector<std::complex<double>, FftAllocator<std::complex<double>>>;

int next_fast_size(int n);

// Real-to-complex transform pair of a fixed length; plans are shared and the
// execute calls are thread-safe. inverse() is unnormalized.
class RealFft {
public:
    static const RealFft& get(int size);

    int size() const { return n_; }
    int bins() const { return n_ / 2 + 1; }
    void forward(const double* in, std::complex<double>* out) const;
    void inverse(const std::complex<double>* in, double* out) const;

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    ~RealFft();

private:
    explicit RealFft(int n);
    int n_;
    void* fwd_;
    void* inv_;
};

// ---- LLR domain (variable-node side) ----

struct XElem {
    QuantizedDensity d;
    mutable std::shared_ptr<const CVec> spec;
};

class XEngine {
public:
    explicit XEngine(const Grid& g);

    const Grid& grid() const { return grid_; }
    const CVec& spectrum(const XElem& a) const;
    XElem mul(const XElem& a, const XElem& b) const;

private:
    Grid grid_;
    int M_;
    const RealFft* fft_;
};

// ---- Magnitude domain (check-node side) ----
//
// A density is split by sign into P (positive LLR) and M (negative LLR)
// masses over y = -ln tanh(|x|/2). Level L covers y in [0, N*dy_L) with
// dy_L = dy_0 / r^L, so every level resolves its own range with the same
// relative precision. Saturated inputs sit at y = 0. The zero LLR bin is
// the annihilator and never enters.

struct GLevel {
    RVec P, M;
    mutable std::shared_ptr<const CVec> FP, FM;
};

struct GElem {
    std::vector<GLevel> lv;
    double sp = 0.0, sn = 0.0; // all-saturated product, signed
};

struct GConfig {
    int N = 1024;
    int ratio = 8;
    int guard = 64; // bins kept clear of the truncation edge
    double prune = 1e-25;
    // Level-0 range in y; 0 picks the range of the nonzero LLR bins. A wider
    // range keeps products whose magnitude falls below the LLR grid.
    double y_range = 0.0;
    // Spread the zero LLR bin uniformly over |x| < delta/2, half per sign,
    // instead of treating it as the annihilator.
    bool split_zero = false;
};

class GEngine {
public:
    GEngine(const Grid& g, GConfig cfg = {});

    const Grid& grid() const { return grid_; }
    int levels() const { return (int)dy_.size(); }

    // Total mass (bulk and saturated) visible to each level.
    std::vector<double> level_mass(const QuantizedDensity& p) const;
    GElem from_density(const QuantizedDensity& p, int levels) const;
    GElem mul(const GElem& a, const GElem& b) const;
    QuantizedDensity to_density(const GElem& a) const;

    // KL divergence from the symmetric Gaussian N(m, 2m) of equal mean,
    // evaluated over the magnitude bins (each level on its own range), so
    // densities far narrower than the LLR grid stay resolved. Mass lost off
    // the far end counts as one more bin. Throws std::domain_error when m <= 0.
    double kl_to_symmetric_gaussian(const GElem& a) const;

    // Levels needed for a product whose factors have per-level masses T and
    // saturated masses S, raised to the given exponents.
    int levels_needed(const std::vector<const std::vector<double>*>& T,
                      const std::vector<double>& S, const std::vector<int>& exps) const;

private:
    void spectra(const GLevel& l) const;

    Grid grid_;
    GConfig cfg_;
    const RealFft* fft_;
    std::vector<double> dy_;       // bin width per level
    std::vector<int> first_bin_;   // first LLR bin index (>=1) visible to each level
    std::vector<double> y_;        // y of LLR bin j, j = 0..K (y_[0] unused)
    std::vector<double> y_edge_;   // y at LLR (j + 1/2) delta, j = 0..K
    std::vector<int> edge_level_;  // level used to read y_edge_[j]
    std::vector<std::vector<std::pair<int, double>>> zero_w_; // split_zero weights per level
};

// Memoized powers base_k^e and their products, built by repeated squaring.
template <class Ops>
class PowerCache {
public:
    using Elem = typename Ops::Elem;
    using Ptr = std::shared_ptr<const Elem>;

    PowerCache(const Ops& ops, std::vector<Ptr> bases) : ops_(ops), base_(std::move(bases)) {}

    // Empty result (nullptr) means the identity.
    Ptr power(int k, int e)
    {
        if (e <= 0) return nullptr;
        if (e == 1) return base_[k];
        auto key = std::make_pair(k, e);
        auto it = cache_.find(key);
        if (it != cache_.end() && ops_.fits(*it->second)) return it->second;
        Ptr r;
        if (e % 2 == 0) {
            Ptr h = power(k, e / 2);
            r = std::make_shared<const Elem>(ops_.mul(*h, *h));
        } else {
            Ptr h = power(k, e - 1);
            r = std::make_shared<const Elem>(ops_.mul(*h, *base_[k]));
        }
        cache_[key] = r;
        return r;
    }

    // extra * prod_k base_k^{exps[k]}
    Ptr product(const std::vector<int>& exps, Ptr extra = nullptr)
    {
        Ptr acc = std::move(extra);
        for (std::size_t k = 0; k < exps.size(); ++k) {
            Ptr p = power((int)k, exps[k]);
            if (!p) continue;
            acc = acc ? std::make_shared<const Elem>(ops_.mul(*acc, *p)) : p;
        }
        return acc;
    }

private:
    const Ops& ops_;
    std::vector<Ptr> base_;
    std::map<std::pair<int, int>, Ptr> cache_;
};

struct XOps {
    using Elem = XElem;
    const XEngine& eng;
    Elem mul(const Elem& a, const Elem& b) const { return eng.mul(a, b); }
    bool fits(const Elem&) const { return true; }
};

struct GOps {
    using Elem = GElem;
    const GEngine& eng;
    int levels = 0; // minimum level count a cached entry must carry
    Elem mul(const Elem& a, const Elem& b) const { return eng.mul(a, b); }
    bool fits(const Elem& e) const { return (int)e.lv.size() >= levels; }
};

// Shared engines per grid (thread-safe lookup).
const XEngine& x_engine(const Grid& g);
const GEngine& g_engine(const Grid& g);

} // namespace metde::kernels
