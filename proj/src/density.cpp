#include "metde/density.hpp"

#include <cmath>
#include <stdexcept>

#include "metde/kernels.hpp"

namespace metde {

namespace {

// Upper tail P(Z > z) for standard normal Z.
double upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// P(a < Z < b), evaluated on the tail side that avoids cancellation.
double band(double a, double b)
{
    if (a >= 0) return upper(a) - upper(b);
    if (b <= 0) return upper(-b) - upper(-a);
    return 1.0 - upper(b) - upper(-a);
}

void require_same(const QuantizedDensity& p, const QuantizedDensity& q, const char* what)
{
    if (!(p.grid == q.grid)) throw GridMismatch(std::string(what) + ": grid mismatch");
}

} // namespace

Grid make_grid(int points, double llr_max)
{
    if (points < 4) throw std::invalid_argument("grid needs at least 4 points");
    if (!(llr_max > 0)) throw std::invalid_argument("llr_max must be positive");
    return Grid{points / 2, llr_max};
}

QuantizedDensity gaussian_density(double m, double var, const Grid& g)
{
    if (!(var > 0)) throw std::invalid_argument("gaussian_density: variance must be positive");
    const double s = std::sqrt(var), D = g.delta();
    QuantizedDensity p;
    p.grid = g;
    p.mass.resize(g.n());
    for (int i = 0; i < g.n(); ++i) {
        double x = g.x(i);
        p.mass[i] = band((x - D / 2 - m) / s, (x + D / 2 - m) / s);
    }
    p.sat_pos = upper((g.llr_max + D / 2 - m) / s);
    p.sat_neg = upper((g.llr_max + D / 2 + m) / s);
    normalize(p);
    return p;
}

QuantizedDensity delta_at_zero(const Grid& g)
{
    QuantizedDensity p;
    p.grid = g;
    p.mass = Eigen::ArrayXd::Zero(g.n());
    p.mass[g.K] = 1.0;
    return p;
}

QuantizedDensity saturated_density(const Grid& g, bool positive)
{
    QuantizedDensity p;
    p.grid = g;
    p.mass = Eigen::ArrayXd::Zero(g.n());
    (positive ? p.sat_pos : p.sat_neg) = 1.0;
    return p;
}

QuantizedDensity mixture(const std::vector<std::pair<double, const QuantizedDensity*>>& parts)
{
    if (parts.empty()) throw std::invalid_argument("mixture of nothing");
    QuantizedDensity out;
    out.grid = parts[0].second->grid;
    out.mass = Eigen::ArrayXd::Zero(out.grid.n());
    for (const auto& [w, p] : parts) {
        require_same(out, *p, "mixture");
        out.mass += w * p->mass;
        out.sat_neg += w * p->sat_neg;
        out.sat_pos += w * p->sat_pos;
    }
    normalize(out);
    return out;
}

QuantizedDensity convolve(const QuantizedDensity& p, const QuantizedDensity& q)
{
    require_same(p, q, "convolve");
    const auto& eng = kernels::x_engine(p.grid);
    kernels::XElem a{p, nullptr}, b{q, nullptr};
    auto out = eng.mul(a, b).d;
    normalize(out);
    return out;
}

QuantizedDensity checknode_combine(const QuantizedDensity& p, const QuantizedDensity& q)
{
    require_same(p, q, "checknode_combine");
    const auto& eng = kernels::g_engine(p.grid);
    auto bp = eng.level_mass(p), bq = eng.level_mass(q);
    int levels = eng.levels_needed({&bp, &bq}, {p.sat_pos + p.sat_neg, q.sat_pos + q.sat_neg}, {1, 1});
    auto a = eng.from_density(p, levels);
    auto b = eng.from_density(q, levels);
    return eng.to_density(eng.mul(a, b));
}

double error_probability(const QuantizedDensity& p)
{
    const int K = p.grid.K;
    return p.mass.head(K).sum() + 0.5 * p.mass[K] + p.sat_neg;
}

double mean(const QuantizedDensity& p)
{
    const Grid& g = p.grid;
    double s = 0;
    for (int i = 0; i < g.n(); ++i) s += g.x(i) * p.mass[i];
    return s + g.llr_max * (p.sat_pos - p.sat_neg);
}

double variance(const QuantizedDensity& p)
{
    const Grid& g = p.grid;
    const double m = mean(p);
    double s = 0;
    for (int i = 0; i < g.n(); ++i) s += (g.x(i) - m) * (g.x(i) - m) * p.mass[i];
    s += (g.llr_max - m) * (g.llr_max - m) * p.sat_pos;
    s += (g.llr_max + m) * (g.llr_max + m) * p.sat_neg;
    return s;
}

double kl_to_symmetric_gaussian(const QuantizedDensity& p)
{
    const double m = mean(p);
    if (!(m > 0)) throw std::domain_error("KL to symmetric Gaussian needs a positive mean");
    const auto ref = gaussian_density(m, 2 * m, p.grid);
    constexpr double floor = 1e-30;
    auto term = [&](double a, double b) { return a > 0 ? a * std::log(a / std::max(b, floor)) : 0.0; };
    double kl = term(p.sat_neg, ref.sat_neg) + term(p.sat_pos, ref.sat_pos);
    for (int i = 0; i < p.grid.n(); ++i) kl += term(p.mass[i], ref.mass[i]);
    return kl;
}

double symmetry_defect(const QuantizedDensity& p, double x_cap)
{
    const Grid& g = p.grid;
    const int K = g.K;
    const double floor = 1e-12 * p.mass.maxCoeff();
    double worst = 0;
    for (int j = 1; j <= K && j * g.delta() <= x_cap; ++j) {
        double a = p.mass[K + j], b = p.mass[K - j];
        if (a <= floor || b <= floor) continue;
        worst = std::max(worst, std::abs(std::log(a / b) - j * g.delta()));
    }
    return worst;
}

void normalize(QuantizedDensity& p)
{
    p.mass = p.mass.max(0.0);
    p.sat_neg = std::max(0.0, p.sat_neg);
    p.sat_pos = std::max(0.0, p.sat_pos);
    double t = p.total();
    if (!(t > 0)) throw std::runtime_error("density has no mass");
    p.mass /= t;
    p.sat_neg /= t;
    p.sat_pos /= t;
}

} // namespace metde
