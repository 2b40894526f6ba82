#include "metde/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Dense>
#include <json.hpp>

namespace metde {

using json = nlohmann::json;

double AffineCoef::eval(const std::map<std::string, double>& v) const
{
    double s = constant;
    for (const auto& [name, k] : terms) {
        auto it = v.find(name);
        if (it == v.end()) throw ValidationError("no value for parameter " + name);
        s += k * it->second;
    }
    return s;
}

namespace {

AffineCoef parse_coef(const json& j)
{
    AffineCoef c;
    if (j.is_number()) {
        c.constant = j.get<double>();
        return c;
    }
    if (!j.is_object()) throw ParseError("coef must be a number or an object of affine terms");
    for (const auto& [k, v] : j.items()) {
        if (!v.is_number()) throw ParseError("affine term " + k + " must be a number");
        if (k == "const") c.constant = v.get<double>();
        else c.terms[k] = v.get<double>();
    }
    return c;
}

std::vector<int> ints(const json& j, const char* what)
{
    if (!j.is_array()) throw ParseError(std::string(what) + " must be an array");
    std::vector<int> v;
    for (const auto& x : j) {
        if (!x.is_number_integer()) throw ParseError(std::string(what) + " entries must be integers");
        v.push_back(x.get<int>());
    }
    return v;
}

// Least-change projection of the check coefficients onto socket balance and
// the rate constraint.
void repair_checks(MetEnsemble& e, double target_rate)
{
    const int nc = (int)e.cn.size();
    const int rows = e.m_e + (target_rate > 0 ? 1 : 0);
    Eigen::MatrixXd A(rows, nc);
    Eigen::VectorXd b(rows), r0(nc);
    auto vs = e.vn_sockets();
    double lsum = 0;
    for (const auto& c : e.vn) lsum += c.coef;
    for (int k = 0; k < nc; ++k) {
        r0[k] = e.cn[k].coef;
        for (int i = 0; i < e.m_e; ++i) A(i, k) = e.cn[k].d[i];
        if (target_rate > 0) A(e.m_e, k) = 1.0;
    }
    for (int i = 0; i < e.m_e; ++i) b[i] = vs[i];
    if (target_rate > 0) b[e.m_e] = lsum - target_rate;
    Eigen::VectorXd corr = A.completeOrthogonalDecomposition().solve(b - A * r0);
    Eigen::VectorXd r = r0 + corr;
    for (int k = 0; k < nc; ++k) e.cn[k].coef = r[k];
}

} // namespace

MetEnsemble EnsembleTemplate::instantiate(const std::map<std::string, double>& values) const
{
    std::map<std::string, double> v = init;
    for (const auto& [k, x] : values) v[k] = x;
    for (const auto& [k, bd] : bounds) {
        auto it = v.find(k);
        if (it != v.end() && (it->second < bd.first || it->second > bd.second))
            throw ValidationError("parameter " + k + " outside its bounds");
    }
    MetEnsemble e;
    e.m_e = m_e;
    e.m_r = m_r;
    for (const auto& t : vn) e.vn.push_back({t.coef.eval(v), t.b, t.d});
    for (const auto& t : cn) e.cn.push_back({t.coef.eval(v), t.d});
    for (const auto& c : e.vn)
        if (c.coef < 0) throw ValidationError("negative variable coefficient");
    if (repair) repair_checks(e, target_rate);
    for (auto& c : e.cn) {
        if (c.coef < -1e-12) throw ValidationError("negative check coefficient");
        c.coef = std::max(c.coef, 0.0);
    }
    validate(e, BalanceTolerance{1e-9});
    if (target_rate > 0 && std::abs(rate(e) - target_rate) >= 1e-6)
        throw ValidationError("rate " + std::to_string(rate(e)) + " differs from the target");
    return e;
}

EnsembleTemplate parse_template(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ParseError(ex.what());
    }
    for (const char* key : {"m_e", "L", "R"})
        if (!doc.contains(key)) throw ParseError(std::string("missing field ") + key);
    EnsembleTemplate t;
    t.m_e = doc["m_e"].get<int>();
    t.m_r = doc.value("m_r", 1);
    for (const auto& n : doc["L"]) t.vn.push_back({parse_coef(n.at("coef")), ints(n.at("b"), "b"), ints(n.at("d"), "d")});
    for (const auto& n : doc["R"]) t.cn.push_back({parse_coef(n.at("coef")), ints(n.at("d"), "d")});
    if (doc.contains("free"))
        for (const auto& f : doc["free"]) t.free.push_back(f.get<std::string>());
    if (doc.contains("bounds"))
        for (const auto& [k, v] : doc["bounds"].items()) t.bounds[k] = {v.at(0).get<double>(), v.at(1).get<double>()};
    if (doc.contains("init"))
        for (const auto& [k, v] : doc["init"].items()) t.init[k] = v.get<double>();
    t.target_rate = doc.value("target_rate", 0.0);
    t.repair = doc.value("repair", false);
    for (const auto& f : t.free)
        if (!t.init.count(f)) throw ParseError("free parameter " + f + " has no init value");
    return t;
}

EnsembleTemplate load_template(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_template(ss.str());
}

EnsembleTemplate template_from_ensemble(const MetEnsemble& e)
{
    EnsembleTemplate t;
    t.m_e = e.m_e;
    t.m_r = e.m_r;
    for (std::size_t k = 0; k < e.vn.size(); ++k) {
        std::string name = "L" + std::to_string(k + 1);
        AffineCoef c;
        c.terms[name] = 1.0;
        t.vn.push_back({c, e.vn[k].b, e.vn[k].d});
        t.free.push_back(name);
        t.bounds[name] = {0.0, 1.0};
        t.init[name] = e.vn[k].coef;
    }
    for (const auto& c : e.cn) t.cn.push_back({AffineCoef{c.coef, {}}, c.d});
    t.target_rate = rate(e);
    t.repair = true;
    return t;
}

std::vector<SweepPoint> sweep_parameter(const EnsembleTemplate& t, const std::string& param,
                                        const std::vector<double>& grid, Method method, const HybridConfig& cfg,
                                        const SearchSpec& search, int jobs)
{
    if (std::find(t.free.begin(), t.free.end(), param) == t.free.end())
        throw std::invalid_argument("sweep parameter " + param + " is not free in the template");
    std::vector<SweepPoint> out(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next++) < grid.size();) {
            SweepPoint& sp = out[k];
            sp.value = grid[k];
            MetEnsemble e;
            try {
                e = t.instantiate({{param, grid[k]}});
            } catch (const ValidationError& ex) {
                sp.reason = ex.what();
                continue;
            }
            try {
                auto r = find_threshold(e, method, cfg, search);
                sp.valid = true;
                sp.sigma_star = r.sigma_star;
                sp.seconds = r.wall_time;
            } catch (const BracketError& ex) {
                sp.reason = ex.what();
            }
        }
    };
    jobs = std::max(1, std::min<int>(jobs, (int)grid.size()));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (std::none_of(out.begin(), out.end(), [](const SweepPoint& p) { return p.valid; }))
        throw ValidationError("no valid point in the sweep grid");
    return out;
}

OptimizeResult optimize_ensemble(const EnsembleTemplate& t, Method method, const HybridConfig& cfg, int budget,
                                 std::uint64_t seed, const SearchSpec& search)
{
    if (budget < 1) throw std::invalid_argument("budget must be at least 1");
    if (t.free.empty()) throw std::invalid_argument("template has no free parameter");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    OptimizeResult res;
    res.params = t.init;
    res.best = t.instantiate(res.params);
    res.sigma_star = find_threshold(res.best, method, cfg, search).sigma_star;
    res.evaluations = 1;

    std::map<std::string, double> step;
    for (const auto& f : t.free) {
        auto it = t.bounds.find(f);
        double w = it != t.bounds.end() ? it->second.second - it->second.first : std::max(0.1, std::abs(t.init.at(f)));
        step[f] = 0.25 * w;
    }
    int draws = 0;
    const int max_draws = 50 * budget;
    while (res.evaluations < budget && draws < max_draws) {
        ++draws;
        double decay = 1.0 - 0.9 * double(res.evaluations) / budget;
        auto cand = res.params;
        for (const auto& f : t.free) {
            double x = cand[f] + decay * step[f] * gauss(rng);
            auto it = t.bounds.find(f);
            if (it != t.bounds.end()) x = std::clamp(x, it->second.first, it->second.second);
            cand[f] = x;
        }
        MetEnsemble e;
        try {
            e = t.instantiate(cand);
        } catch (const ValidationError&) {
            continue;
        }
        ++res.evaluations;
        // improvement test: one run just above the incumbent
        double above = res.sigma_star + search.tol;
        if (!run_method(e, above, method, cfg).converged) continue;
        SearchSpec s = search;
        s.sigma_lo = above;
        s.sigma_hi = above * 1.1;
        double sig;
        try {
            sig = find_threshold(e, method, cfg, s).sigma_star;
        } catch (const BracketError&) {
            continue;
        }
        res.best = e;
        res.params = cand;
        res.sigma_star = sig;
        ++res.accepted;
    }
    return res;
}

} // namespace metde
