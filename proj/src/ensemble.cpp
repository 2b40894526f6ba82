#include "metde/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace metde {

using nlohmann::json;

int VariableNodeClass::degree() const { return std::accumulate(d.begin(), d.end(), 0); }
int CheckNodeClass::degree() const { return std::accumulate(d.begin(), d.end(), 0); }

std::vector<double> MetEnsemble::vn_sockets() const
{
    std::vector<double> s(m_e, 0.0);
    for (const auto& c : vn)
        for (int i = 0; i < m_e; ++i) s[i] += c.coef * c.d[i];
    return s;
}

std::vector<double> MetEnsemble::cn_sockets() const
{
    std::vector<double> s(m_e, 0.0);
    for (const auto& c : cn)
        for (int i = 0; i < m_e; ++i) s[i] += c.coef * c.d[i];
    return s;
}

void validate(const MetEnsemble& e, BalanceTolerance tol)
{
    if (e.m_e < 1) throw ValidationError("m_e must be at least 1");
    if (e.m_r < 1) throw ValidationError("m_r must be at least 1");
    if (e.vn.empty()) throw ValidationError("no variable node classes");
    if (e.cn.empty()) throw ValidationError("no check node classes");

    for (std::size_t k = 0; k < e.vn.size(); ++k) {
        const auto& c = e.vn[k];
        std::string where = "variable class " + std::to_string(k) + ": ";
        if (!(c.coef >= 0.0) || !std::isfinite(c.coef)) throw ValidationError(where + "negative or non-finite coef");
        if ((int)c.b.size() != e.m_r + 1) throw ValidationError(where + "b must have length m_r+1");
        if ((int)c.d.size() != e.m_e) throw ValidationError(where + "d must have length m_e");
        int ones = 0;
        for (int v : c.b) {
            if (v != 0 && v != 1) throw ValidationError(where + "b entries must be 0 or 1");
            ones += v;
        }
        if (ones != 1) throw ValidationError(where + "b must have exactly one entry equal to 1");
        for (int v : c.d)
            if (v < 0) throw ValidationError(where + "negative edge count");
        if (c.degree() < 1) throw ValidationError(where + "node has no edges");
    }
    for (std::size_t k = 0; k < e.cn.size(); ++k) {
        const auto& c = e.cn[k];
        std::string where = "check class " + std::to_string(k) + ": ";
        if (!(c.coef >= 0.0) || !std::isfinite(c.coef)) throw ValidationError(where + "negative or non-finite coef");
        if ((int)c.d.size() != e.m_e) throw ValidationError(where + "d must have length m_e");
        for (int v : c.d)
            if (v < 0) throw ValidationError(where + "negative edge count");
        if (c.degree() < 2) throw ValidationError(where + "check degree below 2");
    }

    auto vs = e.vn_sockets();
    auto cs = e.cn_sockets();
    std::ostringstream bad;
    for (int i = 0; i < e.m_e; ++i) {
        if (vs[i] <= 0.0 && cs[i] <= 0.0) {
            bad << " edge-type " << i + 1 << " has no sockets;";
            continue;
        }
        if (std::abs(vs[i] - cs[i]) > tol.abs_tol * std::max(1.0, vs[i]))
            bad << " edge-type " << i + 1 << ": variable side " << vs[i] << " vs check side " << cs[i] << ";";
    }
    if (!bad.str().empty()) throw ValidationError("socket imbalance:" + bad.str());

    double r = rate(e);
    if (!(r > 0.0 && r < 1.0)) throw ValidationError("rate " + std::to_string(r) + " outside (0,1)");
}

namespace {

std::vector<int> int_vec(const json& j, const char* what)
{
    if (!j.is_array()) throw ParseError(std::string(what) + " must be an array");
    std::vector<int> v;
    for (const auto& x : j) {
        if (!x.is_number_integer()) throw ParseError(std::string(what) + " entries must be integers");
        v.push_back(x.get<int>());
    }
    return v;
}

double number(const json& j, const char* what)
{
    if (!j.is_number()) throw ParseError(std::string(what) + " must be a number");
    return j.get<double>();
}

} // namespace

MetEnsemble parse_ensemble(const std::string& text, BalanceTolerance tol)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ParseError(ex.what());
    }
    if (!doc.is_object()) throw ParseError("ensemble document must be an object");
    for (const char* key : {"m_e", "L", "R"})
        if (!doc.contains(key)) throw ParseError(std::string("missing field ") + key);

    MetEnsemble e;
    if (!doc["m_e"].is_number_integer()) throw ParseError("m_e must be an integer");
    e.m_e = doc["m_e"].get<int>();
    e.m_r = 1;
    if (doc.contains("m_r")) {
        if (!doc["m_r"].is_number_integer()) throw ParseError("m_r must be an integer");
        e.m_r = doc["m_r"].get<int>();
    }
    if (!doc["L"].is_array() || !doc["R"].is_array()) throw ParseError("L and R must be arrays");
    for (const auto& t : doc["L"]) {
        if (!t.is_object() || !t.contains("coef") || !t.contains("b") || !t.contains("d"))
            throw ParseError("L entries need coef, b and d");
        e.vn.push_back({number(t["coef"], "coef"), int_vec(t["b"], "b"), int_vec(t["d"], "d")});
    }
    for (const auto& t : doc["R"]) {
        if (!t.is_object() || !t.contains("coef") || !t.contains("d"))
            throw ParseError("R entries need coef and d");
        e.cn.push_back({number(t["coef"], "coef"), int_vec(t["d"], "d")});
    }
    validate(e, tol);
    return e;
}

MetEnsemble load_ensemble(const std::string& path, BalanceTolerance tol)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ensemble(ss.str(), tol);
}

std::string to_json(const MetEnsemble& e)
{
    json doc;
    doc["m_e"] = e.m_e;
    doc["m_r"] = e.m_r;
    doc["L"] = json::array();
    for (const auto& c : e.vn) doc["L"].push_back({{"coef", c.coef}, {"b", c.b}, {"d", c.d}});
    doc["R"] = json::array();
    for (const auto& c : e.cn) doc["R"].push_back({{"coef", c.coef}, {"d", c.d}});
    return doc.dump(2);
}

double rate(const MetEnsemble& e)
{
    double l = 0, r = 0;
    for (const auto& c : e.vn) l += c.coef;
    for (const auto& c : e.cn) r += c.coef;
    return l - r;
}

EdgePerspective edge_perspective(const MetEnsemble& e)
{
    EdgePerspective p;
    p.lambda.resize(e.m_e);
    p.rho.resize(e.m_e);
    auto vs = e.vn_sockets();
    auto cs = e.cn_sockets();
    for (int i = 0; i < e.m_e; ++i) {
        if (vs[i] <= 0.0 || cs[i] <= 0.0)
            throw ValidationError("edge-type " + std::to_string(i + 1) + " has zero sockets");
        for (std::size_t k = 0; k < e.vn.size(); ++k)
            if (e.vn[k].d[i] > 0) p.lambda[i].push_back({(int)k, e.vn[k].coef * e.vn[k].d[i] / vs[i]});
        for (std::size_t k = 0; k < e.cn.size(); ++k)
            if (e.cn[k].d[i] > 0) p.rho[i].push_back({(int)k, e.cn[k].coef * e.cn[k].d[i] / cs[i]});
    }
    return p;
}

AverageDegrees average_degrees(const MetEnsemble& e)
{
    double vm = 0, vsock = 0, cm = 0, csock = 0;
    for (const auto& c : e.vn) {
        vm += c.coef;
        vsock += c.coef * c.degree();
    }
    for (const auto& c : e.cn) {
        cm += c.coef;
        csock += c.coef * c.degree();
    }
    return {vsock / vm, csock / cm};
}

Method parse_method(const std::string& s)
{
    if (s == "full") return Method::full;
    if (s == "mean") return Method::mean;
    if (s == "ber") return Method::ber;
    if (s == "rca") return Method::rca;
    if (s == "hybrid") return Method::hybrid;
    throw std::invalid_argument("unknown method '" + s + "'");
}

const char* method_name(Method m)
{
    switch (m) {
    case Method::full: return "full";
    case Method::mean: return "mean";
    case Method::ber: return "ber";
    case Method::rca: return "rca";
    case Method::hybrid: return "hybrid";
    }
    return "?";
}

CostTable cost_model(const MetEnsemble& e, Method method, double alpha)
{
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
    auto [dv, dc] = average_degrees(e);
    CostTable t;
    switch (method) {
    case Method::full:
        t.vn.convs = dv;
        t.cn.convs = dc - 1;
        break;
    case Method::mean:
        t.vn.sums = dv;
        t.cn.sums = dc;
        t.cn.lookups = dc;
        t.cn.exps = dc - 1;
        break;
    case Method::ber:
        t.vn.sums = dv;
        t.vn.mults = 2;
        t.vn.exps = 1;
        t.vn.qfuncs = 1;
        t.cn.sums = 2 * dc + 1;
        t.cn.exps = dc - 1;
        break;
    case Method::rca:
        t.vn.sums = dv;
        t.vn.lookups = dv - 1;
        t.cn.sums = dc - 1;
        t.cn.lookups = dc - 1;
        break;
    case Method::hybrid:
        t.vn.sums = (1 - alpha) * dv;
        t.vn.convs = alpha * dv;
        t.cn.sums = (1 - alpha) * dc;
        t.cn.lookups = (1 - alpha) * dc;
        t.cn.exps = (1 - alpha) * (dc - 1);
        t.cn.convs = alpha * (dc - 1);
        break;
    }
    return t;
}

} // namespace metde
