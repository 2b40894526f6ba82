#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace metde {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// b has length m_r + 1; index 0 marks a punctured node, index 1 a transmitted one.
struct VariableNodeClass {
    double coef = 0.0;
    std::vector<int> b;
    std::vector<int> d;

    bool punctured() const { return !b.empty() && b[0] == 1; }
    int degree() const;
};

struct CheckNodeClass {
    double coef = 0.0;
    std::vector<int> d;

    int degree() const;
};

struct MetEnsemble {
    int m_e = 0;
    int m_r = 1;
    std::vector<VariableNodeClass> vn;
    std::vector<CheckNodeClass> cn;

    // Per edge-type socket counts, L_{x_i}(1,1) and R_{x_i}(1).
    std::vector<double> vn_sockets() const;
    std::vector<double> cn_sockets() const;
};

// Socket balance tolerance: |L_i - R_i| <= abs_tol * max(1, L_i).
struct BalanceTolerance {
    double abs_tol = 1e-12;
};

inline constexpr BalanceTolerance kExactBalance{1e-12};
inline constexpr BalanceTolerance kFixtureBalance{1e-3};

// Throws ValidationError naming the violated invariant.
void validate(const MetEnsemble& e, BalanceTolerance tol = kExactBalance);

MetEnsemble parse_ensemble(const std::string& text, BalanceTolerance tol = kFixtureBalance);
MetEnsemble load_ensemble(const std::string& path, BalanceTolerance tol = kFixtureBalance);
std::string to_json(const MetEnsemble& e);

double rate(const MetEnsemble& e);

struct EdgeWeight {
    int cls;
    double w;
};

struct EdgePerspective {
    std::vector<std::vector<EdgeWeight>> lambda; // [edge type] -> vn classes with d_i > 0
    std::vector<std::vector<EdgeWeight>> rho;    // [edge type] -> cn classes with d_i > 0
};

EdgePerspective edge_perspective(const MetEnsemble& e);

struct AverageDegrees {
    double dv;
    double dc;
};

AverageDegrees average_degrees(const MetEnsemble& e);

enum class Method { full, mean, ber, rca, hybrid };

Method parse_method(const std::string& s);
const char* method_name(Method m);

struct NodeCost {
    double sums = 0, mults = 0, lookups = 0, exps = 0, qfuncs = 0, convs = 0;
};

struct CostTable {
    NodeCost vn;
    NodeCost cn;
};

// Floating-point operations per edge per iteration. alpha is the fraction of
// full-DE iterations and is only meaningful for the hybrid method.
CostTable cost_model(const MetEnsemble& e, Method method, double alpha = 0.0);

} // namespace metde
