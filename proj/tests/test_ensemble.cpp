#include <doctest.h>

#include <cmath>
#include <string>

#include "metde/ensemble.hpp"

using namespace metde;

namespace {

std::string data(const std::string& name) { return std::string(METDE_DATA_DIR) + "/ensembles/" + name; }

const char* kFig1 = R"({"m_e": 4, "m_r": 1,
  "L": [{"coef": 0.5, "b": [0,1], "d": [2,0,0,0]},
        {"coef": 0.3, "b": [0,1], "d": [3,0,0,0]},
        {"coef": 0.2, "b": [1,0], "d": [0,3,3,0]},
        {"coef": 0.2, "b": [0,1], "d": [0,0,0,1]}],
  "R": [{"coef": 0.4, "d": [4,1,0,0]},
        {"coef": 0.1, "d": [3,2,0,0]},
        {"coef": 0.2, "d": [0,0,3,1]}]})";

} // namespace

TEST_CASE("fig1 parses and has rate one half")
{
    auto e = parse_ensemble(kFig1, kExactBalance);
    CHECK(e.m_e == 4);
    CHECK(e.vn.size() == 4);
    CHECK(e.vn[2].punctured());
    CHECK(rate(e) == doctest::Approx(0.5).epsilon(1e-15));
    auto vs = e.vn_sockets(), cs = e.cn_sockets();
    for (int i = 0; i < 4; ++i) CHECK(std::abs(vs[i] - cs[i]) < 1e-12);
}

TEST_CASE("changing the punctured coefficient breaks balance on edge-types 2 and 3")
{
    std::string doc = kFig1;
    doc.replace(doc.find("\"coef\": 0.2, \"b\": [1,0]"), 11, "\"coef\": 0.3");
    try {
        parse_ensemble(doc);
        FAIL("expected a validation error");
    } catch (const ValidationError& ex) {
        std::string msg = ex.what();
        CHECK(msg.find("edge-type 2") != std::string::npos);
        CHECK(msg.find("edge-type 3") != std::string::npos);
        CHECK(msg.find("edge-type 1") == std::string::npos);
        CHECK(msg.find("edge-type 4") == std::string::npos);
    }
}

TEST_CASE("regular (3,6) ensemble")
{
    auto e = parse_ensemble(R"({"m_e":1,"m_r":1,"L":[{"coef":1,"b":[0,1],"d":[3]}],"R":[{"coef":0.5,"d":[6]}]})",
                            kExactBalance);
    CHECK(rate(e) == doctest::Approx(0.5));
    auto p = edge_perspective(e);
    REQUIRE(p.lambda[0].size() == 1);
    CHECK(p.lambda[0][0].w == doctest::Approx(1.0));
    CHECK(p.rho[0][0].w == doctest::Approx(1.0));
    auto [dv, dc] = average_degrees(e);
    CHECK(dv == doctest::Approx(3));
    CHECK(dc == doctest::Approx(6));
}

TEST_CASE("syntax and structural errors")
{
    CHECK_THROWS_AS(parse_ensemble("{not json"), ParseError);
    CHECK_THROWS_AS(parse_ensemble(R"({"m_e":1,"L":[]})"), ParseError);
    // degree-1 check class
    CHECK_THROWS_AS(parse_ensemble(R"({"m_e":1,"L":[{"coef":1,"b":[0,1],"d":[1]}],"R":[{"coef":1,"d":[1]}]})"),
                    ValidationError);
    // two channel types set
    CHECK_THROWS_AS(parse_ensemble(R"({"m_e":1,"L":[{"coef":1,"b":[1,1],"d":[3]}],"R":[{"coef":0.5,"d":[6]}]})"),
                    ValidationError);
}

TEST_CASE("edge perspective of fig1")
{
    auto e = parse_ensemble(kFig1, kExactBalance);
    auto p = edge_perspective(e);
    REQUIRE(p.lambda[0].size() == 2);
    CHECK(p.lambda[0][0].w == doctest::Approx(1.0 / 1.9));
    CHECK(p.lambda[0][1].w == doctest::Approx(0.9 / 1.9));
    for (int i = 0; i < 4; ++i) {
        double sl = 0, sr = 0;
        for (auto w : p.lambda[i]) sl += w.w;
        for (auto w : p.rho[i]) sr += w.w;
        CHECK(std::abs(sl - 1) < 1e-12);
        CHECK(std::abs(sr - 1) < 1e-12);
    }
    auto [dv, dc] = average_degrees(e);
    CHECK(dv == doctest::Approx(3.3 / 1.2));
    CHECK(dc == doctest::Approx((0.4 * 5 + 0.1 * 5 + 0.2 * 4) / 0.7));
}

TEST_CASE("zero-socket class gets no weight")
{
    auto e = parse_ensemble(R"({"m_e":2,"L":[{"coef":0.5,"b":[0,1],"d":[3,0]},{"coef":0.5,"b":[0,1],"d":[2,1]}],
                               "R":[{"coef":0.25,"d":[5,1]}, {"coef":0.25,"d":[5,1]}]})",
                            kExactBalance);
    auto p = edge_perspective(e);
    REQUIRE(p.lambda[1].size() == 1);
    CHECK(p.lambda[1][0].cls == 1);
}

TEST_CASE("rate is invariant under class splitting")
{
    auto e = parse_ensemble(kFig1, kExactBalance);
    auto split = e;
    split.vn[0].coef = 0.2;
    split.vn.push_back(e.vn[0]);
    split.vn.back().coef = 0.3;
    validate(split);
    CHECK(rate(split) == doctest::Approx(rate(e)).epsilon(1e-14));
}

TEST_CASE("shipped fixtures load and match their table rates")
{
    const std::pair<const char*, double> cases[] = {
        {"fig1.json", 0.5}, {"ldpc_3_6.json", 0.5}, {"fig4.json", 0.1}, {"fig5.json", 0.5},
        {"tab2_reference.json", 0.1}, {"tab2_full.json", 0.1}, {"tab2_hybrid.json", 0.1},
        {"tab2_mean.json", 0.1}, {"tab2_ber.json", 0.1}, {"tab2_rca.json", 0.1},
        {"tab3_reference.json", 0.5}, {"tab3_full.json", 0.5}, {"tab3_hybrid.json", 0.5},
        {"tab3_mean.json", 0.5}, {"tab3_ber.json", 0.5}, {"tab3_rca.json", 0.5},
        {"tab4_code_A.json", 0.1}, {"tab4_code_B.json", 0.2}, {"tab4_code_C.json", 0.3},
        {"tab4_code_D.json", 0.4}, {"tab4_code_E.json", 0.5}, {"tab4_code_F.json", 0.6},
        {"tab4_code_G.json", 0.7}};
    for (auto [name, r] : cases) {
        CAPTURE(name);
        auto e = load_ensemble(data(name));
        CHECK(std::abs(rate(e) - r) < 1e-3);
    }
}

TEST_CASE("cost model rows")
{
    auto e = parse_ensemble(kFig1, kExactBalance);
    auto [dv, dc] = average_degrees(e);
    auto full = cost_model(e, Method::full);
    CHECK(full.vn.convs == doctest::Approx(dv));
    CHECK(full.cn.convs == doctest::Approx(dc - 1));
    auto mean = cost_model(e, Method::mean);
    CHECK(mean.cn.lookups == doctest::Approx(dc));
    CHECK(mean.cn.exps == doctest::Approx(dc - 1));
    auto h0 = cost_model(e, Method::hybrid, 0.0);
    CHECK(h0.vn.sums == mean.vn.sums);
    CHECK(h0.cn.sums == mean.cn.sums);
    CHECK(h0.cn.lookups == mean.cn.lookups);
    CHECK(h0.cn.exps == mean.cn.exps);
    CHECK(h0.vn.convs == 0);
    CHECK(h0.cn.convs == 0);
    CHECK_THROWS(cost_model(e, Method::hybrid, 1.5));
}
