#include <atomic>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "metde/mc_oracle.hpp"
#include "metde/optimizer.hpp"
#include "metde/threshold.hpp"

using json = nlohmann::json;
using namespace metde;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Opts {
    std::string ensemble, tmpl, method = "full", methods = "full,mean,ber,rca,hybrid";
    double sigma = 0, sigma_lo = 0, sigma_hi = 0, tol = 1e-4;
    int max_iters = 1000, grid_points = 9800, kl_interval = 5, max_full = 100;
    double target_ber = 1e-10, llr_max = 50, kl_target = 0.04, alpha = 0;
    std::string ber_mode = "posterior", reseed = "both";
    std::string out, format, dump_dir, param, values;
    double from = 0, to = 0, step = 0;
    int jobs = 1, budget = 100, iterations = 20, samples = 1000000, replicas = 10;
    std::uint64_t seed = 1;
    bool timing = false, echo_json = false;
};

void add_input(CLI::App* sc, Opts& o, bool required = true)
{
    auto* opt = sc->add_option("--ensemble", o.ensemble, "ensemble file")->envname("METDE_ENSEMBLE")->check(CLI::ExistingFile);
    if (required) opt->required();
}

void add_de(CLI::App* sc, Opts& o)
{
    sc->add_option("--max-iters", o.max_iters, "decoding iterations per run")->envname("METDE_MAX_ITERS")->capture_default_str();
    sc->add_option("--target-ber", o.target_ber, "convergence BER")->envname("METDE_TARGET_BER")->capture_default_str();
    sc->add_option("--grid-points", o.grid_points, "quantization points per density")->envname("METDE_GRID_POINTS")->capture_default_str();
    sc->add_option("--llr-max", o.llr_max, "LLR grid bound")->envname("METDE_LLR_MAX")->capture_default_str();
    sc->add_option("--ber-mode", o.ber_mode, "posterior or edge")->envname("METDE_BER_MODE")->check(CLI::IsMember({"posterior", "edge"}));
    sc->add_option("--kl-target", o.kl_target, "hybrid switch KL")->envname("METDE_KL_TARGET")->capture_default_str();
    sc->add_option("--max-full-iters", o.max_full, "hybrid full-DE iteration cap")->envname("METDE_MAX_FULL_ITERS")->capture_default_str();
    sc->add_option("--kl-interval", o.kl_interval, "iterations between KL checks")->envname("METDE_KL_INTERVAL")->capture_default_str();
    sc->add_option("--reseed", o.reseed, "hybrid phase-2 seeding: both or check-first")->envname("METDE_RESEED")->check(CLI::IsMember({"both", "check-first"}));
}

void add_search(CLI::App* sc, Opts& o)
{
    sc->add_option("--sigma-lo", o.sigma_lo, "lower bracket (default 0.5 x Shannon limit)")->envname("METDE_SIGMA_LO");
    sc->add_option("--sigma-hi", o.sigma_hi, "upper bracket (default 1.2 x Shannon limit)")->envname("METDE_SIGMA_HI");
    sc->add_option("--tol", o.tol, "bisection tolerance")->envname("METDE_TOL")->capture_default_str();
}

void add_output(CLI::App* sc, Opts& o, const std::string& fmt)
{
    sc->add_option("--out", o.out, "output file (default stdout)")->envname("METDE_OUT");
    sc->add_option("--format", o.format, "csv or json (default " + fmt + ")")->envname("METDE_FORMAT")->check(CLI::IsMember({"csv", "json"}));
    sc->add_flag("--json", o.echo_json, "also print the result as one JSON object on stdout");
    sc->add_flag("--timing", o.timing, "include wall-clock times (makes output run-dependent)");
}

HybridConfig make_config(const Opts& o, CLI::App* sc, Method m)
{
    if (m != Method::hybrid)
        for (const char* f : {"--kl-target", "--max-full-iters", "--reseed"})
            if (sc->count(f)) throw UsageError(std::string(f) + " only applies to --method hybrid");
    HybridConfig c;
    c.max_iterations = o.max_iters;
    c.target_ber = o.target_ber;
    c.grid_points = o.grid_points;
    c.llr_max = o.llr_max;
    c.kl_monitor_interval = o.kl_interval;
    c.kl_check_interval = o.kl_interval;
    c.ber_mode = o.ber_mode == "edge" ? BerMode::edge : BerMode::posterior;
    c.kl_target = o.kl_target;
    c.max_full_de_iterations = std::min(o.max_full, o.max_iters);
    c.reseed = o.reseed == "check-first" ? Reseed::check_first : Reseed::both;
    try {
        c.check();
    } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
    }
    return c;
}

Method method_arg(const std::string& s)
{
    try {
        return parse_method(s);
    } catch (const std::exception& ex) {
        throw UsageError(ex.what());
    }
}

SearchSpec search_of(const Opts& o) { return SearchSpec{o.sigma_lo, o.sigma_hi, o.tol, 4}; }

void emit(const Opts& o, const json& j, const std::string& csv)
{
    std::string body = o.format == "csv" ? csv : j.dump(2) + "\n";
    if (o.out.empty()) {
        std::cout << body;
    } else {
        std::ofstream f(o.out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + o.out);
        f << body;
        if (o.echo_json) std::cout << j.dump() << "\n";
        return;
    }
    if (o.echo_json && o.format == "csv") std::cout << j.dump() << "\n";
}

std::string num(double x)
{
    std::ostringstream s;
    s << std::setprecision(10) << x;
    return s.str();
}

json threshold_json(const ThresholdResult& r, bool timing)
{
    json j;
    j["method"] = method_name(r.method);
    j["sigma_star"] = r.sigma_star;
    j["bisection_steps"] = r.bisection_steps;
    j["bracket"] = {r.sigma_lo, r.sigma_hi};
    j["probes"] = json::array();
    for (const auto& p : r.probes) {
        json q{{"sigma", p.sigma}, {"converged", p.converged}, {"iterations", p.iterations}};
        if (timing) q["seconds"] = p.seconds;
        j["probes"].push_back(q);
    }
    if (timing) j["wall_time"] = r.wall_time;
    return j;
}

int cmd_threshold(const Opts& o, CLI::App* sc)
{
    Method m = method_arg(o.method);
    auto cfg = make_config(o, sc, m);
    auto e = load_ensemble(o.ensemble);
    auto r = find_threshold(e, m, cfg, search_of(o));
    json j = threshold_json(r, o.timing);
    j["ensemble"] = o.ensemble;
    j["tol"] = o.tol;
    std::string csv = "sigma,converged,iterations\n";
    for (const auto& p : r.probes) csv += num(p.sigma) + "," + (p.converged ? "1" : "0") + "," + std::to_string(p.iterations) + "\n";
    emit(o, j, csv);
    return 0;
}

void dump_state(const std::string& dir, const DensityState& s)
{
    for (std::size_t i = 0; i < s.f_v.size(); ++i)
        for (int dirn = 0; dirn < 2; ++dirn) {
            const auto& d = dirn == 0 ? s.f_v[i] : s.f_u[i];
            std::ostringstream name;
            name << dir << "/iter" << std::setw(4) << std::setfill('0') << s.iteration << "_edge" << i + 1
                 << (dirn == 0 ? "_v" : "_u") << ".csv";
            std::ofstream f(name.str());
            f << std::setprecision(10) << "llr,mass\n";
            f << -d.grid.llr_max << "_sat," << d.sat_neg << "\n";
            for (int k = 0; k < d.grid.n(); ++k)
                if (d.mass[k] > 0) f << d.grid.x(k) << "," << d.mass[k] << "\n";
            f << d.grid.llr_max << "_sat," << d.sat_pos << "\n";
        }
}

int cmd_evolve(const Opts& o, CLI::App* sc)
{
    Method m = method_arg(o.method);
    auto cfg = make_config(o, sc, m);
    if (!(o.sigma > 0)) throw UsageError("--sigma must be positive");
    auto e = load_ensemble(o.ensemble);
    DeObserver obs;
    if (!o.dump_dir.empty()) {
        if (m != Method::full && m != Method::hybrid) throw UsageError("--dump-dir needs a density method");
        std::filesystem::create_directories(o.dump_dir);
        obs = [&](const DensityState& s, const IterRecord&) { dump_state(o.dump_dir, s); };
    }
    RunResult r = m == Method::full     ? run_full_de(e, o.sigma, cfg, obs)
                  : m == Method::hybrid ? run_hybrid(e, o.sigma, cfg, obs)
                                        : run_approx(e, o.sigma, m, cfg);
    json j{{"ensemble", o.ensemble}, {"method", method_name(m)}, {"sigma", o.sigma}, {"converged", r.converged},
           {"switch_iteration", r.trace.switch_iteration}};
    j["iterations"] = json::array();
    for (const auto& it : r.trace.iters) {
        json q{{"iteration", it.iteration}, {"phase", it.phase == Phase::full ? "full" : "gauss"}, {"ber", it.ber},
               {"ber_v", it.ber_v}, {"mean_v", it.mean_v}, {"var_v", it.var_v}, {"mean_u", it.mean_u}};
        q["kl_monitored"] = std::isnan(it.kl) ? json(nullptr) : json(it.kl);
        if (o.timing) q["elapsed"] = it.elapsed;
        j["iterations"].push_back(q);
    }
    if (o.timing) j["seconds"] = r.seconds;
    emit(o, j, trace_csv(r.trace, o.timing));
    return 0;
}

std::vector<std::string> split(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string t; std::getline(ss, t, ',');)
        if (!t.empty()) out.push_back(t);
    return out;
}

int cmd_compare(const Opts& o, CLI::App* sc)
{
    std::vector<Method> ms;
    for (const auto& s : split(o.methods)) ms.push_back(method_arg(s));
    if (ms.empty()) throw UsageError("--methods is empty");
    bool any_hybrid = std::find(ms.begin(), ms.end(), Method::hybrid) != ms.end();
    auto cfg = make_config(o, sc, any_hybrid ? Method::hybrid : ms.front());
    auto e = load_ensemble(o.ensemble);
    std::vector<ThresholdResult> res(ms.size());
    std::vector<std::string> err(ms.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next++) < ms.size();) {
            try {
                res[k] = find_threshold(e, ms[k], cfg, search_of(o));
            } catch (const BracketError& ex) {
                err[k] = ex.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min<int>(o.jobs, (int)ms.size()); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const ThresholdResult* full = nullptr;
    for (std::size_t k = 0; k < ms.size(); ++k)
        if (ms[k] == Method::full && err[k].empty()) full = &res[k];
    json j{{"ensemble", o.ensemble}, {"results", json::array()}};
    std::string csv = std::string("method,sigma_star,threshold_error") + (o.timing ? ",wall_time,cpu_time_gain" : "") + "\n";
    for (std::size_t k = 0; k < ms.size(); ++k) {
        json q{{"method", method_name(ms[k])}};
        csv += method_name(ms[k]);
        if (!err[k].empty()) {
            q["error"] = err[k];
            csv += ",,";
            if (o.timing) csv += ",,";
            csv += "\n";
            j["results"].push_back(q);
            continue;
        }
        q["sigma_star"] = res[k].sigma_star;
        csv += "," + num(res[k].sigma_star) + ",";
        if (full) {
            q["threshold_error"] = threshold_error(res[k].sigma_star, full->sigma_star);
            csv += num(q["threshold_error"].get<double>());
        }
        if (o.timing) {
            q["wall_time"] = res[k].wall_time;
            csv += "," + num(res[k].wall_time) + ",";
            if (full && res[k].wall_time > 0) {
                q["cpu_time_gain"] = cpu_time_gain(full->wall_time, res[k].wall_time);
                csv += num(q["cpu_time_gain"].get<double>());
            }
        }
        csv += "\n";
        j["results"].push_back(q);
    }
    emit(o, j, csv);
    return 0;
}

EnsembleTemplate template_arg(const Opts& o)
{
    if (!o.tmpl.empty()) return load_template(o.tmpl);
    if (!o.ensemble.empty()) return template_from_ensemble(load_ensemble(o.ensemble));
    throw UsageError("give --template or --ensemble");
}

int cmd_sweep(const Opts& o, CLI::App* sc)
{
    Method m = method_arg(o.method);
    auto cfg = make_config(o, sc, m);
    auto t = template_arg(o);
    std::string param = o.param.empty() ? (t.free.empty() ? "" : t.free.front()) : o.param;
    if (param.empty()) throw UsageError("template has no free parameter");
    std::vector<double> grid;
    if (!o.values.empty()) {
        for (const auto& s : split(o.values)) grid.push_back(std::stod(s));
    } else {
        if (!(o.step > 0) || o.to < o.from) throw UsageError("give --values or --from/--to/--step");
        int n = (int)std::floor((o.to - o.from) / o.step + 1e-9);
        for (int k = 0; k <= n; ++k) grid.push_back(o.from + k * o.step);
    }
    auto pts = sweep_parameter(t, param, grid, m, cfg, search_of(o), o.jobs);
    json j{{"parameter", param}, {"method", method_name(m)}, {"points", json::array()}};
    std::string csv = param + ",valid,sigma_star" + (o.timing ? ",seconds" : "") + ",reason\n";
    for (const auto& p : pts) {
        json q{{"value", p.value}, {"valid", p.valid}};
        if (p.valid) q["sigma_star"] = p.sigma_star;
        else q["reason"] = p.reason;
        if (o.timing) q["seconds"] = p.seconds;
        j["points"].push_back(q);
        csv += num(p.value) + "," + (p.valid ? "1" : "0") + "," + (p.valid ? num(p.sigma_star) : "") +
               (o.timing ? "," + num(p.seconds) : "") + "," + p.reason + "\n";
    }
    emit(o, j, csv);
    return 0;
}

int cmd_optimize(const Opts& o, CLI::App* sc)
{
    Method m = method_arg(o.method);
    auto cfg = make_config(o, sc, m);
    auto t = template_arg(o);
    auto r = optimize_ensemble(t, m, cfg, o.budget, o.seed, search_of(o));
    json j{{"method", method_name(m)}, {"sigma_star", r.sigma_star}, {"evaluations", r.evaluations},
           {"accepted", r.accepted}, {"seed", o.seed}, {"params", r.params}, {"ensemble", json::parse(to_json(r.best))}};
    std::string csv = "param,value\n";
    for (const auto& [k, v] : r.params) csv += k + "," + num(v) + "\n";
    csv += "sigma_star," + num(r.sigma_star) + "\n";
    emit(o, j, csv);
    return 0;
}

int cmd_cost(const Opts& o, CLI::App*)
{
    Method m = method_arg(o.method);
    auto e = load_ensemble(o.ensemble);
    CostTable c;
    try {
        c = cost_model(e, m, o.alpha);
    } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
    }
    auto [dv, dc] = average_degrees(e);
    auto row = [](const NodeCost& n) {
        return json{{"sums", n.sums}, {"mults", n.mults}, {"lookups", n.lookups},
                    {"exps", n.exps}, {"qfuncs", n.qfuncs}, {"convs", n.convs}};
    };
    json j{{"method", method_name(m)}, {"alpha", o.alpha}, {"dv", dv}, {"dc", dc}, {"vn", row(c.vn)}, {"cn", row(c.cn)}};
    std::string csv = "node,sums,mults,lookups,exps,qfuncs,convs\n";
    for (auto [name, n] : {std::pair{"vn", c.vn}, std::pair{"cn", c.cn}})
        csv += std::string(name) + "," + num(n.sums) + "," + num(n.mults) + "," + num(n.lookups) + "," + num(n.exps) +
               "," + num(n.qfuncs) + "," + num(n.convs) + "\n";
    emit(o, j, csv);
    return 0;
}

int cmd_mc_check(const Opts& o, CLI::App* sc)
{
    auto cfg = make_config(o, sc, Method::full);
    if (!(o.sigma > 0)) throw UsageError("--sigma must be positive");
    auto e = load_ensemble(o.ensemble);
    cfg.max_iterations = o.iterations;
    cfg.stall_window = o.iterations + 1;
    auto de = run_full_de(e, o.sigma, cfg);
    auto mc = o.replicas > 1 ? mc_de_replicated(e, o.sigma, o.iterations, o.samples, o.replicas, o.seed)
                             : mc_de_run(e, o.sigma, o.iterations, o.samples, o.seed);
    json j{{"ensemble", o.ensemble}, {"sigma", o.sigma}, {"samples", o.samples}, {"seed", o.seed}, {"rows", json::array()}};
    std::string csv = "iteration,de_ber,mc_ber,se,z\n";
    for (std::size_t k = 0; k < mc.size() && k < de.trace.iters.size(); ++k) {
        double d = de.trace.iters[k].ber;
        double z = (mc[k].ber - d) / std::max(mc[k].se, 1e-300);
        j["rows"].push_back({{"iteration", mc[k].iteration}, {"de_ber", d}, {"mc_ber", mc[k].ber}, {"se", mc[k].se}, {"z", z}});
        csv += std::to_string(mc[k].iteration) + "," + num(d) + "," + num(mc[k].ber) + "," + num(mc[k].se) + "," + num(z) + "\n";
    }
    emit(o, j, csv);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Density evolution thresholds for multi-edge-type LDPC ensembles on the BI-AWGN channel"};
    app.require_subcommand(1);
    Opts o;

    auto* th = app.add_subcommand("threshold", "bisection search for the decoding threshold");
    add_input(th, o);
    th->add_option("--method", o.method, "full, mean, ber, rca or hybrid")->envname("METDE_METHOD")->capture_default_str();
    add_de(th, o);
    add_search(th, o);
    add_output(th, o, "json");

    auto* ev = app.add_subcommand("evolve", "one DE run; per-iteration trace");
    add_input(ev, o);
    ev->add_option("--method", o.method, "full, mean, ber, rca or hybrid")->envname("METDE_METHOD")->capture_default_str();
    ev->add_option("--sigma", o.sigma, "noise standard deviation")->envname("METDE_SIGMA")->required();
    ev->add_option("--dump-dir", o.dump_dir, "write per-iteration densities here");
    add_de(ev, o);

    auto* cmp = app.add_subcommand("compare", "thresholds under several methods and their errors");
    add_input(cmp, o);
    cmp->add_option("--methods", o.methods, "comma-separated methods")->envname("METDE_METHODS")->capture_default_str();
    cmp->add_option("--jobs", o.jobs, "parallel runs")->envname("METDE_JOBS")->capture_default_str();
    add_de(cmp, o);
    add_search(cmp, o);

    auto* sw = app.add_subcommand("sweep", "threshold over a grid of one template parameter");
    sw->add_option("--template", o.tmpl, "template file")->envname("METDE_TEMPLATE")->check(CLI::ExistingFile);
    add_input(sw, o, false);
    sw->add_option("--method", o.method, "full, mean, ber, rca or hybrid")->envname("METDE_METHOD")->capture_default_str();
    sw->add_option("--param", o.param, "parameter to sweep (default: first free)");
    sw->add_option("--values", o.values, "comma-separated grid");
    sw->add_option("--from", o.from, "grid start");
    sw->add_option("--to", o.to, "grid end (inclusive)");
    sw->add_option("--step", o.step, "grid step");
    sw->add_option("--jobs", o.jobs, "parallel runs")->envname("METDE_JOBS")->capture_default_str();
    add_de(sw, o);
    add_search(sw, o);

    auto* op = app.add_subcommand("optimize", "seeded local search over the template's free coefficients");
    op->add_option("--template", o.tmpl, "template file")->envname("METDE_TEMPLATE")->check(CLI::ExistingFile);
    add_input(op, o, false);
    op->add_option("--method", o.method, "full, mean, ber, rca or hybrid")->envname("METDE_METHOD")->capture_default_str();
    op->add_option("--budget", o.budget, "threshold evaluations")->envname("METDE_BUDGET")->capture_default_str();
    op->add_option("--seed", o.seed, "random seed")->envname("METDE_SEED")->capture_default_str();
    add_de(op, o);
    add_search(op, o);

    auto* co = app.add_subcommand("cost", "floating-point operations per edge per iteration");
    add_input(co, o);
    co->add_option("--method", o.method, "full, mean, ber, rca or hybrid")->envname("METDE_METHOD")->capture_default_str();
    co->add_option("--alpha", o.alpha, "fraction of full-DE iterations (hybrid)")->envname("METDE_ALPHA")->capture_default_str();

    auto* mc = app.add_subcommand("mc-check", "compare full DE with Monte Carlo DE");
    mc->group("");
    add_input(mc, o);
    mc->add_option("--sigma", o.sigma, "noise standard deviation")->required();
    mc->add_option("--iterations", o.iterations, "iterations")->capture_default_str();
    mc->add_option("--samples", o.samples, "samples per bank, split over the replicas")->capture_default_str();
    mc->add_option("--replicas", o.replicas, "independent populations (1: one run, binomial se)")->capture_default_str();
    mc->add_option("--seed", o.seed, "random seed")->envname("METDE_SEED")->capture_default_str();
    add_de(mc, o);

    for (auto* s : {ev, cmp, sw, op, co, mc}) add_output(s, o, s == cmp || s == sw || s == ev || s == mc ? "csv" : "json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (o.format.empty()) o.format = th->parsed() || op->parsed() || co->parsed() ? "json" : "csv";
    try {
        if (th->parsed()) return cmd_threshold(o, th);
        if (ev->parsed()) return cmd_evolve(o, ev);
        if (cmp->parsed()) return cmd_compare(o, cmp);
        if (sw->parsed()) return cmd_sweep(o, sw);
        if (op->parsed()) return cmd_optimize(o, op);
        if (co->parsed()) return cmd_cost(o, co);
        if (mc->parsed()) return cmd_mc_check(o, mc);
    } catch (const UsageError& ex) {
        std::cerr << "usage error: " << ex.what() << "\n";
        return 2;
    } catch (const ParseError& ex) {
        std::cerr << "input error: " << ex.what() << "\n";
        return 2;
    } catch (const ValidationError& ex) {
        std::cerr << "input error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}
