#include "dyncontract/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "dyncontract/format.hpp"
#include "dyncontract/market.hpp"
#include "dyncontract/solver.hpp"

namespace dyncontract {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Output {
public:
    explicit Output(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec)
            throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
    }

    void write(const std::string& name, const std::string& text) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f)
            throw Error("cannot write " + (dir_ / name).string());
        f << text;
        files_.push_back(name);
    }

    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

SolverConfig solver_config(const ScenarioConfig& cfg, const RunOptions& opt) {
    SolverConfig sc;
    sc.tol = opt.tol.value_or(cfg.tol);
    return sc;
}

std::uint64_t ic_budget(const ScenarioConfig& cfg, const RunOptions& opt) { return opt.ic_budget.value_or(cfg.ic_budget); }

json model_json(const ModelPrimitives& m) {
    return {{"preferences", m.prefs().describe()},
            {"delta", m.delta()},
            {"y", m.income().y},
            {"p_l", m.income().p_l},
            {"p_h", m.income().p_h},
            {"pi_ll", m.types().pi(Type::low, Type::low)},
            {"pi_hh", m.types().pi(Type::high, Type::high)},
            {"mu_l", m.types().init(Type::low)},
            {"signal_map", m.signals().phi_map}};
}

json profit_json(const ProfitSplit& p) { return {{"total", p.total}, {"low", p.low}, {"high", p.high}}; }

json ic_json(const ICReport& ic) {
    return {{"max_violation", ic.max_violation},
            {"per_type", {ic.per_type[0], ic.per_type[1]}},
            {"backward_induction_gain", ic.dp_violation},
            {"strategies", ic.strategies},
            {"exhaustive", ic.exhaustive},
            {"ic", ic.ic}};
}

json osic_json(const ModelPrimitives& m, const std::vector<OsicSlack>& v) {
    json a = json::array();
    for (const auto& o : v)
        a.push_back({{"t", o.t},
                     {"signal_history", signal_history_label(o.signal_rank, o.t, m.n_signals())},
                     {"slack", o.slack},
                     {"binding", o.binding},
                     {"violated", o.slack < -1e-8}});
    return a;
}

std::string dynamics_csv(const std::vector<DynamicsRow>& rows) {
    std::ostringstream os;
    os << "t,signal_history,nu,delta,nu_l,chi_nu,chi_delta,nu_residual,delta_residual\n";
    for (const auto& r : rows)
        os << r.t << ',' << r.signal_history << ',' << fmt17(r.nu) << ',' << fmt17(r.delta) << ',' << fmt17(r.nu_l)
           << ',' << fmt17(r.chi_nu) << ',' << fmt17(r.chi_delta) << ',' << fmt17(r.nu_residual) << ','
           << fmt17(r.delta_residual) << '\n';
    return os.str();
}

std::string dynamics_gnuplot(const std::string& csv) {
    return "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set xlabel 't'\n"
           "set ylabel 'flow utility'\n"
           "plot '" + csv + "' using 1:3 with points pt 7 title 'nu', \\\n"
           "     '' using 1:4 with points pt 5 title 'delta', \\\n"
           "     '' using 1:5 with points pt 9 title 'nu_l'\n";
}

std::string mechanism_text(const ModelPrimitives& m, const Mechanism& mech) {
    std::ostringstream os;
    write_mechanism(os, m, mech);
    return os.str();
}

json solution_report(const ModelPrimitives& m, const RelaxedSolution& sol, std::uint64_t budget) {
    json r;
    r["target"] = {{"V_l", sol.spec.V_l}, {"V_h", sol.spec.V_h}, {"T", sol.spec.T}};
    r["solver"] = {{"iterations", sol.iterations},
                   {"kkt_residual", sol.kkt_residual},
                   {"promise_keeping_residual", sol.pk_residual},
                   {"variables", sol.n_variables},
                   {"reduced_formulation", sol.spec.exploit_low_insurance},
                   {"interior", sol.interior}};
    r["value"] = sol.value;
    r["profit"] = profit_json(sol.profit);
    r["osic"] = osic_json(m, sol.osic);

    const auto st = verify_structure(m, sol);
    r["structure"] = {{"max_abs_osic_slack", st.max_abs_osic},
                      {"min_osic_slack", st.min_osic},
                      {"post_low_consumption_variance", st.post_low_variance},
                      {"max_foc_residual", st.max_foc_residual},
                      {"min_type_reward", st.min_type_gap},
                      {"csm", st.csm},
                      {"ctm", st.ctm},
                      {"min_csm_margin", st.min_csm_margin},
                      {"min_ctm_margin", st.min_ctm_margin}};
    const auto am = verify_auxiliary_match(m, sol);
    r["auxiliary_match"] = {{"max_deviation", am.max_deviation}, {"nodes", am.checked}};

    const auto it = verify_intertemporal(m, sol);
    json rows = json::array();
    for (const auto& row : it.rows)
        rows.push_back({{"t", row.t},
                        {"signal_history", signal_history_label(row.s, row.t, m.n_signals())},
                        {"nu_residual", row.nu_residual},
                        {"delta_residual", row.delta_residual},
                        {"inverse_euler_residual", row.inverse_euler_residual}});
    r["intertemporal"] = {{"max_residual", it.max_residual},
                          {"max_inverse_euler", it.max_inverse_euler},
                          {"skipped_nodes", it.skipped},
                          {"rows", rows}};

    if (m.n_signals() == 1) {
        const auto mo = verify_monotonicity_RI(m, sol);
        r["monotonicity"] = {{"applicable", mo.applicable}, {"note", mo.note},
                             {"holds", mo.holds},           {"nu_margin", mo.nu_margin},
                             {"delta_margin", mo.delta_margin}, {"certificate", to_string(mo.certificate)}};
    }
    const auto& prefs = m.prefs();
    if (prefs.family() == UtilityFamily::crra && prefs.rho() == 0.5) {
        const auto q = verify_quadratic(m, sol);
        r["quadratic"] = {{"martingale_residual", q.martingale_residual},
                          {"min_supermartingale_gap", q.min_supermartingale_gap},
                          {"min_upper_gap", q.min_upper_gap},
                          {"min_lower_gap", q.min_lower_gap},
                          {"holds", q.holds}};
    }
    if (sol.spec.T == 2) {
        const auto t2 = verify_T2_general(m, sol);
        r["two_period"] = {{"applicable", t2.applicable},
                           {"delta_margin", t2.delta_margin},
                           {"upper_margin", t2.upper_margin},
                           {"lower_margin", t2.lower_margin},
                           {"holds", t2.holds}};
    }
    r["incentive_compatibility"] = ic_json(check_IC_exhaustive(m, sol.mechanism, 1e-8, budget));
    return r;
}

json condition_json(const MarginalCondition& c) {
    return {{"consumption", c.consumption},
            {"right_derivative_Pi_h", c.right_derivative},
            {"factor_literal", c.factor_literal},
            {"factor_derived", c.factor_derived},
            {"factor_psi", c.factor_psi},
            {"lhs_literal", c.lhs_literal},
            {"lhs_derived", c.lhs_derived},
            {"lhs_psi", c.lhs_psi},
            {"rhs", c.rhs},
            {"right_derivative_total", c.total_right_derivative}};
}

const char* status_name(int code) {
    switch (code) {
    case 0:
        return "ok";
    case 2:
        return "config";
    case 3:
        return "infeasible";
    case 4:
        return "premise";
    case 5:
        return "nonconvergence";
    }
    return "error";
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

} // namespace

std::vector<std::string> cmd_solve(const ScenarioConfig& cfg, const RunOptions& opt) {
    const auto& m = cfg.model;
    RelaxedProblemSpec spec{cfg.T, resolve_target(m, cfg.T, cfg.V_l), resolve_target(m, cfg.T, cfg.V_h),
                            cfg.exploit_low_insurance};
    const auto sol = solve_relaxed(m, spec, solver_config(cfg, opt));
    Output out(opt.out_dir);
    out.write("mechanism.txt", mechanism_text(m, sol.mechanism));
    out.write("dynamics.csv", dynamics_csv(extract_dynamics(m, sol)));
    out.write("dynamics.gp", dynamics_gnuplot("dynamics.csv"));
    json r = solution_report(m, sol, ic_budget(cfg, opt));
    r["command"] = "solve";
    r["model"] = model_json(m);
    r["config_hash"] = hex64(cfg.hash);
    out.write_json("report.json", r);
    return out.files();
}

std::vector<std::string> cmd_equilibrium(const ScenarioConfig& cfg, const RunOptions& opt) {
    const auto& m = cfg.model;
    const auto eq = competitive_equilibrium(m, cfg.T, solver_config(cfg, opt));
    Output out(opt.out_dir);
    out.write("equilibrium_mechanism.txt", mechanism_text(m, eq.solution.mechanism));
    out.write("equilibrium_dynamics.csv", dynamics_csv(extract_dynamics(m, eq.solution)));
    out.write("equilibrium_dynamics.gp", dynamics_gnuplot("equilibrium_dynamics.csv"));
    json r;
    r["command"] = "equilibrium";
    r["config_hash"] = hex64(cfg.hash);
    r["model"] = model_json(m);
    r["V_star"] = {eq.V_star[0], eq.V_star[1]};
    r["zero_profit_residual"] = eq.zero_profit_residual;
    r["low_profit"] = eq.low_profit;
    r["bracket_profit_high"] = {eq.bracket_profit[0], eq.bracket_profit[1]};
    r["root_iterations"] = eq.iterations;
    json ex = condition_json(eq.existence);
    ex["exists_pure"] = eq.exists_pure;
    ex["existence_margin"] = eq.existence_margin;
    ex["exists_literal"] = eq.exists_literal;
    ex["exists_psi"] = eq.exists_psi;
    ex["exists_direct"] = eq.exists_direct;
    r["existence"] = ex;
    r["solution"] = solution_report(m, eq.solution, ic_budget(cfg, opt));
    if (cfg.commitment) {
        const auto cr = commitment_check(m, eq);
        json rows = json::array();
        for (const auto& row : cr.rows)
            rows.push_back({{"t", row.t}, {"types", row.types}, {"V", row.V}, {"V_outside", row.V_outside}, {"ok", row.ok}});
        r["commitment"] = {{"all_pass", cr.all_pass}, {"min_margin", cr.min_margin}, {"rows", rows}};
    }
    r["mechanism_file"] = "equilibrium_mechanism.txt";
    out.write_json("equilibrium.json", r);
    return out.files();
}

std::vector<std::string> cmd_monopoly(const ScenarioConfig& cfg, const RunOptions& opt) {
    const auto& m = cfg.model;
    const auto sc = solver_config(cfg, opt);
    const auto mo = monopoly_solution(m, cfg.T, sc);
    const auto rc = information_rent_check(m, cfg.T, sc);
    Output out(opt.out_dir);
    out.write("monopoly_mechanism.txt", mechanism_text(m, mo.solution.mechanism));
    out.write("monopoly_dynamics.csv", dynamics_csv(extract_dynamics(m, mo.solution)));
    json r;
    r["command"] = "monopoly";
    r["config_hash"] = hex64(cfg.hash);
    r["model"] = model_json(m);
    r["V_M"] = {mo.V_M[0], mo.V_M[1]};
    r["outside_options"] = {mo.outside[0], mo.outside[1]};
    r["rents_low"] = mo.rents_low;
    r["rents_left"] = mo.interior;
    json cond = condition_json(rc.condition);
    cond["no_rents"] = rc.no_rents;
    cond["no_rents_literal"] = rc.no_rents_literal;
    cond["no_rents_psi"] = rc.no_rents_psi;
    cond["no_rents_direct"] = rc.no_rents_direct;
    cond["consistent_with_argmax"] = rc.no_rents == !mo.interior;
    r["rent_condition"] = cond;
    r["profit"] = profit_json(mo.solution.profit);
    r["incentive_compatibility"] = ic_json(check_IC_exhaustive(m, mo.solution.mechanism, 1e-8, ic_budget(cfg, opt)));
    r["mechanism_file"] = "monopoly_mechanism.txt";
    out.write_json("monopoly.json", r);
    return out.files();
}

std::vector<std::string> cmd_verify(const ScenarioConfig& cfg, const RunOptions& opt) {
    const auto& m = cfg.model;
    const std::string path = opt.mechanism.empty() ? cfg.mechanism : opt.mechanism;
    if (path.empty())
        throw ConfigError("verify needs a mechanism file (--mechanism or run.mechanism)");
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot open mechanism file " + path);
    const Mechanism mech = read_mechanism(f, m);
    const int T = mech.horizon();
    const int nf = m.n_signals();

    json r;
    r["command"] = "verify";
    r["config_hash"] = hex64(cfg.hash);
    r["horizon"] = T;
    const auto ic = check_IC_exhaustive(m, mech, 1e-8, ic_budget(cfg, opt));
    r["incentive_compatibility"] = ic_json(ic);
    const auto osic = check_OSIC(m, mech);
    r["osic"] = osic_json(m, osic);
    bool osic_ok = true;
    json violations = json::array();
    for (const auto& o : osic)
        if (o.slack < -1e-8) {
            osic_ok = false;
            violations.push_back({{"t", o.t}, {"signal_history", signal_history_label(o.signal_rank, o.t, nf)}});
        }
    r["osic_violations"] = violations;

    bool flows_ok = true;
    json flow_fail = json::array();
    std::size_t flow_nodes = 0;
    for (int t = 1; t <= T; ++t)
        for (std::size_t s = 0; s < mech.n_signal_histories(t); ++s)
            for (std::size_t rr = 0; rr < mech.n_report_histories(t); ++rr) {
                ++flow_nodes;
                if (!check_flow_monotonicity(m, mech.contract(t, s, rr))) {
                    flows_ok = false;
                    flow_fail.push_back({{"t", t},
                                         {"signal_history", signal_history_label(s, t, nf)},
                                         {"reports", report_history_label(rr, t)}});
                }
            }
    r["flow_monotonicity"] = {{"nodes", flow_nodes}, {"all_monotone", flows_ok}, {"failures", flow_fail}};

    ValueTable vt(m, mech);
    json csm = json::array(), ctm = json::array();
    bool csm_ok = true, ctm_ok = true;
    for (int t = 1; t < T; ++t) {
        const std::size_t hp = ipow(2, t - 1) - 1;
        for (std::size_t s = 0; s < mech.n_signal_histories(t); ++s) {
            for (std::size_t rp = 0; rp < ipow(2, t - 1); ++rp) {
                const auto c = check_CSM(m, vt, t, s, rp);
                csm_ok = csm_ok && c.holds;
                csm.push_back({{"t", t},
                               {"signal_history", signal_history_label(s, t, nf)},
                               {"reports", report_history_label(rp * 2 + 1, t)},
                               {"holds", c.holds},
                               {"margin", std::isfinite(c.margin) ? json(c.margin) : json(nullptr)}});
            }
            const auto c = check_CTM(m, vt, t, s, hp);
            ctm_ok = ctm_ok && c.holds;
            ctm.push_back({{"t", t},
                           {"signal_history", signal_history_label(s, t, nf)},
                           {"reports", report_history_label(hp * 2 + 1, t)},
                           {"status", c.holds ? "strict" : "not strict"},
                           {"margin", c.margin}});
        }
    }
    r["csm"] = {{"holds", csm_ok}, {"nodes", csm}};
    r["ctm"] = {{"holds", ctm_ok}, {"nodes", ctm}};
    r["all_pass"] = ic.ic && osic_ok && flows_ok && csm_ok && ctm_ok;

    Output out(opt.out_dir);
    out.write_json("verify.json", r);
    return out.files();
}

std::vector<std::string> cmd_sweep(const ScenarioConfig& cfg, const RunOptions& opt) {
    if (!cfg.sweep || cfg.sweep->values.empty())
        throw ConfigError("sweep needs a [sweep] section with at least one value");
    const SweepSpec& sw = *cfg.sweep;
    const SolverConfig sc = solver_config(cfg, opt);
    const std::uint64_t budget = ic_budget(cfg, opt);
    if (sw.parameter == "rho" && cfg.model.prefs().family() != UtilityFamily::crra)
        throw ConfigError("a rho sweep needs CRRA preferences");

    auto rows = indexed_map<std::string>(
        sw.values.size(),
        [&](std::size_t i) {
            const double v = sw.values[i];
            std::ostringstream os;
            os << sw.parameter << ',' << fmt17(v) << ',';
            try {
                ModelPrimitives m = cfg.model;
                if (sw.parameter == "mu_l") {
                    TypeProcess tp = m.types();
                    tp.pi_init = {v, 1.0 - v};
                    m = m.with_types(tp);
                } else if (sw.parameter == "rho") {
                    const auto& p = m.prefs();
                    Preferences q = Preferences::crra(v, p.delta(), p.normalization());
                    q.set_eps_c(p.eps_c());
                    m = m.with_prefs(q);
                }
                const double Vl = resolve_target(m, cfg.T, cfg.V_l);
                const double Vh = sw.parameter == "V_h" ? v : resolve_target(m, cfg.T, cfg.V_h);
                const auto sol = solve_relaxed(m, {cfg.T, Vl, Vh, cfg.exploit_low_insurance}, sc);
                const auto st = verify_structure(m, sol);
                const auto ic = check_IC_exhaustive(m, sol.mechanism, 1e-8, budget, Exec::serial);
                const double A = m.annuity(1, cfg.T);
                const double lo = std::max(m.prefs().utility_floor(), std::min(Vl, Vh) / A);
                const auto cert = supermodularity_certificate(m.prefs(), lo, std::max(Vl, Vh) / A + 1e-9, 64);
                os << "ok," << fmt17(Vl) << ',' << fmt17(Vh) << ',' << fmt17(sol.profit.total) << ','
                   << fmt17(sol.profit.low) << ',' << fmt17(sol.profit.high) << ',' << fmt17(sol.node(1, 0).nu) << ','
                   << fmt17(sol.node(1, 0).delta) << ',' << fmt17(st.max_abs_osic) << ','
                   << fmt17(ic.max_violation) << ',' << (ic.exhaustive ? "true" : "false") << ','
                   << to_string(cert) << ",\"\"";
            } catch (const Error& e) {
                os << status_name(e.exit_code()) << ",,,,,,,,,,,," << csv_quote(e.what());
            }
            return os.str();
        },
        Exec::parallel);

    std::ostringstream csv;
    csv << "parameter,value,status,V_l,V_h,profit,profit_low,profit_high,nu_1,delta_1,max_abs_osic,ic_max_violation,"
           "ic_exhaustive,certificate,error\n";
    for (const auto& r : rows)
        csv << r << '\n';
    Output out(opt.out_dir);
    out.write("sweep.csv", csv.str());
    out.write("sweep.gp", "set datafile separator ','\n"
                          "set key autotitle columnhead\n"
                          "set xlabel '" + sw.parameter + "'\n"
                          "plot 'sweep.csv' using 2:6 with linespoints title 'profit', \\\n"
                          "     '' using 2:8 with linespoints title 'profit_high'\n");
    return out.files();
}

std::vector<std::string> run_command(const std::string& command, const ScenarioConfig& cfg, const RunOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> files;
    if (command == "solve")
        files = cmd_solve(cfg, opt);
    else if (command == "equilibrium")
        files = cmd_equilibrium(cfg, opt);
    else if (command == "monopoly")
        files = cmd_monopoly(cfg, opt);
    else if (command == "verify")
        files = cmd_verify(cfg, opt);
    else if (command == "sweep")
        files = cmd_sweep(cfg, opt);
    else
        throw ConfigError("unknown command " + command);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json man = {{"config_hash", hex64(cfg.hash)},
                {"version", kVersion},
                {"command", command},
                {"threads", kernel_threads()},
                {"wall_time_s", wall},
                {"files", files}};
    Output out(opt.out_dir);
    out.write_json("manifest.json", man);
    files.push_back("manifest.json");
    return files;
}

} // namespace dyncontract
