#include "doctest.h"

#include <cmath>

#include "dyncontract/solver.hpp"

using namespace dyncontract;

namespace {

ModelPrimitives fixture(bool contingent) {
    return contingent ? default_fixture(SignalStructure::fully_contingent(2)) : default_fixture();
}

// V = (V^FI_l, midpoint toward V^FI_h)
RelaxedProblemSpec midpoint_spec(const ModelPrimitives& m, int T) {
    const double Vl = full_info_utility(m, Type::low, T).V, Vh = full_info_utility(m, Type::high, T).V;
    return {T, Vl, 0.5 * (Vl + Vh), true};
}

} // namespace

TEST_CASE("one period reduces to the auxiliary problem") {
    auto m = default_fixture();
    auto sol = solve_relaxed(m, {1, 1.6, 2.0, true});
    CHECK(sol.value == doctest::Approx(2.41).epsilon(1e-10));
    REQUIRE(sol.nodes.size() == 1);
    CHECK(sol.nodes[0].nu == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(sol.nodes[0].delta == doctest::Approx(0.4).epsilon(1e-10));
    CHECK(sol.nodes[0].nu_l == doctest::Approx(1.6).epsilon(1e-10));
    auto z = sol.mechanism.contract(1, 0, 0);
    CHECK(z[0] == doctest::Approx(0.64).epsilon(1e-10));
    CHECK(z[1] == doctest::Approx(0.64).epsilon(1e-10));
    CHECK(sol.profit.high == doctest::Approx(2.66).epsilon(1e-10));
    CHECK(sol.profit.low == doctest::Approx(2.16).epsilon(1e-10));
    CHECK(verify_auxiliary_match(m, sol).max_deviation <= 1e-9);

    auto rows = extract_dynamics(m, sol);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].signal_history == "-");
    CHECK(std::isnan(rows[0].nu_residual));
    CHECK(verify_intertemporal(m, sol).rows.empty());
}

TEST_CASE("one period against the closed-form cost on a grid") {
    auto m = default_fixture();
    for (double Vl : {1.2, 1.6, 2.4})
        for (double gap : {0.0, 0.1, 0.3, 0.5}) {
            const double Vh = Vl + gap;
            auto sol = solve_relaxed(m, {1, Vl, Vh, true});
            const double expect = 0.5 * (m.mean_income(Type::low) - m.prefs().psi(Vl)) +
                                  0.5 * (m.mean_income(Type::high) - chi_quadratic_oracle(m, {Vh, gap}).chi);
            CHECK(sol.value == doctest::Approx(expect).epsilon(1e-9));
        }
}

TEST_CASE("one-period feasibility boundary") {
    // with x = (floor, a) the low type gets 0.6 a against 0.9 a, so V_l >= (2/3) V_h at T = 1
    auto m = default_fixture();
    CHECK_THROWS_AS(solve_relaxed(m, {1, 0.8, 1.3, true}), InfeasibleError);
    CHECK(feasibility_measure(m, {1, 0.8, 1.3, true}) == doctest::Approx(1.3 * 2.0 / 3.0 - 0.8).epsilon(1e-9));
    CHECK_NOTHROW(solve_relaxed(m, {1, 0.9, 1.3, true}));
}

TEST_CASE("equal targets give the full-information solution") {
    for (bool fc : {false, true})
        for (int T : {1, 2, 3}) {
            auto m = fixture(fc);
            const double V0 = 2.0 * m.annuity(1, T);
            auto sol = solve_relaxed(m, {T, V0, V0, true});
            const double c = m.prefs().psi(V0 / m.annuity(1, T));
            double worst = 0.0;
            for (int t = 1; t <= T; ++t)
                for (std::size_t s = 0; s < sol.mechanism.n_signal_histories(t); ++s)
                    for (std::size_t r = 0; r < sol.mechanism.n_report_histories(t); ++r)
                        for (double z : sol.mechanism.contract(t, s, r))
                            worst = std::max(worst, std::abs(z - c));
            CHECK(worst <= 1e-9);
            for (const auto& n : sol.nodes)
                CHECK(std::abs(n.delta) <= 1e-10);
            const double expect = 0.5 * full_info_profit(m, Type::low, T, V0) + 0.5 * full_info_profit(m, Type::high, T, V0);
            CHECK(sol.value == doctest::Approx(expect).epsilon(1e-10));
            CHECK(verify_auxiliary_match(m, sol).max_deviation <= 1e-9);
        }
}

TEST_CASE("structure of the relaxed solution") {
    for (bool fc : {false, true})
        for (int T : {2, 3}) {
            CAPTURE(fc);
            CAPTURE(T);
            auto m = fixture(fc);
            auto sol = solve_relaxed(m, midpoint_spec(m, T));
            CHECK(sol.pk_residual <= 1e-8);
            CHECK(sol.interior);
            auto st = verify_structure(m, sol);
            CHECK(st.max_abs_osic <= 1e-7);
            CHECK(st.post_low_variance <= 1e-12);
            CHECK(st.max_foc_residual <= 1e-7);
            CHECK(st.min_type_gap >= 1e-6);
            CHECK(st.csm);
            CHECK(st.ctm);
            for (const auto& n : sol.nodes)
                CHECK(n.delta > 0.0);
            CHECK(verify_auxiliary_match(m, sol).max_deviation <= 1e-7);
        }
}

TEST_CASE("relaxed solution is incentive compatible") {
    struct Case {
        bool fc;
        int T;
    };
    for (Case c : {Case{false, 2}, Case{true, 2}, Case{false, 3}}) {
        auto m = fixture(c.fc);
        auto sol = solve_relaxed(m, midpoint_spec(m, c.T));
        auto ic = check_IC_exhaustive(m, sol.mechanism);
        CHECK(ic.exhaustive);
        CHECK(ic.max_violation <= 1e-8);
        CHECK(ic.dp_violation <= 1e-8);
    }
}

TEST_CASE("reduced and full formulations agree") {
    for (bool fc : {false, true})
        for (int T : {2, 3}) {
            auto m = fixture(fc);
            auto spec = midpoint_spec(m, T);
            auto a = solve_relaxed(m, spec);
            spec.exploit_low_insurance = false;
            auto b = solve_relaxed(m, spec);
            CHECK(b.n_variables > a.n_variables);
            CHECK(a.value == doctest::Approx(b.value).epsilon(1e-9));
            REQUIRE(a.nodes.size() == b.nodes.size());
            for (std::size_t i = 0; i < a.nodes.size(); ++i) {
                CHECK(a.nodes[i].nu == doctest::Approx(b.nodes[i].nu).epsilon(1e-7));
                CHECK(a.nodes[i].delta == doctest::Approx(b.nodes[i].delta).epsilon(1e-7));
                CHECK(a.nodes[i].nu_l == doctest::Approx(b.nodes[i].nu_l).epsilon(1e-7));
            }
            CHECK(post_low_consumption_variance(m, b.mechanism) <= 1e-12);
        }
}

TEST_CASE("different starting points reach the same solution") {
    auto m = fixture(true);
    auto spec = midpoint_spec(m, 3);
    auto a = solve_relaxed(m, spec);
    for (double scale : {0.1, 5.0}) {
        SolverConfig cfg;
        cfg.start_scale = scale;
        auto b = solve_relaxed(m, spec, cfg);
        for (std::size_t i = 0; i < a.nodes.size(); ++i) {
            CHECK(std::abs(a.nodes[i].nu - b.nodes[i].nu) <= 1e-6);
            CHECK(std::abs(a.nodes[i].delta - b.nodes[i].delta) <= 1e-6);
            CHECK(std::abs(a.nodes[i].nu_l - b.nodes[i].nu_l) <= 1e-6);
        }
    }
}

TEST_CASE("errors") {
    auto m = default_fixture();
    CHECK_THROWS_AS(solve_relaxed(m, {2, -1.0, 2.0, true}), InfeasibleError);
    try {
        solve_relaxed(m, {2, -1.0, 2.0, true});
    } catch (const Error& e) {
        CHECK(e.exit_code() == 3);
    }
    CHECK(feasibility_measure(m, {2, -1.0, 2.0, true}) > 1.0);
    CHECK(feasibility_measure(m, {2, 3.0, 4.0, true}) <= 1e-12);

    TypeProcess tp = m.types();
    tp.transition[1] = {0.0, 1.0};
    CHECK_THROWS_AS(solve_relaxed(m.with_types(tp), {2, 3.0, 4.0, true}), PremiseError);

    SolverConfig small;
    small.max_variables = 10;
    CHECK_THROWS_AS(solve_relaxed(m, {4, 3.0, 4.0, true}, small), DomainError);
    CHECK_THROWS_AS(solve_relaxed(m, {0, 3.0, 4.0, true}), DomainError);
}

TEST_CASE("intertemporal optimality conditions") {
    for (bool fc : {false, true})
        for (int T : {2, 3}) {
            auto m = fixture(fc);
            auto sol = solve_relaxed(m, midpoint_spec(m, T));
            auto rep = verify_intertemporal(m, sol);
            CHECK(rep.skipped == 0);
            CHECK(rep.rows.size() == sol.nodes.size() - ipow(m.n_signals(), T - 1));
            CHECK(rep.max_residual <= 1e-6);
            CHECK(rep.max_inverse_euler <= 1e-6);
        }
}

TEST_CASE("intertemporal residual responds to a perturbation") {
    auto m = default_fixture();
    auto sol = solve_relaxed(m, midpoint_spec(m, 2));
    for (auto& n : sol.nodes)
        if (n.t == 2)
            n.nu += 0.01;
    auto rep = verify_intertemporal(m, sol);
    REQUIRE(rep.rows.size() == 1);
    // chi = nu^2/4 + delta^2/4, so chi_nu moves by 0.01 / 2 in period 2
    CHECK(rep.rows[0].nu_residual == doctest::Approx(-0.8 * 0.5 * 0.01).epsilon(1e-6));
}

TEST_CASE("monotone dynamics under realization independence") {
    auto m = default_fixture();
    for (int T : {2, 3, 4}) {
        auto sol = solve_relaxed(m, midpoint_spec(m, T));
        auto rep = verify_monotonicity_RI(m, sol);
        CHECK(rep.applicable);
        CHECK(rep.holds);
        CHECK(rep.nu_margin >= 1e-6);
        CHECK(rep.delta_margin >= 1e-6);
    }
    const double V0 = 2.0 * m.annuity(1, 3);
    auto flat = solve_relaxed(m, {3, V0, V0, true});
    CHECK_FALSE(verify_monotonicity_RI(m, flat).applicable);

    auto m4 = m.with_prefs(Preferences::crra(0.4, 0.9));
    auto s4 = solve_relaxed(m4, midpoint_spec(m4, 3));
    auto r4 = verify_monotonicity_RI(m4, s4);
    CHECK_FALSE(r4.applicable);
    CHECK(r4.certificate == Psi3Sign::negative);
    CHECK(r4.note.find("NegativePsi3") != std::string::npos);

    CHECK_THROWS_AS(verify_monotonicity_RI(fixture(true), solve_relaxed(fixture(true), {2, 3.0, 4.0, true})),
                    DomainError);
}

TEST_CASE("quadratic case") {
    auto fc = fixture(true);
    auto sol = solve_relaxed(fc, midpoint_spec(fc, 3));
    auto q = verify_quadratic(fc, sol);
    CHECK(q.martingale_residual <= 1e-7);
    CHECK(q.min_supermartingale_gap >= 1e-7);
    CHECK(q.min_upper_gap > 0.0);
    CHECK(q.min_lower_gap > 0.0);
    CHECK(q.holds);

    auto ri = default_fixture();
    auto sr = solve_relaxed(ri, midpoint_spec(ri, 3));
    CHECK(verify_quadratic(ri, sr).martingale_residual <= 1e-7);

    const double V0 = 2.0 * fc.annuity(1, 3);
    CHECK(verify_quadratic(fc, solve_relaxed(fc, {3, V0, V0, true})).martingale_residual <= 1e-10);

    auto m8 = fc.with_prefs(Preferences::crra(0.8, 0.9));
    CHECK_THROWS_AS(verify_quadratic(m8, solve_relaxed(m8, midpoint_spec(m8, 2))), DomainError);
}

TEST_CASE("two-period marginal cost orderings") {
    auto m8 = fixture(true).with_prefs(Preferences::crra(0.8, 0.9));
    auto sol = solve_relaxed(m8, midpoint_spec(m8, 2));
    auto rep = verify_T2_general(m8, sol);
    CHECK(rep.applicable);
    CHECK(rep.delta_margin >= 1e-7);
    CHECK(rep.upper_margin >= 1e-7);
    CHECK(rep.lower_margin >= 1e-7);

    auto q = fixture(true);
    auto sq = solve_relaxed(q, midpoint_spec(q, 2));
    CHECK(verify_T2_general(q, sq).holds);

    const double V0 = 2.0 * q.annuity(1, 2);
    CHECK_FALSE(verify_T2_general(q, solve_relaxed(q, {2, V0, V0, true})).applicable);
}

TEST_CASE("recursion cross-check") {
    for (bool fc : {false, true}) {
        auto m = fixture(fc);
        auto sol = solve_relaxed(m, {2, 1.6, 2.0, true});
        auto rep = bellman_crosscheck(m, sol, 200);
        CHECK(rep.gap <= 1e-3);
        CHECK(rep.recursive <= rep.monolithic + 1e-9);
    }
    auto m = default_fixture();
    const double V0 = 2.0 * m.annuity(1, 2);
    auto fi = solve_relaxed(m, {2, V0, V0, true});
    CHECK(bellman_crosscheck(m, fi, 50).gap <= 1e-8);
    CHECK(bellman_crosscheck(m, fi, 50, Exec::serial).recursive == bellman_crosscheck(m, fi, 50, Exec::parallel).recursive);
}

TEST_CASE("profit derivatives off the distorted region") {
    auto m = default_fixture();
    const int T = 3;
    const double A = m.annuity(1, T);
    std::vector<std::pair<double, double>> grid;
    for (double ul : {1.5, 2.0, 2.5})
        for (double d : {0.0, 0.2, 0.6})
            grid.emplace_back(A * (ul + d), A * ul);
    auto ps = profit_function(m, T, grid);
    for (const auto& p : ps) {
        REQUIRE(p.feasible);
        // raising promised utility costs mu_i psi'(u_i)
        CHECK(p.dPi_dVl == doctest::Approx(-0.5 * m.prefs().dpsi(p.V_l / A)).epsilon(1e-4));
        if (p.V_l > p.V_h)
            CHECK(p.dPi_dVh == doctest::Approx(-0.5 * m.prefs().dpsi(p.V_h / A)).epsilon(1e-4));
    }
    auto serial = profit_function(m, T, grid, 1e-4, Exec::serial);
    for (std::size_t i = 0; i < ps.size(); ++i)
        CHECK(serial[i].total == ps[i].total);
}

TEST_CASE("profit function shape") {
    auto m = default_fixture();
    const int T = 2;
    const double Vl = full_info_utility(m, Type::low, T).V, Vh = full_info_utility(m, Type::high, T).V;
    std::vector<std::pair<double, double>> grid;
    for (int i = 0; i <= 8; ++i)
        grid.emplace_back(Vl, Vl + (Vh - Vl) * i / 8.0);
    auto ps = profit_function(m, T, grid);
    for (std::size_t i = 1; i < ps.size(); ++i)
        CHECK(ps[i].high < ps[i - 1].high);
    for (std::size_t i = 1; i + 1 < ps.size(); ++i)
        CHECK(ps[i].total >= 0.5 * (ps[i - 1].total + ps[i + 1].total) - 1e-12);
    // concavity along a diagonal chord
    const ProfitSplit a = profit_at(m, T, Vl - 0.4, Vh), b = profit_at(m, T, Vl + 0.4, Vh - 0.6);
    const ProfitSplit c = profit_at(m, T, Vl, Vh - 0.3);
    CHECK(c.total >= 0.5 * (a.total + b.total));
    // infeasible points are flagged, not thrown
    auto bad = profit_function(m, T, {{-5.0, 3.0}});
    CHECK_FALSE(bad[0].feasible);
    CHECK_FALSE(bad[0].error.empty());
}
