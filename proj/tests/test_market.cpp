#include "doctest.h"

#include <cmath>

#include "dyncontract/market.hpp"

using namespace dyncontract;

namespace {

ModelPrimitives with_mu(const ModelPrimitives& m, double mu_l) {
    TypeProcess tp = m.types();
    tp.pi_init = {mu_l, 1.0 - mu_l};
    return m.with_types(tp);
}

} // namespace

TEST_CASE("richardson right derivative on a smooth profit") {
    // on V_l >= V_h the low type is fully insured, so Pi_l = income - A psi(V_l / A) and
    // d Pi / d V_l = -mu_l psi'(u_l); Pi_h does not move
    auto m = default_fixture();
    const int T = 2;
    const double A = m.annuity(1, T);
    auto mc = marginal_condition(m, T, 2.2 * A, 2.0 * A);
    CHECK(std::abs(mc.right_derivative) <= 1e-7);
    CHECK(mc.total_right_derivative == doctest::Approx(-0.5 * m.prefs().dpsi(2.2)).epsilon(1e-7));
    CHECK(mc.consumption == doctest::Approx(1.21).epsilon(1e-12));
    CHECK(mc.factor_derived == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
    CHECK(mc.factor_psi == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(mc.factor_literal == doctest::Approx(1.0 / std::sqrt(m.prefs().psi(1.21))).epsilon(1e-12));
}

TEST_CASE("competitive equilibrium on the fixture") {
    auto m = default_fixture();
    for (int T : {1, 2}) {
        auto eq = competitive_equilibrium(m, T);
        const double lo = full_info_utility(m, Type::low, T).V, hi = full_info_utility(m, Type::high, T).V;
        CHECK(eq.V_star[0] == lo);
        CHECK(eq.V_star[1] > lo);
        CHECK(eq.V_star[1] < hi);
        CHECK(eq.bracket_profit[0] > 0.0);
        CHECK(eq.bracket_profit[1] < 0.0);
        CHECK(eq.zero_profit_residual <= 1e-8);
        CHECK(std::abs(eq.low_profit) <= 1e-7);
        CHECK(std::abs(eq.solution.value) <= 1e-7);
        CHECK(eq.solution.nodes[0].delta > 0.0);
        auto ic = check_IC_exhaustive(m, eq.solution.mechanism);
        CHECK(ic.exhaustive);
        CHECK(ic.max_violation <= 1e-8);
        // the u'(c) reading is the sign of the direct derivative of total profit
        CHECK(eq.exists_pure == eq.exists_direct);
        CHECK(eq.existence.right_derivative > 0.0);
    }
}

TEST_CASE("no asymmetry gives the full-information outcome") {
    auto m = default_fixture();
    IncomeModel inc = m.income();
    inc.p_l = inc.p_h;
    auto same = m.with_income(inc);
    SolverConfig cfg;
    cfg.check_premises = false;
    auto eq = competitive_equilibrium(same, 2, cfg);
    CHECK(eq.V_star[1] == doctest::Approx(full_info_utility(same, Type::high, 2).V).epsilon(1e-12));
    CHECK(eq.V_star[0] == doctest::Approx(eq.V_star[1]).epsilon(1e-12));
    for (const auto& n : eq.solution.nodes)
        CHECK(std::abs(n.delta) <= 1e-9);
}

TEST_CASE("existence margin along the low-type share") {
    auto m = default_fixture();
    std::vector<double> mus;
    for (int i = 1; i <= 9; ++i)
        mus.push_back(i / 10.0);
    auto sweep = existence_sweep(m, 2, mus);
    int flips = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        CHECK(sweep[i].margin > sweep[i - 1].margin);
        if (sweep[i].exists != sweep[i - 1].exists)
            ++flips;
    }
    CHECK(flips <= 1);
    CHECK_FALSE(sweep.front().exists);
    CHECK(sweep.back().exists);
    auto serial = existence_sweep(m, 2, mus, Exec::serial);
    for (std::size_t i = 0; i < sweep.size(); ++i)
        CHECK(serial[i].margin == sweep[i].margin);
    CHECK(competitive_equilibrium(with_mu(m, 0.99), 2).exists_pure);
}

TEST_CASE("equilibrium with independent types") {
    auto m = default_fixture();
    TypeProcess tp = m.types();
    tp.transition = {{{0.5, 0.5}, {0.5, 0.5}}};
    auto iid = m.with_types(tp);
    SolverConfig cfg;
    cfg.check_premises = false; // strict persistence is a model premise
    auto eq = competitive_equilibrium(iid, 2, cfg);
    CHECK(eq.zero_profit_residual <= 1e-8);
    // without persistence, later distortions do not screen
    CHECK(std::abs(eq.solution.node(2, 0).delta) <= 1e-7);
}

TEST_CASE("commitment with an absorbing low state") {
    auto m = default_fixture();
    TypeProcess tp = m.types();
    tp.transition[0] = {1.0, 0.0};
    auto absorbing = m.with_types(tp);
    auto eq = competitive_equilibrium(absorbing, 3);
    auto rep = commitment_check(absorbing, eq);
    CHECK(rep.all_pass);
    CHECK(rep.rows.size() == 2 + 3 + 4);
    CHECK(rep.rows[0].types == "l");
    CHECK(rep.rows[0].V == doctest::Approx(rep.rows[0].V_outside).epsilon(1e-10));
    // after h^(t-1) l the value is the discounted sum of nu_tau - Delta_tau under full insurance
    for (const auto& r : rep.rows)
        CHECK(r.V >= r.V_outside - 1e-9);

    CHECK_THROWS_AS(commitment_check(m, competitive_equilibrium(m, 2)), PremiseError);
    auto fc = absorbing.with_signals(SignalStructure::fully_contingent(2));
    CHECK_THROWS_AS(commitment_check(fc, competitive_equilibrium(fc, 2)), PremiseError);
}

TEST_CASE("monopoly") {
    auto m = default_fixture();
    for (double mu : {0.1, 0.5, 0.9}) {
        CAPTURE(mu);
        auto mm = with_mu(m, mu);
        auto mo = monopoly_solution(mm, 2);
        CHECK(mo.V_M[1] == doctest::Approx(outside_option(mm, Type::high, 2)).epsilon(1e-9));
        CHECK(std::abs(mo.V_M[1] - mo.outside[1]) <= 1e-9);
        CHECK(mo.V_M[0] >= mo.outside[0]);
        CHECK(mo.V_M[0] < mo.outside[1]);
        auto rc = information_rent_check(mm, 2);
        CHECK(rc.no_rents == !mo.interior);
        CHECK(rc.no_rents == rc.no_rents_direct);
        CHECK(mo.no_rents_condition == rc.no_rents);
        // sampled concavity along V_l
        const double a = mo.outside[0], b = mo.outside[1] - 0.05;
        const double pa = profit_at(mm, 2, a, mo.outside[1]).total, pb = profit_at(mm, 2, b, mo.outside[1]).total;
        const double pm = profit_at(mm, 2, 0.5 * (a + b), mo.outside[1]).total;
        CHECK(pm >= 0.5 * (pa + pb));
        // the argmax beats nearby points
        const double best = mo.solution.value;
        CHECK(best >= profit_at(mm, 2, std::min(mo.V_M[0] + 0.01, b), mo.outside[1]).total - 1e-12);
    }
    CHECK(monopoly_solution(with_mu(m, 0.1), 2).interior);
    CHECK_FALSE(monopoly_solution(with_mu(m, 0.9), 2).interior);
}
