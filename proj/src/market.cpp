#include "dyncontract/market.hpp"

#include <cmath>
#include <functional>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "dyncontract/format.hpp"

namespace dyncontract {

namespace {

// One-sided forward differences at 1e-3, 1e-4, 1e-5, extrapolated twice (first and second order terms).
double richardson_right(const std::function<double(double)>& f) {
    const double f0 = f(0.0);
    double d[3];
    const double h[3] = {1e-3, 1e-4, 1e-5};
    for (int i = 0; i < 3; ++i)
        d[i] = (f(h[i]) - f0) / h[i];
    const double r1 = (10.0 * d[1] - d[0]) / 9.0;
    const double r2 = (10.0 * d[2] - d[1]) / 9.0;
    return (100.0 * r2 - r1) / 99.0;
}

} // namespace

double right_derivative_high(const ModelPrimitives& model, int T, double V_l, double V_h, const SolverConfig& config) {
    return richardson_right([&](double h) { return profit_at(model, T, V_l + h, V_h, config).high; });
}

MarginalCondition marginal_condition(const ModelPrimitives& model, int T, double V_l, double V_h,
                                     const SolverConfig& config) {
    const auto& prefs = model.prefs();
    MarginalCondition mc;
    mc.consumption = prefs.psi(V_l / model.annuity(1, T));
    mc.right_derivative = right_derivative_high(model, T, V_l, V_h, config);
    const double c = mc.consumption;
    mc.factor_literal = prefs.du(prefs.psi(c));
    mc.factor_derived = prefs.du(c);
    mc.factor_psi = prefs.dpsi(prefs.u(c));
    mc.lhs_literal = mc.factor_literal * mc.right_derivative;
    mc.lhs_derived = mc.factor_derived * mc.right_derivative;
    mc.lhs_psi = mc.factor_psi * mc.right_derivative;
    const auto& mu = model.types().mu_shares();
    mc.rhs = mu[0] / mu[1];
    mc.total_right_derivative =
        richardson_right([&](double h) { return profit_at(model, T, V_l + h, V_h, config).total; });
    return mc;
}

EquilibriumResult competitive_equilibrium(const ModelPrimitives& model, int T, const SolverConfig& config) {
    EquilibriumResult eq;
    const double Vl = full_info_utility(model, Type::low, T).V;
    const double Vh_fi = full_info_utility(model, Type::high, T).V;
    auto Pi_h = [&](double Vh) { return profit_at(model, T, Vl, Vh, config).high; };

    const double f_lo = Pi_h(Vl), f_hi = Pi_h(Vh_fi);
    eq.bracket_profit = {f_lo, f_hi};
    double Vh;
    if (std::abs(f_lo) <= 1e-12 && Vh_fi - Vl <= 1e-12) {
        Vh = Vl; // no asymmetry: full information outcome
    } else {
        if (!(f_lo > 0.0 && f_hi < 0.0))
            throw PremiseError("zero-profit bracket fails: Pi_h(V^FI_l, V^FI_l) = " + fmt17(f_lo) +
                               ", Pi_h(V^FI_l, V^FI_h) = " + fmt17(f_hi));
        std::uintmax_t iters = 60;
        auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-14 * (1.0 + std::abs(a)); };
        auto [a, b] = boost::math::tools::toms748_solve(Pi_h, Vl, Vh_fi, f_lo, f_hi, tol, iters);
        const double fa = Pi_h(a), fb = Pi_h(b);
        Vh = std::abs(fa) <= std::abs(fb) ? a : b;
        eq.iterations = static_cast<int>(iters);
    }
    eq.V_star = {Vl, Vh};
    eq.solution = solve_relaxed(model, {T, Vl, Vh, true}, config);
    eq.zero_profit_residual = std::abs(eq.solution.profit.high);
    eq.low_profit = eq.solution.profit.low;
    if (eq.zero_profit_residual > 1e-8)
        throw ConvergenceError("zero-profit root not reached: |Pi_h| = " + fmt17(eq.zero_profit_residual));

    eq.existence = marginal_condition(model, T, Vl, Vh, config);
    const auto& mc = eq.existence;
    eq.existence_margin = mc.rhs - mc.lhs_derived;
    eq.exists_pure = mc.lhs_derived < mc.rhs;
    eq.exists_literal = mc.lhs_literal < mc.rhs;
    eq.exists_psi = mc.lhs_psi < mc.rhs;
    eq.exists_direct = mc.total_right_derivative < 0.0;
    return eq;
}

std::vector<ExistencePoint> existence_sweep(const ModelPrimitives& model, int T, const std::vector<double>& mu_l,
                                            Exec exec, const SolverConfig& config) {
    return indexed_map<ExistencePoint>(
        mu_l.size(),
        [&](std::size_t i) {
            TypeProcess tp = model.types();
            tp.pi_init = {mu_l[i], 1.0 - mu_l[i]};
            const auto eq = competitive_equilibrium(model.with_types(tp), T, config);
            return ExistencePoint{mu_l[i], eq.existence_margin, eq.exists_pure};
        },
        exec);
}

CommitmentReport commitment_check(const ModelPrimitives& model, const EquilibriumResult& eq, double tol) {
    if (model.types().pi(Type::low, Type::low) != 1.0)
        throw PremiseError("commitment check needs an absorbing low state (pi_ll = 1)");
    if (model.n_signals() != 1)
        throw PremiseError("commitment check needs realization-independent contracts");
    const Mechanism& m = eq.solution.mechanism;
    const int T = m.horizon();
    ValueTable vt(model, m);
    const double uo = model.prefs().u(model.mean_income(Type::low));
    CommitmentReport rep;
    rep.min_margin = std::numeric_limits<double>::infinity();
    // on-path type histories are h^k l^(t-k)
    for (int t = 1; t <= T; ++t) {
        const double Vo = uo * model.annuity(t, T);
        for (int k = 0; k <= t; ++k) {
            std::string hist(k, 'h');
            hist.append(t - k, 'l');
            std::size_t rp = 0;
            for (int i = 0; i + 1 < t; ++i)
                rp = rp * 2 + (hist[i] == 'h' ? 1 : 0);
            const Type cur = hist.back() == 'h' ? Type::high : Type::low;
            const double V = vt.V(t, 0, rp, cur);
            const bool ok = V >= Vo - tol;
            rep.rows.push_back({t, hist, V, Vo, ok});
            if (cur == Type::low)
                rep.min_margin = std::min(rep.min_margin, V - Vo);
        }
    }
    rep.all_pass = true;
    for (const auto& r : rep.rows)
        rep.all_pass = rep.all_pass && r.ok;
    return rep;
}

MonopolyResult monopoly_solution(const ModelPrimitives& model, int T, const SolverConfig& config) {
    MonopolyResult res;
    const double lo = outside_option(model, Type::low, T), hi = outside_option(model, Type::high, T);
    res.outside = {lo, hi};
    auto neg_profit = [&](double Vl) { return -profit_at(model, T, Vl, hi, config).total; };
    std::uintmax_t iters = 200;
    auto [x, fx] = boost::math::tools::brent_find_minima(neg_profit, lo, hi, 40, iters);
    // a corner at the outside option is taken when it is at least as good as the line-search point
    const double f_lo = neg_profit(lo);
    const double Vl = f_lo <= fx + 1e-12 * (1.0 + std::abs(fx)) ? lo : x;
    res.V_M = {Vl, hi};
    res.solution = solve_relaxed(model, {T, Vl, hi, true}, config);
    res.rents_low = Vl - lo;
    res.interior = Vl > lo;
    res.rent_condition = marginal_condition(model, T, lo, hi, config);
    res.no_rents_condition = res.rent_condition.lhs_derived <= res.rent_condition.rhs;
    return res;
}

RentCheck information_rent_check(const ModelPrimitives& model, int T, const SolverConfig& config) {
    const double lo = outside_option(model, Type::low, T), hi = outside_option(model, Type::high, T);
    RentCheck rc;
    rc.condition = marginal_condition(model, T, lo, hi, config);
    rc.no_rents = rc.condition.lhs_derived <= rc.condition.rhs;
    rc.no_rents_literal = rc.condition.lhs_literal <= rc.condition.rhs;
    rc.no_rents_psi = rc.condition.lhs_psi <= rc.condition.rhs;
    rc.no_rents_direct = rc.condition.total_right_derivative <= 0.0;
    return rc;
}

} // namespace dyncontract
