#pragma once

#include <array>
#include <string>
#include <vector>

#include "dyncontract/solver.hpp"

namespace dyncontract {

/// Left-hand side of a "marginal utility times right derivative of Pi_h in V_l" condition,
/// with the three readings of the marginal-utility factor at consumption c.
struct MarginalCondition {
    double consumption = 0.0;
    double right_derivative = 0.0; // d+ Pi_h / d V_l, Richardson-extrapolated
    double factor_literal = 0.0;   // u'(psi(c)): u^{-1} applied to the consumption level as written
    double factor_derived = 0.0;   // u'(c)
    double factor_psi = 0.0;       // psi'(u(c)) = 1/u'(c)
    double lhs_literal = 0.0, lhs_derived = 0.0, lhs_psi = 0.0;
    double rhs = 0.0; // mu_l / mu_h
    /// Right derivative of total profit in V_l; its sign decides whether raising V_l pays.
    double total_right_derivative = 0.0;
};

struct EquilibriumResult {
    std::array<double, 2> V_star{0.0, 0.0};
    RelaxedSolution solution;
    double zero_profit_residual = 0.0; // |Pi_h(V*)|
    double low_profit = 0.0;           // Pi_l(V*)
    std::array<double, 2> bracket_profit{0.0, 0.0};
    int iterations = 0;
    MarginalCondition existence;
    bool exists_pure = false;       // from the u'(c) reading
    double existence_margin = 0.0;  // rhs - lhs_derived
    bool exists_literal = false;
    bool exists_psi = false;
    bool exists_direct = false;     // total_right_derivative <= 0
};

/// Right derivative of V_l -> Pi_h(V_l, V_h) by one-sided differences at 1e-3, 1e-4, 1e-5 and
/// two levels of Richardson extrapolation.
double right_derivative_high(const ModelPrimitives& model, int T, double V_l, double V_h,
                             const SolverConfig& config = {});

MarginalCondition marginal_condition(const ModelPrimitives& model, int T, double V_l, double V_h,
                                     const SolverConfig& config = {});

EquilibriumResult competitive_equilibrium(const ModelPrimitives& model, int T, const SolverConfig& config = {});

struct ExistencePoint {
    double mu_l;
    double margin;
    bool exists;
};
/// Existence margin along a list of low-type shares; one independent equilibrium per point.
std::vector<ExistencePoint> existence_sweep(const ModelPrimitives& model, int T, const std::vector<double>& mu_l,
                                            Exec exec = Exec::parallel, const SolverConfig& config = {});

struct CommitmentRow {
    int t;
    std::string types; // type history, e.g. "hhl"
    double V;
    double V_outside;
    bool ok;
};
struct CommitmentReport {
    std::vector<CommitmentRow> rows;
    double min_margin = 0.0;
    bool all_pass = false;
};
/// Requires pi_ll = 1 and a single signal; PremiseError otherwise.
CommitmentReport commitment_check(const ModelPrimitives& model, const EquilibriumResult& eq, double tol = 1e-9);

struct MonopolyResult {
    std::array<double, 2> V_M{0.0, 0.0};
    std::array<double, 2> outside{0.0, 0.0};
    RelaxedSolution solution;
    double rents_low = 0.0;
    bool interior = false; // rents left to the low type
    MarginalCondition rent_condition;
    bool no_rents_condition = false; // from the u'(c) reading
};

MonopolyResult monopoly_solution(const ModelPrimitives& model, int T, const SolverConfig& config = {});

struct RentCheck {
    MarginalCondition condition;
    bool no_rents = false;        // u'(c) reading
    bool no_rents_literal = false;
    bool no_rents_psi = false;
    bool no_rents_direct = false;
};
RentCheck information_rent_check(const ModelPrimitives& model, int T, const SolverConfig& config = {});

} // namespace dyncontract
