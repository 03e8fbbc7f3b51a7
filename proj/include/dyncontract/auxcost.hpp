#pragma once

#include <array>
#include <vector>

#include "dyncontract/model.hpp"
#include "dyncontract/parallel.hpp"

namespace dyncontract {

/// High-type flow utility nu and the wedge delta between the truthful high type and a
/// low type who claims to be high.
struct AuxTarget {
    double nu;
    double delta;
};

struct AuxSolution {
    FlowContract zeta;
    std::vector<double> x;
    /// psi'(x(y)) = lambda - mu * ell(y) at interior incomes.
    double lambda = 0.0;
    double mu = 0.0;
    double chi = 0.0;
    /// (chi_nu, chi_delta) = (lambda - mu, mu); a subgradient at corners.
    std::array<double, 2> grad{0.0, 0.0};
    bool interior = true;
    std::vector<std::size_t> active_corners;
    double residual = 0.0;
    int iterations = 0;
};

struct AuxOptions {
    double tol = 1e-10;
    int max_iter = 200;
    int homotopy_steps = 16;
};

/// Minimizes E_h psi(x) subject to E_h x = nu, E_l x = nu - delta, x >= utility floor.
AuxSolution solve_aux(const ModelPrimitives& model, AuxTarget target, const AuxOptions& opt = {});

double chi(const ModelPrimitives& model, AuxTarget target);
std::array<double, 2> chi_gradient(const ModelPrimitives& model, AuxTarget target);
/// d^2 chi / d nu d delta at an interior solution.
double chi_cross(const ModelPrimitives& model, AuxTarget target);
double chi_cross(const ModelPrimitives& model, const AuxSolution& sol);

struct QuadraticChi {
    double chi;
    std::array<double, 2> grad;
};
/// Closed form for u(c) = 2 sqrt(c).
QuadraticChi chi_quadratic_oracle(const ModelPrimitives& model, AuxTarget target);

/// Grid search over feasible utility profiles, |Y| <= 3. Returns +inf when no grid point is feasible.
double brute_force_chi(const ModelPrimitives& model, AuxTarget target, double resolution,
                       Exec exec = Exec::parallel);

/// Feasibility of (nu, delta): some x in [floor, sup u)^Y meets both constraints.
/// With interior=true the point must lie in the interior of that set.
bool membership_A(const ModelPrimitives& model, AuxTarget target, bool interior = false);

} // namespace dyncontract
