#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dyncontract/auxcost.hpp"
#include "dyncontract/mechanism.hpp"
#include "dyncontract/model.hpp"
#include "dyncontract/parallel.hpp"

namespace dyncontract {

struct RelaxedProblemSpec {
    int T = 1;
    double V_l = 0.0;
    double V_h = 0.0;
    /// Use one constant flow per first-low node instead of a full subtree of profiles.
    bool exploit_low_insurance = true;
};

struct SolverConfig {
    double tol = 1e-10;
    int max_iter = 500;
    /// Multiplies the default starting multipliers; used to test uniqueness from other starts.
    double start_scale = 1.0;
    std::size_t max_variables = 100000;
    bool phase_one = true;
    /// Run the model validation before solving; tests of degenerate models switch it off.
    bool check_premises = true;
};

/// Flow utility and distortion at an all-h node (t, signal history s), and the constant
/// flow utility after a first low report at that node.
struct NodeDynamics {
    int t;
    std::size_t s;
    double nu;
    double delta;
    double nu_l;
    /// psi'(x(y)) = mult_mu - mult_lambda * ell(y) on the node's profile.
    double mult_mu;
    double mult_lambda;
    bool interior;
};

struct RelaxedSolution {
    RelaxedProblemSpec spec;
    Mechanism mechanism;
    double value = 0.0;
    ProfitSplit profit{0, 0, 0};
    std::vector<NodeDynamics> nodes; // ordered by (t, s)
    std::vector<OsicSlack> osic;
    std::vector<double> multipliers; // promise keeping (l, h), then one per OSIC row
    double pk_residual = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    std::size_t n_variables = 0;
    bool interior = true;

    const NodeDynamics& node(int t, std::size_t s) const;
};

/// Decides membership of V in the feasible utility set with a phase-one program.
/// Returns the infeasibility measure (zero when feasible).
double feasibility_measure(const ModelPrimitives& model, const RelaxedProblemSpec& spec);

RelaxedSolution solve_relaxed(const ModelPrimitives& model, const RelaxedProblemSpec& spec,
                              const SolverConfig& config = {});

struct DynamicsRow {
    int t;
    std::string signal_history;
    double nu, delta, nu_l;
    double chi_nu, chi_delta;
    /// Intertemporal residuals; NaN where not evaluated (last period or corner).
    double nu_residual, delta_residual;
};
std::vector<DynamicsRow> extract_dynamics(const ModelPrimitives& model, const RelaxedSolution& sol);

struct AuxiliaryMatchReport {
    double max_deviation = 0.0;
    std::size_t checked = 0;
};
AuxiliaryMatchReport verify_auxiliary_match(const ModelPrimitives& model, const RelaxedSolution& sol);

struct IntertemporalRow {
    int t;
    std::size_t s;
    double nu_residual;
    double delta_residual;
    double inverse_euler_residual;
};
struct IntertemporalReport {
    std::vector<IntertemporalRow> rows;
    std::size_t skipped = 0;
    double max_residual = 0.0;
    double max_inverse_euler = 0.0;
};
IntertemporalReport verify_intertemporal(const ModelPrimitives& model, const RelaxedSolution& sol);

struct MonotonicityReport {
    bool applicable = true;
    std::string note;
    bool holds = false;
    double nu_margin = 0.0;    // min nu_{t+1} - nu_t
    double delta_margin = 0.0; // min of Delta_t - Delta_{t+1} and Delta_T
    Psi3Sign certificate = Psi3Sign::zero;
};
MonotonicityReport verify_monotonicity_RI(const ModelPrimitives& model, const RelaxedSolution& sol);

struct QuadraticReport {
    double martingale_residual = 0.0;
    double min_supermartingale_gap = 0.0;
    double min_upper_gap = 0.0; // sum p_h nu_{t+1} - nu_t
    double min_lower_gap = 0.0; // nu_t - sum p_h nu^l_{t+1}
    bool holds = false;
};
QuadraticReport verify_quadratic(const ModelPrimitives& model, const RelaxedSolution& sol);

struct T2Report {
    bool applicable = true;
    double delta_margin = 0.0; // chi_D(1) - sum p_h chi_D(2)
    double upper_margin = 0.0; // sum p_h chi_nu(2) - chi_nu(1)
    double lower_margin = 0.0; // chi_nu(1) - sum p_h chi_nu(nu^l_2, 0)
    bool holds = false;
};
T2Report verify_T2_general(const ModelPrimitives& model, const RelaxedSolution& sol);

/// Structural properties of the relaxed solution (binding OSIC, insurance after low,
/// first-order conditions, type reward, signal and type monotonicity).
struct StructureReport {
    double max_abs_osic = 0.0;
    double min_osic = 0.0;
    double post_low_variance = 0.0;
    double max_foc_residual = 0.0;
    double min_type_gap = 0.0;
    bool csm = true;
    bool ctm = true;
    double min_csm_margin = 0.0;
    double min_ctm_margin = 0.0;
};
StructureReport verify_structure(const ModelPrimitives& model, const RelaxedSolution& sol);

struct BellmanReport {
    double monolithic = 0.0;
    double recursive = 0.0;
    double gap = 0.0;
    int grid = 0;
    int sweeps = 0;
};
/// Two-period value against the one-step recursion with continuation utilities on a grid.
/// Continuation values come from one-period solves with initial weights (pi_hl, pi_hh).
BellmanReport bellman_crosscheck(const ModelPrimitives& model, const RelaxedSolution& sol, int grid = 200,
                                 Exec exec = Exec::parallel);

struct ProfitSample {
    double V_l, V_h;
    bool feasible = false;
    std::string error;
    double total = 0.0, low = 0.0, high = 0.0;
    double dPi_dVl = 0.0, dPi_dVh = 0.0; // central differences
    double dPih_dVl_right = 0.0;         // one-sided
};
std::vector<ProfitSample> profit_function(const ModelPrimitives& model, int T,
                                          const std::vector<std::pair<double, double>>& V_grid,
                                          double step = 1e-4, Exec exec = Exec::parallel,
                                          const SolverConfig& config = {});

/// Convenience: profit split at V, solving once.
ProfitSplit profit_at(const ModelPrimitives& model, int T, double V_l, double V_h, const SolverConfig& config = {});

/// Full-information profit conditional on the initial type: discounted income minus the annuity of psi(V/annuity).
double full_info_profit(const ModelPrimitives& model, Type theta1, int T, double V);

} // namespace dyncontract
