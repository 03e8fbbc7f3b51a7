#pragma once

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "dyncontract/errors.hpp"

namespace dyncontract {

enum class Type : int { low = 0, high = 1 };

inline constexpr int type_index(Type t) { return static_cast<int>(t); }
inline constexpr Type type_from_index(int i) { return i == 0 ? Type::low : Type::high; }
inline constexpr char type_char(Type t) { return t == Type::low ? 'l' : 'h'; }

/// Income-contingent consumption, one entry per income level.
using FlowContract = std::vector<double>;

enum class UtilityFamily { crra, cara, custom };

/// standard: (c^(1-rho) - 1)/(1 - rho).  power: c^(1-rho)/(1 - rho), so rho = 1/2 is 2 sqrt(c).
enum class CrraNormalization { standard, power };

class Preferences {
public:
    struct CustomFunctions {
        std::function<double(double)> u, du, d2u;
        std::function<double(double)> psi, dpsi, d2psi, d3psi;
        std::function<double(double)> dpsi_inverse; // optional, numeric inversion otherwise
        double u_at_zero = -std::numeric_limits<double>::infinity();
        double u_sup = std::numeric_limits<double>::infinity();
    };

    static Preferences crra(double rho, double delta, CrraNormalization norm = CrraNormalization::power);
    static Preferences cara(double alpha, double delta);
    static Preferences custom(CustomFunctions f, double delta);

    UtilityFamily family() const { return family_; }
    double rho() const { return param_; }
    double alpha() const { return param_; }
    CrraNormalization normalization() const { return norm_; }
    double delta() const { return delta_; }
    void set_delta(double d) { delta_ = d; }

    double u(double c) const;
    double du(double c) const;
    double d2u(double c) const;
    double psi(double x) const;
    double dpsi(double x) const;
    double d2psi(double x) const;
    double d3psi(double x) const;
    /// Solves psi'(x) = s on the utility range; s at or below psi'(floor) maps to the floor.
    double dpsi_inverse(double s) const;

    bool u0_finite() const;
    double u0() const;
    double eps_c() const { return eps_c_; }
    void set_eps_c(double e) { eps_c_ = e; }
    /// 0 when u(0) is finite, eps_c otherwise.
    double consumption_floor() const;
    double utility_floor() const { return u(consumption_floor()); }
    /// sup of u, +inf when unbounded.
    double utility_sup() const;

    std::string describe() const;

private:
    UtilityFamily family_ = UtilityFamily::crra;
    double param_ = 0.5;
    CrraNormalization norm_ = CrraNormalization::power;
    double delta_ = 0.9;
    double eps_c_ = 1e-9;
    std::shared_ptr<const CustomFunctions> custom_;
};

struct TypeProcess {
    /// Initial type weights (pi_l, pi_h); the same pair serves as the market shares (mu_l, mu_h).
    std::array<double, 2> pi_init{0.5, 0.5};
    /// transition[i][j] = Pr(theta_{t+1} = j | theta_t = i), index 0 = low.
    std::array<std::array<double, 2>, 2> transition{{{0.7, 0.3}, {0.2, 0.8}}};

    const std::array<double, 2>& mu_shares() const { return pi_init; }
    double pi(Type i, Type j) const { return transition[type_index(i)][type_index(j)]; }
    double init(Type i) const { return pi_init[type_index(i)]; }
};

struct IncomeModel {
    std::vector<double> y;
    std::vector<double> p_l;
    std::vector<double> p_h;

    std::size_t size() const { return y.size(); }
    const std::vector<double>& p(Type t) const { return t == Type::low ? p_l : p_h; }
};

struct SignalStructure {
    /// phi_map[k] = signal label of income level k; labels are 0..n_signals-1.
    std::vector<int> phi_map;
    int n_signals = 1;

    static SignalStructure realization_independent(std::size_t n_income);
    static SignalStructure fully_contingent(std::size_t n_income);
    static SignalStructure from_map(std::vector<int> map);
};

class ModelPrimitives {
public:
    ModelPrimitives(Preferences prefs, TypeProcess types, IncomeModel income, SignalStructure signals);

    const Preferences& prefs() const { return prefs_; }
    const TypeProcess& types() const { return types_; }
    const IncomeModel& income() const { return income_; }
    const SignalStructure& signals() const { return signals_; }

    std::size_t n_income() const { return income_.size(); }
    int n_signals() const { return signals_.n_signals; }
    double delta() const { return prefs_.delta(); }

    double p(Type t, std::size_t k) const { return income_.p(t)[k]; }
    double ell(std::size_t k) const { return ell_[k]; }
    const std::vector<double>& ell() const { return ell_; }
    double signal_prob(Type t, int phi) const { return signal_prob_[type_index(t)][phi]; }
    double signal_ell(int phi) const { return signal_ell_[phi]; }
    int phi_of(std::size_t k) const { return signals_.phi_map[k]; }
    double mean_income(Type t) const;
    /// Sum_{tau=t}^{T} delta^(tau-t).
    double annuity(int t, int T) const;

    ModelPrimitives with_prefs(Preferences p) const;
    ModelPrimitives with_types(TypeProcess t) const;
    ModelPrimitives with_signals(SignalStructure s) const;
    ModelPrimitives with_income(IncomeModel i) const;

private:
    Preferences prefs_;
    TypeProcess types_;
    IncomeModel income_;
    SignalStructure signals_;
    std::vector<double> ell_;
    std::array<std::vector<double>, 2> signal_prob_;
    std::vector<double> signal_ell_;
};

/// Y={1,4}, p_h=(0.1,0.9), p_l=(0.4,0.6), pi_hh=0.8, pi_ll=0.7, delta=0.9, mu=(0.5,0.5), u=2 sqrt(c).
ModelPrimitives default_fixture(SignalStructure signals = SignalStructure::realization_independent(2));

struct Violation {
    std::string invariant;
    std::string detail;
};

std::vector<Violation> validate(const ModelPrimitives& model);
/// Throws PremiseError listing all violations.
void require_valid(const ModelPrimitives& model);

double flow_utility(const ModelPrimitives& model, const FlowContract& z, Type theta);
double flow_profit(const ModelPrimitives& model, const FlowContract& z, Type theta);
/// Expected utility of a profile already in utility units.
double expected_utility(const ModelPrimitives& model, const std::vector<double>& x, Type theta);

double likelihood_ratio(const ModelPrimitives& model, double income);
double signal_likelihood(const ModelPrimitives& model, int phi);

double full_insurance_consumption(const ModelPrimitives& model, double V, int t, int T);
double outside_option(const ModelPrimitives& model, Type theta1, int T);

struct FullInfo {
    double V;
    double c;
};
FullInfo full_info_utility(const ModelPrimitives& model, Type theta1, int T);

/// Discounted expected income sum_t delta^(t-1) E[y_t | theta_1].
double discounted_income(const ModelPrimitives& model, Type theta1, int T);

enum class Psi3Sign { positive, zero, negative, mixed };
std::string to_string(Psi3Sign s);

Psi3Sign supermodularity_certificate(const Preferences& prefs, double x_lo, double x_hi, int n);

} // namespace dyncontract
