#include "dyncontract/model.hpp"

#include <cmath>
#include <sstream>

namespace dyncontract {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double crra_offset(CrraNormalization n) { return n == CrraNormalization::standard ? 1.0 : 0.0; }

} // namespace

Preferences Preferences::crra(double rho, double delta, CrraNormalization norm) {
    if (!(rho > 0.0) || rho == 1.0)
        throw DomainError("CRRA coefficient must be positive and different from 1");
    Preferences p;
    p.family_ = UtilityFamily::crra;
    p.param_ = rho;
    p.norm_ = norm;
    p.delta_ = delta;
    return p;
}

Preferences Preferences::cara(double alpha, double delta) {
    if (!(alpha > 0.0))
        throw DomainError("CARA coefficient must be positive");
    Preferences p;
    p.family_ = UtilityFamily::cara;
    p.param_ = alpha;
    p.delta_ = delta;
    return p;
}

Preferences Preferences::custom(CustomFunctions f, double delta) {
    if (!f.u || !f.du || !f.d2u || !f.psi || !f.dpsi || !f.d2psi || !f.d3psi)
        throw DomainError("custom preferences need u, u', u'', psi, psi', psi'', psi'''");
    Preferences p;
    p.family_ = UtilityFamily::custom;
    p.delta_ = delta;
    p.custom_ = std::make_shared<const CustomFunctions>(std::move(f));
    return p;
}

// CRRA: with g = (1-rho) x + a, psi = g^k, k = 1/(1-rho).
//   psi' = g^(k-1), psi'' = rho g^(k-2), psi''' = rho (2 rho - 1) g^(k-3).

double Preferences::u(double c) const {
    switch (family_) {
    case UtilityFamily::crra:
        if (c == 0.0 && param_ > 1.0)
            return -inf;
        return (std::pow(c, 1.0 - param_) - crra_offset(norm_)) / (1.0 - param_);
    case UtilityFamily::cara:
        return (1.0 - std::exp(-param_ * c)) / param_;
    case UtilityFamily::custom:
        return custom_->u(c);
    }
    return 0.0;
}

double Preferences::du(double c) const {
    switch (family_) {
    case UtilityFamily::crra:
        return std::pow(c, -param_);
    case UtilityFamily::cara:
        return std::exp(-param_ * c);
    case UtilityFamily::custom:
        return custom_->du(c);
    }
    return 0.0;
}

double Preferences::d2u(double c) const {
    switch (family_) {
    case UtilityFamily::crra:
        return -param_ * std::pow(c, -param_ - 1.0);
    case UtilityFamily::cara:
        return -param_ * std::exp(-param_ * c);
    case UtilityFamily::custom:
        return custom_->d2u(c);
    }
    return 0.0;
}

double Preferences::psi(double x) const {
    switch (family_) {
    case UtilityFamily::crra: {
        double g = (1.0 - param_) * x + crra_offset(norm_);
        if (g <= 0.0)
            return param_ < 1.0 ? 0.0 : inf;
        return std::pow(g, 1.0 / (1.0 - param_));
    }
    case UtilityFamily::cara:
        if (param_ * x >= 1.0)
            return inf;
        return -std::log1p(-param_ * x) / param_;
    case UtilityFamily::custom:
        return custom_->psi(x);
    }
    return 0.0;
}

double Preferences::dpsi(double x) const {
    switch (family_) {
    case UtilityFamily::crra: {
        double g = (1.0 - param_) * x + crra_offset(norm_);
        if (g <= 0.0)
            return param_ < 1.0 ? 0.0 : inf;
        return std::pow(g, param_ / (1.0 - param_));
    }
    case UtilityFamily::cara:
        return 1.0 / (1.0 - param_ * x);
    case UtilityFamily::custom:
        return custom_->dpsi(x);
    }
    return 0.0;
}

double Preferences::d2psi(double x) const {
    switch (family_) {
    case UtilityFamily::crra: {
        double g = (1.0 - param_) * x + crra_offset(norm_);
        double k = 1.0 / (1.0 - param_);
        return param_ * std::pow(g, k - 2.0);
    }
    case UtilityFamily::cara: {
        double d = 1.0 - param_ * x;
        return param_ / (d * d);
    }
    case UtilityFamily::custom:
        return custom_->d2psi(x);
    }
    return 0.0;
}

double Preferences::d3psi(double x) const {
    switch (family_) {
    case UtilityFamily::crra: {
        if (param_ == 0.5)
            return 0.0;
        double g = (1.0 - param_) * x + crra_offset(norm_);
        double k = 1.0 / (1.0 - param_);
        return param_ * (2.0 * param_ - 1.0) * std::pow(g, k - 3.0);
    }
    case UtilityFamily::cara: {
        double d = 1.0 - param_ * x;
        return 2.0 * param_ * param_ / (d * d * d);
    }
    case UtilityFamily::custom:
        return custom_->d3psi(x);
    }
    return 0.0;
}

double Preferences::dpsi_inverse(double s) const {
    const double lo = utility_floor();
    if (s <= dpsi(lo))
        return lo;
    switch (family_) {
    case UtilityFamily::crra: {
        double g = std::pow(s, (1.0 - param_) / param_);
        return (g - crra_offset(norm_)) / (1.0 - param_);
    }
    case UtilityFamily::cara:
        return (1.0 - 1.0 / s) / param_;
    case UtilityFamily::custom: {
        if (custom_->dpsi_inverse)
            return custom_->dpsi_inverse(s);
        double a = lo, b = lo + 1.0;
        const double sup = utility_sup();
        while (dpsi(b) < s) {
            double step = 2.0 * (b - a);
            a = b;
            b = std::isfinite(sup) ? b + 0.5 * (sup - b) : b + step;
        }
        for (int i = 0; i < 200 && b - a > 1e-15 * (1.0 + std::abs(b)); ++i) {
            double m = 0.5 * (a + b);
            (dpsi(m) < s ? a : b) = m;
        }
        return 0.5 * (a + b);
    }
    }
    return lo;
}

bool Preferences::u0_finite() const {
    switch (family_) {
    case UtilityFamily::crra:
        return param_ < 1.0;
    case UtilityFamily::cara:
        return true;
    case UtilityFamily::custom:
        return std::isfinite(custom_->u_at_zero);
    }
    return false;
}

double Preferences::u0() const { return u0_finite() ? u(0.0) : -inf; }

double Preferences::consumption_floor() const { return u0_finite() ? 0.0 : eps_c_; }

double Preferences::utility_sup() const {
    switch (family_) {
    case UtilityFamily::crra:
        if (param_ < 1.0)
            return inf;
        return -crra_offset(norm_) / (1.0 - param_);
    case UtilityFamily::cara:
        return 1.0 / param_;
    case UtilityFamily::custom:
        return custom_->u_sup;
    }
    return inf;
}

std::string Preferences::describe() const {
    std::ostringstream os;
    switch (family_) {
    case UtilityFamily::crra:
        os << "crra rho=" << param_ << (norm_ == CrraNormalization::power ? " power" : " standard");
        break;
    case UtilityFamily::cara:
        os << "cara alpha=" << param_;
        break;
    case UtilityFamily::custom:
        os << "custom";
        break;
    }
    return os.str();
}

SignalStructure SignalStructure::realization_independent(std::size_t n_income) {
    return {std::vector<int>(n_income, 0), 1};
}

SignalStructure SignalStructure::fully_contingent(std::size_t n_income) {
    SignalStructure s;
    s.n_signals = static_cast<int>(n_income);
    for (std::size_t k = 0; k < n_income; ++k)
        s.phi_map.push_back(static_cast<int>(k));
    return s;
}

SignalStructure SignalStructure::from_map(std::vector<int> map) {
    SignalStructure s;
    int mx = -1;
    for (int v : map) {
        if (v < 0)
            throw DomainError("signal labels must be nonnegative");
        mx = std::max(mx, v);
    }
    s.phi_map = std::move(map);
    s.n_signals = mx + 1;
    return s;
}

ModelPrimitives::ModelPrimitives(Preferences prefs, TypeProcess types, IncomeModel income,
                                 SignalStructure signals)
    : prefs_(std::move(prefs)), types_(types), income_(std::move(income)), signals_(std::move(signals)) {
    const std::size_t n = income_.size();
    if (income_.p_l.size() != n || income_.p_h.size() != n)
        throw DomainError("income probabilities must have one entry per income level");
    if (signals_.phi_map.size() != n)
        throw DomainError("signal map must have one entry per income level");
    ell_.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        ell_[k] = income_.p_l[k] / income_.p_h[k];
    for (int i = 0; i < 2; ++i)
        signal_prob_[i].assign(signals_.n_signals, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        signal_prob_[0][signals_.phi_map[k]] += income_.p_l[k];
        signal_prob_[1][signals_.phi_map[k]] += income_.p_h[k];
    }
    signal_ell_.resize(signals_.n_signals);
    for (int f = 0; f < signals_.n_signals; ++f)
        signal_ell_[f] = signal_prob_[0][f] / signal_prob_[1][f];
}

double ModelPrimitives::mean_income(Type t) const {
    double m = 0.0;
    for (std::size_t k = 0; k < n_income(); ++k)
        m += p(t, k) * income_.y[k];
    return m;
}

double ModelPrimitives::annuity(int t, int T) const {
    double a = 0.0, d = 1.0;
    for (int tau = t; tau <= T; ++tau) {
        a += d;
        d *= delta();
    }
    return a;
}

ModelPrimitives ModelPrimitives::with_prefs(Preferences p) const { return {std::move(p), types_, income_, signals_}; }
ModelPrimitives ModelPrimitives::with_types(TypeProcess t) const { return {prefs_, t, income_, signals_}; }
ModelPrimitives ModelPrimitives::with_signals(SignalStructure s) const { return {prefs_, types_, income_, std::move(s)}; }
ModelPrimitives ModelPrimitives::with_income(IncomeModel i) const { return {prefs_, types_, std::move(i), signals_}; }

ModelPrimitives default_fixture(SignalStructure signals) {
    IncomeModel inc{{1.0, 4.0}, {0.4, 0.6}, {0.1, 0.9}};
    TypeProcess tp;
    tp.pi_init = {0.5, 0.5};
    tp.transition = {{{0.7, 0.3}, {0.2, 0.8}}};
    return {Preferences::crra(0.5, 0.9, CrraNormalization::power), tp, inc, std::move(signals)};
}

std::vector<Violation> validate(const ModelPrimitives& model) {
    std::vector<Violation> out;
    auto add = [&](const char* inv, std::string d) { out.push_back({inv, std::move(d)}); };
    const auto& prefs = model.prefs();
    const auto& inc = model.income();
    const auto& tp = model.types();

    if (!(prefs.delta() > 0.0 && prefs.delta() < 1.0))
        add("discount factor", "delta must lie in (0,1)");

    if (inc.size() == 0)
        add("income support", "Y is empty");
    for (std::size_t k = 1; k < inc.size(); ++k)
        if (!(inc.y[k] > inc.y[k - 1]))
            add("income support", "Y must be strictly increasing");
    for (double y : inc.y)
        if (y < 0.0)
            add("income support", "income levels must be nonnegative");
    for (int i = 0; i < 2; ++i) {
        const auto& p = inc.p(type_from_index(i));
        double s = 0.0;
        for (double v : p) {
            s += v;
            if (!(v > 0.0))
                add("full support", std::string("p_") + type_char(type_from_index(i)) + " has a zero entry");
        }
        if (std::abs(s - 1.0) > 1e-12)
            add("probability normalization", std::string("p_") + type_char(type_from_index(i)) + " does not sum to 1");
    }
    if (!(model.mean_income(Type::low) < model.mean_income(Type::high)))
        add("income first-moment ordering", "E_l y must be strictly below E_h y");

    for (int i = 0; i < 2; ++i) {
        double s = tp.transition[i][0] + tp.transition[i][1];
        if (std::abs(s - 1.0) > 1e-12)
            add("row-stochastic transitions", "a transition row does not sum to 1");
        for (double v : tp.transition[i])
            if (v < 0.0 || v > 1.0)
                add("row-stochastic transitions", "transition entry outside [0,1]");
    }
    if (!(tp.pi(Type::high, Type::high) > tp.pi(Type::low, Type::high)) ||
        !(tp.pi(Type::low, Type::low) > tp.pi(Type::high, Type::low)))
        add("persistence", "need pi_hh > pi_lh and pi_ll > pi_hl");
    if (std::abs(tp.pi_init[0] + tp.pi_init[1] - 1.0) > 1e-12 || tp.pi_init[0] < 0.0 || tp.pi_init[1] < 0.0)
        add("initial type weights", "pi_init must be a probability pair");

    std::vector<int> hits(model.n_signals(), 0);
    for (int f : model.signals().phi_map)
        if (f >= 0 && f < model.n_signals())
            ++hits[f];
    for (int f = 0; f < model.n_signals(); ++f)
        if (hits[f] == 0)
            add("signal surjectivity", "signal " + std::to_string(f) + " has empty preimage");

    // sampled concavity and inverse round trip
    const double c0 = std::max(prefs.consumption_floor(), 1e-3);
    const double ymax = inc.size() ? inc.y.back() : 1.0;
    for (int i = 0; i <= 20; ++i) {
        double c = c0 + (2.0 * ymax + 1.0 - c0) * i / 20.0;
        if (!(prefs.du(c) > 0.0) || !(prefs.d2u(c) < 0.0)) {
            add("strict concavity", "u' > 0 and u'' < 0 fail at c=" + std::to_string(c));
            break;
        }
        double back = prefs.psi(prefs.u(c));
        if (std::abs(back - c) > 1e-10 * std::max(1.0, c)) {
            add("inverse utility", "psi(u(c)) != c at c=" + std::to_string(c));
            break;
        }
    }
    return out;
}

void require_valid(const ModelPrimitives& model) {
    auto v = validate(model);
    if (v.empty())
        return;
    std::string msg = "model premise violated:";
    for (const auto& x : v)
        msg += " [" + x.invariant + ": " + x.detail + "]";
    throw PremiseError(msg);
}

double flow_utility(const ModelPrimitives& model, const FlowContract& z, Type theta) {
    if (z.size() != model.n_income())
        throw DomainError("flow contract size mismatch");
    double v = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (z[k] < 0.0)
            throw DomainError("negative consumption in flow contract");
        v += model.p(theta, k) * model.prefs().u(z[k]);
    }
    return v;
}

double flow_profit(const ModelPrimitives& model, const FlowContract& z, Type theta) {
    if (z.size() != model.n_income())
        throw DomainError("flow contract size mismatch");
    double v = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (z[k] < 0.0)
            throw DomainError("negative consumption in flow contract");
        v += model.p(theta, k) * (model.income().y[k] - z[k]);
    }
    return v;
}

double expected_utility(const ModelPrimitives& model, const std::vector<double>& x, Type theta) {
    double v = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
        v += model.p(theta, k) * x[k];
    return v;
}

double likelihood_ratio(const ModelPrimitives& model, double income) {
    const auto& y = model.income().y;
    for (std::size_t k = 0; k < y.size(); ++k)
        if (y[k] == income)
            return model.ell(k);
    throw DomainError("unknown income level");
}

double signal_likelihood(const ModelPrimitives& model, int phi) {
    if (phi < 0 || phi >= model.n_signals())
        throw DomainError("unknown signal label");
    return model.signal_ell(phi);
}

double full_insurance_consumption(const ModelPrimitives& model, double V, int t, int T) {
    const double a = model.annuity(t, T);
    const double x = V / a;
    const auto& prefs = model.prefs();
    if (prefs.u0_finite() && x < prefs.u0() - 1e-14)
        throw InfeasibleError("utility below u(0) times annuity");
    if (x >= prefs.utility_sup())
        throw InfeasibleError("utility above sup u times annuity");
    if (prefs.u0_finite() && x <= prefs.u0())
        return 0.0;
    return prefs.psi(x);
}

namespace {

// Discounted sum of a per-type quantity along the type chain started at theta1.
double chain_sum(const ModelPrimitives& model, Type theta1, int T, const std::array<double, 2>& f) {
    std::array<double, 2> q{0.0, 0.0};
    q[type_index(theta1)] = 1.0;
    const auto& tr = model.types().transition;
    double total = 0.0, d = 1.0;
    for (int t = 1; t <= T; ++t) {
        total += d * (q[0] * f[0] + q[1] * f[1]);
        std::array<double, 2> n{q[0] * tr[0][0] + q[1] * tr[1][0], q[0] * tr[0][1] + q[1] * tr[1][1]};
        q = n;
        d *= model.delta();
    }
    return total;
}

} // namespace

double outside_option(const ModelPrimitives& model, Type theta1, int T) {
    std::array<double, 2> eu{0.0, 0.0};
    for (int i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < model.n_income(); ++k)
            eu[i] += model.p(type_from_index(i), k) * model.prefs().u(model.income().y[k]);
    return chain_sum(model, theta1, T, eu);
}

double discounted_income(const ModelPrimitives& model, Type theta1, int T) {
    return chain_sum(model, theta1, T, {model.mean_income(Type::low), model.mean_income(Type::high)});
}

FullInfo full_info_utility(const ModelPrimitives& model, Type theta1, int T) {
    const double a = model.annuity(1, T);
    const double c = discounted_income(model, theta1, T) / a;
    return {model.prefs().u(c) * a, c};
}

std::string to_string(Psi3Sign s) {
    switch (s) {
    case Psi3Sign::positive:
        return "PositivePsi3";
    case Psi3Sign::zero:
        return "ZeroPsi3";
    case Psi3Sign::negative:
        return "NegativePsi3";
    case Psi3Sign::mixed:
        return "Mixed";
    }
    return "Mixed";
}

Psi3Sign supermodularity_certificate(const Preferences& prefs, double x_lo, double x_hi, int n) {
    int pos = 0, neg = 0;
    for (int i = 0; i < n; ++i) {
        double x = n == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (n - 1);
        double v = prefs.d3psi(x);
        double scale = 1e-12 * (1.0 + std::abs(prefs.d2psi(x)));
        if (v > scale)
            ++pos;
        else if (v < -scale)
            ++neg;
    }
    if (pos == n)
        return Psi3Sign::positive;
    if (neg == n)
        return Psi3Sign::negative;
    if (pos == 0 && neg == 0)
        return Psi3Sign::zero;
    return Psi3Sign::mixed;
}

} // namespace dyncontract
