#include "dyncontract/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dyncontract/format.hpp"
#include "dyncontract/lp.hpp"

namespace dyncontract {

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();
constexpr double inf = std::numeric_limits<double>::infinity();

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

std::size_t all_high(int t) { return ipow(2, t) - 1; }

// Position (1-based) of the first l in a report history of length t, 0 when none.
int first_low(std::size_t r, int t) {
    for (int i = 1; i <= t; ++i)
        if (((r >> (t - i)) & 1u) == 0)
            return i;
    return 0;
}

// The relaxed program in utility space: variables, cost weights and constraint rows.
struct Program {
    const ModelPrimitives& model;
    int T;
    std::size_t nY;
    int nf;
    bool reduced;
    std::vector<std::size_t> x_start; // by t
    std::vector<std::size_t> n_start; // by t, reduced layout only
    std::size_t nvar = 0;
    std::vector<double> w;
    std::vector<double> annuity; // by t
    std::vector<Trip> trips;
    std::vector<double> b;
    std::vector<std::pair<int, std::size_t>> osic_rows; // row 2+i -> (t, s)
    double delta;

    Program(const ModelPrimitives& m, const RelaxedProblemSpec& spec)
        : model(m), T(spec.T), nY(m.n_income()), nf(m.n_signals()), reduced(spec.exploit_low_insurance),
          delta(m.delta()) {
        x_start.assign(T + 2, 0);
        n_start.assign(T + 2, 0);
        annuity.assign(T + 2, 0.0);
        for (int t = 1; t <= T; ++t)
            annuity[t] = m.annuity(t, T);
        std::size_t pos = 0;
        for (int t = 1; t <= T; ++t) {
            x_start[t] = pos;
            pos += ipow(nf, t - 1) * nY * (reduced ? 1 : ipow(2, t));
        }
        if (reduced)
            for (int t = 1; t <= T; ++t) {
                n_start[t] = pos;
                pos += ipow(nf, t - 1);
            }
        nvar = pos;
    }

    static std::size_t count(const ModelPrimitives& m, int T, bool reduced) {
        std::size_t n = 0;
        for (int t = 1; t <= T; ++t) {
            const std::size_t ns = ipow(m.n_signals(), t - 1);
            n += reduced ? ns * (m.n_income() + 1) : ns * m.n_income() * ipow(2, t);
        }
        return n;
    }

    bool collapsed(int t, std::size_t r) const { return reduced && r != all_high(t); }

    std::size_t n_var(int t, std::size_t s, std::size_t r) const {
        const int tau = first_low(r, t);
        return n_start[tau] + s / ipow(nf, t - tau);
    }

    std::size_t x_var(int t, std::size_t s, std::size_t r, std::size_t k) const {
        if (reduced)
            return x_start[t] + s * nY + k;
        return x_start[t] + (s * ipow(2, t) + r) * nY + k;
    }

    // coef times the truthful value of type theta reporting at (t, s) after r_prev.
    void add_value(int t, std::size_t s, std::size_t rp, Type theta, double coef, int row) {
        if (coef == 0.0)
            return;
        const std::size_t r = rp * 2 + type_index(theta);
        if (collapsed(t, r)) {
            trips.emplace_back(row, n_var(t, s, r), coef * annuity[t]);
            return;
        }
        for (std::size_t k = 0; k < nY; ++k)
            trips.emplace_back(row, x_var(t, s, r, k), coef * model.p(theta, k));
        if (t < T)
            for (int f = 0; f < nf; ++f)
                for (Type j : {Type::low, Type::high})
                    add_value(t + 1, s * nf + f, r, j,
                              coef * delta * model.signal_prob(theta, f) * model.types().pi(theta, j), row);
    }

    void add_cost(int t, std::size_t s, std::size_t rp, Type theta, double prob) {
        if (prob == 0.0)
            return;
        const std::size_t r = rp * 2 + type_index(theta);
        if (collapsed(t, r)) {
            w[n_var(t, s, r)] += prob * annuity[t];
            return;
        }
        for (std::size_t k = 0; k < nY; ++k)
            w[x_var(t, s, r, k)] += prob * model.p(theta, k);
        if (t < T)
            for (int f = 0; f < nf; ++f)
                for (Type j : {Type::low, Type::high})
                    add_cost(t + 1, s * nf + f, r, j,
                             prob * delta * model.signal_prob(theta, f) * model.types().pi(theta, j));
    }

    void build(double V_l, double V_h) {
        w.assign(nvar, 0.0);
        for (Type th : {Type::low, Type::high})
            add_cost(1, 0, 0, th, model.types().init(th));
        add_value(1, 0, 0, Type::low, 1.0, 0);
        add_value(1, 0, 0, Type::high, 1.0, 1);
        b = {V_l, V_h};
        int row = 2;
        for (int t = 1; t <= T; ++t) {
            const std::size_t rp = ipow(2, t - 1) - 1;
            for (std::size_t s = 0; s < ipow(nf, t - 1); ++s, ++row) {
                osic_rows.emplace_back(t, s);
                add_value(t, s, rp, Type::low, 1.0, row);
                // minus the one-shot deviation: report h now, truthful afterwards
                const std::size_t r = rp * 2 + 1;
                for (std::size_t k = 0; k < nY; ++k)
                    trips.emplace_back(row, x_var(t, s, r, k), -model.p(Type::low, k));
                if (t < T)
                    for (int f = 0; f < nf; ++f)
                        for (Type j : {Type::low, Type::high})
                            add_value(t + 1, s * nf + f, r, j,
                                      -delta * model.signal_prob(Type::low, f) * model.types().pi(Type::low, j),
                                      row);
                b.push_back(0.0);
            }
        }
    }

    int rows() const { return static_cast<int>(b.size()); }
};

void require_premises(const ModelPrimitives& model, const RelaxedProblemSpec& spec, bool validate = true) {
    if (validate)
        require_valid(model);
    if (spec.T < 1)
        throw DomainError("horizon must be at least 1");
    if (!std::isfinite(spec.V_l) || !std::isfinite(spec.V_h))
        throw DomainError("target utilities must be finite");
    const auto& tp = model.types();
    if (!(tp.pi_init[0] > 0.0 && tp.pi_init[1] > 0.0))
        throw PremiseError("initial type weights must lie in (0,1)");
    if (spec.T > 1 && !(tp.pi(Type::high, Type::low) > 0.0 && tp.pi(Type::high, Type::high) > 0.0))
        throw PremiseError("relaxed solver needs 0 < pi_hl < 1");
    if (!spec.exploit_low_insurance && spec.T > 1)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                if (!(tp.transition[i][j] > 0.0))
                    throw PremiseError("the unreduced formulation needs all transition probabilities in (0,1)");
}

SpMat assemble(const Program& P) {
    SpMat A(P.rows(), static_cast<Eigen::Index>(P.nvar));
    A.setFromTriplets(P.trips.begin(), P.trips.end());
    A.makeCompressed();
    return A;
}

double feasibility(const Program& P, const SpMat& A, const Preferences& prefs) {
    const double lb = prefs.utility_floor();
    const double ub = prefs.utility_sup();
    const bool bounded = std::isfinite(ub);
    const Eigen::Index n = static_cast<Eigen::Index>(P.nvar), m = P.rows(), mo = m - 2;
    const Eigen::Index cols = n + mo + (bounded ? n : 0);
    const Eigen::Index rows = m + (bounded ? n : 0);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, cols);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(rows);
    Eigen::MatrixXd Ad = Eigen::MatrixXd(A);
    M.topLeftCorner(m, n) = Ad;
    const Eigen::VectorXd Alb = Ad * Eigen::VectorXd::Constant(n, lb);
    for (Eigen::Index i = 0; i < m; ++i)
        r(i) = P.b[i] - Alb(i);
    for (Eigen::Index i = 0; i < mo; ++i)
        M(2 + i, n + i) = -1.0;
    if (bounded)
        for (Eigen::Index k = 0; k < n; ++k) {
            M(m + k, k) = 1.0;
            M(m + k, n + mo + k) = 1.0;
            r(m + k) = ub - lb;
        }
    return simplex_phase_one(M, r);
}

struct DualState {
    Eigen::VectorXd y, s, x, g;
    double q = 0.0;
};

void evaluate(const SpMat& A, const std::vector<double>& w, const Eigen::VectorXd& b, const Preferences& prefs,
              DualState& st) {
    st.s = A.transpose() * st.y;
    const Eigen::Index n = st.s.size();
    st.x.resize(n);
    double q = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double xk = prefs.dpsi_inverse(st.s(k) / w[k]);
        st.x(k) = xk;
        q += w[k] * prefs.psi(xk) - st.s(k) * xk;
    }
    st.g = b - A * st.x;
    st.q = q + st.y.dot(b);
}

// Projected gradient for the ascent: multipliers of the OSIC rows (index >= 2) are nonnegative.
double pg_norm(const DualState& st) {
    double m = 0.0;
    for (Eigen::Index j = 0; j < st.g.size(); ++j) {
        const bool blocked = j >= 2 && st.y(j) <= 0.0 && st.g(j) <= 0.0;
        if (!blocked)
            m = std::max(m, std::abs(st.g(j)));
    }
    return m;
}

void project(Eigen::VectorXd& y) {
    for (Eigen::Index j = 2; j < y.size(); ++j)
        y(j) = std::max(y(j), 0.0);
}

struct DualResult {
    DualState st;
    int iterations = 0;
    double kkt = 0.0;
};

DualResult dual_newton(const Program& P, const SpMat& A, const Preferences& prefs, const RelaxedProblemSpec& spec,
                       const SolverConfig& cfg) {
    const Eigen::Index m = P.rows();
    const Eigen::Index n = static_cast<Eigen::Index>(P.nvar);
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(P.b.data(), m);
    const double lb = prefs.utility_floor();
    const double A1 = P.annuity[1];

    DualState st;
    st.y = Eigen::VectorXd::Zero(m);
    for (Type th : {Type::low, Type::high}) {
        const double V = th == Type::low ? spec.V_l : spec.V_h;
        const double u = std::max(V / A1, lb);
        st.y(type_index(th)) = cfg.start_scale * P.model.types().init(th) * prefs.dpsi(u);
    }
    evaluate(A, P.w, b, prefs, st);

    const double stop = cfg.tol * (1.0 + b.cwiseAbs().maxCoeff());
    DualResult res;
    double pg = pg_norm(st);
    int it = 0;
    for (; it < cfg.max_iter && pg > stop; ++it) {
        // epsilon-active bound constraints
        const double eps = std::min(1e-8, pg);
        std::vector<char> active(m, 0);
        for (Eigen::Index j = 2; j < m; ++j)
            active[j] = st.y(j) <= eps && st.g(j) <= 0.0;

        Eigen::VectorXd D(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double h = prefs.d2psi(st.x(k));
            D(k) = st.x(k) > lb && h > 0.0 && std::isfinite(h) ? 1.0 / (P.w[k] * h) : 0.0;
        }
        SpMat H = A * D.asDiagonal() * A.transpose();
        double hmax = 0.0;
        for (Eigen::Index j = 0; j < m; ++j)
            hmax = std::max(hmax, H.coeff(j, j));
        double tau = 1e-12 * std::max(1.0, hmax);

        Eigen::VectorXd d;
        for (int attempt = 0; attempt < 8; ++attempt, tau *= 100.0) {
            std::vector<Trip> ht;
            for (Eigen::Index c = 0; c < H.outerSize(); ++c)
                for (SpMat::InnerIterator itr(H, c); itr; ++itr)
                    if (!active[itr.row()] && !active[itr.col()])
                        ht.emplace_back(itr.row(), itr.col(), itr.value());
            for (Eigen::Index j = 0; j < m; ++j)
                ht.emplace_back(j, j, active[j] ? 1.0 : tau);
            SpMat Hr(m, m);
            Hr.setFromTriplets(ht.begin(), ht.end());
            Eigen::VectorXd rhs = st.g;
            for (Eigen::Index j = 0; j < m; ++j)
                if (active[j])
                    rhs(j) = 0.0;
            Eigen::SimplicialLDLT<SpMat> ldlt(Hr);
            if (ldlt.info() != Eigen::Success)
                continue;
            d = ldlt.solve(rhs);
            if (ldlt.info() == Eigen::Success && d.allFinite())
                break;
            d.resize(0);
        }
        if (d.size() == 0)
            d = st.g; // gradient step

        double alpha = 1.0;
        DualState trial;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
            trial.y = st.y + alpha * d;
            project(trial.y);
            evaluate(A, P.w, b, prefs, trial);
            const double gain = st.g.dot(trial.y - st.y);
            if (trial.q >= st.q + 1e-4 * gain) {
                accepted = true;
                break;
            }
            // rounding plateau near the optimum
            if (trial.q >= st.q - 1e-13 * (1.0 + std::abs(st.q)) && pg_norm(trial) < pg) {
                accepted = true;
                break;
            }
        }
        if (!accepted)
            break;
        st = std::move(trial);
        pg = pg_norm(st);
        if (st.y.cwiseAbs().maxCoeff() > 1e14)
            throw InfeasibleError("dual multipliers diverge: target utilities are not attainable");
    }
    res.iterations = it;
    res.kkt = pg;
    if (!(pg <= std::max(stop, 1e-8 * (1.0 + b.cwiseAbs().maxCoeff()))))
        throw ConvergenceError("relaxed solver stopped at projected gradient " + fmt17(pg) + " after " +
                               std::to_string(it) + " iterations");
    res.st = std::move(st);
    return res;
}

double chi_nu_of_insured(const ModelPrimitives& model, double x) { return model.prefs().dpsi(x); }

} // namespace

const NodeDynamics& RelaxedSolution::node(int t, std::size_t s) const {
    for (const auto& n : nodes)
        if (n.t == t && n.s == s)
            return n;
    throw DomainError("no such all-h node");
}

double feasibility_measure(const ModelPrimitives& model, const RelaxedProblemSpec& spec) {
    require_premises(model, spec);
    Program P(model, spec);
    P.build(spec.V_l, spec.V_h);
    return feasibility(P, assemble(P), model.prefs());
}

RelaxedSolution solve_relaxed(const ModelPrimitives& model, const RelaxedProblemSpec& spec,
                              const SolverConfig& config) {
    require_premises(model, spec, config.check_premises);
    const std::size_t nv = Program::count(model, spec.T, spec.exploit_low_insurance);
    if (nv > config.max_variables)
        throw DomainError("instance has " + std::to_string(nv) + " decision variables, above the limit of " +
                          std::to_string(config.max_variables));
    Program P(model, spec);
    P.build(spec.V_l, spec.V_h);
    SpMat A = assemble(P);
    const auto& prefs = model.prefs();

    if (config.phase_one && P.nvar <= 3000) {
        const double meas = feasibility(P, A, prefs);
        const double scale = 1.0 + std::abs(spec.V_l) + std::abs(spec.V_h);
        if (meas > 1e-9 * scale)
            throw InfeasibleError("target (" + fmt17(spec.V_l) + ", " + fmt17(spec.V_h) +
                                  ") is not attainable: phase-one infeasibility " + fmt17(meas));
    }

    DualResult dr = dual_newton(P, A, prefs, spec, config);
    const auto& x = dr.st.x;
    const auto& sv = dr.st.s;

    RelaxedSolution sol;
    sol.spec = spec;
    sol.iterations = dr.iterations;
    sol.kkt_residual = dr.kkt;
    sol.n_variables = P.nvar;
    sol.multipliers.assign(dr.st.y.data(), dr.st.y.data() + dr.st.y.size());

    const int T = spec.T, nf = model.n_signals();
    const std::size_t nY = model.n_income();
    Mechanism mech(T, nY, nf);
    for (int t = 1; t <= T; ++t)
        for (std::size_t s = 0; s < mech.n_signal_histories(t); ++s)
            for (std::size_t r = 0; r < mech.n_report_histories(t); ++r) {
                double* z = mech.flow(t, s, r);
                if (P.collapsed(t, r)) {
                    const double c = prefs.psi(x(P.n_var(t, s, r)));
                    std::fill(z, z + nY, c);
                } else {
                    for (std::size_t k = 0; k < nY; ++k)
                        z[k] = prefs.psi(x(P.x_var(t, s, r, k)));
                }
            }
    sol.mechanism = std::move(mech);
    sol.profit = firm_profit(model, sol.mechanism);
    sol.value = sol.profit.total;

    ValueTable vt(model, sol.mechanism);
    sol.pk_residual = std::max(std::abs(vt.V(1, 0, 0, Type::low) - spec.V_l), std::abs(vt.V(1, 0, 0, Type::high) - spec.V_h));
    sol.osic = check_OSIC(model, sol.mechanism);

    const double cmin = 10.0 * prefs.eps_c();
    for (std::size_t i = 0; i < P.osic_rows.size(); ++i) {
        const auto [t, s] = P.osic_rows[i];
        const std::size_t r = all_high(t);
        NodeDynamics nd{};
        nd.t = t;
        nd.s = s;
        double eh = 0.0, el = 0.0;
        bool interior = true;
        for (std::size_t k = 0; k < nY; ++k) {
            const double xk = x(P.x_var(t, s, r, k));
            eh += model.p(Type::high, k) * xk;
            el += model.p(Type::low, k) * xk;
            interior = interior && prefs.psi(xk) >= cmin;
        }
        nd.nu = eh;
        nd.delta = eh - el;
        const std::size_t rl = r - 1; // h^{t-1} l
        if (P.reduced) {
            nd.nu_l = x(P.n_var(t, s, rl));
        } else {
            double v = 0.0;
            for (std::size_t k = 0; k < nY; ++k)
                v += model.p(Type::low, k) * x(P.x_var(t, s, rl, k));
            nd.nu_l = v;
        }
        // psi'(x_k) = s_k / w_k = mu - lambda ell(k); the node's own OSIC row carries -p_l(k)
        const std::size_t k0 = P.x_var(t, s, r, 0);
        const double y_osic = dr.st.y(2 + static_cast<Eigen::Index>(i));
        nd.mult_lambda = y_osic * model.p(Type::low, 0) / (P.w[k0] * model.ell(0));
        nd.mult_mu = sv(k0) / P.w[k0] + nd.mult_lambda * model.ell(0);
        nd.interior = interior && membership_A(model, {nd.nu, nd.delta}, true);
        sol.interior = sol.interior && nd.interior;
        sol.nodes.push_back(nd);
    }
    // consumption after a first l also counts for interiority
    for (int t = 1; t <= T && sol.interior; ++t)
        for (std::size_t s = 0; s < sol.mechanism.n_signal_histories(t); ++s)
            for (std::size_t r = 0; r < sol.mechanism.n_report_histories(t); ++r)
                for (std::size_t k = 0; k < nY; ++k)
                    if (sol.mechanism.flow(t, s, r)[k] < cmin)
                        sol.interior = false;
    return sol;
}

namespace {

struct NodeGrad {
    double chi_nu, chi_delta;
};

NodeGrad node_grad(const ModelPrimitives& model, const NodeDynamics& n) {
    auto g = chi_gradient(model, {n.nu, n.delta});
    return {g[0], g[1]};
}

struct Residuals {
    double nu, delta, inverse_euler;
    bool evaluated;
};

Residuals intertemporal_at(const ModelPrimitives& model, const RelaxedSolution& sol, const NodeDynamics& n) {
    const int T = sol.spec.T, nf = model.n_signals();
    if (n.t >= T)
        return {nan_v, nan_v, nan_v, false};
    bool interior = n.interior;
    for (int f = 0; f < nf; ++f)
        interior = interior && sol.node(n.t + 1, n.s * nf + f).interior;
    if (!interior)
        return {nan_v, nan_v, nan_v, false};
    const auto& tp = model.types();
    const double phh = tp.pi(Type::high, Type::high), phl = tp.pi(Type::high, Type::low);
    const double plh = tp.pi(Type::low, Type::high);
    const NodeGrad g = node_grad(model, n);
    double rhs_nu = 0.0, rhs_d = 0.0;
    for (int f = 0; f < nf; ++f) {
        const auto& c = sol.node(n.t + 1, n.s * nf + f);
        const NodeGrad gc = node_grad(model, c);
        const double ins = chi_nu_of_insured(model, c.nu_l);
        const double pf = model.signal_prob(Type::high, f);
        rhs_nu += pf * (phh * gc.chi_nu + phl * ins);
        rhs_d += pf * phh / (phh - plh) * (gc.chi_delta + phl * (gc.chi_nu - ins));
    }
    // inverse Euler on consumption: E_h[1/u'(z_t)] against its expected successor
    const auto& prefs = model.prefs();
    const auto& m = sol.mechanism;
    const std::size_t nY = model.n_income();
    auto inv_mu = [&](int t, std::size_t s, std::size_t r, Type th) {
        double v = 0.0;
        const double* z = m.flow(t, s, r);
        for (std::size_t k = 0; k < nY; ++k)
            v += model.p(th, k) * (1.0 / prefs.du(z[k]));
        return v;
    };
    const std::size_t r = all_high(n.t);
    double ie = 0.0;
    for (int f = 0; f < nf; ++f) {
        const std::size_t s1 = n.s * nf + f;
        ie += model.signal_prob(Type::high, f) *
              (phh * inv_mu(n.t + 1, s1, r * 2 + 1, Type::high) + phl * inv_mu(n.t + 1, s1, r * 2, Type::low));
    }
    return {g.chi_nu - rhs_nu, g.chi_delta - rhs_d, inv_mu(n.t, n.s, r, Type::high) - ie, true};
}

double x_range_lo(const RelaxedSolution& sol) {
    double lo = inf;
    for (const auto& n : sol.nodes)
        lo = std::min({lo, n.nu - n.delta, n.nu_l});
    return lo;
}

} // namespace

std::vector<DynamicsRow> extract_dynamics(const ModelPrimitives& model, const RelaxedSolution& sol) {
    std::vector<DynamicsRow> out;
    for (const auto& n : sol.nodes) {
        const NodeGrad g = node_grad(model, n);
        const Residuals r = intertemporal_at(model, sol, n);
        out.push_back({n.t, signal_history_label(n.s, n.t, model.n_signals()), n.nu, n.delta, n.nu_l, g.chi_nu,
                       g.chi_delta, r.nu, r.delta});
    }
    return out;
}

AuxiliaryMatchReport verify_auxiliary_match(const ModelPrimitives& model, const RelaxedSolution& sol) {
    AuxiliaryMatchReport rep;
    for (const auto& n : sol.nodes) {
        const AuxSolution a = solve_aux(model, {n.nu, n.delta});
        const double* z = sol.mechanism.flow(n.t, n.s, all_high(n.t));
        for (std::size_t k = 0; k < model.n_income(); ++k)
            rep.max_deviation = std::max(rep.max_deviation, std::abs(a.zeta[k] - z[k]));
        ++rep.checked;
    }
    return rep;
}

IntertemporalReport verify_intertemporal(const ModelPrimitives& model, const RelaxedSolution& sol) {
    IntertemporalReport rep;
    for (const auto& n : sol.nodes) {
        if (n.t >= sol.spec.T)
            continue;
        const Residuals r = intertemporal_at(model, sol, n);
        if (!r.evaluated) {
            ++rep.skipped;
            continue;
        }
        rep.rows.push_back({n.t, n.s, r.nu, r.delta, r.inverse_euler});
        rep.max_residual = std::max({rep.max_residual, std::abs(r.nu), std::abs(r.delta)});
        rep.max_inverse_euler = std::max(rep.max_inverse_euler, std::abs(r.inverse_euler));
    }
    return rep;
}

MonotonicityReport verify_monotonicity_RI(const ModelPrimitives& model, const RelaxedSolution& sol) {
    MonotonicityReport rep;
    if (model.n_signals() != 1)
        throw DomainError("monotonicity check needs realization-independent signals");
    double hi = -inf;
    for (const auto& n : sol.nodes)
        hi = std::max(hi, n.nu);
    rep.certificate = supermodularity_certificate(model.prefs(), std::max(x_range_lo(sol), model.prefs().utility_floor()),
                                                  hi, 64);
    if (!(sol.spec.V_h > sol.spec.V_l)) {
        rep.applicable = false;
        rep.note = "vacuous: V_h <= V_l gives no distortion";
        return rep;
    }
    if (rep.certificate == Psi3Sign::negative || rep.certificate == Psi3Sign::mixed) {
        rep.applicable = false;
        rep.note = "skipped: certificate " + to_string(rep.certificate);
        return rep;
    }
    if (!sol.interior) {
        rep.applicable = false;
        rep.note = "skipped: solution not interior";
        return rep;
    }
    rep.nu_margin = inf;
    rep.delta_margin = inf;
    for (int t = 1; t < sol.spec.T; ++t) {
        const auto &a = sol.node(t, 0), &b = sol.node(t + 1, 0);
        rep.nu_margin = std::min(rep.nu_margin, b.nu - a.nu);
        rep.delta_margin = std::min(rep.delta_margin, a.delta - b.delta);
    }
    rep.delta_margin = std::min(rep.delta_margin, sol.node(sol.spec.T, 0).delta);
    if (sol.spec.T == 1)
        rep.nu_margin = 0.0;
    rep.holds = (sol.spec.T == 1 || rep.nu_margin > 0.0) && rep.delta_margin > 0.0;
    return rep;
}

QuadraticReport verify_quadratic(const ModelPrimitives& model, const RelaxedSolution& sol) {
    const auto& prefs = model.prefs();
    if (prefs.family() != UtilityFamily::crra || std::abs(prefs.rho() - 0.5) > 1e-15)
        throw DomainError("quadratic checks need CRRA with rho = 1/2");
    QuadraticReport rep;
    rep.min_supermartingale_gap = inf;
    rep.min_upper_gap = inf;
    rep.min_lower_gap = inf;
    const auto& tp = model.types();
    const double phh = tp.pi(Type::high, Type::high), phl = tp.pi(Type::high, Type::low);
    const int nf = model.n_signals();
    for (const auto& n : sol.nodes) {
        if (n.t >= sol.spec.T)
            continue;
        double mart = 0.0, dnext = 0.0, nunext = 0.0, nulnext = 0.0;
        for (int f = 0; f < nf; ++f) {
            const auto& c = sol.node(n.t + 1, n.s * nf + f);
            const double pf = model.signal_prob(Type::high, f);
            mart += pf * (phh * c.nu + phl * c.nu_l);
            dnext += pf * c.delta;
            nunext += pf * c.nu;
            nulnext += pf * c.nu_l;
        }
        rep.martingale_residual = std::max(rep.martingale_residual, std::abs(n.nu - mart));
        rep.min_supermartingale_gap = std::min(rep.min_supermartingale_gap, n.delta - dnext);
        rep.min_upper_gap = std::min(rep.min_upper_gap, nunext - n.nu);
        rep.min_lower_gap = std::min(rep.min_lower_gap, n.nu - nulnext);
    }
    if (sol.spec.T == 1)
        rep.min_supermartingale_gap = rep.min_upper_gap = rep.min_lower_gap = 0.0;
    rep.holds = rep.martingale_residual <= 1e-7 && rep.min_supermartingale_gap > 0.0 && rep.min_upper_gap > 0.0 &&
                rep.min_lower_gap > 0.0;
    return rep;
}

T2Report verify_T2_general(const ModelPrimitives& model, const RelaxedSolution& sol) {
    if (sol.spec.T != 2)
        throw DomainError("this check needs T = 2");
    T2Report rep;
    if (!(sol.spec.V_h > sol.spec.V_l) || !sol.interior) {
        rep.applicable = false;
        return rep;
    }
    const int nf = model.n_signals();
    const auto& n1 = sol.node(1, 0);
    const NodeGrad g1 = node_grad(model, n1);
    double dnext = 0.0, nunext = 0.0, nulnext = 0.0;
    for (int f = 0; f < nf; ++f) {
        const auto& c = sol.node(2, f);
        const NodeGrad g = node_grad(model, c);
        const double pf = model.signal_prob(Type::high, f);
        dnext += pf * g.chi_delta;
        nunext += pf * g.chi_nu;
        nulnext += pf * chi_nu_of_insured(model, c.nu_l);
    }
    rep.delta_margin = g1.chi_delta - dnext;
    rep.upper_margin = nunext - g1.chi_nu;
    rep.lower_margin = g1.chi_nu - nulnext;
    rep.holds = rep.delta_margin > 0.0 && rep.upper_margin > 0.0 && rep.lower_margin > 0.0;
    return rep;
}

StructureReport verify_structure(const ModelPrimitives& model, const RelaxedSolution& sol) {
    StructureReport rep;
    const auto& m = sol.mechanism;
    const auto& prefs = model.prefs();
    rep.min_osic = inf;
    for (const auto& o : sol.osic) {
        rep.max_abs_osic = std::max(rep.max_abs_osic, std::abs(o.slack));
        rep.min_osic = std::min(rep.min_osic, o.slack);
    }
    rep.post_low_variance = post_low_consumption_variance(model, m);
    const double cmin = 10.0 * prefs.eps_c();
    for (const auto& n : sol.nodes) {
        const double* z = m.flow(n.t, n.s, all_high(n.t));
        for (std::size_t k = 0; k < model.n_income(); ++k)
            if (z[k] >= cmin)
                rep.max_foc_residual =
                    std::max(rep.max_foc_residual, std::abs(n.mult_mu - n.mult_lambda * model.ell(k) - 1.0 / prefs.du(z[k])));
    }
    ValueTable vt(model, m);
    rep.min_type_gap = inf;
    rep.min_csm_margin = inf;
    rep.min_ctm_margin = inf;
    const int T = m.horizon();
    for (int t = 1; t <= T; ++t) {
        const std::size_t hp = ipow(2, t - 1) - 1;
        for (std::size_t s = 0; s < m.n_signal_histories(t); ++s) {
            rep.min_type_gap = std::min(rep.min_type_gap, vt.V(t, s, hp, Type::high) - vt.V(t, s, hp, Type::low));
            if (t < T) {
                for (std::size_t rp = 0; rp <= hp; ++rp) {
                    auto c = check_CSM(model, vt, t, s, rp);
                    rep.csm = rep.csm && c.holds;
                    if (std::isfinite(c.margin))
                        rep.min_csm_margin = std::min(rep.min_csm_margin, c.margin);
                }
                auto c = check_CTM(model, vt, t, s, hp);
                rep.ctm = rep.ctm && c.holds;
                rep.min_ctm_margin = std::min(rep.min_ctm_margin, c.margin);
            }
        }
    }
    return rep;
}

double full_info_profit(const ModelPrimitives& model, Type theta1, int T, double V) {
    const double A = model.annuity(1, T);
    return discounted_income(model, theta1, T) - A * model.prefs().psi(V / A);
}

ProfitSplit profit_at(const ModelPrimitives& model, int T, double V_l, double V_h, const SolverConfig& config) {
    return solve_relaxed(model, {T, V_l, V_h, true}, config).profit;
}

std::vector<ProfitSample> profit_function(const ModelPrimitives& model, int T,
                                          const std::vector<std::pair<double, double>>& V_grid, double step,
                                          Exec exec, const SolverConfig& config) {
    return indexed_map<ProfitSample>(
        V_grid.size(),
        [&](std::size_t i) {
            ProfitSample ps;
            ps.V_l = V_grid[i].first;
            ps.V_h = V_grid[i].second;
            try {
                const ProfitSplit p = profit_at(model, T, ps.V_l, ps.V_h, config);
                ps.total = p.total;
                ps.low = p.low;
                ps.high = p.high;
                const ProfitSplit lp = profit_at(model, T, ps.V_l + step, ps.V_h, config);
                const ProfitSplit lm = profit_at(model, T, ps.V_l - step, ps.V_h, config);
                const ProfitSplit hp = profit_at(model, T, ps.V_l, ps.V_h + step, config);
                const ProfitSplit hm = profit_at(model, T, ps.V_l, ps.V_h - step, config);
                ps.dPi_dVl = (lp.total - lm.total) / (2.0 * step);
                ps.dPi_dVh = (hp.total - hm.total) / (2.0 * step);
                ps.dPih_dVl_right = (lp.high - p.high) / step;
                ps.feasible = true;
            } catch (const Error& e) {
                ps.feasible = false;
                ps.error = e.what();
            }
            return ps;
        },
        exec);
}

BellmanReport bellman_crosscheck(const ModelPrimitives& model, const RelaxedSolution& sol, int grid, Exec exec) {
    if (sol.spec.T != 2)
        throw DomainError("the recursion cross-check needs T = 2");
    if (grid < 2)
        throw DomainError("grid needs at least two points");
    const auto& prefs = model.prefs();
    const auto& tp = model.types();
    const int nf = model.n_signals();
    const double delta = model.delta();
    const double V_l = sol.spec.V_l, V_h = sol.spec.V_h;
    const double A1 = model.annuity(1, 2);

    // grid around the solved continuation utilities, with the full-information levels inserted
    ValueTable vt(model, sol.mechanism);
    double lo = inf, hi = -inf;
    for (int f = 0; f < nf; ++f)
        for (Type j : {Type::low, Type::high}) {
            const double v = vt.V(2, f, 1, j);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    lo = std::min({lo, V_l / A1, V_h / A1});
    hi = std::max({hi, V_l / A1, V_h / A1});
    const double pad = 0.5 * (1.0 + (hi - lo));
    lo = std::max(lo - pad, prefs.utility_floor());
    hi = hi + pad;
    if (std::isfinite(prefs.utility_sup()))
        hi = std::min(hi, prefs.utility_sup() - 1e-9 * (1.0 + std::abs(prefs.utility_sup())));
    std::vector<double> g(grid);
    for (int i = 0; i < grid; ++i)
        g[i] = lo + (hi - lo) * i / (grid - 1);
    g.push_back(V_l / A1);
    g.push_back(V_h / A1);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    const std::size_t G = g.size();

    // continuation profit of a one-period problem started from the post-h type distribution
    TypeProcess cont = tp;
    cont.pi_init = {tp.pi(Type::high, Type::low), tp.pi(Type::high, Type::high)};
    const ModelPrimitives cm = model.with_types(cont);
    SolverConfig cfg;
    auto Pi2 = indexed_map<double>(
        G * G,
        [&](std::size_t idx) {
            const double Nl = g[idx / G], Nh = g[idx % G];
            try {
                return solve_relaxed(cm, {1, Nl, Nh, true}, cfg).value;
            } catch (const InfeasibleError&) {
                return -inf;
            }
        },
        exec);

    const double Eyh = model.mean_income(Type::high);
    const double low_part = tp.init(Type::low) * full_info_profit(model, Type::low, 2, V_l);
    // N indices per signal: (il, ih)
    auto evaluate_P1 = [&](const std::vector<std::size_t>& il, const std::vector<std::size_t>& ih) {
        double ch = 0.0, cl = 0.0, cont_profit = 0.0;
        for (int f = 0; f < nf; ++f) {
            const double Nl = g[il[f]], Nh = g[ih[f]];
            const double v = Pi2[il[f] * G + ih[f]];
            if (!std::isfinite(v))
                return -inf;
            ch += model.signal_prob(Type::high, f) *
                  (tp.pi(Type::high, Type::high) * Nh + tp.pi(Type::high, Type::low) * Nl);
            cl += model.signal_prob(Type::low, f) *
                  (tp.pi(Type::low, Type::high) * Nh + tp.pi(Type::low, Type::low) * Nl);
            cont_profit += model.signal_prob(Type::high, f) * v;
        }
        const double nu = V_h - delta * ch;
        const double dmin = nu - V_l + delta * cl;
        const AuxTarget tg{nu, std::max(dmin, 0.0)};
        if (!membership_A(model, tg))
            return -inf;
        double c;
        try {
            c = chi(model, tg);
        } catch (const Error&) {
            return -inf;
        }
        return tp.init(Type::high) * (Eyh - c + delta * cont_profit) + low_part;
    };

    BellmanReport rep;
    rep.grid = static_cast<int>(G);
    // common continuation pair for all signals, exhaustive
    auto common = indexed_map<double>(
        G * G,
        [&](std::size_t idx) {
            std::vector<std::size_t> il(nf, idx / G), ih(nf, idx % G);
            return evaluate_P1(il, ih);
        },
        exec);
    std::size_t best = 0;
    for (std::size_t i = 1; i < common.size(); ++i)
        if (common[i] > common[best])
            best = i;
    double value = common[best];
    std::vector<std::size_t> il(nf, best / G), ih(nf, best % G);
    // per-signal block coordinate ascent
    if (nf > 1) {
        for (int sweep = 0; sweep < 50; ++sweep) {
            bool improved = false;
            for (int f = 0; f < nf; ++f) {
                auto vals = indexed_map<double>(
                    G * G,
                    [&](std::size_t idx) {
                        auto a = il, b = ih;
                        a[f] = idx / G;
                        b[f] = idx % G;
                        return evaluate_P1(a, b);
                    },
                    exec);
                std::size_t bi = 0;
                for (std::size_t i = 1; i < vals.size(); ++i)
                    if (vals[i] > vals[bi])
                        bi = i;
                if (vals[bi] > value + 1e-15 * (1.0 + std::abs(value))) {
                    value = vals[bi];
                    il[f] = bi / G;
                    ih[f] = bi % G;
                    improved = true;
                }
            }
            ++rep.sweeps;
            if (!improved)
                break;
        }
    }
    rep.monolithic = sol.value;
    rep.recursive = value;
    rep.gap = std::abs(sol.value - value);
    return rep;
}

} // namespace dyncontract
