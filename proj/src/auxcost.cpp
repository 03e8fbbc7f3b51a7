#include "dyncontract/auxcost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dyncontract {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

struct Eval {
    std::vector<double> x;
    std::vector<double> a; // dx/ds, zero at the floor
    double f1, f2;
    double j11, j12, j21, j22;
};

Eval evaluate(const ModelPrimitives& model, AuxTarget tg, double lambda, double mu) {
    const auto& prefs = model.prefs();
    const double lo = prefs.utility_floor();
    const std::size_t n = model.n_income();
    Eval e;
    e.x.resize(n);
    e.a.resize(n);
    e.f1 = -tg.nu;
    e.f2 = -(tg.nu - tg.delta);
    e.j11 = e.j12 = e.j21 = e.j22 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double ell = model.ell(k);
        double x = prefs.dpsi_inverse(lambda - mu * ell);
        double a = 0.0;
        if (x > lo) {
            double h = prefs.d2psi(x);
            a = h > 0.0 ? 1.0 / h : 1e300;
        } else {
            x = lo;
        }
        e.x[k] = x;
        e.a[k] = a;
        const double ph = model.p(Type::high, k), pl = model.p(Type::low, k);
        e.f1 += ph * x;
        e.f2 += pl * x;
        e.j11 += ph * a;
        e.j12 -= ph * a * ell;
        e.j21 += pl * a;
        e.j22 -= pl * a * ell;
    }
    return e;
}

double res_norm(const Eval& e) { return std::max(std::abs(e.f1), std::abs(e.f2)); }

// Damped Newton from (lambda, mu). Returns true on convergence.
bool newton(const ModelPrimitives& model, AuxTarget tg, double& lambda, double& mu, const AuxOptions& opt,
            int& iters, double& last_res) {
    Eval e = evaluate(model, tg, lambda, mu);
    double r = res_norm(e);
    const double scale = 1.0 + std::abs(tg.nu) + std::abs(tg.delta);
    for (int it = 0; it < opt.max_iter; ++it) {
        last_res = r;
        if (r <= opt.tol * scale) {
            iters += it;
            return true;
        }
        double det = e.j11 * e.j22 - e.j12 * e.j21;
        double dl, dm;
        if (std::abs(det) > 1e-300 && std::isfinite(det)) {
            dl = -(e.j22 * e.f1 - e.j12 * e.f2) / det;
            dm = -(-e.j21 * e.f1 + e.j11 * e.f2) / det;
        } else {
            // Singular Jacobian (everything at the floor): push the level up.
            dl = std::max(1.0, std::abs(lambda));
            dm = 0.0;
        }
        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            double nl = lambda + step * dl, nm = mu + step * dm;
            Eval ne = evaluate(model, tg, nl, nm);
            double nr = res_norm(ne);
            if (std::isfinite(nr) && nr < (1.0 - 1e-4 * step) * r) {
                lambda = nl;
                mu = nm;
                e = std::move(ne);
                r = nr;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            iters += it;
            last_res = r;
            return r <= opt.tol * scale;
        }
    }
    iters += opt.max_iter;
    last_res = r;
    return r <= opt.tol * scale;
}

} // namespace

AuxSolution solve_aux(const ModelPrimitives& model, AuxTarget target, const AuxOptions& opt) {
    if (!membership_A(model, target))
        throw InfeasibleError("target (nu=" + std::to_string(target.nu) + ", delta=" + std::to_string(target.delta) +
                              ") is outside the feasible set");
    const auto& prefs = model.prefs();
    const double lo = prefs.utility_floor();

    double lambda = prefs.dpsi(std::max(target.nu, lo));
    double mu = 0.0;
    int iters = 0;
    double last = inf;
    bool ok = newton(model, target, lambda, mu, opt, iters, last);
    if (!ok) {
        // Homotopy in delta from the full-insurance point.
        lambda = prefs.dpsi(std::max(target.nu, lo));
        mu = 0.0;
        ok = true;
        for (int k = 1; k <= opt.homotopy_steps && ok; ++k) {
            AuxTarget step{target.nu, target.delta * k / opt.homotopy_steps};
            ok = newton(model, step, lambda, mu, opt, iters, last);
        }
    }
    if (!ok)
        throw ConvergenceError("auxiliary Newton iteration did not converge, last residual " + std::to_string(last));

    Eval e = evaluate(model, target, lambda, mu);
    AuxSolution s;
    s.x = e.x;
    s.lambda = lambda;
    s.mu = mu;
    s.residual = res_norm(e);
    s.iterations = iters;
    s.zeta.resize(s.x.size());
    s.chi = 0.0;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
        s.zeta[k] = prefs.psi(s.x[k]);
        s.chi += model.p(Type::high, k) * s.zeta[k];
        if (e.a[k] == 0.0) {
            s.interior = false;
            s.active_corners.push_back(k);
        }
    }
    s.grad = {lambda - mu, mu};
    return s;
}

double chi(const ModelPrimitives& model, AuxTarget target) { return solve_aux(model, target).chi; }

std::array<double, 2> chi_gradient(const ModelPrimitives& model, AuxTarget target) {
    return solve_aux(model, target).grad;
}

double chi_cross(const ModelPrimitives& model, const AuxSolution& sol) {
    if (!sol.interior)
        throw DomainError("chi_cross: corner solution, chi is not twice differentiable there");
    double sh = 0.0, sl = 0.0, sll = 0.0;
    for (std::size_t k = 0; k < sol.x.size(); ++k) {
        double a = 1.0 / model.prefs().d2psi(sol.x[k]);
        sh += model.p(Type::high, k) * a;
        sl += model.p(Type::low, k) * a;
        sll += model.p(Type::low, k) * model.ell(k) * a;
    }
    return (sl - sh) / (sh * sll - sl * sl);
}

double chi_cross(const ModelPrimitives& model, AuxTarget target) {
    return chi_cross(model, solve_aux(model, target));
}

QuadraticChi chi_quadratic_oracle(const ModelPrimitives& model, AuxTarget target) {
    const auto& prefs = model.prefs();
    if (prefs.family() != UtilityFamily::crra || prefs.rho() != 0.5 ||
        prefs.normalization() != CrraNormalization::power)
        throw DomainError("quadratic oracle needs u(c) = 2 sqrt(c)");
    double l2 = 0.0;
    for (std::size_t k = 0; k < model.n_income(); ++k)
        l2 += model.p(Type::low, k) * model.p(Type::low, k) / model.p(Type::high, k);
    const double nu = target.nu, d = target.delta;
    return {nu * nu / 4.0 + d * d / (4.0 * (l2 - 1.0)), {nu / 2.0, d / (2.0 * (l2 - 1.0))}};
}

double brute_force_chi(const ModelPrimitives& model, AuxTarget target, double resolution, Exec exec) {
    const std::size_t n = model.n_income();
    const auto& prefs = model.prefs();
    const double lo = prefs.utility_floor();
    const double hi = prefs.utility_sup();
    const double b1 = target.nu, b2 = target.nu - target.delta;
    auto ph = [&](std::size_t k) { return model.p(Type::high, k); };
    auto pl = [&](std::size_t k) { return model.p(Type::low, k); };
    auto cost = [&](const double* x) {
        double c = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (!(x[k] >= lo) || !(x[k] < hi))
                return inf;
            c += ph(k) * prefs.psi(x[k]);
        }
        return c;
    };
    // Solves the 2x2 system for the last two incomes given the rest.
    auto pin = [&](double r1, double r2, std::size_t i, std::size_t j, double& xi, double& xj) {
        double det = ph(i) * pl(j) - ph(j) * pl(i);
        if (det == 0.0)
            return false;
        xi = (r1 * pl(j) - ph(j) * r2) / det;
        xj = (ph(i) * r2 - pl(i) * r1) / det;
        return true;
    };
    if (n == 1) {
        if (std::abs(target.delta) > 0.0)
            return inf;
        double x = target.nu;
        return cost(&x);
    }
    if (n == 2) {
        double x[2];
        if (!pin(b1, b2, 0, 1, x[0], x[1]))
            return inf;
        return cost(x);
    }
    if (n != 3)
        throw DomainError("brute_force_chi supports at most three income levels");
    double top = (b1 - lo * (1.0 - ph(0))) / ph(0);
    if (std::isfinite(hi))
        top = std::min(top, hi);
    if (top < lo)
        return inf;
    const std::size_t m = static_cast<std::size_t>(std::floor((top - lo) / resolution)) + 1;
    auto vals = indexed_map<double>(
        m,
        [&](std::size_t i) {
            double x[3];
            x[0] = lo + resolution * static_cast<double>(i);
            if (!pin(b1 - ph(0) * x[0], b2 - pl(0) * x[0], 1, 2, x[1], x[2]))
                return inf;
            return cost(x);
        },
        exec);
    double best = inf;
    for (double v : vals)
        best = std::min(best, v);
    return best;
}

bool membership_A(const ModelPrimitives& model, AuxTarget target, bool interior) {
    const auto& prefs = model.prefs();
    const double lo = prefs.utility_floor();
    const double width = prefs.utility_sup() - lo;
    const double q1 = target.nu - lo, q2 = target.nu - target.delta - lo;
    if (!std::isfinite(q1) || !std::isfinite(q2))
        return false;
    const double tol = 1e-12 * (1.0 + std::abs(target.nu) + std::abs(target.delta));
    // Support function of the zonogon sum_y [0, width] * (p_h(y), p_l(y)).
    auto support = [&](double d1, double d2) {
        double h = 0.0;
        for (std::size_t k = 0; k < model.n_income(); ++k) {
            double dv = d1 * model.p(Type::high, k) + d2 * model.p(Type::low, k);
            if (dv > 1e-15)
                h += std::isfinite(width) ? width * dv : inf;
        }
        return h;
    };
    auto ok = [&](double d1, double d2) {
        double lhs = d1 * q1 + d2 * q2;
        double h = support(d1, d2);
        if (!std::isfinite(h))
            return true;
        return interior ? lhs < h - tol : lhs <= h + tol;
    };
    std::vector<std::array<double, 2>> dirs{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (std::size_t k = 0; k < model.n_income(); ++k) {
        dirs.push_back({-model.p(Type::low, k), model.p(Type::high, k)});
        dirs.push_back({model.p(Type::low, k), -model.p(Type::high, k)});
    }
    for (const auto& d : dirs)
        if (!ok(d[0], d[1]))
            return false;
    return true;
}

} // namespace dyncontract
