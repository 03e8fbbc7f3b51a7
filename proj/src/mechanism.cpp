#include "dyncontract/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dyncontract/format.hpp"

namespace dyncontract {

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i)
        r *= b;
    return r;
}

std::vector<HistoryNode> HistoryNode::children(int T, int n_signals) const {
    std::vector<HistoryNode> out;
    if (t >= T)
        return out;
    for (Type a : {Type::low, Type::high})
        for (int f = 0; f < n_signals; ++f) {
            HistoryNode c{t + 1, signals, reports};
            c.signals.push_back(f);
            c.reports.push_back(a);
            out.push_back(std::move(c));
        }
    return out;
}

std::size_t HistoryNode::signal_rank(int n_signals) const {
    std::size_t r = 0;
    for (int f : signals)
        r = r * n_signals + f;
    return r;
}

std::size_t HistoryNode::report_rank() const {
    std::size_t r = 0;
    for (Type a : reports)
        r = r * 2 + type_index(a);
    return r;
}

Mechanism::Mechanism(int T, std::size_t n_income, int n_signals) : T_(T), n_income_(n_income), n_signals_(n_signals) {
    if (T < 1)
        throw DomainError("horizon must be at least 1");
    std::size_t total = 0;
    for (int t = 1; t <= T; ++t) {
        level_start_.push_back(total);
        total += n_signal_histories(t) * n_report_histories(t) * n_income;
    }
    data_.assign(total, 0.0);
}

std::size_t Mechanism::offset(int t, std::size_t s, std::size_t r) const {
    return level_start_[t - 1] + (s * n_report_histories(t) + r) * n_income_;
}

Mechanism Mechanism::constant(int T, std::size_t n_income, int n_signals, double c) {
    Mechanism m(T, n_income, n_signals);
    std::fill(m.data_.begin(), m.data_.end(), c);
    return m;
}

Mechanism Mechanism::pass_through(const ModelPrimitives& model, int T) {
    Mechanism m(T, model.n_income(), model.n_signals());
    for (std::size_t i = 0; i < m.data_.size(); ++i)
        m.data_[i] = model.income().y[i % model.n_income()];
    return m;
}

FlowContract Mechanism::contract(int t, std::size_t s, std::size_t r) const {
    const double* p = flow(t, s, r);
    return FlowContract(p, p + n_income_);
}

void Mechanism::set_contract(int t, std::size_t s, std::size_t r, const FlowContract& z) {
    if (z.size() != n_income_)
        throw DomainError("flow contract size mismatch");
    std::copy(z.begin(), z.end(), flow(t, s, r));
}

bool Mechanism::matches(const ModelPrimitives& model) const {
    return n_income_ == model.n_income() && n_signals_ == model.n_signals();
}

ReportingStrategy ReportingStrategy::truthful() {
    return {[](const PrivateHistory& h) { return h.current; }};
}

namespace {

void require_shape(const ModelPrimitives& model, const Mechanism& m) {
    if (!m.matches(model))
        throw DomainError("mechanism shape does not match the model");
}

double flow_u(const ModelPrimitives& model, const double* z, Type theta) {
    double v = 0.0;
    for (std::size_t k = 0; k < model.n_income(); ++k)
        v += model.p(theta, k) * model.prefs().u(z[k]);
    return v;
}

double flow_xi(const ModelPrimitives& model, const double* z, Type theta) {
    double v = 0.0;
    for (std::size_t k = 0; k < model.n_income(); ++k)
        v += model.p(theta, k) * (model.income().y[k] - z[k]);
    return v;
}

// Truthful backward recursion of a flow functional; returns per level arrays indexed like ValueTable.
template <class Flow>
std::vector<std::vector<double>> truthful_backward(const ModelPrimitives& model, const Mechanism& m, Flow flow) {
    const int T = m.horizon();
    const int nf = model.n_signals();
    const double delta = model.delta();
    std::vector<std::vector<double>> v(T);
    for (int t = T; t >= 1; --t) {
        const std::size_t ns = m.n_signal_histories(t), nr = ipow(2, t - 1);
        v[t - 1].assign(ns * nr * 2, 0.0);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t rp = 0; rp < nr; ++rp)
                for (int th = 0; th < 2; ++th) {
                    const Type theta = type_from_index(th);
                    const std::size_t r = rp * 2 + th;
                    double val = flow(model, m.flow(t, s, r), theta);
                    if (t < T) {
                        double cont = 0.0;
                        const std::size_t nr1 = ipow(2, t);
                        for (int f = 0; f < nf; ++f)
                            for (int j = 0; j < 2; ++j)
                                cont += model.signal_prob(theta, f) * model.types().transition[th][j] *
                                        v[t][((s * nf + f) * nr1 + r) * 2 + j];
                        val += delta * cont;
                    }
                    v[t - 1][(s * nr + rp) * 2 + th] = val;
                }
    }
    return v;
}

} // namespace

ValueTable::ValueTable(const ModelPrimitives& model, const Mechanism& m) : model_(&model), T_(m.horizon()) {
    require_shape(model, m);
    v_ = truthful_backward(model, m, flow_u);
}

double ValueTable::continuation(int t, Type i, std::size_t s, std::size_t r_prev, Type report) const {
    if (t >= T_)
        return 0.0;
    const int nf = model_->n_signals();
    const std::size_t r = r_prev * 2 + type_index(report);
    double cont = 0.0;
    for (int f = 0; f < nf; ++f)
        for (Type j : {Type::low, Type::high})
            cont += model_->signal_prob(i, f) * model_->types().pi(i, j) * V(t + 1, s * nf + f, r, j);
    return cont;
}

double ValueTable::deviation_value(int t, Type i, std::size_t s, std::size_t r_prev) const {
    return continuation(t, i, s, r_prev, Type::high);
}

double deviation_value(const ValueTable& vt, int t, Type i, std::size_t s, std::size_t r_prev) {
    return vt.deviation_value(t, i, s, r_prev);
}

double consumer_value(const ModelPrimitives& model, const Mechanism& m, const ReportingStrategy& r, Type theta1) {
    require_shape(model, m);
    const int T = m.horizon();
    const int nf = model.n_signals();
    std::vector<std::size_t> incomes;
    std::vector<Type> reports, types;
    double total = 0.0;
    std::function<void(int, std::size_t, std::size_t, Type, double)> rec = [&](int t, std::size_t s, std::size_t rp,
                                                                              Type theta, double w) {
        PrivateHistory h{t, incomes, reports, types, theta};
        Type a = r.report(h);
        const std::size_t rr = rp * 2 + type_index(a);
        const double* z = m.flow(t, s, rr);
        for (std::size_t k = 0; k < model.n_income(); ++k) {
            const double pk = model.p(theta, k);
            total += w * pk * model.prefs().u(z[k]);
            if (t == T || pk == 0.0)
                continue;
            incomes.push_back(k);
            reports.push_back(a);
            types.push_back(theta);
            for (Type j : {Type::low, Type::high}) {
                double pj = model.types().pi(theta, j);
                if (pj > 0.0)
                    rec(t + 1, s * nf + model.phi_of(k), rr, j, w * model.delta() * pk * pj);
            }
            incomes.pop_back();
            reports.pop_back();
            types.pop_back();
        }
    };
    rec(1, 0, 0, theta1, 1.0);
    return total;
}

ProfitSplit firm_profit(const ModelPrimitives& model, const Mechanism& m) {
    require_shape(model, m);
    auto v = truthful_backward(model, m, flow_xi);
    ProfitSplit p;
    p.low = v[0][0];
    p.high = v[0][1];
    p.total = model.types().init(Type::low) * p.low + model.types().init(Type::high) * p.high;
    return p;
}

namespace {

// Exhaustive enumeration of reporting strategies defined on (t, signal history, report history,
// current type). Only states reachable under the strategy's own earlier choices are branched on.
class StrategyEnumerator {
public:
    StrategyEnumerator(const ModelPrimitives& model, const Mechanism& m) : model_(model), m_(m), T_(m.horizon()) {
        nf_ = model.n_signals();
        flow_.resize(T_);
        for (int t = 1; t <= T_; ++t) {
            const std::size_t ns = m.n_signal_histories(t), nr = ipow(2, t);
            flow_[t - 1].resize(ns * nr * 2);
            for (std::size_t s = 0; s < ns; ++s)
                for (std::size_t r = 0; r < nr; ++r)
                    for (int th = 0; th < 2; ++th)
                        flow_[t - 1][(s * nr + r) * 2 + th] = flow_u(model, m.flow(t, s, r), type_from_index(th));
        }
        level_size_.resize(T_ + 1);
        for (int t = 1; t <= T_; ++t)
            level_size_[t - 1] = m.n_signal_histories(t) * ipow(2, t - 1) * 2;
        for (int th = 0; th < 2; ++th)
            if (model.types().pi_init[th] > 0.0)
                root_.push_back(static_cast<std::size_t>(th));
    }

    struct Work {
        std::vector<std::vector<std::size_t>> reach;  // reachable keys per level
        std::vector<std::vector<signed char>> choice; // report per key, -1 unassigned
        std::vector<std::vector<double>> w;           // values per key
        std::vector<std::vector<char>> mark;
    };

    Work make_work() const {
        Work wk;
        wk.reach.resize(T_ + 1);
        wk.choice.resize(T_);
        wk.w.resize(T_);
        wk.mark.resize(T_);
        for (int t = 1; t <= T_; ++t) {
            wk.choice[t - 1].assign(level_size_[t - 1], -1);
            wk.w[t - 1].assign(level_size_[t - 1], 0.0);
            wk.mark[t - 1].assign(level_size_[t - 1], 0);
        }
        wk.reach[0] = root_;
        return wk;
    }

    // Counts leaves below level t, stopping once the count exceeds cap.
    std::uint64_t count(Work& wk, int t, std::uint64_t cap) const {
        if (t > T_)
            return 1;
        const auto& R = wk.reach[t - 1];
        if (R.size() >= 63)
            return cap + 1;
        std::uint64_t total = 0;
        const std::uint64_t nmask = std::uint64_t(1) << R.size();
        for (std::uint64_t mask = 0; mask < nmask; ++mask) {
            assign(wk, t, mask);
            total += count(wk, t + 1, cap - std::min(total, cap));
            if (total > cap)
                break;
        }
        return total;
    }

    struct Best {
        double total = -std::numeric_limits<double>::infinity();
        std::array<double, 2> per{-std::numeric_limits<double>::infinity(),
                                  -std::numeric_limits<double>::infinity()};
        std::uint64_t n = 0;
    };

    void search(Work& wk, int t, Best& best, std::uint64_t limit) const {
        if (best.n >= limit)
            return;
        if (t > T_) {
            evaluate(wk, best);
            return;
        }
        const auto& R = wk.reach[t - 1];
        const std::uint64_t nmask = std::uint64_t(1) << R.size();
        for (std::uint64_t mask = 0; mask < nmask && best.n < limit; ++mask) {
            assign(wk, t, mask);
            search(wk, t + 1, best, limit);
        }
    }

    // Prefixes: all assignments of levels 1..d, as copies of the work state.
    void prefixes(Work& wk, int t, int d, std::vector<Work>& out) const {
        if (t > d || t > T_) {
            out.push_back(wk);
            return;
        }
        const std::uint64_t nmask = std::uint64_t(1) << wk.reach[t - 1].size();
        for (std::uint64_t mask = 0; mask < nmask; ++mask) {
            assign(wk, t, mask);
            prefixes(wk, t + 1, d, out);
        }
    }

    void assign(Work& wk, int t, std::uint64_t mask) const {
        const auto& R = wk.reach[t - 1];
        auto& ch = wk.choice[t - 1];
        for (std::size_t i = 0; i < R.size(); ++i)
            ch[R[i]] = static_cast<signed char>((mask >> i) & 1U);
        if (t == T_)
            return;
        auto& next = wk.reach[t];
        auto& mk = wk.mark[t];
        for (std::size_t key : next)
            mk[key] = 0;
        next.clear();
        const std::size_t nr = ipow(2, t - 1), nr1 = ipow(2, t);
        for (std::size_t key : R) {
            const int th = static_cast<int>(key % 2);
            const std::size_t rp = (key / 2) % nr, s = key / 2 / nr;
            const std::size_t r = rp * 2 + ch[key];
            for (int f = 0; f < nf_; ++f) {
                if (model_.signal_prob(type_from_index(th), f) <= 0.0)
                    continue;
                for (int j = 0; j < 2; ++j) {
                    if (model_.types().transition[th][j] <= 0.0)
                        continue;
                    const std::size_t nk = ((s * nf_ + f) * nr1 + r) * 2 + j;
                    if (!mk[nk]) {
                        mk[nk] = 1;
                        next.push_back(nk);
                    }
                }
            }
        }
    }

    void evaluate(Work& wk, Best& best) const {
        const double delta = model_.delta();
        for (int t = T_; t >= 1; --t) {
            const std::size_t nr = ipow(2, t - 1), nr1 = ipow(2, t);
            for (std::size_t key : wk.reach[t - 1]) {
                const int th = static_cast<int>(key % 2);
                const std::size_t rp = (key / 2) % nr, s = key / 2 / nr;
                const std::size_t r = rp * 2 + wk.choice[t - 1][key];
                double val = flow_[t - 1][(s * nr1 + r) * 2 + th];
                if (t < T_) {
                    double cont = 0.0;
                    for (int f = 0; f < nf_; ++f)
                        for (int j = 0; j < 2; ++j) {
                            const double pr = model_.signal_prob(type_from_index(th), f) *
                                              model_.types().transition[th][j];
                            if (pr > 0.0)
                                cont += pr * wk.w[t][((s * nf_ + f) * nr1 + r) * 2 + j];
                        }
                    val += delta * cont;
                }
                wk.w[t - 1][key] = val;
            }
        }
        double tot = 0.0;
        for (std::size_t th : root_) {
            tot += model_.types().pi_init[th] * wk.w[0][th];
            best.per[th] = std::max(best.per[th], wk.w[0][th]);
        }
        best.total = std::max(best.total, tot);
        ++best.n;
    }

    int horizon() const { return T_; }

private:
    const ModelPrimitives& model_;
    const Mechanism& m_;
    int T_;
    int nf_;
    std::vector<std::vector<double>> flow_;
    std::vector<std::size_t> level_size_;
    std::vector<std::size_t> root_;
};

} // namespace

std::array<double, 2> best_response_gain(const ModelPrimitives& model, const Mechanism& m) {
    require_shape(model, m);
    const int T = m.horizon();
    const int nf = model.n_signals();
    std::vector<std::vector<double>> W(T);
    for (int t = T; t >= 1; --t) {
        const std::size_t ns = m.n_signal_histories(t), nr = ipow(2, t - 1), nr1 = ipow(2, t);
        W[t - 1].assign(ns * nr * 2, 0.0);
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t rp = 0; rp < nr; ++rp)
                for (int th = 0; th < 2; ++th) {
                    const Type theta = type_from_index(th);
                    double best = -std::numeric_limits<double>::infinity();
                    for (int a = 0; a < 2; ++a) {
                        const std::size_t r = rp * 2 + a;
                        double val = flow_u(model, m.flow(t, s, r), theta);
                        if (t < T) {
                            double cont = 0.0;
                            for (int f = 0; f < nf; ++f)
                                for (int j = 0; j < 2; ++j)
                                    cont += model.signal_prob(theta, f) * model.types().transition[th][j] *
                                            W[t][((s * nf + f) * nr1 + r) * 2 + j];
                            val += model.delta() * cont;
                        }
                        best = std::max(best, val);
                    }
                    W[t - 1][(s * nr + rp) * 2 + th] = best;
                }
    }
    ValueTable vt(model, m);
    return {W[0][0] - vt.V(1, 0, 0, Type::low), W[0][1] - vt.V(1, 0, 0, Type::high)};
}

ICReport check_IC_exhaustive(const ModelPrimitives& model, const Mechanism& m, double tol, std::uint64_t budget,
                             Exec exec) {
    require_shape(model, m);
    ValueTable vt(model, m);
    const double v1[2] = {vt.V(1, 0, 0, Type::low), vt.V(1, 0, 0, Type::high)};
    const double truthful = model.types().pi_init[0] * v1[0] + model.types().pi_init[1] * v1[1];

    StrategyEnumerator en(model, m);
    ICReport rep;
    auto g = best_response_gain(model, m);
    rep.dp_violation = model.types().pi_init[0] * g[0] + model.types().pi_init[1] * g[1];

    auto wk = en.make_work();
    const std::uint64_t n = en.count(wk, 1, budget);
    StrategyEnumerator::Best best;
    if (n > budget) {
        rep.exhaustive = false;
        wk = en.make_work();
        en.search(wk, 1, best, budget);
    } else {
        wk = en.make_work();
        std::vector<StrategyEnumerator::Work> pre;
        en.prefixes(wk, 1, std::min(2, en.horizon()), pre);
        auto parts = indexed_map<StrategyEnumerator::Best>(
            pre.size(),
            [&](std::size_t i) {
                auto w = pre[i];
                StrategyEnumerator::Best b;
                en.search(w, std::min(2, en.horizon()) + 1, b, std::numeric_limits<std::uint64_t>::max());
                return b;
            },
            exec);
        for (const auto& b : parts) {
            best.total = std::max(best.total, b.total);
            best.per[0] = std::max(best.per[0], b.per[0]);
            best.per[1] = std::max(best.per[1], b.per[1]);
            best.n += b.n;
        }
    }
    rep.strategies = best.n;
    // truth-telling belongs to every enumeration, even a partial one
    rep.max_violation = std::max(best.total - truthful, 0.0);
    rep.per_type = {std::max(best.per[0] - v1[0], 0.0), std::max(best.per[1] - v1[1], 0.0)};
    rep.ic = rep.exhaustive && rep.max_violation <= tol;
    return rep;
}

std::vector<OsicSlack> check_OSIC(const ModelPrimitives& model, const Mechanism& m, double tol) {
    ValueTable vt(model, m);
    std::vector<OsicSlack> out;
    for (int t = 1; t <= m.horizon(); ++t) {
        const std::size_t rp = ipow(2, t - 1) - 1; // h^{t-1}
        for (std::size_t s = 0; s < m.n_signal_histories(t); ++s) {
            const double truthful = vt.V(t, s, rp, Type::low);
            const double dev = flow_u(model, m.flow(t, s, rp * 2 + 1), Type::low) +
                               model.delta() * vt.deviation_value(t, Type::low, s, rp);
            const double slack = truthful - dev;
            out.push_back({t, s, slack, std::abs(slack) <= tol});
        }
    }
    return out;
}

bool check_flow_monotonicity(const ModelPrimitives& model, const FlowContract& z) {
    for (std::size_t a = 0; a < z.size(); ++a)
        for (std::size_t b = 0; b < z.size(); ++b)
            if (model.ell(b) > model.ell(a) && z[b] > z[a])
                return false;
    return true;
}

MonotonicityResult check_CSM(const ModelPrimitives& model, const ValueTable& vt, int t, std::size_t s,
                             std::size_t r_prev, double tol) {
    if (t >= vt.horizon())
        throw DomainError("CSM needs t < T");
    const int nf = model.n_signals();
    const double plh = model.types().pi(Type::low, Type::high), pll = model.types().pi(Type::low, Type::low);
    const std::size_t r = r_prev * 2 + 1;
    std::vector<double> W(nf);
    for (int f = 0; f < nf; ++f)
        W[f] = plh * vt.V(t + 1, s * nf + f, r, Type::high) + pll * vt.V(t + 1, s * nf + f, r, Type::low);
    MonotonicityResult res{true, std::numeric_limits<double>::infinity()};
    // lower likelihood ratio (evidence of the high type) must not be rewarded less
    for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b)
            if (model.signal_ell(a) < model.signal_ell(b)) {
                double gap = W[a] - W[b];
                res.margin = std::min(res.margin, gap);
                if (gap < -tol)
                    res.holds = false;
            }
    return res;
}

MonotonicityResult check_CTM(const ModelPrimitives& model, const ValueTable& vt, int t, std::size_t s,
                             std::size_t r_prev) {
    if (t >= vt.horizon())
        throw DomainError("CTM needs t < T");
    const int nf = model.n_signals();
    const std::size_t r = r_prev * 2 + 1;
    MonotonicityResult res{true, std::numeric_limits<double>::infinity()};
    for (int f = 0; f < nf; ++f) {
        double gap = vt.V(t + 1, s * nf + f, r, Type::high) - vt.V(t + 1, s * nf + f, r, Type::low);
        res.margin = std::min(res.margin, gap);
        if (!(gap > 0.0))
            res.holds = false;
    }
    return res;
}

double post_low_consumption_variance(const ModelPrimitives& model, const Mechanism& m) {
    (void)model;
    const int T = m.horizon();
    const int nf = m.n_signals();
    double worst = 0.0;
    for (int t = 1; t <= T; ++t) {
        const std::size_t rfirst = (ipow(2, t - 1) - 1) * 2; // h^{t-1} l
        for (std::size_t s = 0; s < m.n_signal_histories(t); ++s) {
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (int t2 = t; t2 <= T; ++t2) {
                const int extra = t2 - t;
                const std::size_t ns_ext = ipow(nf, extra), nr_ext = ipow(2, extra);
                for (std::size_t se = 0; se < ns_ext; ++se)
                    for (std::size_t re = 0; re < nr_ext; ++re) {
                        const double* z = m.flow(t2, s * ns_ext + se, rfirst * nr_ext + re);
                        for (std::size_t k = 0; k < m.n_income(); ++k) {
                            sum += z[k];
                            sq += z[k] * z[k];
                            ++n;
                        }
                    }
            }
            // two-pass for accuracy
            const double mean = sum / n;
            double var = 0.0;
            for (int t2 = t; t2 <= T; ++t2) {
                const int extra = t2 - t;
                const std::size_t ns_ext = ipow(nf, extra), nr_ext = ipow(2, extra);
                for (std::size_t se = 0; se < ns_ext; ++se)
                    for (std::size_t re = 0; re < nr_ext; ++re) {
                        const double* z = m.flow(t2, s * ns_ext + se, rfirst * nr_ext + re);
                        for (std::size_t k = 0; k < m.n_income(); ++k)
                            var += (z[k] - mean) * (z[k] - mean);
                    }
            }
            (void)sq;
            worst = std::max(worst, var / n);
        }
    }
    return worst;
}

std::string signal_history_label(std::size_t rank, int t, int n_signals) {
    if (t <= 1)
        return "-";
    std::vector<int> d(t - 1);
    for (int i = t - 2; i >= 0; --i) {
        d[i] = static_cast<int>(rank % n_signals);
        rank /= n_signals;
    }
    std::string s;
    for (int i = 0; i < t - 1; ++i) {
        if (i)
            s += '.';
        s += std::to_string(d[i]);
    }
    return s;
}

std::string report_history_label(std::size_t rank, int len) {
    std::string s(len, 'l');
    for (int i = len - 1; i >= 0; --i) {
        s[i] = (rank & 1U) ? 'h' : 'l';
        rank >>= 1U;
    }
    return s;
}

void write_mechanism(std::ostream& os, const ModelPrimitives& model, const Mechanism& m) {
    os << "# dyncontract mechanism: node <t> <signal history> <report history> <z per income level>\n";
    os << "format 1\n";
    os << "horizon " << m.horizon() << "\n";
    os << "income_levels";
    for (double y : model.income().y)
        os << ' ' << fmt17(y);
    os << "\nsignal_map";
    for (int f : model.signals().phi_map)
        os << ' ' << f;
    os << "\n";
    for (int t = 1; t <= m.horizon(); ++t)
        for (std::size_t s = 0; s < m.n_signal_histories(t); ++s)
            for (std::size_t r = 0; r < m.n_report_histories(t); ++r) {
                os << "node " << t << ' ' << signal_history_label(s, t, m.n_signals()) << ' '
                   << report_history_label(r, t);
                const double* z = m.flow(t, s, r);
                for (std::size_t k = 0; k < m.n_income(); ++k)
                    os << ' ' << fmt17(z[k]);
                os << "\n";
            }
}

namespace {

struct ParsedMechanism {
    Mechanism m;
    std::vector<double> levels;
    std::vector<int> map;
};

ParsedMechanism parse_mechanism(std::istream& is) {
    ParsedMechanism out;
    int T = -1;
    std::string line;
    int lineno = 0;
    std::vector<std::vector<bool>> seen;
    auto fail = [&](const std::string& msg) {
        throw ConfigError("mechanism file line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::vector<std::string> tok;
        for (std::string w; ls >> w;)
            tok.push_back(w);
        if (key == "format") {
            if (tok.size() != 1 || tok[0] != "1")
                fail("unsupported format");
        } else if (key == "horizon") {
            if (tok.size() != 1)
                fail("horizon takes one value");
            T = static_cast<int>(parse_int(tok[0], "horizon"));
        } else if (key == "income_levels") {
            for (auto& w : tok)
                out.levels.push_back(parse_double(w, "income_levels"));
        } else if (key == "signal_map") {
            for (auto& w : tok)
                out.map.push_back(static_cast<int>(parse_int(w, "signal_map")));
        } else if (key == "node") {
            if (T < 1 || out.levels.empty() || out.map.size() != out.levels.size())
                fail("node before a complete header");
            if (out.m.horizon() == 0) {
                int nf = 0;
                for (int f : out.map)
                    nf = std::max(nf, f + 1);
                out.m = Mechanism(T, out.levels.size(), nf);
                for (int t = 1; t <= T; ++t)
                    seen.emplace_back(out.m.n_signal_histories(t) * out.m.n_report_histories(t), false);
            }
            if (tok.size() != 3 + out.levels.size())
                fail("node record has the wrong number of fields");
            const int t = static_cast<int>(parse_int(tok[0], "node period"));
            if (t < 1 || t > T)
                fail("period out of range");
            const int nf = out.m.n_signals();
            std::size_t s = 0;
            if (t == 1) {
                if (tok[1] != "-")
                    fail("period 1 has an empty signal history '-'");
            } else {
                std::istringstream ss(tok[1]);
                std::string part;
                int count = 0;
                while (std::getline(ss, part, '.')) {
                    long long f = parse_int(part, "signal history");
                    if (f < 0 || f >= nf)
                        fail("signal label out of range");
                    s = s * nf + static_cast<std::size_t>(f);
                    ++count;
                }
                if (count != t - 1)
                    fail("signal history length must be t-1");
            }
            if (static_cast<int>(tok[2].size()) != t)
                fail("report history length must be t");
            std::size_t r = 0;
            for (char c : tok[2]) {
                if (c != 'l' && c != 'h')
                    fail("reports are 'l' or 'h'");
                r = r * 2 + (c == 'h');
            }
            double* z = out.m.flow(t, s, r);
            for (std::size_t k = 0; k < out.levels.size(); ++k) {
                z[k] = parse_double(tok[3 + k], "consumption");
                if (!(z[k] >= 0.0))
                    fail("consumption must be nonnegative");
            }
            seen[t - 1][s * out.m.n_report_histories(t) + r] = true;
        } else {
            fail("unknown record '" + key + "'");
        }
    }
    if (out.m.horizon() == 0)
        throw ConfigError("mechanism file has no nodes");
    for (const auto& lv : seen)
        for (bool b : lv)
            if (!b)
                throw ConfigError("mechanism file is missing nodes");
    return out;
}

} // namespace

Mechanism read_mechanism(std::istream& is) { return parse_mechanism(is).m; }

Mechanism read_mechanism(std::istream& is, const ModelPrimitives& model) {
    auto p = parse_mechanism(is);
    if (p.levels != model.income().y)
        throw ConfigError("mechanism income levels do not match the model");
    if (p.map != model.signals().phi_map)
        throw ConfigError("mechanism signal map does not match the model");
    return p.m;
}

} // namespace dyncontract
