#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dyncontract/model.hpp"
#include "dyncontract/parallel.hpp"

namespace dyncontract {

/// Observable history at the start of period t: signals and reports of periods 1..t-1.
struct HistoryNode {
    int t = 1;
    std::vector<int> signals;
    std::vector<Type> reports;

    /// Children ordered by (announcement, signal); empty at t = T.
    std::vector<HistoryNode> children(int T, int n_signals) const;
    std::size_t signal_rank(int n_signals) const;
    std::size_t report_rank() const;
};

std::size_t ipow(std::size_t b, int e);

/// Flow contracts stored densely by (t, signal-history rank, report-history rank).
/// Report ranks fold reports first-to-last with l = 0, h = 1 and include the current report.
class Mechanism {
public:
    Mechanism() = default;
    Mechanism(int T, std::size_t n_income, int n_signals);

    static Mechanism constant(int T, std::size_t n_income, int n_signals, double c);
    /// z(y) = y everywhere.
    static Mechanism pass_through(const ModelPrimitives& model, int T);

    int horizon() const { return T_; }
    std::size_t n_income() const { return n_income_; }
    int n_signals() const { return n_signals_; }
    std::size_t n_signal_histories(int t) const { return ipow(n_signals_, t - 1); }
    std::size_t n_report_histories(int t) const { return ipow(2, t); }

    const double* flow(int t, std::size_t s, std::size_t r) const { return &data_[offset(t, s, r)]; }
    double* flow(int t, std::size_t s, std::size_t r) { return &data_[offset(t, s, r)]; }
    FlowContract contract(int t, std::size_t s, std::size_t r) const;
    void set_contract(int t, std::size_t s, std::size_t r, const FlowContract& z);

    /// True when horizon, income count and signal count match the model.
    bool matches(const ModelPrimitives& model) const;

    bool operator==(const Mechanism& o) const = default;

private:
    std::size_t offset(int t, std::size_t s, std::size_t r) const;

    int T_ = 0;
    std::size_t n_income_ = 0;
    int n_signals_ = 1;
    std::vector<std::size_t> level_start_;
    std::vector<double> data_;
};

/// Private history seen by the consumer when reporting in period t.
struct PrivateHistory {
    int t;
    const std::vector<std::size_t>& incomes; // income indices y_1..y_{t-1}
    const std::vector<Type>& reports;        // reports 1..t-1
    const std::vector<Type>& types;          // true types 1..t-1
    Type current;
};

struct ReportingStrategy {
    std::function<Type(const PrivateHistory&)> report;

    static ReportingStrategy truthful();
};

/// Truthful continuation values V_t(eta^{t-1}, theta) for every node.
class ValueTable {
public:
    ValueTable(const ModelPrimitives& model, const Mechanism& m);

    /// r_prev ranks the reports of periods 1..t-1.
    double V(int t, std::size_t s, std::size_t r_prev, Type theta) const {
        return v_[t - 1][(s * ipow(2, t - 1) + r_prev) * 2 + type_index(theta)];
    }
    /// Value from period t+1 on of a type-i consumer at (s, r_prev) in period t who reports h
    /// in period t and is truthful afterwards; zero when t = T.
    double deviation_value(int t, Type i, std::size_t s, std::size_t r_prev) const;
    /// Same with an arbitrary period-t report.
    double continuation(int t, Type i, std::size_t s, std::size_t r_prev, Type report) const;
    int horizon() const { return T_; }

private:
    const ModelPrimitives* model_;
    int T_;
    std::vector<std::vector<double>> v_;
};

double consumer_value(const ModelPrimitives& model, const Mechanism& m, const ReportingStrategy& r, Type theta1);

struct ProfitSplit {
    double total;
    double low;
    double high;
};
ProfitSplit firm_profit(const ModelPrimitives& model, const Mechanism& m);

struct ICReport {
    double max_violation = 0.0;
    /// Best gain conditional on the initial type.
    std::array<double, 2> per_type{0.0, 0.0};
    /// Same quantity from backward induction on (period, public history, current type).
    double dp_violation = 0.0;
    std::uint64_t strategies = 0;
    bool exhaustive = true;
    bool ic = true;
};

/// Maximum over pure reporting strategies of the value gain over truth-telling.
ICReport check_IC_exhaustive(const ModelPrimitives& model, const Mechanism& m, double tol = 1e-8,
                             std::uint64_t budget = 10'000'000, Exec exec = Exec::parallel);

/// Best-response gain by backward induction only, per initial type.
std::array<double, 2> best_response_gain(const ModelPrimitives& model, const Mechanism& m);

struct OsicSlack {
    int t;
    std::size_t signal_rank;
    double slack;
    bool binding;
};

/// One entry per (t, signal history) along the all-h report path.
std::vector<OsicSlack> check_OSIC(const ModelPrimitives& model, const Mechanism& m, double tol = 1e-7);

bool check_flow_monotonicity(const ModelPrimitives& model, const FlowContract& z);

struct MonotonicityResult {
    bool holds;
    /// Smallest slack of the compared inequalities (negative on failure).
    double margin;
};

/// Continuation signal monotonicity at period t < T, node (s, r_prev), period-t report h.
MonotonicityResult check_CSM(const ModelPrimitives& model, const ValueTable& vt, int t, std::size_t s,
                             std::size_t r_prev, double tol = 1e-9);
/// Continuation type monotonicity: V_{t+1}(., h) > V_{t+1}(., l) after a period-t report h.
MonotonicityResult check_CTM(const ModelPrimitives& model, const ValueTable& vt, int t, std::size_t s,
                             std::size_t r_prev);
double deviation_value(const ValueTable& vt, int t, Type i, std::size_t s, std::size_t r_prev);

/// Largest consumption variance over subtrees that start with a first l report.
double post_low_consumption_variance(const ModelPrimitives& model, const Mechanism& m);

void write_mechanism(std::ostream& os, const ModelPrimitives& model, const Mechanism& m);
Mechanism read_mechanism(std::istream& is);
/// Reads and checks the shape against the model (income levels and signal map); ConfigError on mismatch.
Mechanism read_mechanism(std::istream& is, const ModelPrimitives& model);

std::string signal_history_label(std::size_t rank, int t, int n_signals);
std::string report_history_label(std::size_t rank, int len);

} // namespace dyncontract
