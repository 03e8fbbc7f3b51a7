#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "dyncontract/auxcost.hpp"
#include "dyncontract/mechanism.hpp"

using namespace dyncontract;

namespace {

Mechanism one_period_fixture(const ModelPrimitives& m) {
    Mechanism mech(1, 2, m.n_signals());
    mech.set_contract(1, 0, 1, solve_aux(m, {2.0, 0.4}).zeta); // report h
    mech.set_contract(1, 0, 0, {0.64, 0.64});                  // report l
    return mech;
}

Mechanism random_mechanism(const ModelPrimitives& m, int T, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.2, 4.0);
    Mechanism mech(T, m.n_income(), m.n_signals());
    for (int t = 1; t <= T; ++t)
        for (std::size_t s = 0; s < mech.n_signal_histories(t); ++s)
            for (std::size_t r = 0; r < mech.n_report_histories(t); ++r)
                for (std::size_t k = 0; k < m.n_income(); ++k)
                    mech.flow(t, s, r)[k] = U(rng);
    return mech;
}

} // namespace

TEST_CASE("history nodes") {
    HistoryNode root;
    auto ch = root.children(3, 2);
    CHECK(ch.size() == 4);
    for (const auto& c : ch) {
        CHECK(c.t == 2);
        CHECK(c.children(3, 2).size() == 4);
        for (const auto& g : c.children(3, 2))
            CHECK(g.children(3, 2).empty());
    }
    HistoryNode n{3, {1, 0}, {Type::high, Type::low}};
    CHECK(n.signal_rank(2) == 2);
    CHECK(n.report_rank() == 2);
    CHECK(signal_history_label(2, 3, 2) == "1.0");
    CHECK(report_history_label(2, 2) == "hl");
}

TEST_CASE("values and profits, one period") {
    auto m = default_fixture();
    auto mech = one_period_fixture(m);
    CHECK(consumer_value(m, mech, ReportingStrategy::truthful(), Type::high) == doctest::Approx(2.0).epsilon(1e-12));
    ReportingStrategy lie{[](const PrivateHistory& h) { return h.current == Type::high ? Type::low : h.current; }};
    CHECK(consumer_value(m, mech, lie, Type::high) == doctest::Approx(1.6).epsilon(1e-12));
    auto p = firm_profit(m, mech);
    CHECK(p.high == doctest::Approx(2.66).epsilon(1e-12));
    CHECK(p.low == doctest::Approx(2.16).epsilon(1e-12));
    CHECK(p.total == doctest::Approx(2.41).epsilon(1e-12));
    // the low type is exactly indifferent
    auto ic = check_IC_exhaustive(m, mech);
    CHECK(ic.exhaustive);
    CHECK(ic.max_violation <= 1e-12);
    CHECK(ic.strategies == 4);

    // raise the high contract: low type gains by claiming high
    Mechanism bad = mech;
    bad.set_contract(1, 0, 1, {0.3, 1.3});
    double gap = flow_utility(m, {0.3, 1.3}, Type::low) - flow_utility(m, {0.64, 0.64}, Type::low);
    REQUIRE(gap > 0);
    auto ic2 = check_IC_exhaustive(m, bad);
    CHECK(ic2.per_type[0] == doctest::Approx(gap).epsilon(1e-12));
    CHECK(ic2.max_violation == doctest::Approx(0.5 * gap).epsilon(1e-12));
    CHECK_FALSE(ic2.ic);
    auto osic = check_OSIC(m, bad);
    REQUIRE(osic.size() == 1);
    CHECK(osic[0].slack == doctest::Approx(-gap).epsilon(1e-12));
}

TEST_CASE("constant and pass-through mechanisms") {
    auto m = default_fixture(SignalStructure::fully_contingent(2));
    auto c = Mechanism::constant(3, 2, 2, 2.25);
    for (Type th : {Type::low, Type::high})
        CHECK(consumer_value(m, c, ReportingStrategy::truthful(), th) ==
              doctest::Approx(m.prefs().u(2.25) * m.annuity(1, 3)).epsilon(1e-12));
    ReportingStrategy alt{[](const PrivateHistory& h) { return h.t % 2 ? Type::high : Type::low; }};
    CHECK(consumer_value(m, c, alt, Type::low) == doctest::Approx(m.prefs().u(2.25) * m.annuity(1, 3)).epsilon(1e-12));
    auto ic = check_IC_exhaustive(m, c);
    CHECK(std::abs(ic.max_violation) <= 1e-12);
    for (const auto& o : check_OSIC(m, c)) {
        CHECK(std::abs(o.slack) <= 1e-12);
        CHECK(o.binding);
    }
    ValueTable vt(m, c);
    auto csm = check_CSM(m, vt, 1, 0, 0);
    CHECK(csm.holds);
    CHECK_FALSE(check_CTM(m, vt, 1, 0, 0).holds);
    CHECK(post_low_consumption_variance(m, c) == 0.0);

    auto pt = Mechanism::pass_through(m, 3);
    auto p = firm_profit(m, pt);
    CHECK(std::abs(p.total) <= 1e-14);
    CHECK(std::abs(p.low) <= 1e-14);
    CHECK(std::abs(p.high) <= 1e-14);
}

TEST_CASE("forward enumeration agrees with the value table") {
    std::mt19937_64 rng(11);
    for (int T : {1, 2, 3}) {
        for (auto sig : {SignalStructure::realization_independent(2), SignalStructure::fully_contingent(2)}) {
            auto m = default_fixture(sig);
            auto mech = random_mechanism(m, T, rng);
            ValueTable vt(m, mech);
            for (Type th : {Type::low, Type::high})
                CHECK(consumer_value(m, mech, ReportingStrategy::truthful(), th) ==
                      doctest::Approx(vt.V(1, 0, 0, th)).epsilon(1e-12));
            // Bellman consistency at every node
            for (int t = 1; t < T; ++t)
                for (std::size_t s = 0; s < mech.n_signal_histories(t); ++s)
                    for (std::size_t rp = 0; rp < ipow(2, t - 1); ++rp)
                        for (Type th : {Type::low, Type::high}) {
                            double flow = flow_utility(m, mech.contract(t, s, rp * 2 + type_index(th)), th);
                            double rhs = flow + m.delta() * vt.continuation(t, th, s, rp, th);
                            CHECK(std::abs(vt.V(t, s, rp, th) - rhs) <= 1e-10);
                        }
        }
    }
}

TEST_CASE("enumeration maximum equals the backward-induction best response") {
    std::mt19937_64 rng(5);
    struct Case {
        int T;
        SignalStructure sig;
    };
    std::vector<Case> cases{{2, SignalStructure::realization_independent(2)},
                            {2, SignalStructure::fully_contingent(2)},
                            {3, SignalStructure::realization_independent(2)}};
    for (const auto& c : cases) {
        auto m = default_fixture(c.sig);
        for (int rep = 0; rep < 3; ++rep) {
            auto mech = random_mechanism(m, c.T, rng);
            auto ser = check_IC_exhaustive(m, mech, 1e-8, 10'000'000, Exec::serial);
            auto par = check_IC_exhaustive(m, mech, 1e-8, 10'000'000, Exec::parallel);
            CHECK(ser.exhaustive);
            CHECK(ser.max_violation == par.max_violation);
            CHECK(ser.strategies == par.strategies);
            CHECK(ser.max_violation == doctest::Approx(ser.dp_violation).epsilon(1e-12));
            auto g = best_response_gain(m, mech);
            CHECK(ser.per_type[0] == doctest::Approx(g[0]).epsilon(1e-12));
            CHECK(ser.per_type[1] == doctest::Approx(g[1]).epsilon(1e-12));
            CHECK(ser.max_violation >= -1e-12);
        }
    }
}

TEST_CASE("history-dependent strategies never beat the best response") {
    std::mt19937_64 rng(9);
    auto m = default_fixture(SignalStructure::fully_contingent(2));
    auto mech = random_mechanism(m, 3, rng);
    auto g = best_response_gain(m, mech);
    ValueTable vt(m, mech);
    for (int rep = 0; rep < 30; ++rep) {
        std::uint64_t seed = rng();
        ReportingStrategy r{[seed](const PrivateHistory& h) {
            std::uint64_t x = seed;
            for (auto k : h.incomes)
                x = x * 1315423911ULL + k + 1;
            for (auto a : h.types)
                x = x * 2654435761ULL + type_index(a) + 3;
            x = x * 97 + type_index(h.current) + 7 * h.t;
            x ^= x >> 29;
            return (x >> 7) & 1U ? Type::high : Type::low;
        }};
        for (Type th : {Type::low, Type::high})
            CHECK(consumer_value(m, mech, r, th) - vt.V(1, 0, 0, th) <= g[type_index(th)] + 1e-12);
    }
}

TEST_CASE("budget exhaustion is flagged") {
    std::mt19937_64 rng(3);
    auto m = default_fixture(SignalStructure::fully_contingent(2));
    auto mech = random_mechanism(m, 3, rng);
    auto r = check_IC_exhaustive(m, mech, 1e-8, 1000);
    CHECK_FALSE(r.exhaustive);
    CHECK_FALSE(r.ic);
    CHECK(r.strategies == 1000);
}

TEST_CASE("flow monotonicity and the deviation inequality") {
    auto m = default_fixture();
    CHECK(check_flow_monotonicity(m, {1.0, 1.0}));
    CHECK(check_flow_monotonicity(m, {0.16, 1.137778}));
    CHECK_FALSE(check_flow_monotonicity(m, {1.5, 1.0}));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(0.0, 5.0);
    for (int rep = 0; rep < 200; ++rep) {
        double a = U(rng), b = U(rng), c = U(rng);
        FlowContract z{std::min(a, b), std::max(a, b)};
        FlowContract zc{c, c};
        REQUIRE(check_flow_monotonicity(m, z));
        double lhs = flow_utility(m, z, Type::high) - flow_utility(m, zc, Type::high);
        double rhs = flow_utility(m, z, Type::low) - flow_utility(m, zc, Type::low);
        CHECK(lhs >= rhs - 1e-12);
    }
}

TEST_CASE("CSM and CTM imply ordered deviation values") {
    std::mt19937_64 rng(21);
    auto m = default_fixture(SignalStructure::fully_contingent(2));
    int hits = 0;
    for (int rep = 0; rep < 400; ++rep) {
        auto mech = random_mechanism(m, 2, rng);
        ValueTable vt(m, mech);
        if (check_CSM(m, vt, 1, 0, 0).holds && check_CTM(m, vt, 1, 0, 0).holds) {
            ++hits;
            CHECK(deviation_value(vt, 1, Type::high, 0, 0) >= deviation_value(vt, 1, Type::low, 0, 0) - 1e-12);
        }
    }
    CHECK(hits > 10);
}

TEST_CASE("serialization round trip") {
    std::mt19937_64 rng(4);
    auto m = default_fixture(SignalStructure::fully_contingent(2));
    auto mech = random_mechanism(m, 3, rng);
    std::stringstream ss;
    write_mechanism(ss, m, mech);
    auto back = read_mechanism(ss, m);
    CHECK(back == mech);
    std::stringstream again;
    write_mechanism(again, m, back);
    std::stringstream first;
    write_mechanism(first, m, mech);
    CHECK(again.str() == first.str());

    std::stringstream wrong(first.str());
    CHECK_THROWS_AS(read_mechanism(wrong, default_fixture()), ConfigError);
    std::stringstream broken("format 1\nhorizon 1\nincome_levels 1 4\nsignal_map 0 0\nnode 1 - h 1 2\n");
    CHECK_THROWS_AS(read_mechanism(broken), ConfigError);
}
