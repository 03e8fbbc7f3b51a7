#include "doctest.h"

#include <cmath>

#include "dyncontract/model.hpp"

using namespace dyncontract;

namespace {

bool has_violation(const ModelPrimitives& m, const std::string& name) {
    for (const auto& v : validate(m))
        if (v.invariant == name)
            return true;
    return false;
}

} // namespace

TEST_CASE("fixture validates") {
    auto m = default_fixture();
    CHECK(validate(m).empty());
    CHECK(validate(default_fixture(SignalStructure::fully_contingent(2))).empty());
}

TEST_CASE("validation reports named violations") {
    auto m = default_fixture();
    auto inc = m.income();
    inc.p_l = inc.p_h;
    CHECK(has_violation(m.with_income(inc), "income first-moment ordering"));

    auto tp = m.types();
    tp.transition = {{{0.5, 0.5}, {0.5, 0.5}}};
    CHECK(has_violation(m.with_types(tp), "persistence"));

    CHECK(has_violation(m.with_signals(SignalStructure::from_map({0, 2})), "signal surjectivity"));
}

TEST_CASE("flow utility and profit") {
    auto m = default_fixture();
    FlowContract c4{4.0, 4.0};
    CHECK(flow_utility(m, c4, Type::high) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(flow_utility(m, c4, Type::low) == flow_utility(m, c4, Type::high));

    // z(1) = 0.16, z(4) = psi(32/15); x = (0.8, 32/15)
    FlowContract z{0.16, (32.0 / 15.0) * (32.0 / 15.0) / 4.0};
    CHECK(z[1] == doctest::Approx(1.137778).epsilon(1e-6));
    CHECK(flow_utility(m, z, Type::high) == doctest::Approx(0.1 * 0.8 + 0.9 * 32.0 / 15.0).epsilon(1e-14));
    CHECK(flow_utility(m, z, Type::high) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(flow_utility(m, z, Type::low) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(flow_profit(m, z, Type::high) == doctest::Approx(2.66).epsilon(1e-12));
    CHECK(flow_profit(m, {0.0, 0.0}, Type::high) == doctest::Approx(3.7).epsilon(1e-14));
    CHECK(flow_profit(m, {1.0, 4.0}, Type::low) == 0.0);
    CHECK_THROWS_AS(flow_utility(m, {-1.0, 1.0}, Type::low), DomainError);
}

TEST_CASE("likelihood ratios") {
    auto m = default_fixture();
    CHECK(likelihood_ratio(m, 4.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(likelihood_ratio(m, 1.0) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(signal_likelihood(m, 0) == doctest::Approx(1.0).epsilon(1e-15));
    auto fc = default_fixture(SignalStructure::fully_contingent(2));
    CHECK(signal_likelihood(fc, 0) == likelihood_ratio(fc, 1.0));
    CHECK(signal_likelihood(fc, 1) == likelihood_ratio(fc, 4.0));
    CHECK_THROWS_AS(likelihood_ratio(m, 2.0), DomainError);

    double s = 0.0, sphi = 0.0;
    for (std::size_t k = 0; k < 2; ++k)
        s += m.p(Type::high, k) * (1.0 - m.ell(k));
    for (int f = 0; f < fc.n_signals(); ++f)
        sphi += fc.signal_prob(Type::high, f) * (1.0 - fc.signal_ell(f));
    CHECK(std::abs(s) <= 1e-12);
    CHECK(std::abs(sphi) <= 1e-12);
    CHECK(m.ell(0) > m.ell(1));
}

TEST_CASE("full insurance consumption") {
    auto m = default_fixture();
    CHECK(full_insurance_consumption(m, 4.0, 1, 1) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(full_insurance_consumption(m, 7.6, 1, 2) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(full_insurance_consumption(m, 0.0, 1, 2) == 0.0);
    CHECK_THROWS_AS(full_insurance_consumption(m, -1.0, 1, 2), InfeasibleError);
}

TEST_CASE("outside option and full information") {
    auto m = default_fixture();
    const double euh = 0.9 * 4.0 + 0.1 * 2.0; // 2 sqrt(4), 2 sqrt(1)
    const double eul = 0.6 * 4.0 + 0.4 * 2.0;
    CHECK(euh == doctest::Approx(3.8));
    CHECK(outside_option(m, Type::high, 1) == doctest::Approx(3.8).epsilon(1e-14));
    CHECK(outside_option(m, Type::high, 2) == doctest::Approx(euh + 0.9 * (0.8 * euh + 0.2 * eul)).epsilon(1e-14));
    CHECK(outside_option(m, Type::high, 2) == doctest::Approx(7.112).epsilon(1e-12));
    CHECK(outside_option(m, Type::low, 2) == doctest::Approx(6.242).epsilon(1e-12));

    auto fi1 = full_info_utility(m, Type::high, 1);
    CHECK(fi1.c == doctest::Approx(3.7).epsilon(1e-14));
    CHECK(fi1.V == doctest::Approx(2.0 * std::sqrt(3.7)).epsilon(1e-14));
    auto fi2 = full_info_utility(m, Type::high, 2);
    CHECK(fi2.c == doctest::Approx((3.7 + 0.9 * (0.8 * 3.7 + 0.2 * 2.8)) / 1.9).epsilon(1e-14));
    CHECK(fi2.c == doctest::Approx(3.614737).epsilon(1e-6));

    for (int T = 1; T <= 5; ++T) {
        CHECK(outside_option(m, Type::high, T) > outside_option(m, Type::low, T));
        for (Type th : {Type::low, Type::high})
            CHECK(full_info_utility(m, th, T).V > outside_option(m, th, T) + 1e-6);
    }

    IncomeModel det{{1.0, 3.0}, {0.5, 0.5}, {0.5, 0.5}};
    auto md = m.with_income(det);
    CHECK(full_info_utility(md, Type::low, 3).c == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("preferences evaluators") {
    for (double rho : {0.4, 0.5, 0.8, 2.0}) {
        for (auto norm : {CrraNormalization::power, CrraNormalization::standard}) {
            auto p = Preferences::crra(rho, 0.9, norm);
            for (double c : {0.01, 0.3, 1.0, 4.0, 17.0}) {
                CHECK(p.psi(p.u(c)) == doctest::Approx(c).epsilon(1e-10));
                double x = p.u(c), h = 1e-5;
                CHECK(p.dpsi(x) == doctest::Approx((p.psi(x + h) - p.psi(x - h)) / (2 * h)).epsilon(1e-6));
                CHECK(p.d2psi(x) == doctest::Approx((p.dpsi(x + h) - p.dpsi(x - h)) / (2 * h)).epsilon(1e-6));
                if (rho != 0.5)
                    CHECK(p.d3psi(x) == doctest::Approx((p.d2psi(x + h) - p.d2psi(x - h)) / (2 * h)).epsilon(1e-5));
                CHECK(p.dpsi_inverse(p.dpsi(x)) == doctest::Approx(x).epsilon(1e-12));
                CHECK(p.dpsi(x) == doctest::Approx(1.0 / p.du(c)).epsilon(1e-12));
            }
        }
    }
    auto cara = Preferences::cara(0.7, 0.9);
    for (double c : {0.0, 0.5, 3.0}) {
        CHECK(cara.psi(cara.u(c)) == doctest::Approx(c).epsilon(1e-10));
        CHECK(cara.dpsi(cara.u(c)) == doctest::Approx(1.0 / cara.du(c)).epsilon(1e-12));
    }
    CHECK(Preferences::crra(0.5, 0.9).u(4.0) == doctest::Approx(4.0));
    CHECK(Preferences::crra(0.5, 0.9, CrraNormalization::standard).u(1.0) == doctest::Approx(0.0));
    CHECK(Preferences::crra(2.0, 0.9).consumption_floor() == 1e-9);
    CHECK(Preferences::crra(0.5, 0.9).consumption_floor() == 0.0);
    CHECK_THROWS_AS(Preferences::crra(1.0, 0.9), DomainError);
}

TEST_CASE("custom preferences with numeric inversion") {
    Preferences::CustomFunctions f;
    f.u = [](double c) { return 2.0 * std::sqrt(c); };
    f.du = [](double c) { return 1.0 / std::sqrt(c); };
    f.d2u = [](double c) { return -0.5 / (c * std::sqrt(c)); };
    f.psi = [](double x) { return x * x / 4.0; };
    f.dpsi = [](double x) { return x / 2.0; };
    f.d2psi = [](double) { return 0.5; };
    f.d3psi = [](double) { return 0.0; };
    f.u_at_zero = 0.0;
    auto p = Preferences::custom(f, 0.9);
    CHECK(p.dpsi_inverse(1.3) == doctest::Approx(2.6).epsilon(1e-12));
    CHECK(p.consumption_floor() == 0.0);
}

TEST_CASE("supermodularity certificate") {
    CHECK(supermodularity_certificate(Preferences::crra(0.5, 0.9), 0.1, 5.0, 50) == Psi3Sign::zero);
    CHECK(supermodularity_certificate(Preferences::crra(0.5, 0.9, CrraNormalization::standard), 0.1, 5.0, 50) ==
          Psi3Sign::zero);
    CHECK(supermodularity_certificate(Preferences::crra(0.8, 0.9), 0.1, 5.0, 50) == Psi3Sign::positive);
    CHECK(supermodularity_certificate(Preferences::crra(0.4, 0.9), 0.1, 5.0, 50) == Psi3Sign::negative);
    CHECK(supermodularity_certificate(Preferences::cara(0.3, 0.9), 0.1, 3.0, 50) == Psi3Sign::positive);
    CHECK(supermodularity_certificate(Preferences::cara(2.0, 0.9), 0.0, 0.49, 50) == Psi3Sign::positive);
}
