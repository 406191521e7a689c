#include "virtlase/gain.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace virtlase;
using doctest::Approx;

namespace {

struct Fixture
{
    GainModel model{LaserSetup{}};
    CalibrationAnchors anchors = [] {
        CalibrationAnchors a;
        a.threshold_point.atoms = 5000.0;
        a.budget_point.atoms = 6000.0;
        a.budget_point.pump_power = 4e-3;
        return a;
    }();
    CalibrationConstants cal = calibrate(model, anchors);
    double kappa = model.kappa();
};

Fixture& fixture()
{
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("two-photon resonance")
{
    CHECK(two_photon_resonance(5e6, -35e6) == -30e6);
    CHECK(two_photon_resonance(-5e6, -35e6) == -40e6);
    CHECK(two_photon_resonance(0.0, -27e6) == -27e6);
    CHECK(two_photon_resonance(1e6, -35e6 + 3e6) - two_photon_resonance(1e6, -35e6) == 3e6);
    CHECK(unit_lorentzian(0.0, 29e6) == 1.0);
    CHECK(unit_lorentzian(14.5e6, 29e6) == Approx(0.5));
}

TEST_CASE("channel structure of the gain")
{
    auto& f = fixture();
    const OperatingPoint op;
    const FamilyGain g = f.model.family_gain(op, 0, CalibrationConstants{});
    CHECK(g.per_m[2] >= 10.0 * g.per_m[0]);
    CHECK(g.per_m[2] >= 10.0 * g.per_m[1]);
    CHECK(g.total == Approx(g.per_m[0] + g.per_m[1] + g.per_m[2]).epsilon(1e-15));

    OperatingPoint zero_pol = op;
    zero_pol.pump_polarization = linear_polarization(0.0);
    CHECK(f.model.family_gain(zero_pol, 0, f.cal).total == 0.0);

    OperatingPoint dark = op;
    dark.mot_saturation = 0.0;
    for (int family : {0, 37, 74, 111})
        CHECK(f.model.family_gain(dark, family, f.cal).total == 0.0);

    OperatingPoint no_field = op;
    no_field.b_offset = Vec3::Zero();
    CHECK_THROWS_AS(f.model.family_gain(no_field, 0, f.cal), QuantizationAxisError);
}

TEST_CASE("uncalibrated gain is within an order of magnitude of kappa")
{
    auto& f = fixture();
    OperatingPoint op;
    op.atoms = 5000.0;
    const double ratio = f.model.family_gain(op, 0, CalibrationConstants{}).total / f.kappa;
    CHECK(ratio > 0.1);
    CHECK(ratio < 10.0);
}

TEST_CASE("calibration anchors")
{
    auto& f = fixture();
    CHECK(f.cal.gain_scale > 0.0);
    CHECK(f.cal.saturation_photons > 0.0);
    OperatingPoint op = f.anchors.threshold_point;
    CHECK(threshold_solve(f.model, f.cal, ThresholdVariable::atoms, op) == Approx(5000.0).epsilon(2e-4));
    const auto budget = steady_state(f.model, f.cal, f.anchors.budget_point);
    CHECK(budget.families.front().photons == Approx(6e5).epsilon(1e-9));
    for (std::size_t i = 1; i < budget.families.size(); ++i)
        CHECK_FALSE(budget.families[i].lasing);

    CalibrationAnchors bad = f.anchors;
    bad.threshold_point.pump_polarization = linear_polarization(0.0);
    CHECK_THROWS_AS(calibrate(f.model, bad), CalibrationError);
}

TEST_CASE("pump-power thresholds by polarization")
{
    auto& f = fixture();
    auto threshold = [&](const Jones& pol) {
        OperatingPoint op;
        op.pump_polarization = pol;
        return threshold_solve(f.model, f.cal, ThresholdVariable::pump_power, op);
    };
    const double t90 = threshold(linear_polarization(90.0));
    CHECK(threshold(linear_polarization(45.0)) / t90 == Approx(2.0).epsilon(1e-6));
    CHECK(threshold(linear_polarization(-45.0)) / t90 == Approx(2.0).epsilon(1e-6));
    CHECK(threshold(circular_polarization(Handedness::left)) / t90 == Approx(2.0).epsilon(1e-6));
    CHECK_THROWS_AS(threshold(linear_polarization(0.0)), NoThresholdError);

    OperatingPoint op;
    CHECK(threshold_solve(f.model, f.cal, ThresholdVariable::pump_power, op, 0) <
          threshold_solve(f.model, f.cal, ThresholdVariable::pump_power, op, 37));
}

TEST_CASE("rate equation fixed points")
{
    const double kappa = 1.0, nsat = 1e6;
    CHECK(single_family_photons(2.0, kappa, nsat) / nsat == Approx(1.0).epsilon(1e-5));
    CHECK(single_family_photons(0.5, kappa, nsat) == Approx(1.0).epsilon(1e-5));
    CHECK(single_family_photons(0.5, kappa, 1e300) == Approx(1.0).epsilon(1e-12));
    CHECK(single_family_photons(0.0, kappa, nsat) == 0.0);

    double previous = 0.0, below_slope = 0.0, above_slope = 0.0;
    for (double g = 0.05; g < 3.0; g += 0.05) {
        const double n = single_family_photons(g, kappa, nsat);
        CHECK(n > previous);
        if (std::abs(g - 0.5) < 1e-9)
            below_slope = single_family_photons(g + 1e-3, kappa, nsat) - n;
        if (std::abs(g - 1.5) < 1e-9)
            above_slope = single_family_photons(g + 1e-3, kappa, nsat) - n;
        previous = n;
    }
    CHECK(above_slope > 1e3 * below_slope);

    const std::vector<double> one{1.7};
    CHECK(solve_rate_equations(one, kappa, nsat).front() == Approx(single_family_photons(1.7, kappa, nsat)));
}

TEST_CASE("multi-family solution satisfies every family's own equation")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> gains(4);
        for (auto& g : gains)
            g = u(rng);
        const auto n = solve_rate_equations(gains, 1.0, 1e6);
        CHECK(rate_equation_residual(gains, n, 1.0, 1e6) < 1e-9);
        for (double x : n)
            CHECK(x >= 0.0);
    }
    const std::vector<double> below{0.5, 0.25};
    const auto n = solve_rate_equations(below, 1.0, 1e12);
    CHECK(n[0] == Approx(1.0).epsilon(1e-6));
    CHECK(n[1] == Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("steady state: lasing families appear in order as pump rises")
{
    auto& f = fixture();
    std::size_t previous = 0;
    bool saw_single = false, saw_two = false;
    for (double p = 0.0; p <= 2e-4; p += 2e-6) {
        OperatingPoint op;
        op.pump_power = p;
        const auto s = steady_state(f.model, f.cal, op);
        std::size_t lasing = 0;
        for (const auto& fam : s.families)
            lasing += fam.lasing;
        CHECK(lasing >= previous);
        // only a prefix of the ladder can lase
        for (std::size_t i = 0; i < lasing; ++i)
            CHECK(s.families[i].lasing);
        saw_single |= lasing == 1;
        saw_two |= lasing == 2;
        previous = lasing;
    }
    CHECK(saw_single);
    CHECK(saw_two);
}

TEST_CASE("output power and monotonicity in atom number")
{
    auto& f = fixture();
    const auto& cav = f.model.setup().cavity;
    const double lambda = f.model.setup().pump_line.wavelength;
    CHECK(output_power(0.0, cav, lambda) == 0.0);
    CHECK(output_power(6e5, cav, lambda) == Approx(4.71e-9).epsilon(2e-3));
    CHECK(output_power(1.2e6, cav, lambda) == Approx(2.0 * output_power(6e5, cav, lambda)).epsilon(1e-15));

    double previous = 0.0;
    for (double atoms = 0.0; atoms <= 3e4; atoms += 500.0) {
        OperatingPoint op;
        op.atoms = atoms;
        const double p = steady_state(f.model, f.cal, op).total_power();
        CHECK(p >= previous);
        previous = p;
    }
}

TEST_CASE("two-photon structure of the gain")
{
    auto& f = fixture();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> det(-15e6, 15e6), shift(-5e6, 5e6);
    for (int trial = 0; trial < 50; ++trial) {
        OperatingPoint op;
        op.pump_detuning = det(rng);
        op.cavity_detuning = op.pump_detuning + op.mot_detuning + shift(rng);
        const double g = f.model.family_gain(op, 0, f.cal).per_m[2];

        // shift pump, cavity and the m = +1 Zeeman level together
        const double a = shift(rng);
        OperatingPoint moved = op;
        moved.pump_detuning += a;
        moved.cavity_detuning += a;
        const double per_gauss = 1.5 * constants::bohr_hz_per_gauss;
        moved.b_offset *= (op.b_offset.norm() + a / per_gauss) / op.b_offset.norm();
        CHECK(f.model.family_gain(moved, 0, f.cal).per_m[2] == Approx(g).epsilon(1e-9));

        OperatingPoint far = op;
        far.cavity_detuning = op.pump_detuning + op.mot_detuning + 1e12;
        CHECK(f.model.family_gain(far, 0, f.cal).total < 1e-9 * f.kappa);
    }
}

TEST_CASE("grid axis")
{
    CHECK(GridAxis{-1e6, 1e6, 1e6}.values() == std::vector<double>{-1e6, 0.0, 1e6});
    CHECK(GridAxis{2.0, 2.0, 1.0}.values().empty());
    CHECK(GridAxis{-60e6, 0.0, 1e6}.values().size() == 61);
    CHECK_THROWS_AS(GridAxis({0.0, 1.0, 0.0}).values(), ParameterError);
    CHECK_THROWS_AS(GridAxis({1.0, 0.0, 0.5}).values(), ParameterError);
}

TEST_CASE("detuning map lobes")
{
    auto& f = fixture();
    const OperatingPoint op;
    const auto map = detuning_map(f.model, f.cal, op, {-10e6, 10e6, 1e6}, {-60e6, 0.0, 1e6}, 2);
    CHECK(map.cells.size() == 21 * 61);
    const auto lobes = find_lobes(map);
    REQUIRE(lobes.size() == 2);
    for (const auto& lobe : lobes) {
        const double sign = lobe.peak_pump > 0 ? 1.0 : -1.0;
        CHECK(std::abs(lobe.peak_pump - sign * 5e6) <= 1e6);
        CHECK(std::abs(lobe.peak_cavity - (sign * 5e6 - 35e6)) <= 1e6);
        CHECK(lobe.cavity_fwhm >= 15e6);
        CHECK(lobe.cavity_fwhm <= 45e6);
    }

    const auto serial = detuning_map(f.model, f.cal, op, {-10e6, 10e6, 1e6}, {-60e6, 0.0, 1e6}, 1);
    for (std::size_t i = 0; i < map.cells.size(); ++i)
        CHECK(map.cells[i].total_power == serial.cells[i].total_power);

    OperatingPoint zero_pol = op;
    zero_pol.pump_polarization = linear_polarization(0.0);
    const auto empty = detuning_map(f.model, f.cal, zero_pol, {-10e6, 10e6, 1e6}, {-60e6, 0.0, 1e6});
    CHECK(find_lobes(empty).empty());

    OperatingPoint no_field = op;
    no_field.b_offset = Vec3::Zero();
    const auto missing = detuning_map(f.model, f.cal, no_field, {-1e6, 1e6, 1e6}, {-31e6, -29e6, 1e6});
    for (const auto& cell : missing.cells)
        CHECK_FALSE(cell.total_power.has_value());
}

TEST_CASE("optimum scans")
{
    auto& f = fixture();
    const OperatingPoint op;
    const auto mot = optimum_scan(f.model, f.cal, op, ScanVariable::mot_detuning, {-40e6, -35e6, -30e6, -25e6, -20e6});
    CHECK(mot.cavity_fit.slope == Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(mot.pump_fit.slope) < 1e-3);
    CHECK(std::abs(mot.two_photon_offset) < 1e3);

    const auto field = optimum_scan(f.model, f.cal, op, ScanVariable::b_offset, {2.0, 2.25, 2.5, 2.75, 3.0});
    CHECK(field.pump_fit.slope == Approx(2.10e6).epsilon(0.02 / 2.10));

    OperatingPoint dark = op;
    dark.mot_saturation = 0.0;
    const auto flat = optimum_scan(f.model, f.cal, dark, ScanVariable::mot_detuning, {-40e6, -30e6});
    for (const auto& p : flat.points)
        CHECK_FALSE(p.pump_opt.has_value());
}

TEST_CASE("linear fit")
{
    const auto fit = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
    CHECK(fit.slope == Approx(2.0));
    CHECK(fit.intercept == Approx(1.0));
    CHECK(fit.points == 4);
}
