#include "virtlase/config.hpp"
#include "virtlase/errors.hpp"

#include <doctest.h>

using namespace virtlase;
using doctest::Approx;

TEST_CASE("unit suffixes")
{
    CHECK(parse_quantity("5 MHz", Dimension::frequency) == 5e6);
    CHECK(parse_quantity("-35MHz", Dimension::frequency) == -35e6);
    CHECK(parse_quantity("70 kHz", Dimension::frequency) == 7e4);
    CHECK(parse_quantity("7 mW", Dimension::power) == 7e-3);
    CHECK(parse_quantity("350 μW", Dimension::power) == 350e-6);
    CHECK(parse_quantity("2.4 mm", Dimension::length) == 2.4e-3);
    CHECK(parse_quantity("90 um", Dimension::length) == 90e-6);
    CHECK(parse_quantity("4.78 cm", Dimension::length) == 4.78e-2);
    CHECK(parse_quantity("2 mK", Dimension::temperature) == 2e-3);
    CHECK(parse_quantity("2.6us", Dimension::time) == 2.6e-6);
    CHECK(parse_quantity("1.5e-1 ms", Dimension::time) == 1.5e-4);
    CHECK(parse_quantity("36 G/cm", Dimension::gradient) == 3600.0);
    CHECK(parse_quantity("2.38 G", Dimension::field) == 2.38);
    CHECK(parse_quantity("1e6", Dimension::frequency) == 1e6);
    CHECK_THROWS_AS(parse_quantity("5 mW", Dimension::frequency), ParameterError);
    CHECK_THROWS_AS(parse_quantity("MHz", Dimension::frequency), ParameterError);
    CHECK_THROWS_AS(parse_quantity("1.2.3 MHz", Dimension::frequency), ParameterError);
}

TEST_CASE("documented defaults")
{
    const RunConfig c = parse_config_string("");
    CHECK(c.op.atoms == 1e4);
    CHECK(c.setup.ensemble.total_atoms == 1e7);
    CHECK(c.setup.radial_gradient == 1800.0);
    CHECK(c.op.mot_detuning == -35e6);
    CHECK(c.op.pump_power == 7e-3);
    CHECK(c.setup.cavity.kappa == Approx(constants::two_pi * 70e3));
    CHECK(c.setup.cavity.length == 4.78e-2);
    CHECK(c.setup.families == std::vector<int>{0, 37, 74, 111});
    CHECK(c.op.b_offset(0) == 2.38);
    CHECK(c.calib_atoms == 5000.0);
    CHECK(c.seed == 1);
}

TEST_CASE("parsing a config file")
{
    const RunConfig c = parse_config_string("# comment\n"
                                            "pump_power = 4 mW   # trailing\n"
                                            "mot_gradient = 30 G/cm\n"
                                            "cavity_kappa = 80 kHz\n"
                                            "b_offset = 0, 1.5, 0 G\n"
                                            "pump_polarization = linear:45\n"
                                            "families = 0,37\n"
                                            "doppler = on\n"
                                            "seed = 99\n");
    CHECK(c.op.pump_power == 4e-3);
    CHECK(c.setup.radial_gradient == 1500.0);
    CHECK(c.setup.cavity.kappa == constants::two_pi * 8e4);
    CHECK(c.op.b_offset == Vec3(0.0, 1.5, 0.0));
    CHECK(c.op.pump_polarization == linear_polarization(45.0));
    CHECK(c.setup.families == std::vector<int>{0, 37});
    CHECK(c.setup.doppler_broadening);
    CHECK(c.seed == 99);

    CHECK_THROWS_AS(parse_config_string("pump_powr = 4 mW\n"), ParameterError);
    CHECK_THROWS_AS(parse_config_string("pump_power = 4 mW\npump_power = 5 mW\n"), ParameterError);
    CHECK_THROWS_AS(parse_config_string("pump_power 4 mW\n"), ParameterError);
    CHECK_THROWS_AS(parse_config_string("output_fraction = 1.5\n"), ParameterError);
    CHECK_THROWS_AS(parse_config_string("families = 37,74\n"), ParameterError);
    CHECK_THROWS_AS(parse_config_string("cloud_radius = -1 mm\n"), ParameterError);
    CHECK_THROWS_AS(parse_config_string("pump_polarization = diagonal\n"), ParameterError);
}

TEST_CASE("canonical form round-trips exactly")
{
    RunConfig c;
    c.op.pump_power = 0.1 + 0.2;
    c.setup.cavity.kappa = 123456.789012345;
    c.op.b_offset = Vec3(1.0 / 3.0, -2.0 / 7.0, 1e-300);
    c.op.pump_polarization = linear_polarization(33.3);
    c.setup.radial_gradient = 1234.5678901234567;
    c.seed = 0xffffffffffffffffull;
    const std::string text = serialize_config(c);
    const RunConfig back = parse_config_string(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.op.pump_power == c.op.pump_power);
    CHECK(back.setup.cavity.kappa == c.setup.cavity.kappa);
    CHECK(back.op.b_offset == c.op.b_offset);
    CHECK(back.op.pump_polarization == c.op.pump_polarization);
    CHECK(back.setup.radial_gradient == c.setup.radial_gradient);
    CHECK(back.seed == c.seed);
    CHECK(config_hash(back) == config_hash(c));

    c.op.pump_polarization = Jones(std::complex<double>(0.6, 0.1), std::complex<double>(0.0, -0.79));
    CHECK(parse_config_string(serialize_config(c)).op.pump_polarization == c.op.pump_polarization);
    c.op.pump_polarization = circular_polarization(Handedness::right);
    CHECK(format_polarization(c.op.pump_polarization) == "circular:R");
}

TEST_CASE("config hash ignores the seed only")
{
    RunConfig a, b;
    b.seed = 12345;
    CHECK(config_hash(a) == config_hash(b));
    b.op.pump_detuning += 1.0;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("every key appears in the canonical form")
{
    const std::string text = serialize_config(RunConfig{});
    for (const auto& key : config_keys())
        CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("shipped example config equals the defaults")
{
    const RunConfig shipped = load_config(std::string(VIRTLASE_FIXTURES) + "/../../configs/default.conf");
    CHECK(serialize_config(shipped) == serialize_config(RunConfig{}));
}
