#include "virtlase/config.hpp"
#include "virtlase/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace virtlase {

CalibrationAnchors RunConfig::anchors() const
{
    CalibrationAnchors a;
    a.threshold_atoms = calib_atoms;
    a.threshold_point = op;
    a.threshold_point.atoms = calib_atoms;
    a.budget_photons = budget_photons;
    a.budget_point = op;
    a.budget_point.atoms = budget_atoms;
    a.budget_point.pump_power = budget_pump_power;
    return a;
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            return parts;
        start = pos + 1;
    }
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Trailing unit text: everything after the last digit or decimal point.
std::pair<std::string_view, std::string_view> split_unit(std::string_view text)
{
    text = trim(text);
    std::size_t end = text.size();
    while (end > 0 && !std::isdigit(static_cast<unsigned char>(text[end - 1])) && text[end - 1] != '.')
        --end;
    return {trim(text.substr(0, end)), trim(text.substr(end))};
}

// Exact decimal scaling: "2.4" with exponent -3 is parsed as "2.4e-3" so the
// result is the correctly rounded value of the written quantity.
double parse_scaled(std::string_view number, int exponent)
{
    std::string s(number);
    if (s.empty())
        throw ParameterError("missing number");
    int own = 0;
    const auto epos = s.find_first_of("eE");
    if (epos != std::string::npos) {
        char* end = nullptr;
        const long e = std::strtol(s.c_str() + epos + 1, &end, 10);
        if (*end != '\0' || epos + 1 == s.size())
            throw ParameterError("malformed number '" + std::string(number) + "'");
        own = static_cast<int>(e);
        s.resize(epos);
    }
    s += "e" + std::to_string(own + exponent);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (*end != '\0' || s.front() == 'e')
        throw ParameterError("malformed number '" + std::string(number) + "'");
    if (!std::isfinite(v))
        throw ParameterError("non-finite number '" + std::string(number) + "'");
    return v;
}

struct UnitDef
{
    std::string_view name;
    int exponent;     // power of ten
    double factor;    // applied after the decimal scaling
};

std::vector<UnitDef> units_for(Dimension dim)
{
    switch (dim) {
    case Dimension::none:
        return {};
    case Dimension::frequency:
        return {{"Hz", 0, 1.0}, {"kHz", 3, 1.0}, {"MHz", 6, 1.0}, {"GHz", 9, 1.0}};
    case Dimension::power:
        return {{"W", 0, 1.0}, {"mW", -3, 1.0}, {"uW", -6, 1.0}, {"μW", -6, 1.0}, {"nW", -9, 1.0}};
    case Dimension::length:
        return {{"m", 0, 1.0}, {"cm", -2, 1.0}, {"mm", -3, 1.0}, {"um", -6, 1.0}, {"μm", -6, 1.0}, {"nm", -9, 1.0}};
    case Dimension::temperature:
        return {{"K", 0, 1.0}, {"mK", -3, 1.0}, {"uK", -6, 1.0}, {"μK", -6, 1.0}};
    case Dimension::time:
        return {{"s", 0, 1.0}, {"ms", -3, 1.0}, {"us", -6, 1.0}, {"μs", -6, 1.0}, {"ns", -9, 1.0}};
    case Dimension::field:
        return {{"G", 0, 1.0}, {"mG", -3, 1.0}, {"T", 4, 1.0}};
    case Dimension::gradient:
        return {{"G/m", 0, 1.0}, {"G/cm", 2, 1.0}, {"T/m", 4, 1.0}};
    case Dimension::angle:
        return {{"deg", 0, 1.0}, {"rad", 0, 180.0 / constants::pi}};
    case Dimension::mass:
        return {{"kg", 0, 1.0}, {"u", 0, constants::atomic_mass_unit}};
    }
    return {};
}

std::string_view si_unit(Dimension dim)
{
    switch (dim) {
    case Dimension::none:
        return "";
    case Dimension::frequency:
        return "Hz";
    case Dimension::power:
        return "W";
    case Dimension::length:
        return "m";
    case Dimension::temperature:
        return "K";
    case Dimension::time:
        return "s";
    case Dimension::field:
        return "G";
    case Dimension::gradient:
        return "G/m";
    case Dimension::angle:
        return "deg";
    case Dimension::mass:
        return "kg";
    }
    return "";
}

double parse_number_with_unit(std::string_view number, std::string_view unit, Dimension dim)
{
    if (unit.empty())
        return parse_scaled(number, 0);
    for (const auto& u : units_for(dim))
        if (u.name == unit) {
            const double v = parse_scaled(number, u.exponent);
            return u.factor == 1.0 ? v : v * u.factor;
        }
    throw ParameterError("unit '" + std::string(unit) + "' does not fit this quantity");
}

std::string with_unit(double v, Dimension dim)
{
    const auto unit = si_unit(dim);
    return unit.empty() ? fmt(v) : fmt(v) + " " + std::string(unit);
}

Vec3 parse_vector(std::string_view text, Dimension dim)
{
    const auto [numbers, unit] = split_unit(text);
    const auto parts = split(numbers, ',');
    if (parts.size() != 3)
        throw ParameterError("expected three comma-separated components, got '" + std::string(text) + "'");
    Vec3 v;
    for (int i = 0; i < 3; ++i)
        v(i) = parse_number_with_unit(parts[i], unit, dim);
    return v;
}

std::string format_vector(const Vec3& v, Dimension dim)
{
    std::string s = fmt(v(0)) + "," + fmt(v(1)) + "," + fmt(v(2));
    const auto unit = si_unit(dim);
    return unit.empty() ? s : s + " " + std::string(unit);
}

bool parse_bool(std::string_view text)
{
    if (text == "on" || text == "true" || text == "yes" || text == "1")
        return true;
    if (text == "off" || text == "false" || text == "no" || text == "0")
        return false;
    throw ParameterError("expected on/off, got '" + std::string(text) + "'");
}

long long parse_integer(std::string_view text)
{
    const std::string s(trim(text));
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0')
        throw ParameterError("expected an integer, got '" + s + "'");
    return v;
}

std::uint64_t parse_u64(std::string_view text)
{
    const std::string s(trim(text));
    char* end = nullptr;
    if (s.empty() || s.front() == '-')
        throw ParameterError("expected an unsigned integer, got '" + s + "'");
    const unsigned long long v = std::strtoull(s.c_str(), &end, 0);
    if (*end != '\0')
        throw ParameterError("expected an unsigned integer, got '" + s + "'");
    return v;
}

struct Key
{
    std::string_view name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Ref>
Key scalar(std::string_view name, Dimension dim, Ref ref, double scale = 1.0)
{
    // `scale` converts the written quantity to the stored one; only powers of
    // two are used so the round trip stays exact
    return {name,
            [=](const RunConfig& c) { return with_unit(ref(const_cast<RunConfig&>(c)) / scale, dim); },
            [=](RunConfig& c, std::string_view v) {
                const auto [number, unit] = split_unit(v);
                ref(c) = parse_number_with_unit(number, unit, dim) * scale;
            }};
}

// Angular rates (kappa, g_c) are written as ordinary frequencies; the stored
// value in rad/s is serialized directly with the rad/s suffix.
template <typename Ref>
Key angular(std::string_view name, Ref ref)
{
    return {name, [=](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))) + " rad/s"; },
            [=](RunConfig& c, std::string_view v) {
                const auto [number, unit] = split_unit(v);
                if (unit == "rad/s")
                    ref(c) = parse_scaled(number, 0);
                else
                    ref(c) = constants::two_pi * parse_number_with_unit(number, unit, Dimension::frequency);
            }};
}

const std::vector<Key>& key_table()
{
    using D = Dimension;
    static const std::vector<Key> keys = {
        scalar("coupled_atoms", D::none, [](RunConfig& c) -> double& { return c.op.atoms; }),
        scalar("trapped_atoms", D::none, [](RunConfig& c) -> double& { return c.setup.ensemble.total_atoms; }),
        scalar("cloud_radius", D::length, [](RunConfig& c) -> double& { return c.setup.ensemble.cloud_radius_rms; }),
        scalar("temperature", D::temperature, [](RunConfig& c) -> double& { return c.setup.ensemble.temperature; }),
        scalar("species_mass", D::mass, [](RunConfig& c) -> double& { return c.setup.ensemble.species_mass; }),
        {"doppler", [](const RunConfig& c) { return std::string(c.setup.doppler_broadening ? "on" : "off"); },
         [](RunConfig& c, std::string_view v) { c.setup.doppler_broadening = parse_bool(v); }},
        // the quoted gradient is the axial one, twice the stored radial gradient
        scalar("mot_gradient", D::gradient, [](RunConfig& c) -> double& { return c.setup.radial_gradient; }, 0.5),
        scalar("mot_detuning", D::frequency, [](RunConfig& c) -> double& { return c.op.mot_detuning; }),
        scalar("mot_saturation", D::none, [](RunConfig& c) -> double& { return c.op.mot_saturation; }),
        scalar("pump_power", D::power, [](RunConfig& c) -> double& { return c.op.pump_power; }),
        scalar("pump_waist", D::length, [](RunConfig& c) -> double& { return c.setup.pump_waist; }),
        scalar("pump_detuning", D::frequency, [](RunConfig& c) -> double& { return c.op.pump_detuning; }),
        {"pump_polarization", [](const RunConfig& c) { return format_polarization(c.op.pump_polarization); },
         [](RunConfig& c, std::string_view v) { c.op.pump_polarization = parse_polarization(v); }},
        scalar("cavity_detuning", D::frequency, [](RunConfig& c) -> double& { return c.op.cavity_detuning; }),
        angular("cavity_kappa", [](RunConfig& c) -> double& { return c.setup.cavity.kappa; }),
        angular("cavity_coupling", [](RunConfig& c) -> double& { return c.setup.cavity.coupling; }),
        scalar("cavity_waist", D::length, [](RunConfig& c) -> double& { return c.setup.cavity.waist_radius; }),
        scalar("cavity_length", D::length, [](RunConfig& c) -> double& { return c.setup.cavity.length; }),
        scalar("output_fraction", D::none, [](RunConfig& c) -> double& { return c.setup.cavity.output_fraction; }),
        scalar("family_spacing", D::frequency, [](RunConfig& c) -> double& { return c.setup.cavity.family_spacing; }),
        {"family_step", [](const RunConfig& c) { return std::to_string(c.setup.cavity.family_step); },
         [](RunConfig& c, std::string_view v) { c.setup.cavity.family_step = static_cast<int>(parse_integer(v)); }},
        {"families",
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.setup.families.size(); ++i)
                 s += (i ? "," : "") + std::to_string(c.setup.families[i]);
             return s;
         },
         [](RunConfig& c, std::string_view v) {
             c.setup.families.clear();
             for (auto part : split(v, ','))
                 c.setup.families.push_back(static_cast<int>(parse_integer(part)));
         }},
        {"b_offset", [](const RunConfig& c) { return format_vector(c.op.b_offset, D::field); },
         [](RunConfig& c, std::string_view v) { c.op.b_offset = parse_vector(v, D::field); }},
        {"active_position", [](const RunConfig& c) { return format_vector(c.op.active_position, D::length); },
         [](RunConfig& c, std::string_view v) { c.op.active_position = parse_vector(v, D::length); }},
        scalar("calib_atoms", D::none, [](RunConfig& c) -> double& { return c.calib_atoms; }),
        scalar("budget_photons", D::none, [](RunConfig& c) -> double& { return c.budget_photons; }),
        scalar("budget_atoms", D::none, [](RunConfig& c) -> double& { return c.budget_atoms; }),
        scalar("budget_pump_power", D::power, [](RunConfig& c) -> double& { return c.budget_pump_power; }),
        scalar("two_photon_offset", D::frequency, [](RunConfig& c) -> double& { return c.two_photon_offset; }),
        scalar("laser_ripple", D::none, [](RunConfig& c) -> double& { return c.laser_ripple; }),
        scalar("ripple_frequency", D::frequency, [](RunConfig& c) -> double& { return c.ripple_frequency; }),
        {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, std::string_view v) { c.seed = parse_u64(v); }},
    };
    return keys;
}

const Key& find_key(std::string_view name)
{
    for (const auto& k : key_table())
        if (k.name == name)
            return k;
    throw ParameterError("unknown config key '" + std::string(name) + "'");
}

void validate(const RunConfig& c)
{
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ParameterError(std::string(what) + " must be positive");
    };
    auto non_negative = [](double v, const char* what) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ParameterError(std::string(what) + " must be non-negative");
    };
    non_negative(c.op.atoms, "coupled_atoms");
    non_negative(c.setup.ensemble.total_atoms, "trapped_atoms");
    positive(c.setup.ensemble.cloud_radius_rms, "cloud_radius");
    positive(c.setup.ensemble.temperature, "temperature");
    positive(c.setup.ensemble.species_mass, "species_mass");
    non_negative(c.setup.radial_gradient, "mot_gradient");
    non_negative(c.op.mot_saturation, "mot_saturation");
    non_negative(c.op.pump_power, "pump_power");
    positive(c.setup.pump_waist, "pump_waist");
    positive(c.setup.cavity.kappa, "cavity_kappa");
    positive(c.setup.cavity.coupling, "cavity_coupling");
    positive(c.setup.cavity.waist_radius, "cavity_waist");
    positive(c.setup.cavity.length, "cavity_length");
    positive(c.setup.cavity.family_spacing, "family_spacing");
    if (!(c.setup.cavity.output_fraction > 0.0 && c.setup.cavity.output_fraction <= 1.0))
        throw ParameterError("output_fraction must lie in (0, 1]");
    if (c.setup.cavity.family_step <= 0)
        throw ParameterError("family_step must be positive");
    if (c.setup.families.empty() || c.setup.families.front() != 0)
        throw ParameterError("families must start with 0 (TEM0)");
    if (!std::is_sorted(c.setup.families.begin(), c.setup.families.end()) ||
        std::adjacent_find(c.setup.families.begin(), c.setup.families.end()) != c.setup.families.end())
        throw ParameterError("families must be strictly increasing");
    positive(c.calib_atoms, "calib_atoms");
    positive(c.budget_photons, "budget_photons");
    positive(c.budget_atoms, "budget_atoms");
    non_negative(c.budget_pump_power, "budget_pump_power");
    non_negative(c.laser_ripple, "laser_ripple");
    non_negative(c.ripple_frequency, "ripple_frequency");
    if (!std::isfinite(c.op.pump_detuning) || !std::isfinite(c.op.cavity_detuning) ||
        !std::isfinite(c.op.mot_detuning) || !std::isfinite(c.two_photon_offset) || !c.op.b_offset.allFinite() ||
        !c.op.active_position.allFinite())
        throw ParameterError("detunings and vectors must be finite");
}

} // namespace

double parse_quantity(std::string_view text, Dimension dim)
{
    const auto [number, unit] = split_unit(text);
    return parse_number_with_unit(number, unit, dim);
}

Jones parse_polarization(std::string_view text)
{
    text = trim(text);
    if (text == "H")
        return linear_polarization(0.0);
    if (text == "V")
        return linear_polarization(90.0);
    if (text == "L" || text == "circular:L")
        return circular_polarization(Handedness::left);
    if (text == "R" || text == "circular:R")
        return circular_polarization(Handedness::right);
    if (text.substr(0, 7) == "linear:")
        return linear_polarization(parse_quantity(text.substr(7), Dimension::angle));
    if (text.substr(0, 6) == "jones:") {
        const auto parts = split(text.substr(6), ',');
        if (parts.size() != 4)
            throw ParameterError("jones polarization needs re0,im0,re1,im1");
        double v[4];
        for (int i = 0; i < 4; ++i)
            v[i] = parse_scaled(parts[i], 0);
        const Jones j(std::complex<double>(v[0], v[1]), std::complex<double>(v[2], v[3]));
        if (!(j.norm() > 0.0))
            throw ParameterError("jones polarization must be nonzero");
        return j;
    }
    throw ParameterError("unrecognized polarization '" + std::string(text) +
                         "' (use linear:<deg>, circular:L, circular:R, H or V)");
}

std::string format_polarization(const Jones& jones)
{
    if (jones == circular_polarization(Handedness::left))
        return "circular:L";
    if (jones == circular_polarization(Handedness::right))
        return "circular:R";
    if (jones(0).imag() == 0.0 && jones(1).imag() == 0.0) {
        const double angle = std::atan2(jones(1).real(), jones(0).real()) * 180.0 / constants::pi;
        for (double candidate : {std::round(angle * 1e6) / 1e6, angle}) {
            const std::string text = fmt(candidate);
            if (linear_polarization(std::strtod(text.c_str(), nullptr)) == jones)
                return "linear:" + text;
        }
    }
    return "jones:" + fmt(jones(0).real()) + "," + fmt(jones(0).imag()) + "," + fmt(jones(1).real()) + "," +
           fmt(jones(1).imag());
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value)
{
    const Key& k = find_key(trim(key));
    try {
        k.set(config, trim(value));
    } catch (const ParameterError& e) {
        throw ParameterError("config key '" + std::string(k.name) + "': " + e.what());
    }
}

RunConfig parse_config(std::istream& in)
{
    RunConfig config;
    std::set<std::string, std::less<>> seen;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string_view view(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos)
            view = view.substr(0, hash);
        view = trim(view);
        if (view.empty())
            continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos)
            throw ParameterError("config line " + std::to_string(number) + ": expected 'key = value'");
        const auto key = trim(view.substr(0, eq));
        if (!seen.emplace(key).second)
            throw ParameterError("config line " + std::to_string(number) + ": duplicate key '" + std::string(key) +
                                 "'");
        set_config_value(config, key, view.substr(eq + 1));
    }
    validate(config);
    return config;
}

RunConfig parse_config_string(std::string_view text)
{
    std::istringstream in{std::string(text)};
    return parse_config(in);
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParameterError("cannot open config file '" + path.string() + "'");
    return parse_config(in);
}

std::string serialize_config(const RunConfig& config)
{
    std::string out;
    for (const auto& k : key_table())
        out += std::string(k.name) + " = " + k.get(config) + "\n";
    return out;
}

std::uint64_t config_hash(const RunConfig& config)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& k : key_table()) {
        if (k.name == "seed")
            continue;
        const std::string line = std::string(k.name) + " = " + k.get(config) + "\n";
        for (unsigned char ch : line) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> names;
    for (const auto& k : key_table())
        names.emplace_back(k.name);
    return names;
}

} // namespace virtlase
