#include "virtlase/cli.hpp"
#include "virtlase/clickstream.hpp"
#include "virtlase/errors.hpp"
#include "virtlase/photonstats.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

namespace virtlase::cli {

namespace {

constexpr const char* version = VIRTLASE_VERSION;
constexpr double measured_zeeman_slope = 1.6e6; // Hz/G, measured
constexpr double quoted_budget_power = 1.0e-9; // W quoted for 6e5 intracavity photons

std::string sci(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17e", v);
    return buf;
}

std::string exact(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string opt_sci(const std::optional<double>& v)
{
    return v ? sci(*v) : std::string();
}

std::string trim_copy(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

class Csv
{
public:
    explicit Csv(std::vector<std::string> header) : columns_(header.size()) { line(header); }

    void row(const std::vector<std::string>& cells)
    {
        if (cells.size() != columns_)
            throw std::logic_error("csv row width mismatch");
        line(cells);
    }

    std::string str() const { return text_; }

private:
    void line(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i)
            text_ += (i ? "," : "") + cells[i];
        text_ += "\n";
    }

    std::size_t columns_;
    std::string text_;
};

// A file produced by a command. An empty suffix is the table written to --out
// (or stdout); other suffixes are appended to --out.
struct Artifact
{
    std::string suffix;
    std::string bytes;
};

struct CommandResult
{
    std::vector<Artifact> artifacts;
    std::vector<std::pair<std::string, std::string>> results;
    bool needs_out = false;
};

struct Context
{
    RunConfig config;
    std::optional<CalibrationConstants> calibration;
    unsigned threads = 1;
    std::ostream* err = nullptr;

    const GainModel& model()
    {
        if (!model_)
            model_ = std::make_unique<GainModel>(config.setup);
        return *model_;
    }

    const CalibrationConstants& cal()
    {
        if (!calibration)
            calibration = calibrate(model(), config.anchors(), config.two_photon_offset);
        return *calibration;
    }

private:
    std::unique_ptr<GainModel> model_;
};

using Handler = std::function<CommandResult(Context&)>;

GridAxis make_axis(const std::string& start, const std::string& stop, const std::string& step, Dimension dim,
                   const char* what)
{
    GridAxis axis{parse_quantity(start, dim), parse_quantity(stop, dim), parse_quantity(step, dim)};
    try {
        (void)axis.values();
    } catch (const ParameterError& e) {
        throw ParameterError(std::string(what) + ": " + e.what());
    }
    return axis;
}

std::string family_column(int family, const char* what)
{
    return std::string(what) + "_tem" + std::to_string(family);
}

// ---------------------------------------------------------------- calibrate

CommandResult cmd_calibrate(Context& ctx)
{
    const GainModel& model = ctx.model();
    const CalibrationConstants& cal = ctx.cal();
    CalibrationRecord record{cal, config_hash(ctx.config), version};

    OperatingPoint at_anchor = ctx.config.anchors().threshold_point;
    const double atoms = threshold_solve(model, cal, ThresholdVariable::atoms, at_anchor);
    const OperatingPoint budget = ctx.config.anchors().budget_point;
    const LaserSolution budget_state = steady_state(model, cal, budget);
    const double photons = budget_state.families.front().photons;
    const double power = output_power(ctx.config.budget_photons, model.setup().cavity, model.setup().pump_line.wavelength);

    *ctx.err << "gain_scale          " << exact(cal.gain_scale) << "\n"
             << "saturation_photons  " << exact(cal.saturation_photons) << "\n"
             << "threshold atoms     " << exact(atoms) << " (anchor " << exact(ctx.config.calib_atoms) << ")\n"
             << "budget TEM0 photons " << exact(photons) << "\n"
             << "output power at " << exact(ctx.config.budget_photons) << " photons: " << exact(power)
             << " W (quoted pairing " << exact(quoted_budget_power) << " W, ratio " << exact(power / quoted_budget_power)
             << ")\n";

    CommandResult r;
    r.artifacts.push_back({"", format_calibration(record, ctx.config)});
    r.results = {{"gain_scale", exact(cal.gain_scale)},
                 {"saturation_photons", exact(cal.saturation_photons)},
                 {"threshold_atoms", exact(atoms)},
                 {"budget_photons_tem0", exact(photons)},
                 {"budget_output_power_w", exact(power)},
                 {"quoted_output_power_w", exact(quoted_budget_power)},
                 {"budget_power_ratio", exact(power / quoted_budget_power)}};
    return r;
}

// ---------------------------------------------------------------- map

struct MapOptions
{
    std::string pump_start = "-10MHz", pump_stop = "10MHz", pump_step = "1MHz";
    std::string cavity_start = "-60MHz", cavity_stop = "0MHz", cavity_step = "1MHz";
    std::string pump_polarization; // overrides the config after calibration
};

CommandResult cmd_map(Context& ctx, const MapOptions& o)
{
    const GridAxis pump = make_axis(o.pump_start, o.pump_stop, o.pump_step, Dimension::frequency, "pump range");
    const GridAxis cavity =
        make_axis(o.cavity_start, o.cavity_stop, o.cavity_step, Dimension::frequency, "cavity range");

    std::vector<std::string> header{"pump_detuning_hz", "cavity_detuning_hz", "power_w", "above_threshold"};
    for (int f : ctx.config.setup.families)
        header.push_back(family_column(f, "power") + "_w");
    Csv csv(header);

    CommandResult r;
    if (pump.values().empty() || cavity.values().empty()) {
        r.artifacts.push_back({"", csv.str()});
        r.results.push_back({"cells", "0"});
        *ctx.err << "empty grid\n";
        return r;
    }

    OperatingPoint op = ctx.config.op;
    if (!o.pump_polarization.empty())
        op.pump_polarization = parse_polarization(o.pump_polarization);
    const DetuningMap map = detuning_map(ctx.model(), ctx.cal(), op, pump, cavity, ctx.threads);
    std::size_t missing = 0;
    for (const MapCell& cell : map.cells) {
        std::vector<std::string> row{sci(cell.pump_detuning), sci(cell.cavity_detuning), opt_sci(cell.total_power),
                                     cell.total_power ? (cell.above_threshold ? "1" : "0") : ""};
        for (const auto& p : cell.family_power)
            row.push_back(opt_sci(p));
        missing += cell.total_power ? 0 : 1;
        csv.row(row);
    }
    r.artifacts.push_back({"", csv.str()});

    const auto lobes = find_lobes(map);
    r.results.push_back({"cells", std::to_string(map.cells.size())});
    r.results.push_back({"missing_cells", std::to_string(missing)});
    r.results.push_back({"lobes", std::to_string(lobes.size())});
    *ctx.err << map.cells.size() << " cells, " << missing << " missing, " << lobes.size() << " lobe(s)\n";
    for (std::size_t i = 0; i < lobes.size(); ++i) {
        const Lobe& l = lobes[i];
        const std::string p = "lobe" + std::to_string(i) + ".";
        r.results.push_back({p + "cells", std::to_string(l.cells)});
        r.results.push_back({p + "peak_pump_hz", exact(l.peak_pump)});
        r.results.push_back({p + "peak_cavity_hz", exact(l.peak_cavity)});
        r.results.push_back({p + "peak_power_w", exact(l.peak_power)});
        r.results.push_back({p + "cavity_fwhm_hz", exact(l.cavity_fwhm)});
        char line[160];
        std::snprintf(line, sizeof line, "  lobe %zu: %zu cells, peak at pump %+.1f MHz, cavity %+.1f MHz, %.3e W, "
                                         "cavity FWHM %.1f MHz\n",
                      i, l.cells, l.peak_pump / 1e6, l.peak_cavity / 1e6, l.peak_power, l.cavity_fwhm / 1e6);
        *ctx.err << line;
    }
    return r;
}

// ---------------------------------------------------------------- threshold

struct ThresholdOptions
{
    std::string vary = "atoms";
    std::string start, stop, step;
};

CommandResult cmd_threshold(Context& ctx, const ThresholdOptions& o)
{
    const bool atoms = o.vary == "atoms";
    const Dimension dim = atoms ? Dimension::none : Dimension::power;
    const GridAxis axis = make_axis(o.start.empty() ? (atoms ? "0" : "0mW") : o.start,
                                    o.stop.empty() ? (atoms ? "20000" : "8mW") : o.stop,
                                    o.step.empty() ? (atoms ? "250" : "0.05mW") : o.step, dim, "range");
    const auto variable = atoms ? ThresholdVariable::atoms : ThresholdVariable::pump_power;
    const auto& families = ctx.config.setup.families;

    std::vector<std::string> header{atoms ? "coupled_atoms" : "pump_power_w", "power_w"};
    for (int f : families) {
        header.push_back(family_column(f, "photons"));
        header.push_back(family_column(f, "power") + "_w");
        header.push_back(family_column(f, "lasing"));
    }
    Csv csv(header);

    std::vector<std::optional<double>> onset(families.size());
    for (double x : axis.values()) {
        OperatingPoint op = ctx.config.op;
        (atoms ? op.atoms : op.pump_power) = x;
        const LaserSolution s = steady_state(ctx.model(), ctx.cal(), op);
        std::vector<std::string> row{sci(x), sci(s.total_power())};
        for (std::size_t i = 0; i < s.families.size(); ++i) {
            const FamilyState& f = s.families[i];
            row.push_back(sci(f.photons));
            row.push_back(sci(f.output_power));
            row.push_back(f.lasing ? "1" : "0");
            if (f.lasing && !onset[i])
                onset[i] = x;
        }
        csv.row(row);
    }

    CommandResult r;
    r.artifacts.push_back({"", csv.str()});
    const char* unit = atoms ? "atoms" : "W";
    for (std::size_t i = 0; i < families.size(); ++i) {
        const std::string p = "tem" + std::to_string(families[i]) + ".";
        std::string solved = "none";
        try {
            solved = exact(threshold_solve(ctx.model(), ctx.cal(), variable, ctx.config.op, families[i]));
        } catch (const NoThresholdError&) {
        }
        r.results.push_back({p + "threshold", solved});
        r.results.push_back({p + "grid_onset", onset[i] ? exact(*onset[i]) : "none"});
        *ctx.err << "TEM" << families[i] << ": threshold " << solved << " " << unit << ", first lasing grid point "
                 << (onset[i] ? exact(*onset[i]) : "none") << "\n";
    }
    return r;
}

// ---------------------------------------------------------------- shift-scan

struct ShiftOptions
{
    std::string vary = "b_offset";
    std::string start, stop, step;
    int lobe = +1;
};

CommandResult cmd_shift_scan(Context& ctx, const ShiftOptions& o)
{
    const bool field = o.vary == "b_offset";
    const Dimension dim = field ? Dimension::field : Dimension::frequency;
    const GridAxis axis = make_axis(o.start.empty() ? (field ? "1.5G" : "-40MHz") : o.start,
                                    o.stop.empty() ? (field ? "3.5G" : "-20MHz") : o.stop,
                                    o.step.empty() ? (field ? "0.25G" : "2MHz") : o.step, dim, "range");
    const auto values = axis.values();
    if (values.size() < 2)
        throw ParameterError("shift-scan needs at least two scan points");

    ScanWindow window;
    window.lobe = o.lobe;
    const OptimumScan scan = optimum_scan(ctx.model(), ctx.cal(), ctx.config.op,
                                          field ? ScanVariable::b_offset : ScanVariable::mot_detuning, values, window);

    Csv csv({field ? "b_offset_g" : "mot_detuning_hz", "pump_opt_hz", "cavity_opt_hz", "power_w"});
    for (const auto& p : scan.points)
        csv.row({sci(p.x), opt_sci(p.pump_opt), opt_sci(p.cavity_opt), opt_sci(p.power)});

    CommandResult r;
    r.artifacts.push_back({"", csv.str()});
    r.results = {{"pump_slope", exact(scan.pump_fit.slope)},
                 {"pump_intercept_hz", exact(scan.pump_fit.intercept)},
                 {"cavity_slope", exact(scan.cavity_fit.slope)},
                 {"cavity_intercept_hz", exact(scan.cavity_fit.intercept)},
                 {"fit_points", std::to_string(scan.pump_fit.points)},
                 {"two_photon_offset_hz", exact(scan.two_photon_offset)}};
    char line[200];
    if (field) {
        const double lande = ctx.config.setup.pump_line.lande_g_upper * constants::bohr_hz_per_gauss;
        r.results.push_back({"lande_slope_hz_per_g", exact(lande)});
        r.results.push_back({"measured_slope_hz_per_g", exact(measured_zeeman_slope)});
        std::snprintf(line, sizeof line,
                      "optimum pump detuning vs field: model %.4f MHz/G (Lande %.4f), measured 1.6 MHz/G, "
                      "model/measured %.3f\n",
                      scan.pump_fit.slope / 1e6, lande / 1e6, scan.pump_fit.slope / measured_zeeman_slope);
    } else {
        std::snprintf(line, sizeof line,
                      "optimum cavity detuning vs MOT detuning: slope %.6f, offset %.3f kHz; pump optimum slope %.2e\n",
                      scan.cavity_fit.slope, scan.two_photon_offset / 1e3, scan.pump_fit.slope);
    }
    *ctx.err << line;
    return r;
}

// ---------------------------------------------------------------- polarization-table

struct TableOptions
{
    std::vector<std::string> extra;
    bool from_config = false;
};

CommandResult cmd_polarization_table(Context& ctx, const TableOptions& o)
{
    auto rows = standard_table_rows();
    for (const auto& spec : o.extra) {
        const auto at = spec.find('@');
        if (at == std::string::npos)
            throw ParameterError("--extra expects FIELD@POLARIZATION, e.g. 1,0,1@linear:45");
        TableRow row;
        RunConfig scratch;
        set_config_value(scratch, "b_offset", spec.substr(0, at));
        row.field = scratch.op.b_offset;
        row.pump = {parse_polarization(spec.substr(at + 1))};
        row.field_label = "(" + trim_copy(spec.substr(0, at)) + ")";
        row.pump_label = trim_copy(spec.substr(at + 1));
        rows.push_back(row);
    }
    if (o.from_config) {
        TableRow row;
        row.field = GainModel(ctx.config.setup).active_field(ctx.config.op);
        row.pump = {ctx.config.op.pump_polarization};
        row.field_label = "config";
        row.pump_label = format_polarization(ctx.config.op.pump_polarization);
        rows.push_back(row);
    }
    CommandResult r;
    r.artifacts.push_back({"", render_polarization_table(rows)});
    r.results.push_back({"rows", std::to_string(rows.size())});
    return r;
}

// ---------------------------------------------------------------- g2 / clicks

struct StatsOptions
{
    std::string regime = "above";
    std::string duration = "22s";
    std::string rate = "1e6";
    std::string tau_c;
    std::string sample_period;
    std::string bin = "2.6us";
    std::string max_lag = "52us";
    std::string input_a, input_b;
    std::string format = "bin";
    bool auto_mode = false;
};

IntensityParams stats_params(Context& ctx, const StatsOptions& o, std::vector<std::pair<std::string, std::string>>& res)
{
    IntensityParams p;
    if (o.regime == "below")
        p.regime = Regime::thermal;
    else if (o.regime == "above")
        p.regime = Regime::laser;
    else
        p.regime = parse_regime(o.regime);
    p.duration = parse_quantity(o.duration, Dimension::time);
    p.mean_rate = parse_quantity(o.rate, Dimension::frequency);
    p.ripple = ctx.config.laser_ripple;
    p.ripple_frequency = ctx.config.ripple_frequency;
    if (p.regime == Regime::thermal) {
        if (!o.tau_c.empty()) {
            p.coherence_time = parse_quantity(o.tau_c, Dimension::time);
        } else {
            const double g = ctx.model().family_gain(ctx.config.op, 0, ctx.cal()).total;
            const double kappa = ctx.model().kappa();
            if (g >= kappa)
                throw PhysicsError("operating point is above the TEM0 threshold (G/kappa = " + exact(g / kappa) +
                                   "); lower coupled_atoms or pump_power, or pass --tau-c");
            p.coherence_time = 1.0 / (kappa - g);
            res.push_back({"gain_over_kappa", exact(g / kappa)});
        }
        res.push_back({"coherence_time_s", exact(p.coherence_time)});
    }
    if (!o.sample_period.empty())
        p.sample_period = parse_quantity(o.sample_period, Dimension::time);
    else if (p.regime == Regime::thermal)
        p.sample_period = std::min(1.0e-6, p.coherence_time / 20.0);
    return p;
}

ClickStream read_any(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParameterError("cannot open '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    in.clear();
    in.seekg(0);
    if (std::string(magic, 4) == "CLKS")
        return read_clickstream(in);
    return read_clickstream_text(in);
}

CommandResult cmd_g2(Context& ctx, const StatsOptions& o)
{
    CommandResult r;
    std::pair<ClickStream, ClickStream> streams;
    if (!o.input_a.empty()) {
        streams.first = read_any(o.input_a);
        if (!o.input_b.empty())
            streams.second = read_any(o.input_b);
        else if (!o.auto_mode)
            throw ParameterError("--input-a without --input-b requires --auto");
    } else {
        const IntensityParams p = stats_params(ctx, o, r.results);
        streams = simulate_clicks(p, ctx.config.seed);
    }
    const double bin = parse_quantity(o.bin, Dimension::time);
    const double max_lag = parse_quantity(o.max_lag, Dimension::time);
    const auto t0 = std::chrono::steady_clock::now();
    const CorrelationResult g = o.auto_mode ? g2_auto(streams.first, bin, max_lag, ctx.threads)
                                            : g2_cross(streams.first, streams.second, bin, max_lag, ctx.threads);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Csv csv({"lag_s", "g2", "sigma", "counts"});
    double max_dev = 0.0;
    for (std::size_t k = 0; k < g.lag.size(); ++k) {
        csv.row({sci(g.lag[k]), sci(g.g2[k]), sci(g.sigma[k]), std::to_string(g.counts[k])});
        max_dev = std::max(max_dev, std::abs(g.g2[k] - 1.0));
    }
    r.artifacts.push_back({"", csv.str()});
    const std::size_t c = g.centre();
    r.results.push_back({"clicks_a", std::to_string(streams.first.size())});
    r.results.push_back({"clicks_b", std::to_string(o.auto_mode ? streams.first.size() : streams.second.size())});
    r.results.push_back({"bin_width_s", exact(g.bin_width)});
    r.results.push_back({"g2_zero", exact(g.g2[c])});
    r.results.push_back({"g2_zero_sigma", exact(g.sigma[c])});
    r.results.push_back({"max_abs_deviation", exact(max_dev)});
    r.results.push_back({"total_pairs", std::to_string(g.total_pairs)});
    for (const auto& [k, v] : r.results)
        if (k == "coherence_time_s")
            r.results.push_back({"washout_prediction", exact(binning_washout(std::stod(v), g.bin_width))});
    char line[200];
    std::snprintf(line, sizeof line, "%zu + %zu clicks, g2(0) = %.5f +- %.5f, max|g2-1| = %.3e over %zu bins (%.2f s)\n",
                  streams.first.size(), o.auto_mode ? streams.first.size() : streams.second.size(), g.g2[c], g.sigma[c],
                  max_dev, g.lag.size(), seconds);
    *ctx.err << line;
    return r;
}

CommandResult cmd_clicks(Context& ctx, const StatsOptions& o)
{
    CommandResult r;
    r.needs_out = true;
    const IntensityParams p = stats_params(ctx, o, r.results);
    const auto [a, b] = simulate_clicks(p, ctx.config.seed);
    const bool text = o.format == "text";
    if (!text && o.format != "bin")
        throw ParameterError("--format must be bin or text");
    for (const ClickStream* s : {&a, &b}) {
        std::ostringstream out(std::ios::binary);
        if (text)
            write_clickstream_text(out, *s);
        else
            write_clickstream(out, *s);
        r.artifacts.push_back({std::string(s == &a ? ".a" : ".b") + (text ? ".txt" : ".clks"), out.str()});
    }
    r.results.push_back({"clicks_a", std::to_string(a.size())});
    r.results.push_back({"clicks_b", std::to_string(b.size())});
    r.results.push_back({"duration_ns", std::to_string(a.duration_ns)});
    *ctx.err << a.size() << " + " << b.size() << " clicks over " << a.duration() << " s\n";
    return r;
}

// ---------------------------------------------------------------- metadata

struct Metadata
{
    std::string command;
    std::vector<std::string> args;
    CalibrationConstants calibration;
    bool has_calibration = false;
    std::map<std::string, std::string> artifacts; // suffix -> fnv hex
    std::string config_text;
};

std::string format_metadata(const Metadata& m, const RunConfig& config,
                            const std::vector<std::pair<std::string, std::string>>& results)
{
    std::ostringstream out;
    out << "# virtlase run metadata; `virtlase replay <this file>` reproduces the outputs\n"
        << "version = " << version << "\n"
        << "command = " << m.command << "\n";
    for (const auto& a : m.args)
        out << "arg = " << a << "\n";
    out << "seed = " << config.seed << "\n"
        << "config_hash = " << hex(config_hash(config)) << "\n";
    if (m.has_calibration)
        out << "calibration.gain_scale = " << exact(m.calibration.gain_scale) << "\n"
            << "calibration.saturation_photons = " << exact(m.calibration.saturation_photons) << "\n"
            << "calibration.two_photon_offset = " << exact(m.calibration.two_photon_offset) << "\n";
    for (const auto& [suffix, h] : m.artifacts)
        out << "artifact" << (suffix.empty() ? std::string(".table") : suffix) << " = " << h << "\n";
    for (const auto& [k, v] : results)
        out << "result." << k << " = " << v << "\n";
    out << "[config]\n" << serialize_config(config);
    return out.str();
}

Metadata parse_metadata(const std::string& text)
{
    Metadata m;
    std::istringstream in(text);
    std::string line;
    bool config = false;
    std::map<std::string, std::string> values;
    while (std::getline(in, line)) {
        if (config) {
            m.config_text += line + "\n";
            continue;
        }
        if (line == "[config]") {
            config = true;
            continue;
        }
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos)
            throw FormatError("metadata: malformed line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
        if (key == "arg")
            m.args.push_back(value);
        else if (key.rfind("artifact", 0) == 0)
            m.artifacts[key == "artifact.table" ? "" : key.substr(8)] = value;
        else
            values[key] = value;
    }
    if (!config || !values.count("command"))
        throw FormatError("metadata: missing command or [config] section");
    m.command = values["command"];
    if (values.count("calibration.gain_scale")) {
        m.has_calibration = true;
        m.calibration.gain_scale = std::stod(values["calibration.gain_scale"]);
        m.calibration.saturation_photons = std::stod(values["calibration.saturation_photons"]);
        m.calibration.two_photon_offset = std::stod(values["calibration.two_photon_offset"]);
    }
    return m;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParameterError("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const std::string& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
        throw std::runtime_error("cannot write '" + path + "'");
}

// Options of one subcommand that were given on the command line, in a form
// that parses back to the same values.
std::vector<std::string> recorded_args(const CLI::App* sub)
{
    std::vector<std::string> args;
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->count() == 0 || opt->get_single_name() == "help")
            continue;
        if (opt->get_type_size_max() == 0) {
            args.push_back("--" + opt->get_single_name());
            continue;
        }
        for (const auto& v : opt->results())
            args.push_back("--" + opt->get_single_name() + "=" + v);
    }
    return args;
}

struct Injected
{
    RunConfig config;
    std::optional<CalibrationConstants> calibration;
};

int execute(std::vector<std::string> args, std::ostream& out, std::ostream& err, const Injected* injected,
            Metadata* replay_expect);

int replay(const std::string& meta_path, const std::string& out_path, unsigned threads, bool verify,
           std::ostream& out, std::ostream& err)
{
    const Metadata m = parse_metadata(read_file(meta_path));
    Injected inj{parse_config_string(m.config_text), std::nullopt};
    if (m.has_calibration)
        inj.calibration = m.calibration;
    std::vector<std::string> args{m.command};
    args.insert(args.end(), m.args.begin(), m.args.end());
    if (!out_path.empty())
        args.push_back("--out=" + out_path);
    args.push_back("--threads=" + std::to_string(threads));
    Metadata expect = m;
    return execute(args, out, err, &inj, verify ? &expect : nullptr);
}

int execute(std::vector<std::string> args, std::ostream& out, std::ostream& err, const Injected* injected,
            Metadata* replay_expect)
{
    CLI::App app{"Simulation of continuous-wave lasing through a MOT-dressed virtual level", "virtlase"};
    app.set_version_flag("--version", version);
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path, calibration_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--out", out_path, "Output path; metadata goes to <out>.meta");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--set", overrides, "Config override KEY=VALUE (repeatable)");
    app.add_option("--calibration", calibration_path, "Calibration file from `virtlase calibrate`");

    std::map<std::string, Handler> handlers;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit gain scale and saturation photon number");
    handlers["calibrate"] = cmd_calibrate;

    MapOptions map_opt;
    auto* map_cmd = app.add_subcommand("map", "Output power over pump and cavity detuning");
    map_cmd->add_option("--pump-start", map_opt.pump_start)->capture_default_str();
    map_cmd->add_option("--pump-stop", map_opt.pump_stop)->capture_default_str();
    map_cmd->add_option("--pump-step", map_opt.pump_step)->capture_default_str();
    map_cmd->add_option("--cavity-start", map_opt.cavity_start)->capture_default_str();
    map_cmd->add_option("--cavity-stop", map_opt.cavity_stop)->capture_default_str();
    map_cmd->add_option("--cavity-step", map_opt.cavity_step)->capture_default_str();
    map_cmd->add_option("--pump-polarization", map_opt.pump_polarization,
                        "Pump polarization for the map; calibration keeps the config value");
    handlers["map"] = [&](Context& c) { return cmd_map(c, map_opt); };

    ThresholdOptions thr_opt;
    auto* thr_cmd = app.add_subcommand("threshold", "Output power and thresholds versus atoms or pump power");
    thr_cmd->add_option("--vary", thr_opt.vary)->check(CLI::IsMember({"atoms", "pump"}))->capture_default_str();
    thr_cmd->add_option("--start", thr_opt.start);
    thr_cmd->add_option("--stop", thr_opt.stop);
    thr_cmd->add_option("--step", thr_opt.step);
    handlers["threshold"] = [&](Context& c) { return cmd_threshold(c, thr_opt); };

    ShiftOptions shift_opt;
    auto* shift_cmd = app.add_subcommand("shift-scan", "Optimum detunings versus offset field or MOT detuning");
    shift_cmd->add_option("--vary", shift_opt.vary)
        ->check(CLI::IsMember({"b_offset", "mot_detuning"}))
        ->capture_default_str();
    shift_cmd->add_option("--start", shift_opt.start);
    shift_cmd->add_option("--stop", shift_opt.stop);
    shift_cmd->add_option("--step", shift_opt.step);
    shift_cmd->add_option("--lobe", shift_opt.lobe, "+1, -1 or 0 (anywhere)")
        ->check(CLI::IsMember({-1, 0, 1}))
        ->capture_default_str();
    handlers["shift-scan"] = [&](Context& c) { return cmd_shift_scan(c, shift_opt); };

    TableOptions table_opt;
    auto* table_cmd = app.add_subcommand("polarization-table", "Selection rules for field and pump orientation");
    table_cmd->add_option("--extra", table_opt.extra, "Extra row FIELD@POL, e.g. 1,0,1@linear:45");
    table_cmd->add_flag("--from-config", table_opt.from_config, "Append the configured field and pump");
    handlers["polarization-table"] = [&](Context& c) { return cmd_polarization_table(c, table_opt); };

    StatsOptions g2_opt, clicks_opt;
    auto add_stats = [](CLI::App* cmd, StatsOptions& o) {
        cmd->add_option("--regime", o.regime, "below (thermal), above (laser) or poisson")
            ->check(CLI::IsMember({"below", "above", "thermal", "laser", "poisson"}))
            ->capture_default_str();
        cmd->add_option("--duration", o.duration)->capture_default_str();
        cmd->add_option("--rate", o.rate, "Total detected rate, counts/s")->capture_default_str();
        cmd->add_option("--tau-c", o.tau_c, "Intensity correlation time (below regime)");
        cmd->add_option("--sample-period", o.sample_period);
    };
    auto* g2_cmd = app.add_subcommand("g2", "Simulated or recorded g2 correlation");
    add_stats(g2_cmd, g2_opt);
    g2_cmd->add_option("--bin", g2_opt.bin)->capture_default_str();
    g2_cmd->add_option("--max-lag", g2_opt.max_lag)->capture_default_str();
    g2_cmd->add_option("--input-a", g2_opt.input_a, "ClickStream file (binary or text)");
    g2_cmd->add_option("--input-b", g2_opt.input_b, "ClickStream file (binary or text)");
    g2_cmd->add_flag("--auto", g2_opt.auto_mode, "Autocorrelate detector a");
    handlers["g2"] = [&](Context& c) { return cmd_g2(c, g2_opt); };

    auto* clicks_cmd = app.add_subcommand("clicks", "Export simulated detector clicks");
    add_stats(clicks_cmd, clicks_opt);
    clicks_cmd->add_option("--format", clicks_opt.format)->check(CLI::IsMember({"bin", "text"}))->capture_default_str();
    handlers["clicks"] = [&](Context& c) { return cmd_clicks(c, clicks_opt); };

    std::string meta_path;
    bool verify = false;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its .meta file");
    replay_cmd->add_option("meta", meta_path)->required()->check(CLI::ExistingFile);
    replay_cmd->add_flag("--verify", verify, "Compare outputs with the recorded hashes");
    (void)calibrate_cmd;

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::CallForVersion&) {
        out << version << "\n";
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();

    try {
        if (name == "replay")
            return replay(meta_path, out_path, threads, verify, out, err);

        Context ctx;
        ctx.threads = threads;
        ctx.err = &err;
        if (injected) {
            ctx.config = injected->config;
            ctx.calibration = injected->calibration;
        } else {
            ctx.config = config_path.empty() ? RunConfig{} : load_config(config_path);
            for (const auto& kv : overrides) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos)
                    throw ParameterError("--set expects KEY=VALUE, got '" + kv + "'");
                set_config_value(ctx.config, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (!overrides.empty())
                ctx.config = parse_config_string(serialize_config(ctx.config)); // re-validate
            if (seed)
                ctx.config.seed = *seed;
            if (!calibration_path.empty()) {
                const CalibrationRecord rec = parse_calibration(read_file(calibration_path));
                if (rec.config_hash != config_hash(ctx.config))
                    throw IntegrityError("calibration '" + calibration_path + "' belongs to config hash " +
                                         hex(rec.config_hash) + ", current config hash is " +
                                         hex(config_hash(ctx.config)));
                ctx.calibration = rec.constants;
            }
        }

        CommandResult result = handlers.at(name)(ctx);
        if (result.needs_out && out_path.empty())
            throw ParameterError(name + " writes files and needs --out PREFIX");

        Metadata meta;
        meta.command = name;
        meta.args = recorded_args(sub);
        if (ctx.calibration) {
            meta.has_calibration = true;
            meta.calibration = *ctx.calibration;
        }
        for (const auto& a : result.artifacts)
            meta.artifacts[a.suffix] = hex(fnv1a(a.bytes));

        if (replay_expect) {
            if (meta.artifacts != replay_expect->artifacts) {
                err << "replay: outputs differ from the recorded run\n";
                return integrity;
            }
            err << "replay: outputs identical to the recorded run\n";
        }

        if (out_path.empty()) {
            for (const auto& a : result.artifacts)
                out << a.bytes;
        } else {
            for (const auto& a : result.artifacts)
                write_file(out_path + a.suffix, a.bytes);
            write_file(out_path + ".meta", format_metadata(meta, ctx.config, result.results));
        }
        return ok;
    } catch (const IntegrityError& e) {
        err << "integrity error: " << e.what() << "\n";
        return integrity;
    } catch (const FormatError& e) {
        err << "integrity error: " << e.what() << "\n";
        return integrity;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    } catch (const PhysicsError& e) {
        err << "physics error: " << e.what() << "\n";
        return physics;
    }
}

} // namespace

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string format_calibration(const CalibrationRecord& record, const RunConfig& config)
{
    std::ostringstream body;
    body << "# virtlase calibration\n"
         << "version = " << record.version << "\n"
         << "config_hash = " << hex(record.config_hash) << "\n"
         << "gain_scale = " << exact(record.constants.gain_scale) << "\n"
         << "saturation_photons = " << exact(record.constants.saturation_photons) << "\n"
         << "two_photon_offset = " << exact(record.constants.two_photon_offset) << "\n"
         << "anchor.threshold_atoms = " << exact(config.calib_atoms) << "\n"
         << "anchor.budget_photons = " << exact(config.budget_photons) << "\n"
         << "anchor.budget_atoms = " << exact(config.budget_atoms) << "\n"
         << "anchor.budget_pump_power = " << exact(config.budget_pump_power) << "\n";
    const std::string text = body.str();
    return text + "checksum = " + hex(fnv1a(text)) + "\n";
}

CalibrationRecord parse_calibration(const std::string& text)
{
    const auto pos = text.rfind("checksum = ");
    if (pos == std::string::npos || (pos > 0 && text[pos - 1] != '\n'))
        throw FormatError("calibration: missing checksum line");
    const std::string body = text.substr(0, pos);
    const std::string recorded = trim_copy(text.substr(pos + 11));
    if (recorded != hex(fnv1a(body)))
        throw IntegrityError("calibration file checksum mismatch (file was modified)");

    std::map<std::string, std::string> values;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos)
            throw FormatError("calibration: malformed line '" + line + "'");
        values[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto need = [&](const char* key) {
        const auto it = values.find(key);
        if (it == values.end())
            throw FormatError(std::string("calibration: missing ") + key);
        return it->second;
    };
    CalibrationRecord r;
    try {
        r.version = need("version");
        r.config_hash = std::stoull(need("config_hash"), nullptr, 16);
        r.constants.gain_scale = std::stod(need("gain_scale"));
        r.constants.saturation_photons = std::stod(need("saturation_photons"));
        r.constants.two_photon_offset = std::stod(need("two_photon_offset"));
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("calibration: bad number: ") + e.what());
    }
    return r;
}

std::vector<TableRow> standard_table_rows()
{
    const Vec3 along = lab::cavity_axis(), up = lab::vertical(), out_of_plane = lab::transverse();
    std::vector<Jones> sweep;
    for (int deg = 0; deg <= 90; deg += 15)
        sweep.push_back(linear_polarization(deg));
    return {
        {"->", "0", along, {linear_polarization(0.0)}},
        {"->", "90", along, {linear_polarization(90.0)}},
        {"^", "0..90", up, sweep},
        {"(.)", "0", out_of_plane, {linear_polarization(0.0)}},
        {"(.)", "90", out_of_plane, {linear_polarization(90.0)}},
    };
}

std::string render_polarization_table(const std::vector<TableRow>& rows)
{
    static const char* names[3] = {"sigma-", "pi", "sigma+"};
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w)
            s.resize(w, ' ');
        return s;
    };
    auto finish = [](std::string s) {
        s.erase(s.find_last_not_of(' ') + 1);
        return s + "\n";
    };
    std::string out = finish(pad("B-field", 10) + pad("pump pol", 12) + pad("excited transitions", 27) +
                             "cavity output polarization");
    out += finish(std::string(75, '-'));
    for (const TableRow& row : rows) {
        std::optional<SelectionRow> sel;
        for (const Jones& j : row.pump) {
            BeamGeometry pump;
            pump.polarization = j;
            const SelectionRow s = selection_rules(pump, row.field);
            if (sel && (s.excited != sel->excited || s.output != sel->output))
                throw PhysicsError("selection rules differ within the pump range of row '" + row.field_label + " " +
                                   row.pump_label + "'");
            sel = s;
        }
        std::string line = pad(row.field_label, 10) + pad(row.pump_label, 12);
        for (int i = 0; i < 3; ++i)
            line += pad(sel->excited[i] ? names[i] : "---", 9);
        for (int i = 0; i < 3; ++i)
            line += pad(sel->output[i].str(), 9);
        out += finish(line);
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    return execute(args, out, err, nullptr, nullptr);
}

int run(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace virtlase::cli
