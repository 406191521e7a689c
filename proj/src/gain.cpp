#include "virtlase/gain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <thread>

namespace virtlase {

namespace {

int max_family(const std::vector<int>& families)
{
    if (families.empty())
        throw ParameterError("at least one transverse family is required");
    for (int f : families)
        if (f < 0)
            throw DomainError("negative transverse family");
    return *std::max_element(families.begin(), families.end());
}

std::size_t family_slot(const std::vector<int>& families, int family)
{
    const auto it = std::find(families.begin(), families.end(), family);
    if (it == families.end())
        throw ParameterError("family " + std::to_string(family) + " is not part of the setup");
    return static_cast<std::size_t>(it - families.begin());
}

} // namespace

GainModel::GainModel(LaserSetup setup) : setup_(std::move(setup))
{
    const int top = max_family(setup_.families);
    const ModeOverlapTable table(setup_.ensemble.cloud_radius_rms, setup_.cavity.waist_radius, top);
    const double fundamental = table.family_fraction(0);
    for (int f : setup_.families)
        family_weights_.push_back(table.family_fraction(f) / fundamental / double(f + 1));
    if (setup_.doppler_broadening)
        doppler_sigma_hz_ = doppler_sigma(setup_.ensemble.temperature, setup_.ensemble.species_mass,
                                          setup_.pump_line.wavelength);
}

Vec3 GainModel::active_field(const OperatingPoint& op) const
{
    MagneticEnvironment env;
    env.radial_gradient = setup_.radial_gradient;
    env.offset_field = op.b_offset;
    return quadrupole_field(env, op.active_position);
}

double GainModel::family_weight(int family) const
{
    return family_weights_[family_slot(setup_.families, family)];
}

FamilyGain GainModel::family_gain(const OperatingPoint& op, int family, const CalibrationConstants& cal) const
{
    const Vec3 field = active_field(op);
    if (!(field.norm() > 0.0))
        throw QuantizationAxisError();

    BeamGeometry pump;
    pump.propagation = setup_.pump_propagation;
    pump.polarization = op.pump_polarization;
    pump.power = op.pump_power;
    pump.waist_radius = setup_.pump_waist;
    pump.detuning = op.pump_detuning;

    const ExcitationWeights weights = pump_excitation_weights(pump, field);
    const double s_pump = saturation_parameter(op.pump_power, setup_.pump_waist, setup_.pump_line.saturation_intensity);
    const double field_gauss = field.norm();
    const double blue_width = setup_.mot_line.linewidth;
    const double g = setup_.cavity.coupling;

    // Two-photon condition: cavity photon (TEM_N) + absorbed MOT photon land on the pumped sublevel.
    const double mismatch = op.cavity_detuning + transverse_mode_frequency(family, setup_.cavity) -
                            op.pump_detuning - op.mot_detuning - cal.two_photon_offset;
    const double virtual_level = unit_lorentzian(mismatch, blue_width / constants::two_pi);
    const double prefactor = cal.gain_scale * op.atoms * family_weight(family) * g * g * op.mot_saturation *
                             virtual_level / blue_width;

    FamilyGain out;
    out.family = family;
    for (int m = -1; m <= 1; ++m) {
        const double emission = cavity_emission(m, field, setup_.cavity.axis).strength;
        // each Zeeman channel is saturated by its own share of the pump intensity
        const double population =
            excited_population(op.pump_detuning - zeeman_shift(setup_.pump_line.lande_g_upper, m, field_gauss),
                               weights[m] * s_pump, setup_.pump_line.linewidth, doppler_sigma_hz_);
        out.per_m[m + 1] = prefactor * population * emission;
        out.total += out.per_m[m + 1];
    }
    out.above_threshold = out.total >= kappa();
    return out;
}

GainBreakdown GainModel::mode_gain(const OperatingPoint& op, const CalibrationConstants& cal) const
{
    GainBreakdown out;
    for (int f : setup_.families)
        out.families.push_back(family_gain(op, f, cal));
    return out;
}

double single_family_photons(double gain, double kappa, double saturation_photons)
{
    if (gain < 0.0 || !(kappa > 0.0) || !(saturation_photons > 0.0))
        throw DomainError("single_family_photons: need gain >= 0, kappa > 0, n_sat > 0");
    // kappa/n_sat n^2 - b n - G = 0 with b = G - kappa + G/n_sat
    const double a = kappa / saturation_photons;
    const double b = gain - kappa + gain / saturation_photons;
    const double root = std::sqrt(b * b + 4.0 * a * gain);
    return b >= 0.0 ? (b + root) / (2.0 * a) : 2.0 * gain / (root - b);
}

std::vector<double> solve_rate_equations(const std::vector<double>& gains, double kappa, double saturation_photons)
{
    if (!(kappa > 0.0) || !(saturation_photons > 0.0))
        throw DomainError("solve_rate_equations: kappa and n_sat must be positive");
    double g_max = 0.0;
    for (double g : gains) {
        if (!(g >= 0.0))
            throw DomainError("solve_rate_equations: gains must be non-negative");
        g_max = std::max(g_max, g);
    }
    std::vector<double> photons(gains.size(), 0.0);
    if (g_max == 0.0)
        return photons;

    // Saturation factor S = 1 + sum n / n_sat; for given S each n_i = G_i S / (kappa S - G_i).
    // Write S = s0 (1 + t), t > 0, so the dominant denominator stays exact near threshold.
    const double s0 = std::max(1.0, g_max / kappa);
    auto denominator = [&](double g, double t) { return kappa * s0 * t + (kappa * s0 - g); };
    auto excess = [&](double t) {
        const double s = s0 * (1.0 + t);
        double sum = 0.0;
        for (double g : gains)
            if (g > 0.0)
                sum += g * s / denominator(g, t);
        return 1.0 + sum / saturation_photons - s;
    };
    auto slope = [&](double t) {
        const double s = s0 * (1.0 + t);
        double sum = 0.0;
        for (double g : gains)
            if (g > 0.0) {
                const double d = denominator(g, t);
                sum += g * g / (d * d);
            }
        (void)s;
        return -s0 * (sum / saturation_photons + 1.0);
    };

    double hi = 1.0;
    int guard = 0;
    while (excess(hi) > 0.0) {
        hi *= 2.0;
        if (++guard > 2000)
            throw ConvergenceError("rate equations: no upper bracket", hi);
    }
    double lo = hi;
    while (excess(lo) <= 0.0) {
        lo *= 0.5;
        if (++guard > 4000 || lo == 0.0)
            throw ConvergenceError("rate equations: no lower bracket", lo);
    }
    // excess(lo) > 0 >= excess(hi); safeguarded Newton
    double t = lo;
    constexpr int max_iterations = 400;
    for (int it = 0; it < max_iterations; ++it) {
        const double f = excess(t);
        if (f > 0.0)
            lo = t;
        else
            hi = t;
        double next = t - f / slope(t);
        if (!(next > lo && next < hi))
            next = (hi / lo > 4.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        if (std::abs(next - t) <= 1e-15 * t || hi - lo <= 1e-15 * hi) {
            t = next;
            for (std::size_t i = 0; i < gains.size(); ++i)
                if (gains[i] > 0.0)
                    photons[i] = gains[i] * s0 * (1.0 + t) / denominator(gains[i], t);
            return photons;
        }
        t = next;
    }
    throw ConvergenceError("rate equations: no convergence", t);
}

double rate_equation_residual(const std::vector<double>& gains, const std::vector<double>& photons, double kappa,
                              double saturation_photons)
{
    double total = 0.0;
    for (double n : photons)
        total += n;
    const double s = 1.0 + total / saturation_photons;
    double worst = 0.0;
    for (std::size_t i = 0; i < gains.size(); ++i) {
        const double rate = (gains[i] / s - kappa) * photons[i] + gains[i];
        const double scale = gains[i] + kappa * photons[i];
        if (scale > 0.0)
            worst = std::max(worst, std::abs(rate) / scale);
    }
    return worst;
}

double output_power(double photons, const CavityGeometry& cavity, double wavelength)
{
    if (photons < 0.0)
        throw DomainError("output_power: negative photon number");
    const double photon_energy = constants::planck * constants::speed_of_light / wavelength;
    return cavity.output_fraction * photons * cavity.kappa * photon_energy;
}

double LaserSolution::total_power() const
{
    double p = 0.0;
    for (const auto& f : families)
        p += f.output_power;
    return p;
}

bool LaserSolution::any_lasing() const
{
    return std::any_of(families.begin(), families.end(), [](const FamilyState& f) { return f.lasing; });
}

LaserSolution steady_state(const GainModel& model, const CalibrationConstants& cal, const OperatingPoint& op)
{
    const GainBreakdown breakdown = model.mode_gain(op, cal);
    std::vector<double> gains;
    for (const auto& f : breakdown.families)
        gains.push_back(f.total);
    const std::vector<double> photons = solve_rate_equations(gains, model.kappa(), cal.saturation_photons);

    LaserSolution out;
    for (std::size_t i = 0; i < gains.size(); ++i) {
        FamilyState s;
        s.family = breakdown.families[i].family;
        s.gain = gains[i];
        s.photons = photons[i];
        s.output_power = output_power(photons[i], model.setup().cavity, model.setup().pump_line.wavelength);
        s.lasing = breakdown.families[i].above_threshold;
        out.families.push_back(s);
    }
    return out;
}

CalibrationConstants calibrate(const GainModel& model, const CalibrationAnchors& anchors, double two_photon_offset)
{
    if (!(anchors.threshold_atoms > 0.0))
        throw CalibrationError("calibration: reference threshold must be positive");
    if (!(anchors.budget_photons > 0.0))
        throw CalibrationError("calibration: photon budget must be positive");
    const std::size_t fundamental = family_slot(model.setup().families, 0);

    CalibrationConstants cal;
    cal.two_photon_offset = two_photon_offset;
    OperatingPoint op = anchors.threshold_point;
    op.atoms = anchors.threshold_atoms;
    const double unit_gain = model.family_gain(op, 0, cal).total;
    if (!(unit_gain > 0.0))
        throw CalibrationError("calibration: TEM0 gain vanishes at the threshold anchor");
    // gain is linear in gain_scale
    cal.gain_scale = model.kappa() / unit_gain;

    const GainBreakdown budget = model.mode_gain(anchors.budget_point, cal);
    std::vector<double> gains;
    for (const auto& f : budget.families)
        gains.push_back(f.total);
    if (!(gains[fundamental] > model.kappa()))
        throw CalibrationError("calibration: TEM0 is below threshold at the photon-budget anchor");

    auto photons_at = [&](double log_nsat) {
        return solve_rate_equations(gains, model.kappa(), std::exp(log_nsat))[fundamental];
    };
    double lo = std::log(1e-3), hi = std::log(1e18);
    if (photons_at(lo) > anchors.budget_photons || photons_at(hi) < anchors.budget_photons)
        throw CalibrationError("calibration: photon budget not bracketed by the saturation-photon range");
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (photons_at(mid) < anchors.budget_photons ? lo : hi) = mid;
    }
    cal.saturation_photons = std::exp(0.5 * (lo + hi));
    return cal;
}

double threshold_solve(const GainModel& model, const CalibrationConstants& cal, ThresholdVariable variable,
                       OperatingPoint op, int family, double rel_tol)
{
    double& knob = variable == ThresholdVariable::atoms ? op.atoms : op.pump_power;
    const double limit = variable == ThresholdVariable::atoms ? 1e15 : 1e3;
    auto gain_at = [&](double x) {
        knob = x;
        return model.family_gain(op, family, cal).total;
    };
    const double kappa = model.kappa();
    double hi = std::max(knob, variable == ThresholdVariable::atoms ? 1.0 : 1e-4);
    while (gain_at(hi) < kappa) {
        hi *= 2.0;
        if (hi > limit)
            throw NoThresholdError("no threshold in range for TEM" + std::to_string(family));
    }
    double lo = 0.0;
    while (hi - lo > rel_tol * hi) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        (gain_at(mid) < kappa ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> GridAxis::values() const
{
    if (!(step > 0.0))
        throw ParameterError("grid step must be positive");
    if (stop < start)
        throw ParameterError("grid range must satisfy start <= stop");
    std::vector<double> v;
    if (stop == start)
        return v;
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    v.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        v.push_back(start + double(i) * step);
    return v;
}

DetuningMap detuning_map(const GainModel& model, const CalibrationConstants& cal, const OperatingPoint& op,
                         const GridAxis& pump, const GridAxis& cavity, unsigned threads)
{
    DetuningMap map;
    map.families = model.setup().families;
    map.pump_values = pump.values();
    map.cavity_values = cavity.values();
    if (map.pump_values.empty() || map.cavity_values.empty()) {
        map.pump_values.clear();
        map.cavity_values.clear();
        return map;
    }
    const std::size_t rows = map.pump_values.size(), cols = map.cavity_values.size();
    map.cells.resize(rows * cols);

    auto fill_row = [&](std::size_t i) {
        OperatingPoint cell_op = op;
        cell_op.pump_detuning = map.pump_values[i];
        for (std::size_t j = 0; j < cols; ++j) {
            cell_op.cavity_detuning = map.cavity_values[j];
            MapCell& cell = map.cells[i * cols + j];
            cell.pump_detuning = cell_op.pump_detuning;
            cell.cavity_detuning = cell_op.cavity_detuning;
            cell.family_power.assign(map.families.size(), std::nullopt);
            try {
                const LaserSolution sol = steady_state(model, cal, cell_op);
                cell.total_power = sol.total_power();
                for (std::size_t k = 0; k < sol.families.size(); ++k)
                    cell.family_power[k] = sol.families[k].output_power;
                cell.above_threshold = sol.any_lasing();
            } catch (const PhysicsError&) {
                // left as missing data
            }
        }
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows)));
    if (threads == 1) {
        for (std::size_t i = 0; i < rows; ++i)
            fill_row(i);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < rows; i += threads)
                    fill_row(i);
            });
        for (auto& th : pool)
            th.join();
    }
    return map;
}

std::vector<Lobe> find_lobes(const DetuningMap& map)
{
    const std::size_t rows = map.pump_values.size(), cols = map.cavity_values.size();
    std::vector<int> label(rows * cols, -1);
    std::vector<Lobe> lobes;
    for (std::size_t start = 0; start < rows * cols; ++start) {
        if (label[start] >= 0 || !map.cells[start].above_threshold)
            continue;
        const int id = static_cast<int>(lobes.size());
        Lobe lobe;
        double weight = 0.0;
        std::deque<std::size_t> queue{start};
        label[start] = id;
        lobe.peak_power = -1.0;
        while (!queue.empty()) {
            const std::size_t k = queue.front();
            queue.pop_front();
            const MapCell& c = map.cells[k];
            const double p = c.total_power.value_or(0.0);
            ++lobe.cells;
            weight += p;
            lobe.centroid_pump += p * c.pump_detuning;
            lobe.centroid_cavity += p * c.cavity_detuning;
            if (p > lobe.peak_power) {
                lobe.peak_power = p;
                lobe.peak_pump = c.pump_detuning;
                lobe.peak_cavity = c.cavity_detuning;
            }
            const std::size_t i = k / cols, j = k % cols;
            const std::size_t neighbours[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
            for (const auto& nb : neighbours) {
                if (nb[0] >= rows || nb[1] >= cols) // wraps for i - 1 at 0
                    continue;
                const std::size_t n = nb[0] * cols + nb[1];
                if (label[n] < 0 && map.cells[n].above_threshold) {
                    label[n] = id;
                    queue.push_back(n);
                }
            }
        }
        if (weight > 0.0) {
            lobe.centroid_pump /= weight;
            lobe.centroid_cavity /= weight;
        }

        // half-maximum width along the cavity axis through the peak
        const auto row = static_cast<std::size_t>(
            std::find(map.pump_values.begin(), map.pump_values.end(), lobe.peak_pump) - map.pump_values.begin());
        auto power = [&](std::size_t j) { return map.at(row, j).total_power.value_or(0.0); };
        const auto peak_col = static_cast<std::size_t>(
            std::find(map.cavity_values.begin(), map.cavity_values.end(), lobe.peak_cavity) - map.cavity_values.begin());
        const double half = 0.5 * lobe.peak_power;
        double left = map.cavity_values.front(), right = map.cavity_values.back();
        for (std::size_t j = peak_col; j-- > 0;)
            if (power(j) < half) {
                const double f = (half - power(j)) / (power(j + 1) - power(j));
                left = map.cavity_values[j] + f * (map.cavity_values[j + 1] - map.cavity_values[j]);
                break;
            }
        for (std::size_t j = peak_col + 1; j < cols; ++j)
            if (power(j) < half) {
                const double f = (power(j - 1) - half) / (power(j - 1) - power(j));
                right = map.cavity_values[j - 1] + f * (map.cavity_values[j] - map.cavity_values[j - 1]);
                break;
            }
        lobe.cavity_fwhm = right - left;
        lobes.push_back(lobe);
    }
    return lobes;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw ParameterError("fit_line: need at least two points");
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        design(i, 0) = x[static_cast<std::size_t>(i)];
        design(i, 1) = 1.0;
        rhs(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(rhs);
    return {coef(0), coef(1), x.size()};
}

namespace {

template <typename F>
double golden_maximize(F&& f, double a, double b, double tolerance)
{
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tolerance) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

} // namespace

OptimumScan optimum_scan(const GainModel& model, const CalibrationConstants& cal, const OperatingPoint& op,
                         ScanVariable variable, const std::vector<double>& values, const ScanWindow& window)
{
    if (values.empty())
        throw ParameterError("optimum_scan: empty scan range");
    const Vec3 direction = op.b_offset.norm() > 0.0 ? Vec3(op.b_offset.normalized()) : lab::cavity_axis();
    const std::vector<double> pump_grid = window.pump.values();
    const std::vector<double> cavity_grid = window.cavity.values();
    if (pump_grid.empty() || cavity_grid.empty())
        throw ParameterError("optimum_scan: empty detuning window");

    OptimumScan scan;
    scan.variable = variable;
    std::vector<double> xs, pumps, cavities;
    double offset_sum = 0.0;

    for (double x : values) {
        OperatingPoint base = op;
        if (variable == ScanVariable::b_offset)
            base.b_offset = x * direction;
        else
            base.mot_detuning = x;

        auto power = [&](double pump, double cavity) {
            OperatingPoint p = base;
            p.pump_detuning = pump;
            p.cavity_detuning = cavity;
            try {
                return steady_state(model, cal, p).total_power();
            } catch (const PhysicsError&) {
                return 0.0;
            }
        };

        OptimumPoint point;
        point.x = x;
        double best = -1.0, best_pump = 0.0, best_cavity = 0.0;
        bool lasing = false;
        for (double pump : pump_grid) {
            if ((window.lobe > 0 && !(pump > 0.0)) || (window.lobe < 0 && !(pump < 0.0)))
                continue;
            for (double cavity : cavity_grid) {
                OperatingPoint p = base;
                p.pump_detuning = pump;
                p.cavity_detuning = cavity;
                LaserSolution sol;
                try {
                    sol = steady_state(model, cal, p);
                } catch (const PhysicsError&) {
                    continue;
                }
                if (sol.total_power() > best) {
                    best = sol.total_power();
                    best_pump = pump;
                    best_cavity = cavity;
                }
                lasing = lasing || sol.any_lasing();
            }
        }
        if (lasing) {
            double pump = best_pump, cavity = best_cavity;
            for (int round = 0; round < 100; ++round) {
                const double new_pump = golden_maximize([&](double v) { return power(v, cavity); },
                                                        pump - window.pump.step, pump + window.pump.step,
                                                        window.tolerance);
                const double new_cavity = golden_maximize([&](double v) { return power(new_pump, v); },
                                                          cavity - window.cavity.step, cavity + window.cavity.step,
                                                          window.tolerance);
                const bool settled = std::abs(new_pump - pump) < window.tolerance &&
                                     std::abs(new_cavity - cavity) < window.tolerance;
                pump = new_pump;
                cavity = new_cavity;
                if (settled)
                    break;
            }
            point.pump_opt = pump;
            point.cavity_opt = cavity;
            point.power = power(pump, cavity);
            xs.push_back(x);
            pumps.push_back(pump);
            cavities.push_back(cavity);
            offset_sum += cavity - pump - base.mot_detuning;
        }
        scan.points.push_back(point);
    }
    if (xs.size() >= 2) {
        scan.pump_fit = fit_line(xs, pumps);
        scan.cavity_fit = fit_line(xs, cavities);
    }
    if (!xs.empty())
        scan.two_photon_offset = offset_sum / double(xs.size());
    return scan;
}

} // namespace virtlase
