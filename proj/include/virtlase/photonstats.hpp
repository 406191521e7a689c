#pragma once

#include "virtlase/clickstream.hpp"

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace virtlase {

enum class Regime { thermal, laser, poisson };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

struct IntensityParams
{
    Regime regime = Regime::poisson;
    double mean_rate = 5.0e5;        // total detected counts/s
    double coherence_time = 0.0;     // s; intensity correlation time, g2 = 1 + exp(-|tau|/tau_c)
    double duration = 1.0;           // s
    double sample_period = 1.0e-6;   // s
    double ripple = 1.0e-2;          // relative rms of the laser ripple
    double ripple_frequency = 50.0;  // Hz

    /// Throws ParameterError if the trace would be undersampled or too short.
    void validate() const;
    std::uint64_t sample_count() const;
};

struct IntensityTrace
{
    double sample_period = 0.0;
    std::vector<double> samples; // counts/s, piecewise constant over each period
    Regime regime = Regime::poisson;
};

/// thermal: rate |alpha|^2 with alpha a complex Ornstein-Uhlenbeck field of
/// correlation time 2 tau_c (Gaussian light, g2(0) = 2). laser: constant rate
/// with a sinusoidal ripple. poisson: constant rate. Deterministic per seed.
IntensityTrace simulate_intensity(const IntensityParams& params, std::uint64_t seed);

/// Inhomogeneous Poisson sampling of the trace, each photon routed 50/50 onto
/// detector 0 or 1. Photons falling into an occupied nanosecond of the same
/// detector are merged.
std::pair<ClickStream, ClickStream> poissonize(const IntensityTrace& trace, std::uint64_t seed);

/// simulate_intensity + poissonize without holding the whole trace in memory.
/// Bit-identical to the two-step path.
std::pair<ClickStream, ClickStream> simulate_clicks(const IntensityParams& params, std::uint64_t seed);

struct CorrelationResult
{
    std::vector<double> lag;       // bin centres, s
    std::vector<double> g2;
    std::vector<double> sigma;     // one-standard-error, from counting statistics
    std::vector<std::uint64_t> counts;
    double bin_width = 0.0;        // s
    std::uint64_t total_pairs = 0;

    std::size_t centre() const { return lag.size() / 2; }
};

/// Histogram of delays t_b - t_a with |delay| up to max_lag, normalized by the
/// mean rates and the edge-corrected overlap duration of each bin. Bins are
/// centred on multiples of the bin width (quantized to whole nanoseconds).
/// Work is split over `threads` contiguous shards of `a`; the merge is an
/// integer sum, so the result does not depend on the thread count.
CorrelationResult g2_cross(const ClickStream& a, const ClickStream& b, double bin_width, double max_lag,
                           unsigned threads = 1);

/// Autocorrelation of a single detector with zero-delay self pairs excluded.
CorrelationResult g2_auto(const ClickStream& a, double bin_width, double max_lag, unsigned threads = 1);

/// Centre-bin value of g2 for chaotic light with g2(tau) = 1 + exp(-|tau|/tau_c)
/// averaged over a bin of width `bin_width` centred on zero.
double binning_washout(double coherence_time, double bin_width);

/// Coherence time for which binning_washout equals `peak` (1 < peak < 2).
double invert_washout(double peak, double bin_width);

} // namespace virtlase
