#include "virtlase/photonstats.hpp"
#include "virtlase/constants.hpp"
#include "virtlase/errors.hpp"
#include "virtlase/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <thread>

namespace virtlase {

namespace {

// stream tags in the fourth Philox counter word
constexpr std::uint32_t field_stream = 0x4F55u;  // "OU"
constexpr std::uint32_t photon_stream = 0x5048u; // "PH"
constexpr std::uint64_t photon_block = 4096;     // samples sharing one exponential chain
constexpr std::uint64_t chunk_samples = photon_block * 256;

class IntensityGenerator
{
public:
    IntensityGenerator(const IntensityParams& params, std::uint64_t seed) : params_(params), rng_(seed)
    {
        if (params_.regime == Regime::thermal) {
            const double field_time = 2.0 * params_.coherence_time;
            decay_ = std::exp(-params_.sample_period / field_time);
            kick_ = std::sqrt(-std::expm1(-2.0 * params_.sample_period / field_time));
        }
    }

    void fill(std::vector<double>& out, std::uint64_t count)
    {
        out.resize(count);
        for (std::uint64_t i = 0; i < count; ++i, ++next_)
            out[i] = sample(next_);
    }

private:
    double sample(std::uint64_t k)
    {
        switch (params_.regime) {
        case Regime::poisson:
            return params_.mean_rate;
        case Regime::laser: {
            const double t = (double(k) + 0.5) * params_.sample_period;
            const double mod = std::sqrt(2.0) * params_.ripple *
                               std::sin(constants::two_pi * params_.ripple_frequency * t);
            return std::max(0.0, params_.mean_rate * (1.0 + mod));
        }
        case Regime::thermal: {
            const auto g = standard_normal_pair(rng_.draw(k, 0, field_stream));
            const std::complex<double> noise(g[0] / std::sqrt(2.0), g[1] / std::sqrt(2.0));
            field_ = k == 0 ? noise : decay_ * field_ + kick_ * noise;
            return params_.mean_rate * std::norm(field_);
        }
        }
        return 0.0;
    }

    IntensityParams params_;
    Philox4x32 rng_;
    std::uint64_t next_ = 0;
    std::complex<double> field_{};
    double decay_ = 0.0;
    double kick_ = 0.0;
};

class PhotonSampler
{
public:
    PhotonSampler(double sample_period, std::uint64_t samples, std::uint64_t seed)
        : dt_(sample_period), rng_(seed)
    {
        const auto duration_ns = static_cast<std::uint64_t>(std::llround(double(samples) * sample_period * 1e9));
        for (std::uint32_t d = 0; d < 2; ++d) {
            out_[d].detector_id = d;
            out_[d].duration_ns = duration_ns;
        }
    }

    void consume(const std::vector<double>& rates, std::uint64_t first)
    {
        for (std::size_t i = 0; i < rates.size(); ++i) {
            const std::uint64_t k = first + i;
            if (k % photon_block == 0) {
                block_ = k / photon_block;
                draw_ = 0;
                next_exponential();
            }
            const double rate = rates[i];
            if (!(rate > 0.0))
                continue;
            const double available = rate * dt_;
            double used = 0.0;
            while (budget_ <= available - used) {
                used += budget_;
                emit(double(k) * dt_ + used / rate);
                next_exponential();
            }
            budget_ -= available - used;
        }
    }

    std::pair<ClickStream, ClickStream> finish() { return {std::move(out_[0]), std::move(out_[1])}; }

private:
    void next_exponential()
    {
        const auto w = rng_.draw(block_, draw_++, photon_stream);
        budget_ = unit_exponential(w[0], w[1]);
        route_ = w[2] & 1u;
    }

    void emit(double t)
    {
        ClickStream& s = out_[route_];
        const auto ns = static_cast<std::uint64_t>(std::floor(t * 1e9));
        if (ns >= s.duration_ns)
            return;
        if (!s.timestamps_ns.empty() && s.timestamps_ns.back() >= ns)
            return;
        s.timestamps_ns.push_back(ns);
    }

    double dt_;
    Philox4x32 rng_;
    std::uint64_t block_ = 0;
    std::uint32_t draw_ = 0;
    double budget_ = 0.0;
    std::uint32_t route_ = 0;
    ClickStream out_[2];
};

} // namespace

std::string_view to_string(Regime regime)
{
    switch (regime) {
    case Regime::thermal:
        return "thermal";
    case Regime::laser:
        return "laser";
    case Regime::poisson:
        return "poisson";
    }
    return "unknown";
}

Regime parse_regime(std::string_view text)
{
    if (text == "thermal")
        return Regime::thermal;
    if (text == "laser")
        return Regime::laser;
    if (text == "poisson")
        return Regime::poisson;
    throw ParameterError("unknown regime '" + std::string(text) + "'");
}

void IntensityParams::validate() const
{
    if (!(mean_rate > 0.0))
        throw ParameterError("intensity: mean rate must be positive");
    if (!(sample_period > 0.0) || !(duration >= sample_period))
        throw ParameterError("intensity: need 0 < sample_period <= duration");
    if (ripple < 0.0 || ripple_frequency < 0.0)
        throw ParameterError("intensity: ripple parameters must be non-negative");
    if (regime == Regime::thermal) {
        if (!(coherence_time > 0.0))
            throw ParameterError("intensity: thermal light needs a positive coherence time");
        if (sample_period > coherence_time / 10.0 * (1.0 + 1e-12))
            throw ParameterError("intensity: sample_period must not exceed coherence_time/10");
        if (duration < 100.0 * coherence_time)
            throw ParameterError("intensity: duration must be at least 100 coherence times");
    }
}

std::uint64_t IntensityParams::sample_count() const
{
    return static_cast<std::uint64_t>(std::llround(duration / sample_period));
}

IntensityTrace simulate_intensity(const IntensityParams& params, std::uint64_t seed)
{
    params.validate();
    IntensityTrace trace;
    trace.sample_period = params.sample_period;
    trace.regime = params.regime;
    IntensityGenerator gen(params, seed);
    gen.fill(trace.samples, params.sample_count());
    return trace;
}

std::pair<ClickStream, ClickStream> poissonize(const IntensityTrace& trace, std::uint64_t seed)
{
    if (!(trace.sample_period > 0.0) || trace.samples.empty())
        throw ParameterError("poissonize: empty trace");
    for (double r : trace.samples)
        if (!(r >= 0.0))
            throw ParameterError("poissonize: negative or NaN rate in trace");
    PhotonSampler sampler(trace.sample_period, trace.samples.size(), seed);
    sampler.consume(trace.samples, 0);
    return sampler.finish();
}

std::pair<ClickStream, ClickStream> simulate_clicks(const IntensityParams& params, std::uint64_t seed)
{
    params.validate();
    const std::uint64_t total = params.sample_count();
    IntensityGenerator gen(params, seed);
    PhotonSampler sampler(params.sample_period, total, seed);
    std::vector<double> chunk;
    for (std::uint64_t first = 0; first < total; first += chunk_samples) {
        gen.fill(chunk, std::min(chunk_samples, total - first));
        sampler.consume(chunk, first);
    }
    return sampler.finish();
}

namespace {

void require_sorted(const ClickStream& s, const char* name)
{
    if (s.timestamps_ns.empty())
        throw ParameterError(std::string("g2: stream ") + name + " is empty");
    for (std::size_t i = 1; i < s.timestamps_ns.size(); ++i)
        if (s.timestamps_ns[i] <= s.timestamps_ns[i - 1])
            throw ParameterError(std::string("g2: stream ") + name + " is not strictly increasing");
}

struct Binning
{
    std::int64_t bin = 1;   // ns
    std::int64_t half = 0;  // K
    std::int64_t span = 0;  // (2K + 1) bin; a pair is kept when 2|d| < span
    double inv_two_bin = 0.0;

    std::int64_t index(std::int64_t d) const
    {
        // k = sign(d) floor((2|d| + bin) / (2 bin)), symmetric under d -> -d
        const std::int64_t mag = d < 0 ? -d : d;
        const std::int64_t num = 2 * mag + bin;
        auto q = static_cast<std::int64_t>(double(num) * inv_two_bin);
        if (q * 2 * bin > num)
            --q;
        else if ((q + 1) * 2 * bin <= num)
            ++q;
        return d < 0 ? -q : q;
    }
};

void correlate_shard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b, std::size_t first,
                     std::size_t last, bool skip_self, const Binning& bins, std::vector<std::uint64_t>& hist)
{
    if (first >= last)
        return;
    const auto reach = static_cast<std::uint64_t>(bins.half * bins.bin + bins.bin / 2 + 1);
    std::size_t lo = static_cast<std::size_t>(
        std::lower_bound(b.begin(), b.end(), a[first] > reach ? a[first] - reach : 0) - b.begin());
    const std::size_t nb = b.size();
    const std::int64_t offset = bins.half;
    for (std::size_t i = first; i < last; ++i) {
        const auto ta = static_cast<std::int64_t>(a[i]);
        while (lo < nb && 2 * (ta - static_cast<std::int64_t>(b[lo])) >= bins.span)
            ++lo;
        for (std::size_t j = lo; j < nb; ++j) {
            const std::int64_t d = static_cast<std::int64_t>(b[j]) - ta;
            if (2 * d >= bins.span)
                break;
            if (skip_self && j == i)
                continue;
            ++hist[static_cast<std::size_t>(bins.index(d) + offset)];
        }
    }
}

CorrelationResult correlate(const ClickStream& a, const ClickStream& b, bool self, double bin_width, double max_lag,
                            unsigned threads)
{
    if (!(bin_width > 0.0) || !(max_lag >= bin_width))
        throw ParameterError("g2: need bin_width > 0 and max_lag >= bin_width");
    require_sorted(a, "a");
    require_sorted(b, "b");

    Binning bins;
    bins.bin = std::max<std::int64_t>(1, std::llround(bin_width * 1e9));
    bins.half = static_cast<std::int64_t>(std::floor(max_lag * 1e9 / double(bins.bin) + 1e-9));
    bins.span = (2 * bins.half + 1) * bins.bin;
    bins.inv_two_bin = 1.0 / double(2 * bins.bin);
    const auto nbins = static_cast<std::size_t>(2 * bins.half + 1);

    threads = std::max(1u, threads);
    const std::size_t na = a.size();
    std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(nbins, 0));
    auto shard_range = [&](unsigned t) {
        return std::pair<std::size_t, std::size_t>{na * t / threads, na * (t + 1) / threads};
    };
    if (threads == 1) {
        correlate_shard(a.timestamps_ns, b.timestamps_ns, 0, na, self, bins, partial[0]);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                const auto [first, last] = shard_range(t);
                correlate_shard(a.timestamps_ns, b.timestamps_ns, first, last, self, bins, partial[t]);
            });
        for (auto& th : pool)
            th.join();
    }

    CorrelationResult r;
    r.bin_width = double(bins.bin) * 1e-9;
    r.counts.assign(nbins, 0);
    for (const auto& h : partial)
        for (std::size_t k = 0; k < nbins; ++k)
            r.counts[k] += h[k];

    // Expected pairs of uncorrelated streams: sum over the integer lags d of a
    // bin of (T - |d|), times the pair density N_a N_b / T^2 (all in ns). The
    // centre bin holds one integer lag fewer than the others for even widths.
    const double span_ns = double(std::min(a.duration_ns, b.duration_ns));
    const double na_d = double(a.size());
    const double pairs_norm = self ? na_d * (na_d - 1.0) : na_d * double(b.size());
    const double density = pairs_norm / (span_ns * span_ns);
    auto first_lag = [&](std::int64_t k) { return (2 * k - 1) * bins.bin / 2 + ((2 * k - 1) * bins.bin % 2 != 0); };
    for (std::size_t k = 0; k < nbins; ++k) {
        const std::int64_t idx = static_cast<std::int64_t>(k) - bins.half;
        const std::int64_t mag = idx < 0 ? -idx : idx;
        const double centre = double(idx) * r.bin_width;
        double overlap = 0.0;
        if (mag == 0) {
            const double h = double(first_lag(1) - 1);
            overlap = (2.0 * h + 1.0) * span_ns - h * (h + 1.0);
        } else {
            const double lo = double(first_lag(mag)), hi = double(first_lag(mag + 1) - 1);
            const double n = hi - lo + 1.0;
            overlap = n * span_ns - 0.5 * n * (lo + hi);
        }
        const double expected = density * overlap;
        const double h = double(r.counts[k]);
        r.lag.push_back(centre);
        r.g2.push_back(h / expected);
        r.sigma.push_back(h > 0.0 ? std::sqrt(h) / expected : 1.0 / expected);
        r.total_pairs += r.counts[k];
    }
    return r;
}

} // namespace

CorrelationResult g2_cross(const ClickStream& a, const ClickStream& b, double bin_width, double max_lag,
                           unsigned threads)
{
    return correlate(a, b, false, bin_width, max_lag, threads);
}

CorrelationResult g2_auto(const ClickStream& a, double bin_width, double max_lag, unsigned threads)
{
    return correlate(a, a, true, bin_width, max_lag, threads);
}

double binning_washout(double coherence_time, double bin_width)
{
    if (!(coherence_time > 0.0) || !(bin_width > 0.0))
        throw DomainError("binning_washout: coherence time and bin width must be positive");
    const double x = bin_width / (2.0 * coherence_time);
    return 1.0 - std::expm1(-x) / x;
}

double invert_washout(double peak, double bin_width)
{
    if (!(peak > 1.0 && peak < 2.0) || !(bin_width > 0.0))
        throw DomainError("invert_washout: peak must lie in (1, 2)");
    // washout rises monotonically from 1 to 2 with the coherence time
    double lo = bin_width * 1e-9, hi = bin_width * 1e9;
    for (int it = 0; it < 400 && hi / lo > 1.0 + 1e-15; ++it) {
        const double mid = std::sqrt(lo * hi);
        (binning_washout(mid, bin_width) < peak ? lo : hi) = mid;
    }
    return std::sqrt(lo * hi);
}

} // namespace virtlase
