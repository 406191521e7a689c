#include "virtlase/errors.hpp"
#include "virtlase/photonstats.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace virtlase;
using doctest::Approx;

namespace {

IntensityParams thermal(double tau_c, double duration, double rate)
{
    IntensityParams p;
    p.regime = Regime::thermal;
    p.coherence_time = tau_c;
    p.duration = duration;
    p.mean_rate = rate;
    p.sample_period = tau_c / 20.0;
    return p;
}

IntensityParams flat(Regime regime, double duration, double rate)
{
    IntensityParams p;
    p.regime = regime;
    p.duration = duration;
    p.mean_rate = rate;
    return p;
}

// Siegert relation for g2(tau) = 1 + exp(-|tau|/tau_c), averaged over a bin.
double siegert_bin(double centre, double width, double tau_c)
{
    // antiderivative of exp(-|t|/tau_c), odd in t
    auto F = [&](double t) { return std::copysign(tau_c * -std::expm1(-std::abs(t) / tau_c), t); };
    return 1.0 + (F(centre + width / 2) - F(centre - width / 2)) / width;
}

} // namespace

TEST_CASE("parameter validation")
{
    IntensityParams p = thermal(1e-6, 1e-3, 1e5);
    CHECK_NOTHROW(p.validate());
    p.sample_period = 2e-7;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p = thermal(1e-6, 5e-5, 1e5);
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p = flat(Regime::poisson, 1.0, 0.0);
    CHECK_THROWS_AS(p.validate(), ParameterError);
    CHECK(parse_regime("laser") == Regime::laser);
    CHECK_THROWS_AS(parse_regime("lasing"), ParameterError);
}

TEST_CASE("intensity traces")
{
    const auto poisson = simulate_intensity(flat(Regime::poisson, 1e-2, 3e5), 1);
    CHECK(poisson.samples.size() == 10000);
    for (double r : poisson.samples)
        CHECK(r == 3e5);

    const double tau_c = 1e-5;
    const auto trace = simulate_intensity(thermal(tau_c, 2000 * tau_c * 10, 1.0), 5);
    const auto& x = trace.samples;
    const double n = double(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x)
        var += (v - mean) * (v - mean);
    var /= n;
    CHECK(mean == Approx(1.0).epsilon(0.05));
    CHECK(var / (mean * mean) == Approx(1.0).epsilon(0.05));

    // intensity autocorrelation decays as exp(-t/tau_c): integrate the normalized covariance
    const std::size_t max_lag = 200; // 10 tau_c
    double area = 0.0;
    for (std::size_t lag = 0; lag < max_lag; ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < x.size(); ++i)
            c += (x[i] - mean) * (x[i + lag] - mean);
        c /= double(x.size() - lag) * var;
        area += (lag == 0 ? 0.5 : 1.0) * c * trace.sample_period;
    }
    CHECK(area == Approx(tau_c).epsilon(0.1));

    const auto again = simulate_intensity(thermal(tau_c, 2000 * tau_c * 10, 1.0), 5);
    CHECK(again.samples == trace.samples);
}

TEST_CASE("poissonize: counts, fair split and bunching")
{
    const auto trace = simulate_intensity(flat(Regime::poisson, 2.0, 2e5), 9);
    const auto [a, b] = poissonize(trace, 9);
    const double expected = 4e5;
    const double total = double(a.size() + b.size());
    CHECK(std::abs(total - expected) < 3.0 * std::sqrt(expected));
    CHECK(std::abs(double(a.size()) - double(b.size())) < 5.0 * std::sqrt(total));
    CHECK(a.detector_id == 0);
    CHECK(b.detector_id == 1);
    CHECK_NOTHROW(a.validate());
    CHECK_NOTHROW(b.validate());

    // Mandel Q of per-window counts on one detector
    auto mandel_q = [](const ClickStream& s, std::uint64_t window_ns) {
        std::vector<double> counts(s.duration_ns / window_ns, 0.0);
        for (auto t : s.timestamps_ns)
            if (t / window_ns < counts.size())
                counts[t / window_ns] += 1.0;
        const double m = std::accumulate(counts.begin(), counts.end(), 0.0) / double(counts.size());
        double v = 0.0;
        for (double c : counts)
            v += (c - m) * (c - m);
        return v / double(counts.size()) / m - 1.0;
    };
    const auto [ta, tb] = poissonize(simulate_intensity(thermal(1e-5, 0.5, 2e5), 4), 4);
    CHECK(mandel_q(ta, 10'000) > 0.2);
    CHECK(std::abs(mandel_q(a, 10'000)) < 0.05);
}

TEST_CASE("streaming simulation is bit-identical to trace + poissonize")
{
    for (const auto& p : {thermal(2e-6, 0.3, 3e5), flat(Regime::laser, 0.3, 3e5)}) {
        const auto [a1, b1] = simulate_clicks(p, 77);
        const auto [a2, b2] = poissonize(simulate_intensity(p, 77), 77);
        CHECK(a1.timestamps_ns == a2.timestamps_ns);
        CHECK(b1.timestamps_ns == b2.timestamps_ns);
        CHECK(a1.duration_ns == a2.duration_ns);
        const auto [a3, b3] = simulate_clicks(p, 78);
        CHECK(a3.timestamps_ns != a1.timestamps_ns);
    }
}

TEST_CASE("g2 of independent Poisson streams")
{
    const auto [a, b] = simulate_clicks(flat(Regime::poisson, 22.0, 5e5), 2024);
    const auto g = g2_cross(a, b, 2.6e-6, 52e-6);
    REQUIRE(g.lag.size() == 41);
    CHECK(g.lag[g.centre()] == 0.0);
    // 41 independent bins: a 3 sigma excursion in one of them is a 10% event
    int within = 0;
    for (std::size_t k = 0; k < g.lag.size(); ++k) {
        CHECK(std::abs(g.g2[k] - 1.0) < 4.0 * g.sigma[k]);
        within += std::abs(g.g2[k] - 1.0) < 3.0 * g.sigma[k];
        CHECK(g.lag[k] == -g.lag[g.lag.size() - 1 - k]);
    }
    CHECK(within >= 39);

    // tail normalization, |tau| in [0.8, 1] max_lag
    const auto wide = g2_cross(a, b, 2.6e-6, 1e-3);
    double sum = 0.0, var = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < wide.lag.size(); ++k)
        if (std::abs(wide.lag[k]) >= 0.8e-3) {
            sum += wide.g2[k];
            var += wide.sigma[k] * wide.sigma[k];
            ++count;
        }
    CHECK(std::abs(sum / count - 1.0) < 3.0 * std::sqrt(var) / count);
}

TEST_CASE("thermal light: bunching peak and Siegert relation")
{
    const double tau_c = 1e-5, bin = 1e-7;
    const auto [a, b] = simulate_clicks(thermal(tau_c, 10.0, 2e5), 31);
    const auto g = g2_cross(a, b, bin, 3e-5);
    CHECK(g.g2[g.centre()] == Approx(2.0).epsilon(0.025));
    for (std::size_t k = 0; k < g.lag.size(); ++k)
        CHECK(g.g2[k] == Approx(siegert_bin(g.lag[k], g.bin_width, tau_c)).epsilon(0.05));

    const auto ga = g2_auto(a, bin, 3e-5);
    CHECK(ga.g2[ga.centre()] == Approx(g.g2[g.centre()]).epsilon(0.05));
}

TEST_CASE("correlator symmetry, sharding and determinism")
{
    const auto [a, b] = simulate_clicks(thermal(3e-6, 0.5, 4e5), 8);
    const auto ab = g2_cross(a, b, 5e-7, 1e-5, 1);
    const auto ba = g2_cross(b, a, 5e-7, 1e-5, 1);
    for (std::size_t k = 0; k < ab.counts.size(); ++k)
        CHECK(ab.counts[k] == ba.counts[ab.counts.size() - 1 - k]);
    for (unsigned threads : {2u, 3u, 7u}) {
        const auto sharded = g2_cross(a, b, 5e-7, 1e-5, threads);
        CHECK(sharded.counts == ab.counts);
        CHECK(sharded.g2 == ab.g2);
        CHECK(sharded.sigma == ab.sigma);
    }
    CHECK(g2_auto(a, 5e-7, 1e-5, 4).counts == g2_auto(a, 5e-7, 1e-5, 1).counts);
}

TEST_CASE("correlator input checks")
{
    ClickStream empty, a;
    a.timestamps_ns = {1, 5, 9};
    a.duration_ns = 10;
    CHECK_THROWS_AS(g2_cross(empty, a, 1e-9, 2e-9), ParameterError);
    ClickStream unsorted = a;
    unsorted.timestamps_ns = {5, 1, 9};
    CHECK_THROWS_AS(g2_cross(unsorted, a, 1e-9, 2e-9), ParameterError);
    CHECK_THROWS_AS(g2_cross(a, a, 0.0, 2e-9), ParameterError);
    CHECK_THROWS_AS(g2_cross(a, a, 2e-9, 1e-9), ParameterError);
}

TEST_CASE("bin washout")
{
    CHECK(binning_washout(1.0, 1e-9) == Approx(2.0).epsilon(1e-8));
    CHECK(binning_washout(1e-9, 1.0) == Approx(1.0).epsilon(1e-8));
    // matches the bin average of the Siegert form over the centre bin
    CHECK(binning_washout(2e-6, 2.6e-6) == Approx(siegert_bin(0.0, 2.6e-6, 2e-6)).epsilon(1e-12));
    const double tau = invert_washout(1.6, 2.6e-6);
    CHECK(binning_washout(tau, 2.6e-6) == Approx(1.6).epsilon(1e-12));
    CHECK(tau > 2.6e-7);
    CHECK(tau < 2.6e-5);
    CHECK_THROWS_AS(invert_washout(2.5, 1e-6), DomainError);
    CHECK_THROWS_AS(binning_washout(0.0, 1e-6), DomainError);
}
