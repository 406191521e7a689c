#pragma once

#include "virtlase/atomics.hpp"
#include "virtlase/constants.hpp"
#include "virtlase/errors.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <complex>
#include <string>
#include <vector>

namespace virtlase {

using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
/// Jones vector in the transverse basis returned by transverse_basis().
using Jones = Eigen::Vector2cd;

/// Lab frame: cavity axis along x, vertical (pump propagation and MOT coil
/// axis) along z, y = z cross x. The 45 degree tilt between the cavity and
/// the horizontal MOT beams lies in the x-y plane and plays no role here.
namespace lab {
inline Vec3 cavity_axis() { return Vec3::UnitX(); }
inline Vec3 transverse() { return Vec3::UnitY(); }
inline Vec3 vertical() { return Vec3::UnitZ(); }
} // namespace lab

/// Radial gradient b' (gauss per metre) and a uniform offset field (gauss).
/// The axial (vertical) gradient is 2 b'; the quoted 36 G/cm is the axial one.
struct MagneticEnvironment
{
    double radial_gradient = 1800.0;
    Vec3 offset_field = Vec3::Zero();
};

/// B = b' (x, y, -2 z) + offset, in gauss, for a position in metres.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> quadrupole_field(const MagneticEnvironment& env,
                                                               const Eigen::MatrixBase<Derived>& position)
{
    using Scalar = typename Derived::Scalar;
    EIGEN_STATIC_ASSERT_VECTOR_SPECIFIC_SIZE(Derived, 3);
    const Eigen::Matrix<Scalar, 3, 1> gradient(Scalar(env.radial_gradient), Scalar(env.radial_gradient),
                                               Scalar(-2.0 * env.radial_gradient));
    return gradient.cwiseProduct(position) + env.offset_field.cast<Scalar>();
}

/// Real orthonormal pair (e1, e2) spanning the plane normal to `propagation`,
/// with e1 x e2 = propagation. e1 is the projection of the cavity axis when it
/// exists, otherwise of y. For a vertical pump e1 = x (0 deg), e2 = y (90 deg);
/// for cavity output along +x, e1 = y (H) and e2 = z (V).
std::array<Vec3, 2> transverse_basis(const Vec3& propagation);

/// Linear polarization at `angle_deg` from e1 towards e2.
Jones linear_polarization(double angle_deg);

enum class Handedness { left, right };

/// Circular polarization. Left (L) is positive helicity about the propagation
/// direction, (e1 + i e2)/sqrt(2); right (R) is (e1 - i e2)/sqrt(2).
Jones circular_polarization(Handedness hand);

struct BeamGeometry
{
    Vec3 propagation = lab::vertical();
    Jones polarization = linear_polarization(90.0);
    double power = 7.0e-3;        // W
    double waist_radius = 2.4e-3; // m, 1/e^2
    double detuning = 0.0;        // Hz

    /// Unit complex 3-vector of the electric field polarization.
    CVec3 field_polarization() const;
};

struct CavityGeometry
{
    Vec3 axis = lab::cavity_axis();
    double waist_radius = 90.0e-6;
    double length = 4.78e-2;
    double kappa = constants::two_pi * 70.0e3;          // energy decay rate, rad/s
    double coupling = constants::two_pi * 30.0e3;       // single-atom g_c, rad/s
    double output_fraction = 0.05;                      // share leaving through the detected mirror
    double family_spacing = 6.9e6;                      // Hz between successive lasing families
    int family_step = 37;                               // transverse order between those families
};

/// g_c^2 / (kappa Gamma); 0.07 for the default cavity on the 556 nm line.
double cooperativity(const CavityGeometry& cavity, double linewidth);

struct ExcitationWeights
{
    double sigma_minus = 0.0;
    double pi = 0.0;
    double sigma_plus = 0.0;

    double operator[](int m) const { return m < 0 ? sigma_minus : (m == 0 ? pi : sigma_plus); }
    double sum() const { return sigma_minus + pi + sigma_plus; }
};

/// Spherical unit vectors about `quantization_axis`, indexed q = -1, 0, +1.
/// e_{+-1} = -+(u +- i v)/sqrt(2) with (u, v, b) right-handed.
std::array<CVec3, 3> spherical_basis(const Vec3& quantization_axis);

/// Fractions of pump light driving sigma-, pi and sigma+ relative to the local
/// field direction. Throws QuantizationAxisError for a zero field.
ExcitationWeights pump_excitation_weights(const BeamGeometry& pump, const Vec3& field);

struct PolarizationLabel
{
    enum class Kind { none, H, V, R, L, linear, elliptical };
    Kind kind = Kind::none;
    double angle_deg = 0.0; // for Kind::linear, measured from H towards V

    std::string str() const;
    friend bool operator==(const PolarizationLabel&, const PolarizationLabel&) = default;
};

/// Classify a Jones vector given in the transverse basis of its propagation direction.
PolarizationLabel classify_polarization(const Jones& jones);

struct CavityEmission
{
    PolarizationLabel label;
    Jones jones = Jones::Zero(); // normalized, basis of transverse_basis(cavity axis)
    double strength = 0.0;       // emitted power along the axis relative to the maximum
};

/// Polarization and relative strength of light emitted along `cavity_axis` by
/// the Delta m = `m` dipole of an atom quantized along `field`. pi gives
/// sin^2(theta), sigma gives (1 + cos^2(theta))/2.
CavityEmission cavity_emission(int m, const Vec3& field, const Vec3& cavity_axis = lab::cavity_axis());

/// One row of the selection-rule table: which Zeeman channels the pump drives
/// and what each driven channel emits along the cavity axis.
struct SelectionRow
{
    std::array<bool, 3> excited{};              // m = -1, 0, +1
    std::array<PolarizationLabel, 3> output{}; // none where not excited or not emitted
};

SelectionRow selection_rules(const BeamGeometry& pump, const Vec3& field, const Vec3& cavity_axis = lab::cavity_axis());

/// One-dimensional overlaps a_n = <rho_cloud |u_n|^2> of a Gaussian cloud with
/// Hermite-Gauss intensity profiles normalized to unit TEM0 peak. Precomputed
/// once per (cloud, waist) pair.
class ModeOverlapTable
{
public:
    ModeOverlapTable(double cloud_radius_rms, double waist_radius, int max_order);

    int max_order() const { return static_cast<int>(axis_overlap_.size()) - 1; }
    double axis_overlap(int n) const { return axis_overlap_(n); }

    /// Intensity-weighted fraction of the cloud coupled to transverse family N,
    /// summed over its N + 1 degenerate TEM_{n, N-n} modes.
    double family_fraction(int family) const;

private:
    Eigen::VectorXd axis_overlap_;
};

double mode_overlap_fraction(const AtomEnsemble& ensemble, const CavityGeometry& cavity, int family);

/// Frequency of family N above TEM0 on the linear ladder (N / step) * spacing.
double transverse_mode_frequency(int family, const CavityGeometry& cavity = {});

} // namespace virtlase
