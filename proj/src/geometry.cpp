#include "virtlase/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace virtlase {

namespace {

constexpr double label_tolerance = 1e-9;

Vec3 any_perpendicular(const Vec3& b)
{
    // prefer a vector in the plane of the cavity axis so labels are stable
    Vec3 ref = lab::transverse();
    if (std::abs(b.dot(ref)) > 0.9)
        ref = lab::vertical();
    return (ref - ref.dot(b) * b).normalized();
}

} // namespace

std::array<Vec3, 2> transverse_basis(const Vec3& propagation)
{
    const Vec3 k = propagation.normalized();
    Vec3 e1 = lab::cavity_axis() - lab::cavity_axis().dot(k) * k;
    if (e1.norm() < 1e-12)
        e1 = lab::transverse() - lab::transverse().dot(k) * k;
    e1.normalize();
    return {e1, k.cross(e1)};
}

Jones linear_polarization(double angle_deg)
{
    const double a = angle_deg * constants::pi / 180.0;
    return Jones(std::cos(a), std::sin(a));
}

Jones circular_polarization(Handedness hand)
{
    using namespace std::complex_literals;
    const double r = 1.0 / std::sqrt(2.0);
    return hand == Handedness::left ? Jones(r, r * 1i) : Jones(r, -r * 1i);
}

CVec3 BeamGeometry::field_polarization() const
{
    const auto [e1, e2] = transverse_basis(propagation);
    const Jones j = polarization.normalized();
    return j(0) * e1.cast<std::complex<double>>() + j(1) * e2.cast<std::complex<double>>();
}

double cooperativity(const CavityGeometry& cavity, double linewidth)
{
    return cavity.coupling * cavity.coupling / (cavity.kappa * linewidth);
}

std::array<CVec3, 3> spherical_basis(const Vec3& quantization_axis)
{
    using namespace std::complex_literals;
    const Vec3 b = quantization_axis.normalized();
    const Vec3 u = any_perpendicular(b);
    const Vec3 v = b.cross(u);
    const CVec3 uc = u.cast<std::complex<double>>();
    const CVec3 vc = v.cast<std::complex<double>>();
    const double r = 1.0 / std::sqrt(2.0);
    return {r * (uc - 1i * vc), b.cast<std::complex<double>>(), -r * (uc + 1i * vc)};
}

ExcitationWeights pump_excitation_weights(const BeamGeometry& pump, const Vec3& field)
{
    if (!(field.norm() > 0.0))
        throw QuantizationAxisError();
    const CVec3 eps = pump.field_polarization();
    const auto basis = spherical_basis(field);
    ExcitationWeights w;
    w.sigma_minus = std::norm(basis[0].dot(eps)); // dot() conjugates the left operand
    w.pi = std::norm(basis[1].dot(eps));
    w.sigma_plus = std::norm(basis[2].dot(eps));
    return w;
}

std::string PolarizationLabel::str() const
{
    switch (kind) {
    case Kind::none:
        return "---";
    case Kind::H:
        return "H";
    case Kind::V:
        return "V";
    case Kind::R:
        return "R";
    case Kind::L:
        return "L";
    case Kind::linear: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "lin(%.1f)", angle_deg);
        return buf;
    }
    case Kind::elliptical:
        return "ell";
    }
    return "?";
}

PolarizationLabel classify_polarization(const Jones& jones)
{
    PolarizationLabel label;
    const double norm = jones.norm();
    if (norm < label_tolerance)
        return label;
    const Jones j = jones / norm;
    const double s1 = std::norm(j(0)) - std::norm(j(1));
    const double s2 = 2.0 * std::real(std::conj(j(0)) * j(1));
    const double s3 = 2.0 * std::imag(std::conj(j(0)) * j(1));
    using K = PolarizationLabel::Kind;
    if (std::abs(s3) > 1.0 - label_tolerance) {
        label.kind = s3 > 0.0 ? K::L : K::R;
    } else if (std::abs(s3) < label_tolerance) {
        double angle = 0.5 * std::atan2(s2, s1) * 180.0 / constants::pi;
        if (angle < 0.0)
            angle += 180.0;
        if (angle > 180.0 - 1e-6)
            angle -= 180.0;
        label.angle_deg = angle;
        if (std::abs(angle) < 1e-6)
            label.kind = K::H;
        else if (std::abs(angle - 90.0) < 1e-6)
            label.kind = K::V;
        else
            label.kind = K::linear;
    } else {
        label.kind = K::elliptical;
    }
    return label;
}

CavityEmission cavity_emission(int m, const Vec3& field, const Vec3& cavity_axis)
{
    using namespace std::complex_literals;
    if (m < -1 || m > 1)
        throw DomainError("cavity_emission: m must be -1, 0 or +1");
    if (!(field.norm() > 0.0))
        throw QuantizationAxisError();
    const Vec3 b = field.normalized();
    const Vec3 n = cavity_axis.normalized();

    // Dipole of the Delta m transition: linear along b for pi, rotating about b
    // with helicity m for sigma.
    CVec3 dipole;
    if (m == 0) {
        dipole = b.cast<std::complex<double>>();
    } else {
        const Vec3 u = any_perpendicular(b);
        const Vec3 v = b.cross(u);
        dipole = (u.cast<std::complex<double>>() + double(m) * 1i * v.cast<std::complex<double>>()) /
                 std::sqrt(2.0);
    }
    const CVec3 nc = n.cast<std::complex<double>>();
    const CVec3 transverse = dipole - nc.dot(dipole) * nc;
    const auto [e1, e2] = transverse_basis(n);

    CavityEmission out;
    out.strength = transverse.squaredNorm();
    if (out.strength < label_tolerance) {
        out.strength = 0.0;
        return out;
    }
    // transverse is orthogonal to n so its components along real e1, e2 are complete
    const Jones j(e1.cast<std::complex<double>>().dot(transverse), e2.cast<std::complex<double>>().dot(transverse));
    out.jones = j.normalized();
    out.label = classify_polarization(out.jones);
    return out;
}

SelectionRow selection_rules(const BeamGeometry& pump, const Vec3& field, const Vec3& cavity_axis)
{
    const ExcitationWeights w = pump_excitation_weights(pump, field);
    SelectionRow row;
    for (int m = -1; m <= 1; ++m) {
        const auto i = static_cast<std::size_t>(m + 1);
        row.excited[i] = w[m] > label_tolerance;
        if (row.excited[i])
            row.output[i] = cavity_emission(m, field, cavity_axis).label;
    }
    return row;
}

ModeOverlapTable::ModeOverlapTable(double cloud_radius_rms, double waist_radius, int max_order)
{
    if (!(cloud_radius_rms > 0.0) || !(waist_radius > 0.0) || max_order < 0)
        throw DomainError("ModeOverlapTable: cloud radius and waist must be positive");

    // x = w xi / sqrt(2) maps |u_n(x)|^2 onto sqrt(pi) psi_n(xi)^2 with psi_n the
    // orthonormal Hermite functions.
    const double sigma_xi = std::sqrt(2.0) * cloud_radius_rms / waist_radius;
    const double reach = std::min(std::sqrt(2.0 * max_order + 1.0) + 12.0, 12.0 * sigma_xi);
    const double step = std::min(0.005, sigma_xi / 40.0);
    Eigen::Index intervals = static_cast<Eigen::Index>(std::ceil(2.0 * reach / step));
    intervals += intervals % 2;
    const Eigen::Index points = intervals + 1;
    const double h = 2.0 * reach / double(intervals);

    const Eigen::ArrayXd xi = Eigen::ArrayXd::LinSpaced(points, -reach, reach);
    // Simpson weights times the cloud density in xi units
    Eigen::ArrayXd weights = Eigen::ArrayXd::Constant(points, 2.0);
    for (Eigen::Index i = 1; i < points; i += 2)
        weights(i) = 4.0;
    weights(0) = weights(points - 1) = 1.0;
    weights *= h / 3.0;
    const Eigen::ArrayXd density =
        (-0.5 * (xi / sigma_xi).square()).exp() / (std::sqrt(2.0 * constants::pi) * sigma_xi);
    const Eigen::VectorXd kernel = (weights * density * std::sqrt(constants::pi)).matrix();

    Eigen::MatrixXd profiles(max_order + 1, points);
    Eigen::ArrayXd prev = Eigen::ArrayXd::Zero(points);
    Eigen::ArrayXd cur = std::pow(constants::pi, -0.25) * (-0.5 * xi.square()).exp();
    for (int n = 0; n <= max_order; ++n) {
        profiles.row(n) = cur.square().matrix().transpose();
        const Eigen::ArrayXd next =
            std::sqrt(2.0 / (n + 1.0)) * xi * cur - std::sqrt(double(n) / (n + 1.0)) * prev;
        prev = cur;
        cur = next;
    }
    axis_overlap_ = profiles * kernel;
}

double ModeOverlapTable::family_fraction(int family) const
{
    if (family < 0 || family > max_order())
        throw DomainError("family_fraction: transverse order outside the precomputed table");
    double sum = 0.0;
    for (int n = 0; n <= family; ++n)
        sum += axis_overlap_(n) * axis_overlap_(family - n);
    return sum;
}

double mode_overlap_fraction(const AtomEnsemble& ensemble, const CavityGeometry& cavity, int family)
{
    if (family < 0)
        throw DomainError("mode_overlap_fraction: negative transverse order");
    return ModeOverlapTable(ensemble.cloud_radius_rms, cavity.waist_radius, family).family_fraction(family);
}

double transverse_mode_frequency(int family, const CavityGeometry& cavity)
{
    if (family < 0)
        throw DomainError("transverse_mode_frequency: negative transverse order");
    return double(family) / double(cavity.family_step) * cavity.family_spacing;
}

} // namespace virtlase
