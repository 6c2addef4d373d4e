#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "sepmix/coefficients.hpp"
#include "sepmix/errors.hpp"
#include "sepmix/lattice.hpp"

namespace sepmix {

/// Per-species density grids on the lattice nodes, in volume-fraction units.
struct DensityFields {
    LatticeGeometry geometry;
    Eigen::ArrayXd rho_r;
    Eigen::ArrayXd rho_b;
    SpeciesParams red;
    SpeciesParams blue;

    DensityFields(LatticeGeometry g, SpeciesParams r, SpeciesParams b)
        : geometry(g), rho_r(Eigen::ArrayXd::Zero(g.site_count())), rho_b(Eigen::ArrayXd::Zero(g.site_count())),
          red(std::move(r)), blue(std::move(b)) {}

    double cell_volume() const noexcept { return std::pow(geometry.spacing(), geometry.dim()); }
    double mass_r() const { return cell_volume() * rho_r.sum(); }
    double mass_b() const { return cell_volume() * rho_b.sum(); }
    const SpeciesParams& species(int s) const noexcept { return s == 0 ? red : blue; }
    Eigen::ArrayXd& rho(int s) noexcept { return s == 0 ? rho_r : rho_b; }
    const Eigen::ArrayXd& rho(int s) const noexcept { return s == 0 ? rho_r : rho_b; }
};

/// Throws OutOfRange when a density is negative or the total exceeds one (up to `slack`).
void check_fields(const DensityFields& fields, double slack = 1e-12);

/// L1 distance h^d sum |rho - rho'| over both species.
double l1_distance(const DensityFields& a, const DensityFields& b);

enum class MobilityKind { MeanField, MatchedLow, CompositeQuastel };

std::string to_string(MobilityKind kind);
MobilityKind mobility_kind_from_string(const std::string& name);

struct MobilityModel {
    MobilityKind kind = MobilityKind::MeanField;
    double alpha = 0.0;
    /// Use mu = (1-rho)[1 - alpha (1-rho) gamma rho] in MatchedLow.
    bool alternative_mu = false;

    /// Validates the model for a pair of diffusivities. CompositeQuastel needs D_r == D_b.
    static MobilityModel make(MobilityKind kind, double alpha, double d_r, double d_b, bool alternative_mu = false);
};

template <typename Scalar>
using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;

namespace detail {

template <typename Scalar>
void check_densities(Scalar rho_r, Scalar rho_b) {
    if (!(rho_r >= Scalar(0) && rho_b >= Scalar(0) && rho_r + rho_b <= Scalar(1) + Scalar(1e-12)))
        throw OutOfRange("densities outside the simplex");
}

template <typename Scalar>
Scalar matched_coupling(const MobilityModel& model, Scalar rho) {
    const Scalar a(model.alpha);
    return model.alternative_mu ? a * (Scalar(1) - rho) : a;
}

} // namespace detail

/**
 * Reduced mobility N = M diag(1/rho_r, 1/rho_b) / (1 - rho).
 *
 * Every model carries a rho_s factor in column s and an overall (1 - rho)
 * factor, so N stays bounded at vacuum and at full packing. The flux is
 * J = N G with G_s = (1-rho) d rho_s + rho_s (d rho + (1-rho) d V_s).
 */
template <typename Scalar>
Matrix2<Scalar> reduced_mobility(const MobilityModel& model, Scalar rho_r, Scalar rho_b, Scalar d_r, Scalar d_b) {
    Matrix2<Scalar> n;
    const Scalar rho = rho_r + rho_b;
    switch (model.kind) {
    case MobilityKind::MeanField:
        n << d_r, Scalar(0), Scalar(0), d_b;
        break;
    case MobilityKind::MatchedLow: {
        const Scalar k = Scalar(2) * detail::matched_coupling(model, rho) / (d_r + d_b);
        n << d_r - k * d_r * d_r * rho_b, k * d_r * d_b * rho_r,
             k * d_r * d_b * rho_b,        d_b - k * d_b * d_b * rho_r;
        break;
    }
    case MobilityKind::CompositeQuastel: {
        const Scalar a(model.alpha);
        // D~_s(rho) / (1 - rho): the bracket of the composite cubic.
        const Scalar q = Scalar(1) - a * rho + a * (Scalar(2) * a - Scalar(1)) / (Scalar(2) * a + Scalar(1)) * rho * rho;
        const Scalar inv = Scalar(1) / std::max(rho, Scalar(1e-12));
        n << (rho_r + rho_b * q) * inv, rho_r * (Scalar(1) - q) * inv,
             rho_b * (Scalar(1) - q) * inv, (rho_b + rho_r * q) * inv;
        n *= d_r;
        break;
    }
    }
    return n;
}

/// Full 2x2 mobility. Zero at rho = 0 for every model.
template <typename Scalar>
Matrix2<Scalar> mobility_matrix(const MobilityModel& model, Scalar rho_r, Scalar rho_b, Scalar d_r, Scalar d_b) {
    detail::check_densities(rho_r, rho_b);
    if (model.kind == MobilityKind::CompositeQuastel && d_r != d_b)
        throw ModelMismatch("CompositeQuastel mobility requires equal diffusivities");
    const Scalar rho = rho_r + rho_b;
    if (rho == Scalar(0)) return Matrix2<Scalar>::Zero();
    Matrix2<Scalar> n = reduced_mobility(model, rho_r, rho_b, d_r, d_b);
    n.col(0) *= rho_r;
    n.col(1) *= rho_b;
    return (Scalar(1) - rho) * n;
}

/// MatchedLow in the factored mu form, D [ (1-rho)/rho rr^T + rho_r rho_b / rho [[mu_r, -mu_b], [-mu_r, mu_b]] ].
template <typename Scalar>
Matrix2<Scalar> matched_low_factored(Scalar rho_r, Scalar rho_b, Scalar d_r, Scalar d_b, Scalar alpha,
                                     bool alternative_mu = false) {
    const Scalar rho = rho_r + rho_b;
    if (rho == Scalar(0)) return Matrix2<Scalar>::Zero();
    const Scalar mu_r = mu_sigma(rho, alpha, gamma_ratio(d_r, d_b), alternative_mu);
    const Scalar mu_b = mu_sigma(rho, alpha, gamma_ratio(d_b, d_r), alternative_mu);
    Matrix2<Scalar> outer, cross;
    outer << rho_r * rho_r, rho_r * rho_b, rho_r * rho_b, rho_b * rho_b;
    cross << mu_r, -mu_b, -mu_r, mu_b;
    Matrix2<Scalar> inner = (Scalar(1) - rho) / rho * outer + rho_r * rho_b / rho * cross;
    inner.row(0) *= d_r;
    inner.row(1) *= d_b;
    return inner;
}

/// Quastel's mobility with an arbitrary self-diffusion value, D = 1.
template <typename Scalar>
Matrix2<Scalar> quastel_mobility(Scalar rho_r, Scalar rho_b, Scalar self_diffusion) {
    const Scalar rho = rho_r + rho_b;
    if (rho == Scalar(0)) return Matrix2<Scalar>::Zero();
    Matrix2<Scalar> outer, cross;
    outer << rho_r * rho_r, rho_r * rho_b, rho_r * rho_b, rho_b * rho_b;
    cross << Scalar(1), Scalar(-1), Scalar(-1), Scalar(1);
    return (Scalar(1) - rho) / rho * outer + rho_r * rho_b / rho * self_diffusion * cross;
}

/// Discrete free energy h^d sum [rho_r log rho_r + rho_b log rho_b + (1-rho) log(1-rho) + rho_r V_r + rho_b V_b].
double free_energy(const DensityFields& fields);

/// Thermodynamic force pair on the edge (x, x + h e_axis) with arithmetic-mean midpoints.
struct EdgeForce {
    std::array<double, 2> force{0.0, 0.0};
    /// Product-protected terms G_s = rho_s,mid (1 - rho_mid) F_s, finite at vacuum.
    std::array<double, 2> protected_force{0.0, 0.0};
};

EdgeForce thermo_force_edge(const DensityFields& fields, SiteIndex x, int axis);

struct SpdReport {
    double min_eigenvalue = 0.0;
    double rho_r_at_min = 0.0;
    double rho_b_at_min = 0.0;
    /// For d = 2 MatchedLow: whether pi - 3 < D_b/D_r < 1/(pi - 3).
    std::optional<bool> ratio_condition;
    /// ratio_condition agrees with the sign of min_eigenvalue (when available).
    std::optional<bool> condition_consistent;
};

/// Sweeps the density simplex and reports the smallest eigenvalue of the symmetric part of M.
SpdReport check_spd(const MobilityModel& model, int dim, double d_r, double d_b, double step = 0.01);

} // namespace sepmix
