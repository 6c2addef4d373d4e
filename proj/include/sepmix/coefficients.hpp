#pragma once

#include <map>
#include <ostream>
#include <span>

#include <Eigen/Core>

#include "sepmix/errors.hpp"
#include "sepmix/lattice.hpp"

namespace sepmix {

/// Lattice constants of the d-dimensional exclusion process.
struct TransportCoefficients {
    int dim = 2;
    double beta = 0.0;
    double alpha = 0.0;
    /// Midpoint nodes per axis over [-pi, pi] used for the final value.
    int resolution = 0;
};

/**
 * Midpoint-rule value of
 *   -(2 pi)^-d  int_{[-pi,pi]^d} sin^2(z_1) / (2 sum_k sin^2(z_k / 2)) dz
 * with `resolution` (even) nodes per axis. Nodes never touch z = 0.
 */
double beta_midpoint(int dim, int resolution);

/// Doubles the resolution from `min_resolution` until alpha changes by less than `tol`.
/// Throws NoConvergence with the last two alpha iterates when `max_resolution` is exceeded.
TransportCoefficients compute_beta_alpha(int dim, int min_resolution = 16, double tol = 1e-9,
                                         int max_resolution = 0);

/// alpha = -beta / (1 + beta).
template <typename Scalar>
constexpr Scalar alpha_from_beta(Scalar beta) {
    return -beta / (Scalar(1) + beta);
}

/// Result of one direct evaluation of the auxiliary function.
struct PsiValue {
    Eigen::VectorXd value;
    /// Largest |imaginary part| of the quadrature, zero in exact arithmetic.
    double imag_residual = 0.0;
};

/// psi(v) by midpoint quadrature of the inverse semidiscrete Fourier transform.
PsiValue psi_eval(int dim, const IVec& offset, int resolution);

/**
 * psi on the cube {-R..R}^d, built from the odd/even symmetries of psi_1 and
 * axis relabelling for the other components. Offsets outside the cube fall
 * back to direct quadrature at the table resolution.
 */
class PsiTable {
public:
    PsiTable(int dim, int radius = 10, int resolution = 0);

    int dim() const noexcept { return dim_; }
    int radius() const noexcept { return radius_; }
    int resolution() const noexcept { return resolution_; }

    /// Component j of psi at an offset.
    double operator()(int component, const IVec& offset) const;
    Eigen::VectorXd vector_at(const IVec& offset) const;

    /// CSV with columns v1..vd, psi_1..psi_d over the whole cube.
    void write_csv(std::ostream& out) const;

private:
    int dim_;
    int radius_;
    int resolution_;
    // psi_1 on the non-negative orthant, indexed [v1][v2][v3].
    std::vector<double> first_;
    double first_at(const IVec& nonneg) const;
};

/// Default table resolution per dimension.
int default_psi_resolution(int dim);

/// gamma_{a,b} = 2 D_a / (D_a + D_b).
template <typename Scalar>
constexpr Scalar gamma_ratio(Scalar d_a, Scalar d_b) {
    return Scalar(2) * d_a / (d_a + d_b);
}

/// mu_sigma(rho) = (1 - rho) [1 - alpha gamma rho]; the alternative form inserts a
/// further (1 - rho) factor in the correction term.
template <typename Scalar>
constexpr Scalar mu_sigma(Scalar rho, Scalar alpha, Scalar gamma, bool alternative = false) {
    const Scalar correction = alternative ? alpha * (Scalar(1) - rho) * gamma * rho : alpha * gamma * rho;
    return (Scalar(1) - rho) * (Scalar(1) - correction);
}

enum class SelfDiffusionModel { MeanField, LowDensity, HighDensity, Composite };

/// D_s(phi) for a single environment species with D = 1 (MeanField scales with `diffusivity`).
template <typename Scalar>
Scalar self_diffusion(SelfDiffusionModel model, Scalar phi, Scalar alpha, Scalar diffusivity = Scalar(1)) {
    if (!(phi >= Scalar(0) && phi <= Scalar(1))) throw OutOfRange("volume fraction outside [0,1]");
    switch (model) {
    case SelfDiffusionModel::MeanField: return diffusivity * (Scalar(1) - phi);
    case SelfDiffusionModel::LowDensity: return Scalar(1) - (Scalar(1) + alpha) * phi;
    case SelfDiffusionModel::HighDensity: return (Scalar(1) - phi) / (Scalar(2) * alpha + Scalar(1));
    case SelfDiffusionModel::Composite:
        return (Scalar(1) - phi) *
               (Scalar(1) - alpha * phi +
                alpha * (Scalar(2) * alpha - Scalar(1)) / (Scalar(2) * alpha + Scalar(1)) * phi * phi);
    }
    return Scalar(0);
}

/// Composite cubic approximation; the function fed to the CompositeQuastel mobility.
template <typename Scalar>
Scalar composite_self_diffusion(Scalar phi, Scalar alpha) {
    return self_diffusion(SelfDiffusionModel::Composite, phi, alpha);
}

struct MixtureComponent {
    double diffusivity;
    double fraction;
};

/// Low-density tagged-particle self-diffusion in a mixed environment:
/// D_g [1 - sum_s (1 + alpha gamma(D_g, D_s)) phi_s].
double mixture_self_diffusion(double tagged_diffusivity, std::span<const MixtureComponent> environment,
                              double alpha);

enum class ChiBranch { Low, High };

/// chi at an offset: (1+alpha)/2 psi (Low) or (1+alpha)/(1+2 alpha) psi (High).
Eigen::VectorXd chi_eval(const PsiTable& psi, double alpha, const IVec& offset, ChiBranch branch);

} // namespace sepmix
