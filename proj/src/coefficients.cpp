#include "sepmix/coefficients.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sepmix/format.hpp"

namespace sepmix {

namespace {

constexpr double kPi = std::numbers::pi;

void check_dim(int dim) {
    if (dim != 2 && dim != 3) throw OutOfRange("dimension must be 2 or 3");
}

int even_resolution(int resolution) {
    if (resolution < 2) throw OutOfRange("quadrature resolution must be at least 2");
    return resolution + (resolution & 1);
}

// Positive midpoint nodes (i + 1/2) * 2 pi / M, i < M/2.
std::vector<double> positive_nodes(int resolution) {
    const int half = resolution / 2;
    std::vector<double> z(static_cast<std::size_t>(half));
    for (int i = 0; i < half; ++i) z[i] = (i + 0.5) * 2.0 * kPi / resolution;
    return z;
}

} // namespace

double beta_midpoint(int dim, int resolution) {
    check_dim(dim);
    resolution = even_resolution(resolution);
    // Integrand is even in every coordinate: average over the positive half-grid.
    const auto z = positive_nodes(resolution);
    const std::size_t n = z.size();
    std::vector<double> a(n), s1(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = std::sin(0.5 * z[i]);
        a[i] = s * s;
        s1[i] = std::sin(z[i]) * std::sin(z[i]);
    }
    double total = 0.0;
    if (dim == 2) {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += 1.0 / (a[i] + a[j]);
            total += s1[i] * row;
        }
        total /= static_cast<double>(n * n);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double plane = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double aij = a[i] + a[j];
                double row = 0.0;
                for (std::size_t k = 0; k < n; ++k) row += 1.0 / (aij + a[k]);
                plane += row;
            }
            total += s1[i] * plane;
        }
        total /= static_cast<double>(n * n * n);
    }
    return -0.5 * total;
}

TransportCoefficients compute_beta_alpha(int dim, int min_resolution, double tol, int max_resolution) {
    check_dim(dim);
    if (min_resolution < 16) throw OutOfRange("quadrature resolution must be at least 16");
    if (max_resolution <= 0) max_resolution = dim == 2 ? (1 << 16) : (1 << 11);
    int m = even_resolution(min_resolution);
    double beta = beta_midpoint(dim, m);
    double alpha = alpha_from_beta(beta);
    for (;;) {
        const int next = 2 * m;
        if (next > max_resolution)
            throw NoConvergence("alpha quadrature did not converge", alpha_from_beta(beta_midpoint(dim, m / 2)), alpha);
        const double beta2 = beta_midpoint(dim, next);
        const double alpha2 = alpha_from_beta(beta2);
        const bool done = std::abs(alpha2 - alpha) < tol;
        m = next;
        beta = beta2;
        alpha = alpha2;
        if (done) break;
    }
    return {dim, beta, alpha, m};
}

PsiValue psi_eval(int dim, const IVec& offset, int resolution) {
    check_dim(dim);
    resolution = even_resolution(resolution);
    const int m = resolution;
    std::vector<double> zeta(static_cast<std::size_t>(m)), sin2half(zeta.size()), sinz(zeta.size());
    for (int i = 0; i < m; ++i) {
        zeta[i] = -kPi + (i + 0.5) * 2.0 * kPi / m;
        const double s = std::sin(0.5 * zeta[i]);
        sin2half[i] = s * s;
        sinz[i] = std::sin(zeta[i]);
    }
    // Phase tables e^{i z v_k} per axis.
    std::vector<std::vector<std::complex<double>>> phase(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
        phase[k].resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) phase[k][i] = std::polar(1.0, zeta[i] * offset[k]);
    }

    PsiValue out{Eigen::VectorXd::Zero(dim), 0.0};
    const double norm = std::pow(static_cast<double>(m), -dim);
    for (int j = 0; j < dim; ++j) {
        std::complex<double> sum = 0.0;
        if (dim == 2) {
            for (int a = 0; a < m; ++a) {
                for (int b = 0; b < m; ++b) {
                    const double num = j == 0 ? sinz[a] : sinz[b];
                    const double den = 4.0 * (sin2half[a] + sin2half[b]);
                    sum += std::complex<double>(0.0, 2.0 * num / den) * phase[0][a] * phase[1][b];
                }
            }
        } else {
            for (int a = 0; a < m; ++a) {
                for (int b = 0; b < m; ++b) {
                    const std::complex<double> pab = phase[0][a] * phase[1][b];
                    for (int c = 0; c < m; ++c) {
                        const double num = j == 0 ? sinz[a] : (j == 1 ? sinz[b] : sinz[c]);
                        const double den = 4.0 * (sin2half[a] + sin2half[b] + sin2half[c]);
                        sum += std::complex<double>(0.0, 2.0 * num / den) * pab * phase[2][c];
                    }
                }
            }
        }
        sum *= norm;
        out.value(j) = sum.real();
        out.imag_residual = std::max(out.imag_residual, std::abs(sum.imag()));
    }
    return out;
}

// ---------------------------------------------------------------------------

int default_psi_resolution(int dim) { return dim == 2 ? 2048 : 256; }

PsiTable::PsiTable(int dim, int radius, int resolution)
    : dim_(dim), radius_(radius), resolution_(resolution > 0 ? even_resolution(resolution) : default_psi_resolution(dim)) {
    check_dim(dim);
    if (radius < 1) throw OutOfRange("psi table radius must be positive");
    const auto z = positive_nodes(resolution_);
    const auto n = static_cast<Eigen::Index>(z.size());
    const Eigen::Index r1 = radius_ + 1;

    // psi_1(v) = -mean_{z > 0} sin z1 sin(z1 v1) prod_{k>1} cos(z_k v_k) / (2 S(z)).
    Eigen::MatrixXd odd(n, r1), even(n, r1);
    Eigen::VectorXd sin2half(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sin(0.5 * z[i]);
        sin2half(i) = s * s;
        for (Eigen::Index v = 0; v < r1; ++v) {
            odd(i, v) = std::sin(z[i]) * std::sin(z[i] * v);
            even(i, v) = std::cos(z[i] * v);
        }
    }
    if (dim_ == 2) {
        Eigen::MatrixXd w(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) w(i, j) = 0.5 / (sin2half(i) + sin2half(j));
        const Eigen::MatrixXd psi = -(odd.transpose() * w * even) / static_cast<double>(n * n);
        first_.resize(static_cast<std::size_t>(r1 * r1));
        for (Eigen::Index v1 = 0; v1 < r1; ++v1)
            for (Eigen::Index v2 = 0; v2 < r1; ++v2) first_[static_cast<std::size_t>(v1 * r1 + v2)] = psi(v1, v2);
    } else {
        first_.assign(static_cast<std::size_t>(r1 * r1 * r1), 0.0);
        Eigen::MatrixXd w(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j)
                for (Eigen::Index k = 0; k < n; ++k) w(j, k) = 0.5 / (sin2half(i) + sin2half(j) + sin2half(k));
            // Slice i contributes odd(i, v1) * [even^T w even](v2, v3).
            const Eigen::MatrixXd slice = even.transpose() * w * even;
            for (Eigen::Index v1 = 0; v1 < r1; ++v1) {
                const double f = odd(i, v1);
                for (Eigen::Index v2 = 0; v2 < r1; ++v2)
                    for (Eigen::Index v3 = 0; v3 < r1; ++v3)
                        first_[static_cast<std::size_t>((v1 * r1 + v2) * r1 + v3)] += f * slice(v2, v3);
            }
        }
        const double norm = -1.0 / static_cast<double>(n * n * n);
        for (double& x : first_) x *= norm;
    }
}

double PsiTable::first_at(const IVec& v) const {
    const int r1 = radius_ + 1;
    if (dim_ == 2) return first_[static_cast<std::size_t>(v[0] * r1 + v[1])];
    return first_[static_cast<std::size_t>((v[0] * r1 + v[1]) * r1 + v[2])];
}

double PsiTable::operator()(int component, const IVec& offset) const {
    if (component < 0 || component >= dim_) throw OutOfRange("psi component out of range");
    bool inside = true;
    for (int k = 0; k < dim_; ++k) inside = inside && std::abs(offset[k]) <= radius_;
    if (!inside) return psi_eval(dim_, offset, resolution_).value(component);

    // Relabel axes so the requested component becomes the first one.
    IVec v = offset;
    std::swap(v[0], v[component]);
    const double sign = v[0] < 0 ? -1.0 : 1.0;
    for (int k = 0; k < dim_; ++k) v[k] = std::abs(v[k]);
    return sign * first_at(v);
}

Eigen::VectorXd PsiTable::vector_at(const IVec& offset) const {
    Eigen::VectorXd out(dim_);
    for (int j = 0; j < dim_; ++j) out(j) = (*this)(j, offset);
    return out;
}

void PsiTable::write_csv(std::ostream& out) const {
    for (int k = 0; k < dim_; ++k) out << "v" << (k + 1) << ',';
    for (int j = 0; j < dim_; ++j) out << "psi_" << (j + 1) << (j + 1 < dim_ ? "," : "\n");
    IVec v{0, 0, 0};
    const int lo = -radius_, hi = radius_;
    const int z_lo = dim_ == 3 ? lo : 0, z_hi = dim_ == 3 ? hi : 0;
    for (v[2] = z_lo; v[2] <= z_hi; ++v[2]) {
        for (v[1] = lo; v[1] <= hi; ++v[1]) {
            for (v[0] = lo; v[0] <= hi; ++v[0]) {
                for (int k = 0; k < dim_; ++k) out << v[k] << ',';
                for (int j = 0; j < dim_; ++j) out << format_real((*this)(j, v)) << (j + 1 < dim_ ? "," : "\n");
            }
        }
    }
}

// ---------------------------------------------------------------------------

double mixture_self_diffusion(double tagged_diffusivity, std::span<const MixtureComponent> environment,
                              double alpha) {
    if (!(tagged_diffusivity > 0.0)) throw OutOfRange("tagged diffusivity must be positive");
    double total = 0.0;
    double correction = 0.0;
    for (const auto& c : environment) {
        if (!(c.fraction >= 0.0 && c.fraction <= 1.0)) throw OutOfRange("volume fraction outside [0,1]");
        if (!(c.diffusivity > 0.0)) throw OutOfRange("environment diffusivity must be positive");
        total += c.fraction;
        correction += (1.0 + alpha * gamma_ratio(tagged_diffusivity, c.diffusivity)) * c.fraction;
    }
    if (total > 1.0 + 1e-12) throw OutOfRange("total volume fraction exceeds one");
    return tagged_diffusivity * (1.0 - correction);
}

Eigen::VectorXd chi_eval(const PsiTable& psi, double alpha, const IVec& offset, ChiBranch branch) {
    const double factor = branch == ChiBranch::Low ? 0.5 * (1.0 + alpha) : (1.0 + alpha) / (1.0 + 2.0 * alpha);
    return factor * psi.vector_at(offset);
}

} // namespace sepmix
