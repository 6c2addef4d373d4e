#include "sepmix/continuum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sepmix {

namespace {

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double symmetric_min_eigenvalue(const Eigen::Matrix2d& m) {
    const double a = m(0, 0), d = m(1, 1), b = 0.5 * (m(0, 1) + m(1, 0));
    const double mean = 0.5 * (a + d);
    const double radius = std::hypot(0.5 * (a - d), b);
    return mean - radius;
}

} // namespace

void check_fields(const DensityFields& fields, double slack) {
    const auto n = fields.geometry.site_count();
    if (fields.rho_r.size() != n || fields.rho_b.size() != n) throw OutOfRange("density grid does not match geometry");
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = fields.rho_r(i), b = fields.rho_b(i);
        if (!(r >= -slack && b >= -slack && r + b <= 1.0 + slack))
            throw OutOfRange("density outside the simplex at node " + std::to_string(i));
    }
}

double l1_distance(const DensityFields& a, const DensityFields& b) {
    return a.cell_volume() * ((a.rho_r - b.rho_r).abs().sum() + (a.rho_b - b.rho_b).abs().sum());
}

std::string to_string(MobilityKind kind) {
    switch (kind) {
    case MobilityKind::MeanField: return "MeanField";
    case MobilityKind::MatchedLow: return "MatchedLow";
    case MobilityKind::CompositeQuastel: return "CompositeQuastel";
    }
    return "MeanField";
}

MobilityKind mobility_kind_from_string(const std::string& name) {
    if (name == "MeanField") return MobilityKind::MeanField;
    if (name == "MatchedLow") return MobilityKind::MatchedLow;
    if (name == "CompositeQuastel") return MobilityKind::CompositeQuastel;
    throw OutOfRange("unknown mobility model: " + name);
}

MobilityModel MobilityModel::make(MobilityKind kind, double alpha, double d_r, double d_b, bool alternative_mu) {
    if (!(d_r > 0.0 && d_b > 0.0)) throw OutOfRange("diffusivities must be positive");
    if (!(alpha >= 0.0)) throw OutOfRange("alpha must be non-negative");
    if (kind == MobilityKind::CompositeQuastel && d_r != d_b)
        throw ModelMismatch("CompositeQuastel mobility requires equal diffusivities");
    return MobilityModel{kind, alpha, alternative_mu};
}

double free_energy(const DensityFields& fields) {
    const auto& g = fields.geometry;
    double total = 0.0;
    for (SiteIndex x = 0; x < g.site_count(); ++x) {
        const double r = fields.rho_r(x), b = fields.rho_b(x);
        total += xlogx(r) + xlogx(b) + xlogx(1.0 - r - b);
        if (r != 0.0) total += r * fields.red.potential.at_site(g, x);
        if (b != 0.0) total += b * fields.blue.potential.at_site(g, x);
    }
    return fields.cell_volume() * total;
}

EdgeForce thermo_force_edge(const DensityFields& fields, SiteIndex x, int axis) {
    const auto& g = fields.geometry;
    const double h = g.spacing();
    const SiteIndex y = g.neighbor(x, 2 * axis);
    const double drho = (fields.rho_r(y) + fields.rho_b(y)) - (fields.rho_r(x) + fields.rho_b(x));
    const double rho_mid = 0.5 * (fields.rho_r(y) + fields.rho_b(y) + fields.rho_r(x) + fields.rho_b(x));
    const double vacancy = std::max(1.0 - rho_mid, 1e-12);

    EdgeForce out;
    for (int s = 0; s < 2; ++s) {
        const auto& rho = fields.rho(s);
        const double d = rho(y) - rho(x);
        const double mid = 0.5 * (rho(y) + rho(x));
        const double dv = fields.species(s).potential.edge_gradient(g, x, axis);
        out.force[s] = d / (h * std::max(mid, 1e-12)) + drho / (h * vacancy) + dv;
        out.protected_force[s] = (1.0 - rho_mid) * d / h + mid * drho / h + mid * (1.0 - rho_mid) * dv;
    }
    return out;
}

SpdReport check_spd(const MobilityModel& model, int dim, double d_r, double d_b, double step) {
    if (!(step > 0.0 && step <= 0.5)) throw OutOfRange("sweep step must lie in (0, 0.5]");
    const int n = static_cast<int>(std::lround(1.0 / step));
    SpdReport report;
    report.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; i + j <= n; ++j) {
            const double r = static_cast<double>(i) / n, b = static_cast<double>(j) / n;
            const double lam = symmetric_min_eigenvalue(mobility_matrix(model, r, std::min(b, 1.0 - r), d_r, d_b));
            if (lam < report.min_eigenvalue) {
                report.min_eigenvalue = lam;
                report.rho_r_at_min = r;
                report.rho_b_at_min = b;
            }
        }
    }
    // Refined sweep just below full packing.
    const int m = 10 * n;
    for (double vacancy : {step * step, 1e-6, 1e-9}) {
        const double total = 1.0 - vacancy;
        for (int i = 0; i <= m; ++i) {
            const double r = total * static_cast<double>(i) / m, b = total - r;
            const double lam = symmetric_min_eigenvalue(mobility_matrix(model, r, b, d_r, d_b));
            if (lam < report.min_eigenvalue) {
                report.min_eigenvalue = lam;
                report.rho_r_at_min = r;
                report.rho_b_at_min = b;
            }
        }
    }
    if (dim == 2 && model.kind == MobilityKind::MatchedLow) {
        const double ratio = d_b / d_r;
        const double lo = std::numbers::pi - 3.0;
        report.ratio_condition = lo < ratio && ratio < 1.0 / lo;
        report.condition_consistent = *report.ratio_condition == (report.min_eigenvalue >= -1e-12);
    }
    return report;
}

} // namespace sepmix
