#include "sepmix/pde.hpp"

#include <algorithm>
#include <cmath>

#include "sepmix/format.hpp"

namespace sepmix {

namespace {

struct EdgeInput {
    double r_x, b_x, r_y, b_y, grad_r, grad_b;
};

inline std::array<double, 2> flux_kernel(const MobilityModel& model, double d_r, double d_b, double inv_h,
                                         const EdgeInput& e) {
    const double mid_r = 0.5 * (e.r_x + e.r_y);
    const double mid_b = 0.5 * (e.b_x + e.b_y);
    const double vac = 1.0 - mid_r - mid_b;
    const double dr = (e.r_y - e.r_x) * inv_h;
    const double db = (e.b_y - e.b_x) * inv_h;
    const double d = dr + db;
    const double g_r = vac * dr + mid_r * d + mid_r * vac * e.grad_r;
    const double g_b = vac * db + mid_b * d + mid_b * vac * e.grad_b;
    if (model.kind == MobilityKind::MeanField) return {d_r * g_r, d_b * g_b};
    const Eigen::Matrix2d n = reduced_mobility(model, mid_r, mid_b, d_r, d_b);
    return {n(0, 0) * g_r + n(0, 1) * g_b, n(1, 0) * g_r + n(1, 1) * g_b};
}

} // namespace

void check_solver_params(const SolverParams& params) {
    if (!(params.dt_factor > 0.0 && params.dt_factor <= 0.5)) throw OutOfRange("dt_factor must lie in (0, 0.5]");
    if (!(params.t_end >= 0.0)) throw OutOfRange("t_end must be non-negative");
    if (!std::is_sorted(params.snapshot_times.begin(), params.snapshot_times.end()))
        throw OutOfRange("snapshot times must be sorted");
    for (double t : params.snapshot_times)
        if (!(t >= 0.0 && t <= params.t_end)) throw OutOfRange("snapshot time outside [0, t_end]");
    if (!(params.clamp_band >= 0.0)) throw OutOfRange("clamp band must be non-negative");
    if (!(params.steady_state_tol > 0.0)) throw OutOfRange("steady-state tolerance must be positive");
}

double stable_dt(const DensityFields& fields, const SolverParams& params) {
    const double h = fields.geometry.spacing();
    return params.dt_factor * h * h / std::max(fields.red.diffusivity, fields.blue.diffusivity);
}

std::array<double, 2> edge_flux(const DensityFields& fields, const MobilityModel& model, SiteIndex x, int axis) {
    const EdgeForce f = thermo_force_edge(fields, x, axis);
    const SiteIndex y = fields.geometry.neighbor(x, 2 * axis);
    const double mid_r = 0.5 * (fields.rho_r(x) + fields.rho_r(y));
    const double mid_b = 0.5 * (fields.rho_b(x) + fields.rho_b(y));
    const Eigen::Matrix2d n =
        reduced_mobility(model, mid_r, mid_b, fields.red.diffusivity, fields.blue.diffusivity);
    const Eigen::Vector2d j = n * Eigen::Vector2d(f.protected_force[0], f.protected_force[1]);
    return {j(0), j(1)};
}

PdeStepper::PdeStepper(const DensityFields& fields, const MobilityModel& model)
    : geometry_(fields.geometry), model_(model), d_r_(fields.red.diffusivity), d_b_(fields.blue.diffusivity) {
    check_species(fields.red);
    check_species(fields.blue);
    if (model.kind == MobilityKind::CompositeQuastel && d_r_ != d_b_)
        throw ModelMismatch("CompositeQuastel mobility requires equal diffusivities");
    const SiteIndex n = geometry_.site_count();
    const int dim = geometry_.dim();
    forward_.assign(dim, std::vector<SiteIndex>(n));
    backward_.assign(dim, std::vector<SiteIndex>(n));
    grad_r_.assign(dim, std::vector<double>(n));
    grad_b_.assign(dim, std::vector<double>(n));
    for (int k = 0; k < dim; ++k) {
        for (SiteIndex x = 0; x < n; ++x) {
            forward_[k][x] = geometry_.neighbor(x, 2 * k);
            backward_[k][x] = geometry_.neighbor(x, 2 * k + 1);
            grad_r_[k][x] = fields.red.potential.edge_gradient(geometry_, x, k);
            grad_b_[k][x] = fields.blue.potential.edge_gradient(geometry_, x, k);
        }
    }
    flux_r_.resize(n);
    flux_b_.resize(n);
}

StepReport PdeStepper::step(DensityFields& fields, double dt, double clamp_band, double time) {
    const SiteIndex n = geometry_.site_count();
    const double inv_h = 1.0 / geometry_.spacing();
    const double factor = dt * inv_h;
    Eigen::ArrayXd next_r = fields.rho_r;
    Eigen::ArrayXd next_b = fields.rho_b;
    const double* r = fields.rho_r.data();
    const double* b = fields.rho_b.data();
    for (int k = 0; k < geometry_.dim(); ++k) {
        const auto& fwd = forward_[k];
        const auto& bwd = backward_[k];
        for (SiteIndex x = 0; x < n; ++x) {
            const SiteIndex y = fwd[x];
            const auto j = flux_kernel(model_, d_r_, d_b_, inv_h, {r[x], b[x], r[y], b[y], grad_r_[k][x], grad_b_[k][x]});
            flux_r_[x] = j[0];
            flux_b_[x] = j[1];
        }
        for (SiteIndex x = 0; x < n; ++x) {
            next_r(x) += factor * (flux_r_[x] - flux_r_[bwd[x]]);
            next_b(x) += factor * (flux_b_[x] - flux_b_[bwd[x]]);
        }
    }

    StepReport report;
    for (SiteIndex x = 0; x < n; ++x) {
        double& vr = next_r(x);
        double& vb = next_b(x);
        if (vr < -clamp_band || vb < -clamp_band || vr + vb > 1.0 + clamp_band || !std::isfinite(vr + vb))
            throw Instability("density left the admissible band at node " + std::to_string(x), time + dt);
        if (vr < 0.0) { report.clamp_magnitude -= vr; vr = 0.0; }
        if (vb < 0.0) { report.clamp_magnitude -= vb; vb = 0.0; }
        const double excess = vr + vb - 1.0;
        if (excess > 0.0) {
            const double scale = 1.0 / (vr + vb);
            vr *= scale;
            vb *= scale;
            report.clamp_magnitude += excess;
        }
    }
    fields.rho_r.swap(next_r);
    fields.rho_b.swap(next_b);
    return report;
}

StepReport pde_step(DensityFields& fields, const MobilityModel& model, double dt, double clamp_band) {
    PdeStepper stepper(fields, model);
    return stepper.step(fields, dt, clamp_band);
}

PdeRunResult pde_run(DensityFields fields, const MobilityModel& model, const SolverParams& params) {
    check_solver_params(params);
    check_fields(fields, params.clamp_band);
    PdeStepper stepper(fields, model);
    const double dt = stable_dt(fields, params);

    PdeRunResult result{{}, {}, fields, 0.0, 0};
    result.energy.push_back({0.0, free_energy(fields)});
    double t = 0.0;
    std::size_t next_snap = 0;
    auto take_snapshots = [&] {
        while (next_snap < params.snapshot_times.size() && params.snapshot_times[next_snap] <= t) {
            const double e = free_energy(fields);
            result.snapshots.push_back({params.snapshot_times[next_snap], fields, e});
            if (result.energy.back().time != t) result.energy.push_back({t, e});
            ++next_snap;
        }
    };
    take_snapshots();
    while (t < params.t_end) {
        double target = params.t_end;
        if (next_snap < params.snapshot_times.size()) target = std::min(target, params.snapshot_times[next_snap]);
        double h_step = dt;
        bool lands = false;
        if (t + dt >= target * (1.0 - 1e-14)) {
            h_step = target - t;
            lands = true;
        }
        if (h_step > 0.0) {
            result.clamp_total += stepper.step(fields, h_step, params.clamp_band, t).clamp_magnitude;
            ++result.steps;
        }
        t = lands ? target : t + h_step;
        if (params.energy_every > 0 && result.steps % params.energy_every == 0 && result.energy.back().time != t)
            result.energy.push_back({t, free_energy(fields)});
        take_snapshots();
    }
    if (result.energy.back().time != t) result.energy.push_back({t, free_energy(fields)});
    result.final_fields = std::move(fields);
    return result;
}

SteadyStateResult steady_state(DensityFields fields, const MobilityModel& model, const SolverParams& params,
                               std::uint64_t check_steps) {
    check_solver_params(params);
    check_fields(fields, params.clamp_band);
    if (check_steps == 0) throw OutOfRange("check_steps must be positive");
    PdeStepper stepper(fields, model);
    const double dt = stable_dt(fields, params);
    double t = 0.0;
    double rate = 0.0;
    while (t < params.max_time) {
        const DensityFields before = fields;
        for (std::uint64_t i = 0; i < check_steps; ++i) stepper.step(fields, dt, params.clamp_band, t + i * dt);
        const double delta = static_cast<double>(check_steps) * dt;
        t += delta;
        rate = l1_distance(before, fields) / delta;
        if (rate < params.steady_state_tol) return {std::move(fields), t, rate};
    }
    throw MaxTimeExceeded("steady state not reached before max_time", std::move(fields), t, rate);
}

void write_fields_csv(std::ostream& out, const DensityFields& fields) {
    const auto& g = fields.geometry;
    for (int k = 0; k < g.dim(); ++k) out << 'x' << (k + 1) << ',';
    out << "rho_r,rho_b\n";
    for (SiteIndex s = 0; s < g.site_count(); ++s) {
        const RVec x = g.position(s);
        for (int k = 0; k < g.dim(); ++k) out << format_real(x[k]) << ',';
        out << format_real(fields.rho_r(s)) << ',' << format_real(fields.rho_b(s)) << '\n';
    }
}

void write_energy_csv(std::ostream& out, std::span<const EnergySample> trace) {
    out << "t,E\n";
    for (const auto& e : trace) out << format_real(e.time) << ',' << format_real(e.energy) << '\n';
}

} // namespace sepmix
