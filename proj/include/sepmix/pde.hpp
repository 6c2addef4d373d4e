#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "sepmix/continuum.hpp"
#include "sepmix/errors.hpp"

namespace sepmix {

struct SolverParams {
    /// Time step is dt_factor * h^2 / max(D_r, D_b).
    double dt_factor = 0.2;
    double t_end = 0.0;
    std::vector<double> snapshot_times;
    /// L1 change per unit time below which a state counts as stationary.
    double steady_state_tol = 1e-8;
    /// Densities within this distance of [0, 1] are clamped, beyond it the step fails.
    double clamp_band = 1e-8;
    /// Horizon for steady_state.
    double max_time = 50.0;
    /// Record the free energy every n steps as well as at snapshots (0: snapshots only).
    std::uint64_t energy_every = 0;
};

/// Throws OutOfRange on an invalid parameter set.
void check_solver_params(const SolverParams& params);

/// dt = c h^2 / max D.
double stable_dt(const DensityFields& fields, const SolverParams& params);

/// Flux pair on the edge (x, x + h e_axis), J = M F with the division-free assembly.
std::array<double, 2> edge_flux(const DensityFields& fields, const MobilityModel& model, SiteIndex x, int axis);

struct StepReport {
    /// Total absolute correction applied by clamping.
    double clamp_magnitude = 0.0;
};

/**
 * Explicit finite-volume stepper with cached neighbour tables and potential
 * gradients. rho += (dt/h) sum_k [J(x + h/2 e_k) - J(x - h/2 e_k)].
 */
class PdeStepper {
public:
    PdeStepper(const DensityFields& fields, const MobilityModel& model);

    const MobilityModel& model() const noexcept { return model_; }
    /// One step; `time` is only used to label an Instability.
    StepReport step(DensityFields& fields, double dt, double clamp_band = 1e-8, double time = 0.0);

private:
    LatticeGeometry geometry_;
    MobilityModel model_;
    double d_r_, d_b_;
    std::vector<std::vector<SiteIndex>> forward_, backward_;
    std::vector<std::vector<double>> grad_r_, grad_b_;
    std::vector<double> flux_r_, flux_b_;
};

/// Single step without a cached stepper.
StepReport pde_step(DensityFields& fields, const MobilityModel& model, double dt, double clamp_band = 1e-8);

struct EnergySample {
    double time = 0.0;
    double energy = 0.0;
};

struct FieldSnapshot {
    double time = 0.0;
    DensityFields fields;
    double energy = 0.0;
};

struct PdeRunResult {
    std::vector<FieldSnapshot> snapshots;
    std::vector<EnergySample> energy;
    DensityFields final_fields;
    double clamp_total = 0.0;
    std::uint64_t steps = 0;
};

/// Integrates to params.t_end, landing exactly on every snapshot time.
PdeRunResult pde_run(DensityFields fields, const MobilityModel& model, const SolverParams& params);

/// steady_state ran past its horizon. Carries the last iterate.
class MaxTimeExceeded : public Error {
public:
    MaxTimeExceeded(const std::string& what, DensityFields last, double time, double rate)
        : Error(what), last_(std::move(last)), time_(time), rate_(rate) {}
    const DensityFields& last() const noexcept { return last_; }
    double time() const noexcept { return time_; }
    double rate() const noexcept { return rate_; }

private:
    DensityFields last_;
    double time_;
    double rate_;
};

struct SteadyStateResult {
    DensityFields fields;
    double time = 0.0;
    /// Last measured L1 change per unit time.
    double rate = 0.0;
};

/// Integrates until |rho(t + delta) - rho(t)|_1 / delta < params.steady_state_tol.
SteadyStateResult steady_state(DensityFields fields, const MobilityModel& model, const SolverParams& params,
                               std::uint64_t check_steps = 200);

/// Columns x1..xd, rho_r, rho_b.
void write_fields_csv(std::ostream& out, const DensityFields& fields);
/// Columns t, E.
void write_energy_csv(std::ostream& out, std::span<const EnergySample> trace);

} // namespace sepmix
