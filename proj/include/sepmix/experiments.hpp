#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sepmix/continuum.hpp"
#include "sepmix/estimators.hpp"
#include "sepmix/lattice.hpp"
#include "sepmix/pde.hpp"

namespace sepmix {

enum class ExperimentKind {
    SelfDiffSweepEqual,
    SelfDiffSweepMixture,
    ProfileComparisonEqual,
    EnergyTrace,
    ProfileComparisonUnequal,
    CoefficientsReport,
    Custom,
};

std::string to_string(ExperimentKind kind);
/// Accepts the snake_case names, e.g. "selfdiff_sweep_equal". Throws ValidationError.
ExperimentKind experiment_kind_from_string(const std::string& name);
std::vector<std::string> experiment_kind_names();

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Custom;
    int dim = 2;
    int side = 50;
    SpeciesParams red{"red", 1.0, {}};
    SpeciesParams blue{"blue", 1.0, {}};
    /// "fixed_count", "bernoulli" (sweeps) or "blocks" (profiles).
    std::string init = "blocks";
    /// Local density inside each species' half-domain.
    std::vector<double> block_density{0.5, 0.5};
    int axis = 0;
    std::vector<double> phi_grid;
    std::vector<double> gamma_grid;
    int realizations = 1;
    std::uint64_t seed = 1;
    int threads = 1;
    /// MSD inspection window in torus time units, sampled at window_samples equispaced times.
    double window_start = 0.025;
    double window_end = 0.03;
    int window_samples = 6;
    /// Observation times for profiles and energy traces.
    std::vector<double> times;
    double dt_factor = 0.2;
    double steady_state_tol = 1e-8;
    double clamp_band = 1e-8;
    double max_time = 50.0;
    std::vector<MobilityKind> models;
    bool alternative_mu = false;
    double bin_width = 0.08;
    int psi_radius = 10;
    double alpha_tol = 1e-9;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Defaults for a figure preset.
ExperimentConfig preset(ExperimentKind kind);

/// Returns every violated guard (empty when valid).
std::vector<std::string> validation_errors(const ExperimentConfig& config);
/// Throws ValidationError listing every violated guard.
void validate(const ExperimentConfig& config);

/**
 * Parses a JSON document. Missing keys take the defaults of the preset named by
 * "kind" (or of `fallback_kind` when the document has none). Throws ParseError
 * on malformed text and ValidationError on type errors, unknown keys or
 * violated guards.
 */
ExperimentConfig parse_config(const std::string& text, ExperimentKind fallback_kind = ExperimentKind::Custom);
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string emit_config(const ExperimentConfig& config);

/// Runs fn(i) for i < n on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Derived streams of realization i: initial state uses 2i, dynamics 2i + 1.
std::uint64_t init_stream(std::uint64_t task) noexcept;
std::uint64_t dynamics_stream(std::uint64_t task) noexcept;

struct SeedRecord {
    std::string label;
    std::uint64_t master = 0;
    std::uint64_t init_stream = 0;
    std::uint64_t dynamics_stream = 0;
};

/// Files plus manifest of one experiment.
struct ResultBundle {
    std::vector<std::pair<std::string, std::string>> files;
    nlohmann::json manifest;
    void add_file(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
};

// Building blocks shared by the CLI, the presets and the acceptance checks.

std::vector<Fig3Row> selfdiff_equal_rows(const ExperimentConfig& config, std::vector<SeedRecord>* seeds = nullptr);
std::vector<Fig2Row> selfdiff_mixture_rows(const ExperimentConfig& config, std::vector<SeedRecord>* seeds = nullptr);

/// Continuum initial data matching the block initial condition.
DensityFields block_fields(const ExperimentConfig& config);
/// Species parameters, adjusted by the preset (mixture diffusivities are set per sweep point).
std::vector<SpeciesParams> species_of(const ExperimentConfig& config);
LatticeGeometry geometry_of(const ExperimentConfig& config);

struct ProfileRuns {
    std::vector<double> times;
    /// kmc[t][k]: slab profile of realization k at times[t].
    std::vector<std::vector<SlabProfile>> kmc;
    std::vector<std::pair<MobilityKind, PdeRunResult>> pde;
    std::uint64_t events = 0;
};

ProfileRuns kmc_profiles(const ExperimentConfig& config, std::vector<SeedRecord>* seeds = nullptr);
void pde_profiles(const ExperimentConfig& config, ProfileRuns& runs, double alpha);

/// Executes the experiment, filling `bundle` as results become available.
void execute_experiment(const ExperimentConfig& config, ResultBundle& bundle);

/// Writes every file and manifest.json into `dir`. Byte-identical on re-emit.
void emit_results(const ResultBundle& bundle, const std::filesystem::path& dir);

/// execute + emit. On failure the partial bundle is written with "status": "failed", then the error is rethrown.
ResultBundle run_experiment(const ExperimentConfig& config, const std::filesystem::path& dir);

/// One realization per task, occupancy dumps at config.times plus manifest (the `kmc` subcommand).
ResultBundle kmc_snapshot_bundle(const ExperimentConfig& config);
/// PDE fields and energy traces for every configured model (the `pde` subcommand).
ResultBundle pde_bundle(const ExperimentConfig& config);

/// Occupied sites as (site, tag) rows.
std::string occupancy_csv(const LatticeState& state);

std::string library_version();

} // namespace sepmix
