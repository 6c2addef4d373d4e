#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sepmix/lattice.hpp"
#include "sepmix/random.hpp"

namespace sepmix {

/// lambda(x, y) = D/h^2 * exp((V(x) - V(y)) / 2) for nearest neighbours x, y. Throws NotAdjacent otherwise.
double hop_rate(const LatticeGeometry& geometry, const SpeciesParams& species, const IVec& x, const IVec& y);

/// Precomputed proposal rates per species, site and direction.
class RateTable {
public:
    RateTable(const LatticeGeometry& geometry, std::span<const SpeciesParams> species);

    double rate(int species, SiteIndex site, int direction) const noexcept {
        return rates_[species][static_cast<std::size_t>(site) * dirs_ + direction];
    }
    double site_total(int species, SiteIndex site) const noexcept { return totals_[species][site]; }
    /// True when every proposal of a species has the same rate (V = 0).
    bool flat(int species) const noexcept { return flat_[species]; }
    double flat_rate(int species) const noexcept { return flat_rate_[species]; }

private:
    int dirs_;
    std::vector<std::vector<double>> rates_;
    std::vector<std::vector<double>> totals_;
    std::vector<bool> flat_;
    std::vector<double> flat_rate_;
};

/**
 * Rates of all 2Nd proposals, including blocked ones, arranged for sampling.
 *
 * Grouped mode (every species has V = 0): pick a species by its aggregate rate,
 * then a particle and a direction uniformly. Tree mode: a binary sum tree over
 * per-particle totals, followed by a scan over the particle's 2d directions.
 * Internal tree nodes are always recomputed from their children, so partial
 * sums carry no accumulated drift between full rebuilds.
 */
class ProposalTable {
public:
    enum class Mode { Grouped, Tree };

    ProposalTable(const LatticeState& state, const RateTable& rates);

    Mode mode() const noexcept { return mode_; }
    double total() const noexcept { return mode_ == Mode::Grouped ? grouped_total_ : tree_[1]; }
    /// Stored rate of proposal (particle, direction).
    double rate(std::int32_t particle, int direction) const noexcept;
    /// Samples a proposal with probability proportional to its rate.
    std::pair<std::int32_t, int> sample(Rng& rng) const noexcept;
    /// Refreshes the entries of one particle after it moved.
    void update(std::int32_t particle, SiteIndex new_site) noexcept;
    /// Recomputes every entry from positions.
    void rebuild(const LatticeState& state);
    /// Sum of all stored entries, computed directly.
    double direct_sum() const noexcept;

private:
    const RateTable* rates_;
    Mode mode_;
    int dirs_;
    std::vector<std::uint8_t> species_of_;
    std::vector<SiteIndex> site_of_;
    // grouped
    std::vector<std::vector<std::int32_t>> members_;
    std::vector<double> group_total_;
    double grouped_total_ = 0.0;
    // tree
    std::size_t leaves_ = 1;
    std::vector<double> tree_;
};

struct StepOutcome {
    double dt = 0.0;
    bool executed = false;
    std::int32_t particle = -1;
    int direction = -1;
};

/// Rejection Gillespie loop over one realization.
class KmcEngine {
public:
    KmcEngine(LatticeState state, std::vector<SpeciesParams> species, Rng rng);
    // The proposal table points into rates_.
    KmcEngine(const KmcEngine&) = delete;
    KmcEngine& operator=(const KmcEngine&) = delete;

    const LatticeState& state() const noexcept { return state_; }
    LatticeState& mutable_state() noexcept { return state_; }
    const std::vector<SpeciesParams>& species() const noexcept { return species_; }
    const ProposalTable& proposals() const noexcept { return table_; }
    const RateTable& rates() const noexcept { return rates_; }

    double total_rate() const noexcept { return table_.total(); }
    /// Exponential(total rate) waiting time; throws EmptySystem when no proposals exist.
    double draw_waiting_time();
    /// Samples one proposal and executes it if the target is empty. Time is not touched.
    StepOutcome fire();
    /// One full event: waiting time, proposal, time advance.
    StepOutcome step();

    std::uint64_t attempted() const noexcept { return attempted_; }
    std::uint64_t executed() const noexcept { return executed_; }
    void set_rebuild_interval(std::uint64_t n) noexcept { rebuild_interval_ = n; }

private:
    LatticeState state_;
    std::vector<SpeciesParams> species_;
    RateTable rates_;
    ProposalTable table_;
    Rng rng_;
    std::uint64_t attempted_ = 0;
    std::uint64_t executed_ = 0;
    std::uint64_t since_rebuild_ = 0;
    std::uint64_t rebuild_interval_ = 1'000'000;
};

/// Which particles have their displacements recorded at snapshots.
struct TracerSelector {
    enum class Kind { None, Species, Tagged, All };
    Kind kind = Kind::None;
    int species = 0;
    bool selects(const Particle& p) const noexcept {
        switch (kind) {
        case Kind::None: return false;
        case Kind::Species: return p.species == species;
        case Kind::Tagged: return p.tagged;
        case Kind::All: return true;
        }
        return false;
    }
};

struct KmcRunParams {
    double t_end = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::vector<double> snapshot_times;
    TracerSelector record_tracers;
    bool keep_states = true;
};

struct Snapshot {
    double time = 0.0;
    LatticeState state;
};

struct TracerRecord {
    double time = 0.0;
    std::vector<IVec> displacements;
};

struct RealizationResult {
    std::vector<Snapshot> snapshots;
    std::vector<TracerRecord> tracers;
    LatticeState final_state;
    std::uint64_t attempted = 0;
    std::uint64_t executed = 0;
};

/// Throws OutOfRange unless t_end >= 0 and snapshot times are sorted inside [0, t_end].
void check_run_params(const KmcRunParams& params);

/**
 * Advances until the next event would reach t_end.
 *
 * A snapshot requested at time s is the configuration held at s, i.e. the state
 * before the first event whose time is >= s. The final state is the
 * configuration at t_end.
 */
RealizationResult run_realization(LatticeState state, const std::vector<SpeciesParams>& species,
                                  const KmcRunParams& params);

/// Same loop on an existing engine, streaming snapshots to a callback.
void run_until(KmcEngine& engine, double t_end, std::span<const double> snapshot_times,
               const std::function<void(double, const LatticeState&)>& on_snapshot);

} // namespace sepmix
