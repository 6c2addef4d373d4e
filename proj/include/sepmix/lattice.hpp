#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sepmix/random.hpp"

namespace sepmix {

using IVec = std::array<int, 3>;
using RVec = std::array<double, 3>;
using SiteIndex = std::int64_t;

/**
 * Periodic cubic lattice of L^d sites embedded in the unit torus.
 *
 * Site i along an axis sits at coordinate x = i*h with h = 1/L. Directions are
 * numbered 2*axis (+e_axis) and 2*axis + 1 (-e_axis).
 */
class LatticeGeometry {
public:
    LatticeGeometry(int dim, int side);

    int dim() const noexcept { return dim_; }
    int side() const noexcept { return side_; }
    double spacing() const noexcept { return 1.0 / side_; }
    SiteIndex site_count() const noexcept { return sites_; }
    int direction_count() const noexcept { return 2 * dim_; }

    /// Reduces x componentwise modulo L and flattens (axis 0 fastest).
    SiteIndex wrap_index(const IVec& x) const noexcept;
    IVec coords(SiteIndex site) const noexcept;
    RVec position(SiteIndex site) const noexcept;
    SiteIndex neighbor(SiteIndex site, int direction) const noexcept;

    static constexpr int axis_of(int direction) noexcept { return direction >> 1; }
    static constexpr int sign_of(int direction) noexcept { return (direction & 1) ? -1 : 1; }

    bool operator==(const LatticeGeometry&) const = default;

private:
    int dim_;
    int side_;
    SiteIndex sites_;
    std::array<SiteIndex, 3> stride_{};
};

/// V(x) = 0, amplitude*sin(2*pi*k.x), or a table of per-site values.
class Potential {
public:
    enum class Kind { Zero, Sinusoidal, Tabulated };

    Potential() = default;
    static Potential zero() { return {}; }
    static Potential sinusoidal(double amplitude, IVec wavevector);
    static Potential tabulated(const LatticeGeometry& geometry, std::vector<double> values);

    Kind kind() const noexcept { return kind_; }
    bool is_zero() const noexcept;
    double amplitude() const noexcept { return amplitude_; }
    const IVec& wavevector() const noexcept { return wavevector_; }
    const std::vector<double>& table() const noexcept { return table_; }

    /// Value at a lattice site.
    double at_site(const LatticeGeometry& geometry, SiteIndex site) const;
    /// Value at an arbitrary point (Sinusoidal/Zero only; Tabulated uses the nearest site).
    double at(const LatticeGeometry& geometry, const RVec& x) const;
    /// d_k V at the edge midpoint x + h/2 e_k. Analytic for Sinusoidal, centred difference for Tabulated.
    double edge_gradient(const LatticeGeometry& geometry, SiteIndex site, int axis) const;

    /// Returns this potential plus a constant offset (tabulated if needed).
    Potential shifted(const LatticeGeometry& geometry, double offset) const;

    bool operator==(const Potential&) const = default;

private:
    Kind kind_ = Kind::Zero;
    double amplitude_ = 0.0;
    IVec wavevector_{0, 0, 0};
    int table_dim_ = 0;
    int table_side_ = 0;
    std::vector<double> table_;
};

struct SpeciesParams {
    std::string name = "red";
    double diffusivity = 1.0;
    Potential potential;

    bool operator==(const SpeciesParams&) const = default;
};

/// Throws OutOfRange unless D > 0.
void check_species(const SpeciesParams& species);

struct Particle {
    std::uint8_t species = 0;
    bool tagged = false;
    SiteIndex site = 0;
    SiteIndex origin = 0;
    IVec displacement{0, 0, 0};

    bool operator==(const Particle&) const = default;
};

/// Site label: empty, or species s (1-based) with an optional tag bit.
enum SiteTag : std::uint8_t { kEmpty = 0, kRed = 1, kBlue = 2, kTaggedBit = 0x80 };

/**
 * Microscopic configuration: a particle list plus a per-site owner grid.
 *
 * Displacements are kept unwrapped in integer lattice units.
 */
class LatticeState {
public:
    LatticeState(LatticeGeometry geometry, int species_count);

    const LatticeGeometry& geometry() const noexcept { return geometry_; }
    int species_count() const noexcept { return species_count_; }
    double time() const noexcept { return time_; }
    void set_time(double t) noexcept { time_ = t; }
    void advance_time(double dt) noexcept { time_ += dt; }

    const std::vector<Particle>& particles() const noexcept { return particles_; }
    std::size_t particle_count() const noexcept { return particles_.size(); }
    std::int64_t count(int species) const;

    /// Index of the particle at a site, or -1.
    std::int32_t owner(SiteIndex site) const noexcept { return owner_[site]; }
    bool occupied(SiteIndex site) const noexcept { return owner_[site] >= 0; }
    std::uint8_t tag(SiteIndex site) const noexcept;

    /// Places a new particle; throws OverfullLattice when the site is taken.
    std::int32_t add_particle(int species, SiteIndex site, bool tagged = false);
    void set_tagged(std::int32_t particle, bool tagged) { particles_.at(particle).tagged = tagged; }

    /// Moves particle p one step along `direction` if the target is empty.
    bool try_move(std::int32_t p, int direction) noexcept {
        Particle& q = particles_[p];
        const SiteIndex target = geometry_.neighbor(q.site, direction);
        if (owner_[target] >= 0) return false;
        owner_[target] = p;
        owner_[q.site] = -1;
        q.site = target;
        q.displacement[LatticeGeometry::axis_of(direction)] += LatticeGeometry::sign_of(direction);
        return true;
    }

    /// Unchecked access used to construct corrupted states in tests.
    std::vector<Particle>& raw_particles() noexcept { return particles_; }
    std::vector<std::int32_t>& raw_owners() noexcept { return owner_; }

    bool operator==(const LatticeState&) const = default;

private:
    LatticeGeometry geometry_;
    int species_count_;
    double time_ = 0.0;
    std::vector<Particle> particles_;
    std::vector<std::int32_t> owner_;
};

struct FixedCountUniform {
    std::vector<std::int64_t> counts;
};
struct BernoulliUniform {
    std::vector<double> fractions;
};
/// Species 0 on 0 < x_axis <= split, species 1 on the rest, each at its own local density.
struct AxisBlocks {
    std::vector<double> fractions;
    int axis = 0;
    double split = 0.5;
};
using InitMode = std::variant<FixedCountUniform, BernoulliUniform, AxisBlocks>;

/// Builds a valid state at t = 0 with zero displacements. Particles are stored grouped by species.
LatticeState init_state(const LatticeGeometry& geometry, int species_count, const InitMode& mode,
                        std::uint64_t seed);
LatticeState init_state(const LatticeGeometry& geometry, int species_count, const InitMode& mode,
                        Rng& rng);

/// Tags the first n particles of a species.
void tag_particles(LatticeState& state, int species, std::int64_t n);

/// True if site lies in the first block (0 < x_axis <= split).
bool in_first_block(const LatticeGeometry& geometry, SiteIndex site, int axis, double split);

struct Violation {
    enum class Kind { Exclusion, Consistency, Count, Displacement, Range };
    Kind kind;
    SiteIndex site;
    std::string reason;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

/// Pure consistency check; never throws on a corrupted state.
ValidationReport validate_state(const LatticeState& state,
                                const std::optional<std::vector<std::int64_t>>& expected_counts = {});

} // namespace sepmix
