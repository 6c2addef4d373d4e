#include "sepmix/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sepmix/errors.hpp"

namespace sepmix {

LatticeGeometry::LatticeGeometry(int dim, int side) : dim_(dim), side_(side) {
    if (dim != 2 && dim != 3) throw OutOfRange("lattice dimension must be 2 or 3");
    if (side < 2) throw OutOfRange("lattice side must be at least 2");
    sites_ = 1;
    for (int k = 0; k < dim_; ++k) {
        stride_[k] = sites_;
        sites_ *= side_;
    }
}

SiteIndex LatticeGeometry::wrap_index(const IVec& x) const noexcept {
    SiteIndex s = 0;
    for (int k = 0; k < dim_; ++k) {
        int r = x[k] % side_;
        if (r < 0) r += side_;
        s += r * stride_[k];
    }
    return s;
}

IVec LatticeGeometry::coords(SiteIndex site) const noexcept {
    IVec x{0, 0, 0};
    for (int k = 0; k < dim_; ++k) {
        x[k] = static_cast<int>(site % side_);
        site /= side_;
    }
    return x;
}

RVec LatticeGeometry::position(SiteIndex site) const noexcept {
    const IVec i = coords(site);
    RVec x{0.0, 0.0, 0.0};
    for (int k = 0; k < dim_; ++k) x[k] = i[k] * spacing();
    return x;
}

SiteIndex LatticeGeometry::neighbor(SiteIndex site, int direction) const noexcept {
    const int axis = axis_of(direction);
    const SiteIndex stride = stride_[axis];
    const int c = static_cast<int>((site / stride) % side_);
    if (sign_of(direction) > 0) return c + 1 == side_ ? site - (side_ - 1) * stride : site + stride;
    return c == 0 ? site + (side_ - 1) * stride : site - stride;
}

// ---------------------------------------------------------------------------

Potential Potential::sinusoidal(double amplitude, IVec wavevector) {
    Potential p;
    p.kind_ = Kind::Sinusoidal;
    p.amplitude_ = amplitude;
    p.wavevector_ = wavevector;
    return p;
}

Potential Potential::tabulated(const LatticeGeometry& geometry, std::vector<double> values) {
    if (static_cast<SiteIndex>(values.size()) != geometry.site_count())
        throw OutOfRange("tabulated potential does not match the lattice shape");
    Potential p;
    p.kind_ = Kind::Tabulated;
    p.table_dim_ = geometry.dim();
    p.table_side_ = geometry.side();
    p.table_ = std::move(values);
    return p;
}

bool Potential::is_zero() const noexcept {
    switch (kind_) {
    case Kind::Zero: return true;
    case Kind::Sinusoidal:
        return amplitude_ == 0.0 || (wavevector_[0] == 0 && wavevector_[1] == 0 && wavevector_[2] == 0);
    case Kind::Tabulated:
        return std::all_of(table_.begin(), table_.end(), [](double v) { return v == 0.0; });
    }
    return true;
}

namespace {
double phase(const IVec& k, const RVec& x, int dim) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) s += k[j] * x[j];
    return 2.0 * std::numbers::pi * s;
}
} // namespace

double Potential::at_site(const LatticeGeometry& geometry, SiteIndex site) const {
    switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Sinusoidal: return amplitude_ * std::sin(phase(wavevector_, geometry.position(site), geometry.dim()));
    case Kind::Tabulated:
        if (table_dim_ != geometry.dim() || table_side_ != geometry.side())
            throw OutOfRange("tabulated potential used on a different lattice");
        return table_[site];
    }
    return 0.0;
}

double Potential::at(const LatticeGeometry& geometry, const RVec& x) const {
    switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Sinusoidal: return amplitude_ * std::sin(phase(wavevector_, x, geometry.dim()));
    case Kind::Tabulated: {
        IVec i{0, 0, 0};
        for (int k = 0; k < geometry.dim(); ++k) i[k] = static_cast<int>(std::lround(x[k] * geometry.side()));
        return at_site(geometry, geometry.wrap_index(i));
    }
    }
    return 0.0;
}

double Potential::edge_gradient(const LatticeGeometry& geometry, SiteIndex site, int axis) const {
    switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Sinusoidal: {
        RVec x = geometry.position(site);
        x[axis] += 0.5 * geometry.spacing();
        return amplitude_ * 2.0 * std::numbers::pi * wavevector_[axis] *
               std::cos(phase(wavevector_, x, geometry.dim()));
    }
    case Kind::Tabulated: {
        const SiteIndex next = geometry.neighbor(site, 2 * axis);
        return (at_site(geometry, next) - at_site(geometry, site)) / geometry.spacing();
    }
    }
    return 0.0;
}

Potential Potential::shifted(const LatticeGeometry& geometry, double offset) const {
    std::vector<double> values(static_cast<std::size_t>(geometry.site_count()));
    for (SiteIndex s = 0; s < geometry.site_count(); ++s) values[s] = at_site(geometry, s) + offset;
    return tabulated(geometry, std::move(values));
}

void check_species(const SpeciesParams& species) {
    if (!(species.diffusivity > 0.0) || !std::isfinite(species.diffusivity))
        throw OutOfRange("species '" + species.name + "' needs a positive diffusivity");
}

// ---------------------------------------------------------------------------

LatticeState::LatticeState(LatticeGeometry geometry, int species_count)
    : geometry_(geometry), species_count_(species_count),
      owner_(static_cast<std::size_t>(geometry.site_count()), -1) {
    if (species_count < 1 || species_count > 2) throw OutOfRange("one or two species are supported");
}

std::int64_t LatticeState::count(int species) const {
    return std::count_if(particles_.begin(), particles_.end(),
                         [species](const Particle& p) { return p.species == species; });
}

std::uint8_t LatticeState::tag(SiteIndex site) const noexcept {
    const std::int32_t p = owner_[site];
    if (p < 0) return kEmpty;
    const Particle& q = particles_[p];
    return static_cast<std::uint8_t>((q.species + 1) | (q.tagged ? kTaggedBit : 0));
}

std::int32_t LatticeState::add_particle(int species, SiteIndex site, bool tagged) {
    if (species < 0 || species >= species_count_) throw OutOfRange("unknown species index");
    if (site < 0 || site >= geometry_.site_count()) throw OutOfRange("site outside the lattice");
    if (owner_[site] >= 0) throw OverfullLattice("site " + std::to_string(site) + " already occupied");
    const auto id = static_cast<std::int32_t>(particles_.size());
    particles_.push_back(Particle{static_cast<std::uint8_t>(species), tagged, site, site, {0, 0, 0}});
    owner_[site] = id;
    return id;
}

// ---------------------------------------------------------------------------

bool in_first_block(const LatticeGeometry& geometry, SiteIndex site, int axis, double split) {
    const int i = geometry.coords(site)[axis];
    // 0 < i*h <= split, with a guard against round-off in split*L.
    return i >= 1 && i <= static_cast<int>(std::floor(split * geometry.side() + 1e-9));
}

namespace {

// Partial Fisher-Yates: the first k entries become a uniform random k-subset.
void partial_shuffle(std::vector<SiteIndex>& sites, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + uniform_below(rng, sites.size() - i);
        std::swap(sites[i], sites[j]);
    }
}

void check_fraction(double f) {
    if (!(f >= 0.0 && f <= 1.0)) throw OutOfRange("volume fraction outside [0,1]");
}

} // namespace

LatticeState init_state(const LatticeGeometry& geometry, int species_count, const InitMode& mode,
                        std::uint64_t seed) {
    Rng rng = make_stream(seed, 0);
    return init_state(geometry, species_count, mode, rng);
}

LatticeState init_state(const LatticeGeometry& geometry, int species_count, const InitMode& mode,
                        Rng& rng) {
    LatticeState state(geometry, species_count);
    const SiteIndex n_sites = geometry.site_count();

    if (const auto* fixed = std::get_if<FixedCountUniform>(&mode)) {
        if (static_cast<int>(fixed->counts.size()) != species_count)
            throw OutOfRange("one count per species required");
        std::int64_t total = 0;
        for (auto c : fixed->counts) {
            if (c < 0) throw OutOfRange("negative particle count");
            total += c;
        }
        if (total > n_sites) throw OverfullLattice("requested particles exceed lattice capacity");
        std::vector<SiteIndex> sites(static_cast<std::size_t>(n_sites));
        std::iota(sites.begin(), sites.end(), SiteIndex{0});
        partial_shuffle(sites, static_cast<std::size_t>(total), rng);
        std::size_t next = 0;
        for (int s = 0; s < species_count; ++s)
            for (std::int64_t i = 0; i < fixed->counts[s]; ++i) state.add_particle(s, sites[next++]);
    } else if (const auto* bern = std::get_if<BernoulliUniform>(&mode)) {
        if (static_cast<int>(bern->fractions.size()) != species_count)
            throw OutOfRange("one fraction per species required");
        double sum = 0.0;
        for (double f : bern->fractions) {
            check_fraction(f);
            sum += f;
        }
        if (sum > 1.0 + 1e-12) throw OverfullLattice("total occupation probability exceeds one");
        std::vector<std::vector<SiteIndex>> chosen(static_cast<std::size_t>(species_count));
        for (SiteIndex site = 0; site < n_sites; ++site) {
            const double u = uniform01(rng);
            double acc = 0.0;
            for (int s = 0; s < species_count; ++s) {
                acc += bern->fractions[s];
                if (u < acc) {
                    chosen[s].push_back(site);
                    break;
                }
            }
        }
        for (int s = 0; s < species_count; ++s)
            for (SiteIndex site : chosen[s]) state.add_particle(s, site);
    } else {
        const auto& blocks = std::get<AxisBlocks>(mode);
        if (species_count != 2 || blocks.fractions.size() != 2)
            throw BadSplit("axis blocks need exactly two species");
        if (blocks.axis < 0 || blocks.axis >= geometry.dim()) throw BadSplit("block axis out of range");
        if (!(blocks.split > 0.0 && blocks.split < 1.0)) throw BadSplit("block split must lie in (0,1)");
        std::array<std::vector<SiteIndex>, 2> region;
        for (SiteIndex site = 0; site < n_sites; ++site)
            region[in_first_block(geometry, site, blocks.axis, blocks.split) ? 0 : 1].push_back(site);
        if (region[0].empty() || region[1].empty()) throw BadSplit("a block region is empty");
        for (int s = 0; s < 2; ++s) {
            check_fraction(blocks.fractions[s]);
            const auto n = static_cast<std::size_t>(std::llround(blocks.fractions[s] * region[s].size()));
            partial_shuffle(region[s], n, rng);
            for (std::size_t i = 0; i < n; ++i) state.add_particle(s, region[s][i]);
        }
    }
    return state;
}

void tag_particles(LatticeState& state, int species, std::int64_t n) {
    std::int64_t done = 0;
    for (std::size_t i = 0; i < state.particle_count() && done < n; ++i) {
        if (state.particles()[i].species == species) {
            state.set_tagged(static_cast<std::int32_t>(i), true);
            ++done;
        }
    }
    if (done < n) throw OutOfRange("not enough particles to tag");
}

// ---------------------------------------------------------------------------

ValidationReport validate_state(const LatticeState& state,
                                const std::optional<std::vector<std::int64_t>>& expected_counts) {
    using Kind = Violation::Kind;
    ValidationReport report;
    const auto& geo = state.geometry();
    const auto& particles = state.particles();
    const SiteIndex n_sites = geo.site_count();

    std::vector<int> per_site(static_cast<std::size_t>(n_sites), 0);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(state.species_count()), 0);

    for (std::size_t i = 0; i < particles.size(); ++i) {
        const Particle& p = particles[i];
        if (p.site < 0 || p.site >= n_sites) {
            report.violations.push_back({Kind::Range, p.site, "particle " + std::to_string(i) + " outside lattice"});
            continue;
        }
        if (p.species >= state.species_count())
            report.violations.push_back({Kind::Range, p.site, "particle " + std::to_string(i) + " has unknown species"});
        else
            ++counts[p.species];
        if (++per_site[p.site] == 2)
            report.violations.push_back({Kind::Exclusion, p.site, "more than one particle on site"});
        if (state.owner(p.site) != static_cast<std::int32_t>(i))
            report.violations.push_back(
                {Kind::Consistency, p.site, "list places particle " + std::to_string(i) + " here but grid disagrees"});
        IVec x = geo.coords(p.origin);
        for (int k = 0; k < geo.dim(); ++k) x[k] += p.displacement[k];
        if (geo.wrap_index(x) != p.site)
            report.violations.push_back(
                {Kind::Displacement, p.site, "displacement of particle " + std::to_string(i) + " does not reach its site"});
    }

    for (SiteIndex site = 0; site < n_sites; ++site) {
        const std::int32_t o = state.owner(site);
        if (o < 0) continue;
        if (static_cast<std::size_t>(o) >= particles.size() || particles[o].site != site)
            report.violations.push_back({Kind::Consistency, site, "grid lists a particle the list does not place here"});
    }

    if (expected_counts) {
        for (int s = 0; s < state.species_count(); ++s) {
            const auto want = s < static_cast<int>(expected_counts->size()) ? (*expected_counts)[s] : 0;
            if (counts[s] != want)
                report.violations.push_back({Kind::Count, -1,
                                             "species " + std::to_string(s) + " has " + std::to_string(counts[s]) +
                                                 " particles, expected " + std::to_string(want)});
        }
    }
    return report;
}

} // namespace sepmix
