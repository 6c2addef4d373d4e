#include "sepmix/kmc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "sepmix/errors.hpp"

namespace sepmix {

double hop_rate(const LatticeGeometry& geometry, const SpeciesParams& species, const IVec& x, const IVec& y) {
    const SiteIndex sx = geometry.wrap_index(x);
    const SiteIndex sy = geometry.wrap_index(y);
    bool adjacent = false;
    for (int dir = 0; dir < geometry.direction_count() && !adjacent; ++dir)
        adjacent = geometry.neighbor(sx, dir) == sy;
    if (!adjacent) throw NotAdjacent("sites are not nearest neighbours on the torus");
    const double h = geometry.spacing();
    const double dv = species.potential.at_site(geometry, sx) - species.potential.at_site(geometry, sy);
    return species.diffusivity / (h * h) * std::exp(0.5 * dv);
}

RateTable::RateTable(const LatticeGeometry& geometry, std::span<const SpeciesParams> species)
    : dirs_(geometry.direction_count()) {
    const auto n_sites = static_cast<std::size_t>(geometry.site_count());
    const double h = geometry.spacing();
    for (const auto& sp : species) {
        check_species(sp);
        const double base = sp.diffusivity / (h * h);
        std::vector<double> v(n_sites);
        for (std::size_t s = 0; s < n_sites; ++s) v[s] = sp.potential.at_site(geometry, static_cast<SiteIndex>(s));
        std::vector<double> r(n_sites * dirs_);
        std::vector<double> tot(n_sites, 0.0);
        for (std::size_t s = 0; s < n_sites; ++s) {
            for (int dir = 0; dir < dirs_; ++dir) {
                const auto y = static_cast<std::size_t>(geometry.neighbor(static_cast<SiteIndex>(s), dir));
                const double rate = base * std::exp(0.5 * (v[s] - v[y]));
                r[s * dirs_ + dir] = rate;
                tot[s] += rate;
            }
        }
        const bool flat = std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
        rates_.push_back(std::move(r));
        totals_.push_back(std::move(tot));
        flat_.push_back(flat);
        flat_rate_.push_back(base);
    }
}

// ---------------------------------------------------------------------------

ProposalTable::ProposalTable(const LatticeState& state, const RateTable& rates)
    : rates_(&rates), dirs_(state.geometry().direction_count()) {
    bool all_flat = true;
    for (int s = 0; s < state.species_count(); ++s) all_flat = all_flat && rates.flat(s);
    mode_ = all_flat ? Mode::Grouped : Mode::Tree;
    rebuild(state);
}

void ProposalTable::rebuild(const LatticeState& state) {
    const auto& particles = state.particles();
    const std::size_t n = particles.size();
    species_of_.resize(n);
    site_of_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        species_of_[i] = particles[i].species;
        site_of_[i] = particles[i].site;
    }
    if (mode_ == Mode::Grouped) {
        members_.assign(static_cast<std::size_t>(state.species_count()), {});
        for (std::size_t i = 0; i < n; ++i) members_[species_of_[i]].push_back(static_cast<std::int32_t>(i));
        group_total_.assign(members_.size(), 0.0);
        grouped_total_ = 0.0;
        for (std::size_t s = 0; s < members_.size(); ++s) {
            group_total_[s] = static_cast<double>(members_[s].size()) * dirs_ * rates_->flat_rate(static_cast<int>(s));
            grouped_total_ += group_total_[s];
        }
        return;
    }
    leaves_ = std::bit_ceil(std::max<std::size_t>(n, 1));
    tree_.assign(2 * leaves_, 0.0);
    for (std::size_t i = 0; i < n; ++i) tree_[leaves_ + i] = rates_->site_total(species_of_[i], site_of_[i]);
    for (std::size_t k = leaves_ - 1; k >= 1; --k) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
}

double ProposalTable::rate(std::int32_t particle, int direction) const noexcept {
    return rates_->rate(species_of_[particle], site_of_[particle], direction);
}

std::pair<std::int32_t, int> ProposalTable::sample(Rng& rng) const noexcept {
    if (mode_ == Mode::Grouped) {
        std::size_t s = 0;
        if (members_.size() > 1) {
            const double u = uniform01(rng) * grouped_total_;
            double acc = 0.0;
            for (s = 0; s + 1 < members_.size(); ++s) {
                acc += group_total_[s];
                if (u < acc) break;
            }
            while (members_[s].empty()) --s;
        }
        const auto& m = members_[s];
        const std::uint64_t pick = uniform_below(rng, m.size() * static_cast<std::uint64_t>(dirs_));
        return {m[pick / dirs_], static_cast<int>(pick % dirs_)};
    }

    double u = uniform01(rng) * tree_[1];
    std::size_t k = 1;
    while (k < leaves_) {
        const double left = tree_[2 * k];
        if (u < left) {
            k = 2 * k;
        } else {
            u -= left;
            k = 2 * k + 1;
        }
    }
    auto p = static_cast<std::int32_t>(k - leaves_);
    // Round-off can land on an empty padding leaf; fall back to the last live particle.
    if (static_cast<std::size_t>(p) >= species_of_.size()) {
        p = static_cast<std::int32_t>(species_of_.size() - 1);
        u = tree_[leaves_ + p];
    }
    const int sp = species_of_[p];
    const SiteIndex site = site_of_[p];
    int dir = 0;
    for (; dir + 1 < dirs_; ++dir) {
        const double r = rates_->rate(sp, site, dir);
        if (u < r) break;
        u -= r;
    }
    return {p, dir};
}

void ProposalTable::update(std::int32_t particle, SiteIndex new_site) noexcept {
    site_of_[particle] = new_site;
    if (mode_ == Mode::Grouped) return;
    std::size_t k = leaves_ + static_cast<std::size_t>(particle);
    tree_[k] = rates_->site_total(species_of_[particle], new_site);
    for (k >>= 1; k >= 1; k >>= 1) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
}

double ProposalTable::direct_sum() const noexcept {
    double sum = 0.0;
    for (std::size_t i = 0; i < site_of_.size(); ++i)
        for (int dir = 0; dir < dirs_; ++dir) sum += rates_->rate(species_of_[i], site_of_[i], dir);
    return sum;
}

// ---------------------------------------------------------------------------

KmcEngine::KmcEngine(LatticeState state, std::vector<SpeciesParams> species, Rng rng)
    : state_(std::move(state)), species_(std::move(species)),
      rates_(state_.geometry(), species_), table_(state_, rates_), rng_(std::move(rng)) {
    if (static_cast<int>(species_.size()) != state_.species_count())
        throw OutOfRange("species parameter count does not match the state");
}

double KmcEngine::draw_waiting_time() {
    const double total = table_.total();
    if (!(total > 0.0)) throw EmptySystem("no particles to move");
    // 1 - u lies in (0, 1], so the logarithm is finite.
    return -std::log(1.0 - uniform01(rng_)) / total;
}

StepOutcome KmcEngine::fire() {
    const auto [p, dir] = table_.sample(rng_);
    StepOutcome out;
    out.particle = p;
    out.direction = dir;
    ++attempted_;
    if (state_.try_move(p, dir)) {
        out.executed = true;
        ++executed_;
        table_.update(p, state_.particles()[p].site);
    }
    if (++since_rebuild_ >= rebuild_interval_) {
        table_.rebuild(state_);
        since_rebuild_ = 0;
    }
    return out;
}

StepOutcome KmcEngine::step() {
    const double dt = draw_waiting_time();
    StepOutcome out = fire();
    out.dt = dt;
    state_.advance_time(dt);
    return out;
}

// ---------------------------------------------------------------------------

void check_run_params(const KmcRunParams& params) {
    if (!(params.t_end >= 0.0) || !std::isfinite(params.t_end)) throw OutOfRange("t_end must be finite and >= 0");
    if (!std::is_sorted(params.snapshot_times.begin(), params.snapshot_times.end()))
        throw OutOfRange("snapshot times must be sorted");
    for (double t : params.snapshot_times)
        if (t < 0.0 || t > params.t_end) throw OutOfRange("snapshot time outside [0, t_end]");
}

void run_until(KmcEngine& engine, double t_end, std::span<const double> snapshot_times,
               const std::function<void(double, const LatticeState&)>& on_snapshot) {
    LatticeState& state = engine.mutable_state();
    std::size_t next = 0;
    while (next < snapshot_times.size() && snapshot_times[next] < state.time()) ++next;

    auto emit_until = [&](double horizon, bool inclusive) {
        while (next < snapshot_times.size() &&
               (snapshot_times[next] < horizon || (inclusive && snapshot_times[next] == horizon))) {
            if (on_snapshot) on_snapshot(snapshot_times[next], state);
            ++next;
        }
    };

    if (state.time() >= t_end) {
        emit_until(t_end, true);
        return;
    }
    for (;;) {
        const double t_next = state.time() + engine.draw_waiting_time();
        if (t_next >= t_end) {
            state.set_time(t_end);
            emit_until(t_end, true);
            return;
        }
        emit_until(t_next, false);
        engine.fire();
        state.set_time(t_next);
    }
}

RealizationResult run_realization(LatticeState state, const std::vector<SpeciesParams>& species,
                                  const KmcRunParams& params) {
    check_run_params(params);
    RealizationResult result{{}, {}, state, 0, 0};
    if (params.t_end <= 0.0 || state.particle_count() == 0) {
        // Nothing moves: every snapshot is the initial configuration.
        for (double t : params.snapshot_times) {
            if (params.keep_states) result.snapshots.push_back({t, state});
            TracerRecord rec{t, {}};
            for (const auto& p : state.particles())
                if (params.record_tracers.selects(p)) rec.displacements.push_back(p.displacement);
            if (params.record_tracers.kind != TracerSelector::Kind::None) result.tracers.push_back(std::move(rec));
        }
        result.final_state.set_time(params.t_end);
        return result;
    }

    KmcEngine engine(std::move(state), species, make_stream(params.seed, params.stream));
    run_until(engine, params.t_end, params.snapshot_times, [&](double t, const LatticeState& s) {
        if (params.keep_states) {
            result.snapshots.push_back({t, s});
            result.snapshots.back().state.set_time(t);
        }
        if (params.record_tracers.kind != TracerSelector::Kind::None) {
            TracerRecord rec{t, {}};
            for (const auto& p : s.particles())
                if (params.record_tracers.selects(p)) rec.displacements.push_back(p.displacement);
            result.tracers.push_back(std::move(rec));
        }
    });
    result.final_state = engine.state();
    result.attempted = engine.attempted();
    result.executed = engine.executed();
    return result;
}

} // namespace sepmix
