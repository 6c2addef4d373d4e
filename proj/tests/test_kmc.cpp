#include <doctest.h>

#include <cmath>
#include <vector>

#include "sepmix/errors.hpp"
#include "sepmix/estimators.hpp"
#include "sepmix/generator_oracle.hpp"
#include "sepmix/kmc.hpp"

using namespace sepmix;

namespace {

SpeciesParams plain(double d = 1.0) { return {"red", d, Potential::zero()}; }

SpeciesParams drifted(const char* name, double amp) { return {name, 1.0, Potential::sinusoidal(amp, {1, 0, 0})}; }

LatticeState single(const LatticeGeometry& g, SiteIndex site) {
    LatticeState s(g, 1);
    s.add_particle(0, site);
    return s;
}

} // namespace

TEST_CASE("hop_rate examples") {
    const LatticeGeometry g10(2, 10);
    CHECK(hop_rate(g10, plain(), {0, 0, 0}, {1, 0, 0}) == doctest::Approx(100.0).epsilon(1e-15));
    CHECK(hop_rate(g10, plain(), {9, 4, 0}, {0, 4, 0}) == doctest::Approx(100.0).epsilon(1e-15));
    CHECK_THROWS_AS(hop_rate(g10, plain(), {0, 0, 0}, {2, 0, 0}), NotAdjacent);
    CHECK_THROWS_AS(hop_rate(g10, plain(), {0, 0, 0}, {1, 1, 0}), NotAdjacent);
    CHECK_THROWS_AS(hop_rate(g10, plain(), {3, 3, 0}, {3, 3, 0}), NotAdjacent);

    const LatticeGeometry g100(2, 100);
    const auto sp = drifted("red", 1.0);
    const long double pi = 3.141592653589793238462643383279502884L;
    const long double oracle = 1e4L * std::exp((0.0L - std::sin(2.0L * pi * 0.01L)) / 2.0L);
    CHECK(hop_rate(g100, sp, {0, 0, 0}, {1, 0, 0}) == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-13));
}

TEST_CASE("hop_rate satisfies the detailed-balance ratio") {
    const LatticeGeometry g(2, 7);
    const SpeciesParams sp{"blue", 0.3, Potential::sinusoidal(-1.7, {1, 2, 0})};
    for (SiteIndex s = 0; s < g.site_count(); ++s)
        for (int dir = 0; dir < 4; ++dir) {
            const SiteIndex t = g.neighbor(s, dir);
            const double ratio = hop_rate(g, sp, g.coords(s), g.coords(t)) / hop_rate(g, sp, g.coords(t), g.coords(s));
            const double expected = std::exp(sp.potential.at_site(g, s) - sp.potential.at_site(g, t));
            CHECK(ratio == doctest::Approx(expected).epsilon(1e-13));
        }
}

TEST_CASE("single particle total rate and mean waiting time") {
    const LatticeGeometry g(2, 3);
    KmcEngine engine(single(g, 4), {plain()}, make_stream(5, 0));
    CHECK(engine.total_rate() == doctest::Approx(36.0).epsilon(1e-14));
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += engine.draw_waiting_time();
    const double mean = sum / n;
    CHECK(std::abs(mean - 1.0 / 36.0) < 3.0 * (1.0 / 36.0) / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("empty system cannot step") {
    const LatticeGeometry g(2, 3);
    KmcEngine engine(LatticeState(g, 1), {plain()}, make_stream(1, 0));
    CHECK_THROWS_AS(engine.step(), EmptySystem);
}

TEST_CASE("proposal into an occupied site leaves positions but advances time") {
    const LatticeGeometry g(2, 5);
    LatticeState s(g, 1);
    s.add_particle(0, 0);
    s.add_particle(0, g.neighbor(0, 0));
    KmcEngine engine(std::move(s), {plain()}, make_stream(11, 0));
    bool seen = false;
    for (int i = 0; i < 2000 && !seen; ++i) {
        const LatticeState before = engine.state();
        const auto out = engine.step();
        CHECK(out.dt > 0.0);
        CHECK(engine.state().time() > before.time());
        const SiteIndex target = g.neighbor(before.particles()[out.particle].site, out.direction);
        if (before.occupied(target)) {
            seen = true;
            CHECK_FALSE(out.executed);
            for (std::size_t p = 0; p < 2; ++p) {
                CHECK(engine.state().particles()[p].site == before.particles()[p].site);
                CHECK(engine.state().particles()[p].displacement == before.particles()[p].displacement);
            }
        } else {
            CHECK(out.executed);
        }
    }
    CHECK(seen);
}

TEST_CASE("equal-rate proposals are uniform over 2Nd choices") {
    const LatticeGeometry g(2, 8);
    const auto state = init_state(g, 1, FixedCountUniform{{5}}, 21);
    const std::vector<SpeciesParams> sp{plain()};
    const RateTable rates(g, sp);
    const ProposalTable table(state, rates);
    CHECK(table.mode() == ProposalTable::Mode::Grouped);
    Rng rng = make_stream(21, 1);
    const int cells = 5 * 4;
    const int n = 100000;
    std::vector<int> hits(cells, 0);
    for (int i = 0; i < n; ++i) {
        const auto [p, dir] = table.sample(rng);
        ++hits[p * 4 + dir];
    }
    const double expected = static_cast<double>(n) / cells;
    double chi2 = 0.0;
    for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
    // Upper 1% point of chi-square with 19 degrees of freedom.
    CHECK(chi2 < 36.191);
}

TEST_CASE("two species with different D use weighted sampling") {
    const LatticeGeometry g(2, 6);
    const auto state = init_state(g, 2, FixedCountUniform{{3, 3}}, 4);
    const std::vector<SpeciesParams> sp{plain(1.5), plain(0.5)};
    const RateTable rates(g, sp);
    const ProposalTable table(state, rates);
    CHECK(table.total() == doctest::Approx(3 * 4 * 36 * 1.5 + 3 * 4 * 36 * 0.5).epsilon(1e-13));
    Rng rng = make_stream(4, 1);
    int red = 0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) red += state.particles()[table.sample(rng).first].species == 0;
    const double p = 0.75;
    CHECK(std::abs(red - n * p) < 4.0 * std::sqrt(n * p * (1 - p)));
}

TEST_CASE("tree proposal entries match the rate formula during a run") {
    const LatticeGeometry g(2, 9);
    const std::vector<SpeciesParams> sp{drifted("red", 1.3), drifted("blue", -0.8)};
    KmcEngine engine(init_state(g, 2, FixedCountUniform{{12, 10}}, 8), sp, make_stream(8, 1));
    CHECK(engine.proposals().mode() == ProposalTable::Mode::Tree);
    for (int i = 0; i < 5000; ++i) engine.step();
    const auto& st = engine.state();
    for (std::size_t p = 0; p < st.particle_count(); ++p) {
        const auto& q = st.particles()[p];
        for (int dir = 0; dir < 4; ++dir) {
            const double expected = hop_rate(g, sp[q.species], g.coords(q.site), g.coords(g.neighbor(q.site, dir)));
            CHECK(engine.proposals().rate(static_cast<std::int32_t>(p), dir) ==
                  doctest::Approx(expected).epsilon(1e-14));
        }
    }
    const double direct = engine.proposals().direct_sum();
    CHECK(std::abs(engine.total_rate() - direct) <= 1e-12 * direct);
    CHECK(validate_state(st, std::vector<std::int64_t>{12, 10}).ok());
}

TEST_CASE("run with T_end = 0 returns the initial state") {
    const LatticeGeometry g(2, 6);
    const auto s0 = init_state(g, 2, FixedCountUniform{{5, 5}}, 2);
    KmcRunParams params;
    params.t_end = 0.0;
    params.seed = 2;
    params.snapshot_times = {0.0};
    const auto r = run_realization(s0, {plain(), plain()}, params);
    REQUIRE(r.snapshots.size() == 1);
    CHECK(r.snapshots[0].state == s0);
    CHECK(r.final_state == s0);
    CHECK(r.attempted == 0);
}

TEST_CASE("full lattice never executes a jump") {
    const LatticeGeometry g(2, 4);
    const auto s0 = init_state(g, 2, FixedCountUniform{{10, 6}}, 3);
    KmcRunParams params;
    params.t_end = 1.0;
    params.seed = 3;
    const auto r = run_realization(s0, {plain(), plain()}, params);
    CHECK(r.attempted > 0);
    CHECK(r.executed == 0);
    for (std::size_t p = 0; p < s0.particle_count(); ++p) {
        CHECK(r.final_state.particles()[p].site == s0.particles()[p].site);
        CHECK(r.final_state.particles()[p].displacement == IVec{0, 0, 0});
    }
}

TEST_CASE("run parameter guards") {
    KmcRunParams params;
    params.t_end = 1.0;
    params.snapshot_times = {0.5, 0.2};
    CHECK_THROWS_AS(check_run_params(params), OutOfRange);
    params.snapshot_times = {0.5, 1.5};
    CHECK_THROWS_AS(check_run_params(params), OutOfRange);
    params.t_end = -1.0;
    params.snapshot_times = {};
    CHECK_THROWS_AS(check_run_params(params), OutOfRange);
}

TEST_CASE("free particle has D_s = 1") {
    const LatticeGeometry g(2, 10);
    std::vector<std::vector<TracerRecord>> tracks;
    for (int k = 0; k < 10; ++k) {
        KmcRunParams params;
        params.t_end = 100.0;
        params.seed = 77;
        params.stream = k;
        params.snapshot_times = {100.0};
        params.record_tracers = {TracerSelector::Kind::All, 0};
        params.keep_states = false;
        tracks.push_back(run_realization(single(g, 0), {plain()}, params).tracers);
    }
    const auto est = estimate_self_diffusion(tracks, 2, g.spacing(), 99.0, 100.0);
    CHECK(est.stderr_ > 0.0);
    CHECK(std::abs(est.value - 1.0) < 3.0 * est.stderr_);
}

TEST_CASE("counts are conserved and the same seed reproduces the run") {
    const LatticeGeometry g(2, 12);
    const std::vector<SpeciesParams> sp{drifted("red", 1.0), drifted("blue", -1.0)};
    const auto s0 = init_state(g, 2, AxisBlocks{{0.5, 0.5}, 0, 0.5}, 9);
    KmcRunParams params;
    params.t_end = 0.05;
    params.seed = 9;
    params.stream = 1;
    params.snapshot_times = {0.01, 0.03};
    const auto a = run_realization(s0, sp, params);
    const auto b = run_realization(s0, sp, params);
    CHECK(a.final_state == b.final_state);
    CHECK(a.attempted == b.attempted);
    CHECK(a.snapshots.size() == 2);
    CHECK(a.snapshots[1].state == b.snapshots[1].state);
    CHECK(validate_state(a.final_state, std::vector<std::int64_t>{s0.count(0), s0.count(1)}).ok());
    params.stream = 2;
    const auto c = run_realization(s0, sp, params);
    CHECK_FALSE(a.final_state == c.final_state);
}

TEST_CASE("oracle: 1 red + 1 blue on a 2x2 torus") {
    const LatticeGeometry g(2, 2);
    const GeneratorOracle oracle(g, {plain(), plain()}, {1, 1});
    CHECK(oracle.size() == 12);
    const Eigen::VectorXd pi = oracle.stationary_distribution();
    for (Eigen::Index i = 0; i < pi.size(); ++i) CHECK(pi(i) == doctest::Approx(1.0 / 12.0).epsilon(1e-10));
    const Eigen::MatrixXd q = oracle.dense_generator();
    CHECK(q.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("oracle: drifted stationary law is the Gibbs measure and detailed balance holds") {
    const LatticeGeometry g(2, 3);
    const GeneratorOracle oracle(g, {drifted("red", 0.9), drifted("blue", -0.9)}, {2, 1});
    const Eigen::VectorXd pi = oracle.stationary_distribution();
    const Eigen::VectorXd gibbs = oracle.gibbs_measure();
    CHECK((pi - gibbs).cwiseAbs().maxCoeff() < 1e-10);

    // Independent Gibbs weight from the site potentials.
    double z = 0.0;
    std::vector<double> w(oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        double e = 0.0;
        const auto& c = oracle.configurations()[i];
        for (SiteIndex s = 0; s < g.site_count(); ++s) {
            const double x = g.position(s)[0];
            if (c[s] == 1) e += 0.9 * std::sin(2 * M_PI * x);
            if (c[s] == 2) e -= 0.9 * std::sin(2 * M_PI * x);
        }
        w[i] = std::exp(-e);
        z += w[i];
    }
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(gibbs(i) == doctest::Approx(w[i] / z).epsilon(1e-12));

    const Eigen::MatrixXd q = oracle.dense_generator();
    CHECK(q.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        for (Eigen::Index j = 0; j < q.cols(); ++j)
            if (i != j) worst = std::max(worst, std::abs(gibbs(i) * q(i, j) - gibbs(j) * q(j, i)));
    CHECK(worst < 1e-12 * q.cwiseAbs().maxCoeff());
}

TEST_CASE("oracle guard and evolution methods agree") {
    CHECK_THROWS_AS(GeneratorOracle(LatticeGeometry(3, 4), {plain(), plain()}, {20, 20}), TooLarge);
    const LatticeGeometry g(2, 3);
    const GeneratorOracle oracle(g, {drifted("red", 0.5), drifted("blue", -0.5)}, {1, 1});
    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(oracle.size()));
    p0(0) = 1.0;
    const auto a = oracle.evolve(p0, 0.02);
    const auto b = oracle.evolve_dense(p0, 0.02);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.sum() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("KMC finite-time site marginals match the oracle on a 3x3 torus") {
    const LatticeGeometry g(2, 3);
    const std::vector<SpeciesParams> sp{drifted("red", 1.0), drifted("blue", -1.0)};
    const GeneratorOracle oracle(g, sp, {1, 1});
    LatticeState s0(g, 2);
    s0.add_particle(0, 0);
    s0.add_particle(1, 4);
    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(oracle.size()));
    p0(oracle.index_of(oracle.configuration_of(s0))) = 1.0;
    const double t = 0.02;
    const Eigen::VectorXd pt = oracle.evolve(p0, t);

    const int samples = 20000;
    Eigen::VectorXd red = Eigen::VectorXd::Zero(9), blue = Eigen::VectorXd::Zero(9);
    KmcRunParams params;
    params.t_end = t;
    params.seed = 123;
    params.keep_states = false;
    for (int k = 0; k < samples; ++k) {
        params.stream = k;
        const auto r = run_realization(s0, sp, params);
        for (const auto& p : r.final_state.particles()) (p.species == 0 ? red : blue)(p.site) += 1.0;
    }
    red /= samples;
    blue /= samples;
    CHECK(0.5 * (red - oracle.site_marginal(pt, 0)).cwiseAbs().sum() < 0.03);
    CHECK(0.5 * (blue - oracle.site_marginal(pt, 1)).cwiseAbs().sum() < 0.03);
}
