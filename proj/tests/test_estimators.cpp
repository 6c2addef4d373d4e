#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sepmix/estimators.hpp"
#include "sepmix/pde.hpp"

using namespace sepmix;

namespace {

std::vector<SlabProfile> uniform_profiles(int side, double phi_r, double phi_b, int k, std::uint64_t seed) {
    const LatticeGeometry g(2, side);
    const auto n_r = static_cast<std::int64_t>(std::llround(phi_r * g.site_count()));
    const auto n_b = static_cast<std::int64_t>(std::llround(phi_b * g.site_count()));
    std::vector<SlabProfile> out;
    for (int i = 0; i < k; ++i) out.push_back(slab_profile(init_state(g, 2, FixedCountUniform{{n_r, n_b}}, seed + i), 0));
    return out;
}

double mean_stderr(const DensityProfile& p) {
    double s = 0.0;
    for (double e : p.red_stderr) s += e;
    return s / static_cast<double>(p.red_stderr.size());
}

} // namespace

TEST_CASE("self-diffusion from synthetic displacements") {
    const double h = 0.1;
    // Realization 0: |d|^2 = 5 at t = 2 and |d|^2 = 8 at t = 4.
    // Realization 1: |d|^2 = 1 at t = 2, outside-window record at t = 9.
    std::vector<std::vector<TracerRecord>> tr{
        {{2.0, {IVec{1, 2, 0}}}, {4.0, {IVec{2, -2, 0}}}},
        {{2.0, {IVec{0, 1, 0}}}, {9.0, {IVec{30, 0, 0}}}},
    };
    const auto est = estimate_self_diffusion(tr, 2, h, 1.0, 5.0);
    const double r0 = 0.5 * (5 * h * h / 8.0 + 8 * h * h / 16.0);
    const double r1 = 1 * h * h / 8.0;
    REQUIRE(est.per_realization.size() == 2);
    CHECK(est.per_realization[0] == doctest::Approx(r0).epsilon(1e-15));
    CHECK(est.per_realization[1] == doctest::Approx(r1).epsilon(1e-15));
    CHECK(est.value == doctest::Approx(0.5 * (r0 + r1)).epsilon(1e-15));
    CHECK(est.stderr_ == doctest::Approx(std::abs(r0 - r1) / 2.0).epsilon(1e-12));

    CHECK_THROWS_AS(estimate_self_diffusion(tr, 2, h, 5.0, 8.0), EmptyWindow);
    CHECK_THROWS_AS(estimate_self_diffusion(tr, 2, h, 0.0, 8.0), OutOfRange);
    CHECK_THROWS_AS(estimate_self_diffusion(tr, 2, h, 3.0, 2.0), OutOfRange);
}

TEST_CASE("estimate is invariant under relabelling of realizations") {
    std::vector<std::vector<TracerRecord>> tr;
    Rng rng = make_stream(5, 0);
    for (int k = 0; k < 12; ++k) {
        std::vector<TracerRecord> recs;
        for (double t : {1.0, 1.5, 2.0}) {
            TracerRecord r{t, {}};
            for (int p = 0; p < 4; ++p)
                r.displacements.push_back(
                    {static_cast<int>(uniform_below(rng, 9)) - 4, static_cast<int>(uniform_below(rng, 9)) - 4, 0});
            recs.push_back(r);
        }
        tr.push_back(recs);
    }
    const auto a = estimate_self_diffusion(tr, 2, 0.05, 1.0, 2.0);
    std::reverse(tr.begin(), tr.end());
    std::swap(tr[2], tr[7]);
    const auto b = estimate_self_diffusion(tr, 2, 0.05, 1.0, 2.0);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-14));
    CHECK(a.stderr_ == doctest::Approx(b.stderr_).epsilon(1e-12));
}

TEST_CASE("full lattice gives zero self-diffusion") {
    const LatticeGeometry g(2, 6);
    std::vector<std::vector<TracerRecord>> tracks;
    for (int k = 0; k < 3; ++k) {
        KmcRunParams params;
        params.t_end = 0.5;
        params.seed = 4;
        params.stream = k;
        params.snapshot_times = {0.25, 0.5};
        params.record_tracers = {TracerSelector::Kind::All, 0};
        params.keep_states = false;
        tracks.push_back(
            run_realization(init_state(g, 1, FixedCountUniform{{36}}, k), {{"red", 1.0, {}}}, params).tracers);
    }
    const auto est = estimate_self_diffusion(tracks, 2, g.spacing(), 0.2, 0.5);
    CHECK(est.value == 0.0);
    CHECK(est.stderr_ == 0.0);
}

TEST_CASE("uniform random states give flat profiles") {
    const LatticeGeometry g(2, 40);
    const auto slabs = uniform_profiles(40, 0.25, 0.25, 20, 100);
    const auto p = density_profile(slabs, g, 0, 0.1);
    CHECK(p.centers.size() == 10);
    CHECK(p.realizations == 20);
    for (std::size_t j = 0; j < p.centers.size(); ++j) {
        CHECK(std::abs(p.red_mean[j] - 0.25) <= 3.0 * p.red_stderr[j]);
        CHECK(std::abs(p.blue_mean[j] - 0.25) <= 3.0 * p.blue_stderr[j]);
        CHECK(p.red_mean[j] >= 0.0);
        CHECK(p.red_mean[j] <= 1.0);
    }
    CHECK(red_transfer(slabs[0]) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("standard errors scale as 1 / sqrt(K)") {
    const LatticeGeometry g(2, 40);
    const auto p10 = density_profile(uniform_profiles(40, 0.3, 0.2, 10, 500), g, 0, 0.1);
    const auto p40 = density_profile(uniform_profiles(40, 0.3, 0.2, 40, 900), g, 0, 0.1);
    const double ratio = mean_stderr(p10) / mean_stderr(p40);
    CHECK(std::abs(ratio / 2.0 - 1.0) < 0.3);
}

TEST_CASE("block initial data profile and mass recovery") {
    const LatticeGeometry g(2, 50);
    const auto s = init_state(g, 2, AxisBlocks{{0.5, 0.5}, 0, 0.5}, 12);
    const auto slab = slab_profile(s, 0);
    const auto p = density_profile(std::span<const LatticeState>(&s, 1), 0, 0.08);
    CHECK(p.centers.size() == 13);
    CHECK(p.bin_sites.back() == 2);
    double red = 0.0, blue = 0.0;
    for (std::size_t j = 0; j < p.centers.size(); ++j) {
        red += p.red_mean[j] * p.bin_sites[j] * g.side();
        blue += p.blue_mean[j] * p.bin_sites[j] * g.side();
        const double lo = p.centers[j] - 0.5 * (p.bin_sites[j] - 1) * g.spacing();
        const double hi = p.centers[j] + 0.5 * (p.bin_sites[j] - 1) * g.spacing();
        if (lo > 0.0 && hi <= 0.5) {
            CHECK(std::abs(p.red_mean[j] - 0.5) < 0.1);
            CHECK(p.blue_mean[j] == 0.0);
        }
        if (lo > 0.5) {
            CHECK(p.red_mean[j] == 0.0);
            CHECK(std::abs(p.blue_mean[j] - 0.5) < 0.1);
        }
    }
    CHECK(red == doctest::Approx(static_cast<double>(s.count(0))).epsilon(1e-12));
    CHECK(blue == doctest::Approx(static_cast<double>(s.count(1))).epsilon(1e-12));
    CHECK(red_transfer(slab) == 0.0);
}

TEST_CASE("bin widths must be multiples of h") {
    const LatticeGeometry g(2, 50);
    CHECK(bin_span(g, 0.08) == 4);
    CHECK(bin_span(g, 0.02) == 1);
    CHECK_THROWS_AS(bin_span(g, 0.03), BadBinWidth);
    CHECK_THROWS_AS(bin_span(g, 0.0), BadBinWidth);
    CHECK_THROWS_AS(bin_span(g, 2.0), BadBinWidth);
}

TEST_CASE("PDE-based relative energy is non-negative and vanishes") {
    DensityFields f(LatticeGeometry(2, 16), {"red", 1.0, Potential::sinusoidal(1.0, {1, 0, 0})},
                    {"blue", 1.0, Potential::sinusoidal(-1.0, {1, 0, 0})});
    for (SiteIndex s = 0; s < f.geometry.site_count(); ++s) {
        const bool first = in_first_block(f.geometry, s, 0, 0.5);
        f.rho_r(s) = first ? 0.5 : 0.0;
        f.rho_b(s) = first ? 0.0 : 0.5;
    }
    const MobilityModel model{MobilityKind::CompositeQuastel, std::numbers::pi / 2 - 1, false};
    SolverParams params;
    params.steady_state_tol = 1e-10;
    const double e_inf = free_energy(steady_state(f, model, params).fields);
    params.t_end = 0.5;
    params.energy_every = 50;
    const auto run = pde_run(f, model, params);
    // The scheme's fixed point exceeds the discrete minimum by O(h^2).
    const double h = f.geometry.spacing();
    for (const auto& e : run.energy) CHECK(e.energy - e_inf >= -0.01 * h * h);
    CHECK(run.energy.front().energy - e_inf > 0.1);
    CHECK(run.energy.back().energy - e_inf < 1e-8);
}

TEST_CASE("empirical energy at the steady state is zero up to its bias") {
    const LatticeGeometry g(2, 20);
    DensityFields templ(g, {"red", 1.0, {}}, {"blue", 1.0, {}});
    const int k = 60;
    const auto slabs = uniform_profiles(20, 0.25, 0.25, k, 40);
    const double e_inf = free_energy([&] {
        auto f = templ;
        f.rho_r.setConstant(0.25);
        f.rho_b.setConstant(0.25);
        return f;
    }());
    const auto pt = empirical_energy(slabs, templ, 0, e_inf, 1.0);
    // Second-order bias: h sum_i [v_r / rho_r + v_b / rho_b + (v_r + v_b) / (1 - rho)], v = Var of slab means.
    const double v = 0.25 * 0.75 / (g.side() * k);
    const double bias = 0.5 * (v / 0.25 + v / 0.25 + 2 * v / 0.5);
    CHECK(pt.e_hat >= 0.0);
    CHECK(pt.e_hat <= 3.0 * bias + 3.0 * pt.stderr_);

    std::vector<SlabProfile> exact(5, SlabProfile{Eigen::ArrayXd::Constant(20, 0.25), Eigen::ArrayXd::Constant(20, 0.25)});
    const auto zero = empirical_energy(exact, templ, 0, e_inf, 0.0);
    CHECK(std::abs(zero.e_hat) < 1e-14);
    CHECK(zero.stderr_ < 1e-14);
}

TEST_CASE("profile agreement counts bins inside the error bars") {
    DensityProfile a;
    a.centers = {0.1, 0.2};
    a.red_mean = {0.5, 0.5};
    a.red_stderr = {0.01, 0.01};
    a.blue_mean = {0.2, 0.2};
    a.blue_stderr = {0.01, 0.01};
    DensityProfile b = a;
    b.red_mean = {0.515, 0.53};
    b.red_stderr = {0.0, 0.0};
    b.blue_stderr = {0.0, 0.0};
    CHECK(profile_agreement(a, b) == doctest::Approx(0.75));
    CHECK(profile_agreement(a, b, 3.0) == doctest::Approx(0.75));
    CHECK(profile_agreement(a, b, 3.5) == 1.0);
}

TEST_CASE("csv writers") {
    std::ostringstream os;
    const Fig3Row rows[] = {{0.5, 0.36, 0.001, 0.362, 0.21, 0.24, 0.5}};
    write_fig3_csv(os, rows);
    CHECK(os.str().rfind("phi,Ds_measured,stderr,Ds_composite,Ds_low,Ds_high,Ds_mf\n", 0) == 0);
    std::ostringstream empty;
    write_fig2_csv(empty, std::span<const Fig2Row>{});
    CHECK(empty.str() == "phi,gamma,Ds_measured,stderr,Ds_low,Ds_mf\n");
    std::ostringstream e;
    const EnergyPoint pts[] = {{0.01, 0.1, 0.02}};
    write_energy_trace_csv(e, pts);
    CHECK(e.str() == "t,E_hat,stderr\n0.01,0.10000000000000001,0.02\n");
}
