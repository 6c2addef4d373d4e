#pragma once

#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sepmix/continuum.hpp"
#include "sepmix/kmc.hpp"
#include "sepmix/lattice.hpp"

namespace sepmix {

/// Mean and standard error (sample sd / sqrt(n); zero for n < 2).
struct MeanError {
    double mean = 0.0;
    double stderr_ = 0.0;
};
MeanError mean_and_error(std::span<const double> values);

struct MsdEstimate {
    double t1 = 0.0;
    double t2 = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
    std::vector<double> per_realization;
};

/**
 * Average of |X_t - X_0|^2 / (2 d t) over the recorded particles, over every
 * record with t in [t1, t2] and over realizations. Displacements are in
 * lattice units and converted with spacing h.
 */
MsdEstimate estimate_self_diffusion(std::span<const std::vector<TracerRecord>> trajectories, int dim, double h,
                                    double t1, double t2);

/// Occupied fraction of each species in every slab orthogonal to `axis`.
struct SlabProfile {
    Eigen::ArrayXd red;
    Eigen::ArrayXd blue;
};
SlabProfile slab_profile(const LatticeState& state, int axis);
/// Same averaging applied to continuum fields.
SlabProfile slab_profile(const DensityFields& fields, int axis);

struct DensityProfile {
    int axis = 0;
    double bin_width = 0.0;
    std::size_t realizations = 0;
    std::vector<double> centers;
    /// Lattice sites per bin along the axis; the last bin may be partial.
    std::vector<int> bin_sites;
    std::vector<double> red_mean, red_stderr, blue_mean, blue_stderr;
};

/// Throws BadBinWidth unless w is a positive multiple of h. Returns sites per bin.
int bin_span(const LatticeGeometry& geometry, double bin_width);

/// Bins slab profiles (one per realization) into histogram bins of width w.
DensityProfile density_profile(std::span<const SlabProfile> realizations, const LatticeGeometry& geometry, int axis,
                               double bin_width);
DensityProfile density_profile(std::span<const LatticeState> snapshots, int axis, double bin_width);
/// Deterministic profile of continuum fields on the same bins (zero standard error).
DensityProfile density_profile(const DensityFields& fields, int axis, double bin_width);

/// Fraction of bins (both species) whose reference value lies within `factor` standard errors of the data.
double profile_agreement(const DensityProfile& data, const DensityProfile& reference, double factor = 2.0);

/// Fraction of red mass on the far side x_axis > 1/2 (a front position proxy).
double red_transfer(const SlabProfile& profile);

struct EnergyPoint {
    double time = 0.0;
    double e_hat = 0.0;
    double stderr_ = 0.0;
};

/**
 * Relative free energy of the realization-averaged slab profiles, minus e_inf.
 * Standard error by leave-one-out jackknife over realizations. The estimate
 * carries an upward bias of the order of the profile variance.
 */
EnergyPoint empirical_energy(std::span<const SlabProfile> realizations, const DensityFields& templ, int axis,
                             double e_inf, double time);

/// Broadcasts an averaged slab profile back onto the full grid of `templ`.
DensityFields fields_from_slabs(const SlabProfile& profile, const DensityFields& templ, int axis);

struct Fig2Row {
    double phi, gamma, ds_measured, stderr_, ds_low, ds_mf;
};
struct Fig3Row {
    double phi, ds_measured, stderr_, ds_composite, ds_low, ds_high, ds_mf;
};

void write_fig2_csv(std::ostream& out, std::span<const Fig2Row> rows);
void write_fig3_csv(std::ostream& out, std::span<const Fig3Row> rows);
void write_profile_csv(std::ostream& out, const DensityProfile& profile);
void write_energy_trace_csv(std::ostream& out, std::span<const EnergyPoint> trace);

} // namespace sepmix
