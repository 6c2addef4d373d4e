#include "sepmix/estimators.hpp"

#include <cmath>

#include "sepmix/errors.hpp"
#include "sepmix/format.hpp"

namespace sepmix {

MeanError mean_and_error(std::span<const double> values) {
    MeanError out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double n = static_cast<double>(values.size());
    out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    return out;
}

MsdEstimate estimate_self_diffusion(std::span<const std::vector<TracerRecord>> trajectories, int dim, double h,
                                    double t1, double t2) {
    if (!(t2 > t1 && t1 > 0.0)) throw OutOfRange("window must satisfy t2 > t1 > 0");
    MsdEstimate est{t1, t2, 0.0, 0.0, {}};
    for (const auto& records : trajectories) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& rec : records) {
            if (rec.time < t1 || rec.time > t2) continue;
            for (const auto& d : rec.displacements) {
                double sq = 0.0;
                for (int k = 0; k < dim; ++k) sq += static_cast<double>(d[k]) * d[k];
                sum += sq * h * h / (2.0 * dim * rec.time);
                ++count;
            }
        }
        if (count > 0) est.per_realization.push_back(sum / static_cast<double>(count));
    }
    if (est.per_realization.empty()) throw EmptyWindow("no tracer records inside the inspection window");
    const MeanError me = mean_and_error(est.per_realization);
    est.value = me.mean;
    est.stderr_ = me.stderr_;
    return est;
}

SlabProfile slab_profile(const LatticeState& state, int axis) {
    const auto& g = state.geometry();
    if (axis < 0 || axis >= g.dim()) throw OutOfRange("axis out of range");
    const int l = g.side();
    SlabProfile p{Eigen::ArrayXd::Zero(l), Eigen::ArrayXd::Zero(l)};
    for (const auto& q : state.particles()) {
        const int i = g.coords(q.site)[axis];
        (q.species == 0 ? p.red : p.blue)(i) += 1.0;
    }
    const double per_slab = static_cast<double>(g.site_count() / l);
    p.red /= per_slab;
    p.blue /= per_slab;
    return p;
}

SlabProfile slab_profile(const DensityFields& fields, int axis) {
    const auto& g = fields.geometry;
    if (axis < 0 || axis >= g.dim()) throw OutOfRange("axis out of range");
    const int l = g.side();
    SlabProfile p{Eigen::ArrayXd::Zero(l), Eigen::ArrayXd::Zero(l)};
    for (SiteIndex s = 0; s < g.site_count(); ++s) {
        const int i = g.coords(s)[axis];
        p.red(i) += fields.rho_r(s);
        p.blue(i) += fields.rho_b(s);
    }
    const double per_slab = static_cast<double>(g.site_count() / l);
    p.red /= per_slab;
    p.blue /= per_slab;
    return p;
}

int bin_span(const LatticeGeometry& geometry, double bin_width) {
    const double ratio = bin_width / geometry.spacing();
    const double m = std::round(ratio);
    if (!(m >= 1.0) || std::abs(ratio - m) > 1e-9 * std::max(1.0, ratio) || m > geometry.side())
        throw BadBinWidth("bin width must be a positive multiple of the lattice spacing");
    return static_cast<int>(m);
}

DensityProfile density_profile(std::span<const SlabProfile> realizations, const LatticeGeometry& geometry, int axis,
                               double bin_width) {
    const int m = bin_span(geometry, bin_width);
    const int l = geometry.side();
    const int bins = (l + m - 1) / m;
    const double h = geometry.spacing();
    DensityProfile out;
    out.axis = axis;
    out.bin_width = bin_width;
    out.realizations = realizations.size();
    std::vector<double> red(realizations.size()), blue(realizations.size());
    for (int j = 0; j < bins; ++j) {
        const int lo = j * m;
        const int hi = std::min(lo + m, l);
        out.bin_sites.push_back(hi - lo);
        out.centers.push_back(h * (lo + 0.5 * (hi - lo - 1)));
        for (std::size_t k = 0; k < realizations.size(); ++k) {
            red[k] = realizations[k].red.segment(lo, hi - lo).mean();
            blue[k] = realizations[k].blue.segment(lo, hi - lo).mean();
        }
        const MeanError mr = mean_and_error(red), mb = mean_and_error(blue);
        out.red_mean.push_back(mr.mean);
        out.red_stderr.push_back(mr.stderr_);
        out.blue_mean.push_back(mb.mean);
        out.blue_stderr.push_back(mb.stderr_);
    }
    return out;
}

DensityProfile density_profile(std::span<const LatticeState> snapshots, int axis, double bin_width) {
    if (snapshots.empty()) throw OutOfRange("no snapshots to bin");
    std::vector<SlabProfile> slabs;
    slabs.reserve(snapshots.size());
    for (const auto& s : snapshots) slabs.push_back(slab_profile(s, axis));
    return density_profile(slabs, snapshots.front().geometry(), axis, bin_width);
}

DensityProfile density_profile(const DensityFields& fields, int axis, double bin_width) {
    const SlabProfile slab = slab_profile(fields, axis);
    return density_profile(std::span<const SlabProfile>(&slab, 1), fields.geometry, axis, bin_width);
}

double profile_agreement(const DensityProfile& data, const DensityProfile& reference, double factor) {
    if (data.centers.size() != reference.centers.size()) throw OutOfRange("profiles use different bins");
    std::size_t ok = 0, total = 0;
    for (std::size_t j = 0; j < data.centers.size(); ++j) {
        ok += std::abs(data.red_mean[j] - reference.red_mean[j]) <= factor * data.red_stderr[j];
        ok += std::abs(data.blue_mean[j] - reference.blue_mean[j]) <= factor * data.blue_stderr[j];
        total += 2;
    }
    return total == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(total);
}

double red_transfer(const SlabProfile& profile) {
    const auto l = profile.red.size();
    const double total = profile.red.sum();
    if (total <= 0.0) return 0.0;
    // Sites i*h with i in [1, L/2] form the first half.
    double far = 0.0;
    for (Eigen::Index i = 0; i < l; ++i)
        if (i == 0 || 2 * i > l) far += profile.red(i);
    return far / total;
}

DensityFields fields_from_slabs(const SlabProfile& profile, const DensityFields& templ, int axis) {
    DensityFields out = templ;
    const auto& g = templ.geometry;
    for (SiteIndex s = 0; s < g.site_count(); ++s) {
        const int i = g.coords(s)[axis];
        out.rho_r(s) = profile.red(i);
        out.rho_b(s) = profile.blue(i);
    }
    return out;
}

EnergyPoint empirical_energy(std::span<const SlabProfile> realizations, const DensityFields& templ, int axis,
                             double e_inf, double time) {
    if (realizations.empty()) throw OutOfRange("no realizations");
    const auto k = static_cast<double>(realizations.size());
    SlabProfile sum{Eigen::ArrayXd::Zero(realizations[0].red.size()), Eigen::ArrayXd::Zero(realizations[0].red.size())};
    for (const auto& r : realizations) {
        sum.red += r.red;
        sum.blue += r.blue;
    }
    const SlabProfile mean{sum.red / k, sum.blue / k};
    EnergyPoint out{time, free_energy(fields_from_slabs(mean, templ, axis)) - e_inf, 0.0};
    if (realizations.size() < 2) return out;
    std::vector<double> jack;
    jack.reserve(realizations.size());
    for (const auto& r : realizations) {
        const SlabProfile loo{(sum.red - r.red) / (k - 1.0), (sum.blue - r.blue) / (k - 1.0)};
        jack.push_back(free_energy(fields_from_slabs(loo, templ, axis)) - e_inf);
    }
    double jm = 0.0;
    for (double v : jack) jm += v;
    jm /= k;
    double ss = 0.0;
    for (double v : jack) ss += (v - jm) * (v - jm);
    out.stderr_ = std::sqrt((k - 1.0) / k * ss);
    return out;
}

void write_fig2_csv(std::ostream& out, std::span<const Fig2Row> rows) {
    out << "phi,gamma,Ds_measured,stderr,Ds_low,Ds_mf\n";
    for (const auto& r : rows)
        out << format_real(r.phi) << ',' << format_real(r.gamma) << ',' << format_real(r.ds_measured) << ','
            << format_real(r.stderr_) << ',' << format_real(r.ds_low) << ',' << format_real(r.ds_mf) << '\n';
}

void write_fig3_csv(std::ostream& out, std::span<const Fig3Row> rows) {
    out << "phi,Ds_measured,stderr,Ds_composite,Ds_low,Ds_high,Ds_mf\n";
    for (const auto& r : rows)
        out << format_real(r.phi) << ',' << format_real(r.ds_measured) << ',' << format_real(r.stderr_) << ','
            << format_real(r.ds_composite) << ',' << format_real(r.ds_low) << ',' << format_real(r.ds_high) << ','
            << format_real(r.ds_mf) << '\n';
}

void write_profile_csv(std::ostream& out, const DensityProfile& p) {
    out << "bin_center,rho_r_mean,rho_r_stderr,rho_b_mean,rho_b_stderr\n";
    for (std::size_t j = 0; j < p.centers.size(); ++j)
        out << format_real(p.centers[j]) << ',' << format_real(p.red_mean[j]) << ',' << format_real(p.red_stderr[j])
            << ',' << format_real(p.blue_mean[j]) << ',' << format_real(p.blue_stderr[j]) << '\n';
}

void write_energy_trace_csv(std::ostream& out, std::span<const EnergyPoint> trace) {
    out << "t,E_hat,stderr\n";
    for (const auto& e : trace)
        out << format_real(e.time) << ',' << format_real(e.e_hat) << ',' << format_real(e.stderr_) << '\n';
}

} // namespace sepmix
