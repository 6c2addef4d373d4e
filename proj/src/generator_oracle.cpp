#include "sepmix/generator_oracle.hpp"

#include <cmath>
#include <functional>

#include <unsupported/Eigen/MatrixFunctions>

#include "sepmix/errors.hpp"

namespace sepmix {

namespace {

double multinomial_count(std::int64_t sites, const std::vector<int>& counts) {
    double total = 1.0;
    std::int64_t remaining = sites;
    for (int c : counts) {
        // C(remaining, c)
        double binom = 1.0;
        for (int i = 0; i < c; ++i) binom = binom * static_cast<double>(remaining - i) / (i + 1);
        total *= binom;
        remaining -= c;
    }
    return total;
}

} // namespace

GeneratorOracle::GeneratorOracle(const LatticeGeometry& geometry, std::vector<SpeciesParams> species,
                                 std::vector<int> counts)
    : geometry_(geometry), species_(std::move(species)), counts_(std::move(counts)) {
    if (species_.size() != counts_.size() || species_.empty() || species_.size() > 2)
        throw OutOfRange("one count per species (1 or 2 species) required");
    for (const auto& sp : species_) check_species(sp);
    const SiteIndex n_sites = geometry_.site_count();
    std::int64_t total = 0;
    for (int c : counts_) {
        if (c < 0) throw OutOfRange("negative particle count");
        total += c;
    }
    if (total > n_sites) throw OverfullLattice("more particles than sites");
    if (multinomial_count(n_sites, counts_) > static_cast<double>(kMaxConfigurations))
        throw TooLarge("configuration space exceeds the oracle guard");

    // Enumerate label vectors in lexicographic order.
    Configuration current(static_cast<std::size_t>(n_sites), 0);
    std::vector<int> left = counts_;
    std::function<void(SiteIndex, std::int64_t)> fill = [&](SiteIndex site, std::int64_t empties_left) {
        if (site == n_sites) {
            lookup_.emplace(key(current), configs_.size());
            configs_.push_back(current);
            return;
        }
        if (empties_left > 0) {
            current[site] = 0;
            fill(site + 1, empties_left - 1);
        }
        for (std::size_t s = 0; s < left.size(); ++s) {
            if (left[s] == 0) continue;
            --left[s];
            current[site] = static_cast<std::uint8_t>(s + 1);
            fill(site + 1, empties_left);
            ++left[s];
        }
        current[site] = 0;
    };
    fill(0, n_sites - total);

    const double h = geometry_.spacing();
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t i = 0; i < configs_.size(); ++i) {
        const Configuration& c = configs_[i];
        double out = 0.0;
        for (SiteIndex x = 0; x < n_sites; ++x) {
            if (c[x] == 0) continue;
            const SpeciesParams& sp = species_[c[x] - 1];
            const double vx = sp.potential.at_site(geometry_, x);
            for (int dir = 0; dir < geometry_.direction_count(); ++dir) {
                const SiteIndex y = geometry_.neighbor(x, dir);
                if (c[y] != 0) continue;
                const double rate = sp.diffusivity / (h * h) * std::exp(0.5 * (vx - sp.potential.at_site(geometry_, y)));
                Configuration next = c;
                std::swap(next[x], next[y]);
                triplets.emplace_back(static_cast<int>(i), static_cast<int>(lookup_.at(key(next))), rate);
                out += rate;
            }
        }
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), -out);
    }
    const auto n = static_cast<int>(configs_.size());
    q_.resize(n, n);
    q_.setFromTriplets(triplets.begin(), triplets.end());
}

std::uint64_t GeneratorOracle::key(const Configuration& c) const {
    std::uint64_t k = 0;
    const std::uint64_t base = species_.size() + 1;
    for (auto label : c) k = k * base + label;
    return k;
}

std::ptrdiff_t GeneratorOracle::index_of(const Configuration& c) const {
    if (static_cast<SiteIndex>(c.size()) != geometry_.site_count()) return -1;
    const auto it = lookup_.find(key(c));
    return it == lookup_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

GeneratorOracle::Configuration GeneratorOracle::configuration_of(const LatticeState& state) const {
    Configuration c(static_cast<std::size_t>(geometry_.site_count()), 0);
    for (const auto& p : state.particles()) c[p.site] = static_cast<std::uint8_t>(p.species + 1);
    return c;
}

Eigen::VectorXd GeneratorOracle::stationary_distribution() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd pi;
    if (n <= 4000) {
        Eigen::MatrixXd a = Eigen::MatrixXd(q_).transpose();
        a.row(n - 1).setOnes();
        pi = a.fullPivLu().solve(rhs);
    } else {
        Eigen::SparseMatrix<double> a = q_.transpose();
        a.prune([n](Eigen::Index row, Eigen::Index, double) { return row != n - 1; });
        for (Eigen::Index j = 0; j < n; ++j) a.coeffRef(n - 1, j) = 1.0;
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(a);
        pi = lu.solve(rhs);
    }
    return pi / pi.sum();
}

Eigen::VectorXd GeneratorOracle::gibbs_measure() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < configs_.size(); ++i) {
        double e = 0.0;
        for (SiteIndex x = 0; x < geometry_.site_count(); ++x)
            if (configs_[i][x]) e += species_[configs_[i][x] - 1].potential.at_site(geometry_, x);
        w(static_cast<Eigen::Index>(i)) = std::exp(-e);
    }
    return w / w.sum();
}

Eigen::VectorXd GeneratorOracle::evolve(const Eigen::VectorXd& p0, double t, double tol) const {
    if (t <= 0.0) return p0;
    double lambda = 0.0;
    for (Eigen::Index i = 0; i < q_.rows(); ++i) lambda = std::max(lambda, -q_.coeff(i, i));
    if (lambda == 0.0) return p0;
    // P = I + Q / lambda, applied to row vectors as P^T v.
    Eigen::SparseMatrix<double> pt = Eigen::SparseMatrix<double>(q_.transpose()) / lambda;
    for (Eigen::Index i = 0; i < pt.rows(); ++i) pt.coeffRef(i, i) += 1.0;

    const int pieces = std::max(1, static_cast<int>(std::ceil(lambda * t / 50.0)));
    const double mu = lambda * t / pieces;
    Eigen::VectorXd p = p0;
    for (int piece = 0; piece < pieces; ++piece) {
        Eigen::VectorXd term = p;
        double weight = std::exp(-mu);
        double mass = weight;
        Eigen::VectorXd acc = weight * term;
        for (int k = 1; 1.0 - mass > tol; ++k) {
            term = pt * term;
            weight *= mu / k;
            mass += weight;
            acc += weight * term;
            if (k > 100000) break;
        }
        p = acc;
    }
    return p;
}

Eigen::VectorXd GeneratorOracle::evolve_dense(const Eigen::VectorXd& p0, double t) const {
    const Eigen::MatrixXd qt = Eigen::MatrixXd(q_) * t;
    const Eigen::MatrixXd e = qt.exp();
    return e.transpose() * p0;
}

Eigen::VectorXd GeneratorOracle::site_marginal(const Eigen::VectorXd& p, int species) const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(geometry_.site_count());
    for (std::size_t i = 0; i < configs_.size(); ++i)
        for (SiteIndex x = 0; x < geometry_.site_count(); ++x)
            if (configs_[i][x] == species + 1) m(x) += p(static_cast<Eigen::Index>(i));
    return m;
}

} // namespace sepmix
