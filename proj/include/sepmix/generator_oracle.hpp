#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sepmix/lattice.hpp"

namespace sepmix {

/**
 * Exact continuous-time Markov generator of the exclusion process on a tiny torus.
 *
 * Configurations are per-site species labels (0 empty, s+1 for species s);
 * particles of one species are indistinguishable. Transitions follow the
 * same 2d proposals per particle as the KMC engine, so on L = 2 the two
 * proposals towards the same neighbour add up.
 */
class GeneratorOracle {
public:
    using Configuration = std::vector<std::uint8_t>;
    static constexpr std::size_t kMaxConfigurations = 100'000;

    GeneratorOracle(const LatticeGeometry& geometry, std::vector<SpeciesParams> species,
                    std::vector<int> counts);

    std::size_t size() const noexcept { return configs_.size(); }
    const std::vector<Configuration>& configurations() const noexcept { return configs_; }
    /// Index of a configuration, or -1 if it is not in the state space.
    std::ptrdiff_t index_of(const Configuration& c) const;
    Configuration configuration_of(const LatticeState& state) const;

    const Eigen::SparseMatrix<double>& generator() const noexcept { return q_; }
    Eigen::MatrixXd dense_generator() const { return Eigen::MatrixXd(q_); }

    /// Null vector of Q^T normalised to a probability vector.
    Eigen::VectorXd stationary_distribution() const;
    /// pi(eta) proportional to exp(-sum V_s(x) eta_s(x)).
    Eigen::VectorXd gibbs_measure() const;

    /// p0 * exp(Q t) by uniformization.
    Eigen::VectorXd evolve(const Eigen::VectorXd& p0, double t, double tol = 1e-14) const;
    /// p0 * exp(Q t) via the dense matrix exponential.
    Eigen::VectorXd evolve_dense(const Eigen::VectorXd& p0, double t) const;

    /// Probability that a species sits on each site under distribution p.
    Eigen::VectorXd site_marginal(const Eigen::VectorXd& p, int species) const;

private:
    LatticeGeometry geometry_;
    std::vector<SpeciesParams> species_;
    std::vector<int> counts_;
    std::vector<Configuration> configs_;
    std::unordered_map<std::uint64_t, std::size_t> lookup_;
    Eigen::SparseMatrix<double> q_;

    std::uint64_t key(const Configuration& c) const;
};

} // namespace sepmix
