#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace obpuf {

struct CmaesOptions {
    int population = 0;  // 0 -> 4 + floor(3 ln dim)
    int generations = 100;
    double sigma0 = 1.0;
    double initial_spread = 0.1;  // scale of the random start mean
    // Called after each generation with the best-so-far point and fitness.
    std::function<void(int generation, const Eigen::VectorXd& best, double fitness)>
        on_generation;
};

struct CmaesResult {
    Eigen::VectorXd best;
    double best_fitness = 0.0;
    std::vector<double> trace;  // best fitness per generation
    int evaluations = 0;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// (mu/mu_w, lambda) covariance-matrix-adaptation strategy with weighted
// recombination, two evolution paths, rank-1 plus rank-mu covariance update
// and cumulative step-size control. Candidate draws come from per-candidate
// substreams keyed by (seed, generation, index), so results do not depend on
// evaluation order. Non-finite objective values rank last.
CmaesResult cmaes_minimize(const Objective& objective, int dim, std::uint64_t seed,
                           const CmaesOptions& options);

}  // namespace obpuf
