#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "obpuf/bits.hpp"
#include "obpuf/rng.hpp"

namespace obpuf {

// Delay weights of a k-stage arbiter chain, length k+1.
using DelayVector = Eigen::VectorXd;

// Parity feature of a challenge: values[j] = prod_{i=j..k-1} (1-2c_i),
// last entry fixed at +1. The delay difference is omega.dot(features).
Eigen::VectorXd challenge_feature(std::span<const Bit> c);

// Row-per-challenge feature matrix, N x (k+1).
Eigen::MatrixXd challenge_feature_matrix(std::span<const Challenge> cs);

struct ApufInstance {
    int stage_count = 0;
    // One row per stage: straight-top, straight-bottom, cross-down, cross-up.
    Eigen::Matrix<double, Eigen::Dynamic, 4> stage_delays;
    DelayVector omega;
    double noise_sigma = 0.0;
};

// Reduces raw per-stage path delays to the additive-model weight vector.
DelayVector omega_from_stage_delays(const Eigen::Matrix<double, Eigen::Dynamic, 4>& d);

// Stage delays i.i.d. standard normal; identical (k, seed) gives identical
// instances. noise_sigma is the per-evaluation Gaussian scale on the delay
// difference.
ApufInstance sample_apuf(int k, std::uint64_t seed, double noise_sigma = 0.0);

// Signal-race reference: accumulates the two path delays stage by stage and
// returns top-minus-bottom at the arbiter. Used as an independent check of
// the omega reduction.
double race_delay_difference(const ApufInstance& a, std::span<const Bit> c);

double eval_delay(const ApufInstance& a, std::span<const Bit> c, double noise_draw = 0.0);

// 1 iff the delay difference is > 0; an exact 0 maps to 0.
Bit eval_response(const ApufInstance& a, std::span<const Bit> c, bool noisy, Rng& rng);

Bit eval_xor_apuf(std::span<const ApufInstance> members, std::span<const Bit> c,
                  bool noisy, Rng& rng);

struct NoiseCalibration {
    double sigma = 0.0;
    double measured_flip_rate = 0.0;
    bool converged = true;
};

// Finds noise_sigma such that two noisy evaluations of the same challenge
// disagree at target_flip_rate, over `trials` random (instance, challenge)
// pairs. Bisection against frozen delay/noise draws; reproducible by seed.
NoiseCalibration calibrate_noise(int k, double target_flip_rate, std::size_t trials,
                                 std::uint64_t seed = 1);

// Examines candidate_count random challenges and keeps those whose noiseless
// |t_dif| >= theta for every member of the group. May return fewer than
// asked for; callers decide whether that is an error.
std::vector<Challenge> select_reliable_challenges(std::span<const ApufInstance> group,
                                                  std::size_t candidate_count,
                                                  double theta, Rng& rng);

}  // namespace obpuf
