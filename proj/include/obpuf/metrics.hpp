#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "obpuf/bits.hpp"
#include "obpuf/obfuscation.hpp"

namespace obpuf {

double mean_pairwise_fhd(std::span<const BitVec> strings);

struct EstimatorInputs {
    int n_ins = 4;
    int p = 4;
    int n_mismatch = 0;
    double p_intra_puf = 0.05;
};

// Inter-distance estimator in the form printed alongside the capability
// table: (1 - (n_mismatch+1)/2^n_ins)^(p^2). The inner sum counts outcomes
// without binomial coefficients.
double p_inter_analytic(const EstimatorInputs& in);

// Same estimator with the inner sum weighted by C(n_ins, i); the
// probabilistically standard tail of a fair binomial.
double p_inter_analytic_corrected(const EstimatorInputs& in);

// 1 - sum_{i<=n_mismatch} C(n_ins,i) (1-q)^(n_ins-i) q^i with q = p_intra_puf.
double p_intra_analytic(const EstimatorInputs& in);

// Minimum model accuracy that counts as a break; complement of
// p_intra_analytic.
double p_min(const EstimatorInputs& in);

// Binomial tails in log-safe arithmetic (lgamma-based terms summed in the
// short direction); exact enough down to ~1e-300.
double far(int n, int n_th, double p_inter);
double frr(int n, int n_th, double p_intra);

struct EerResult {
    int n_eer = 0;
    double eer = 1.0;
};

// argmin over n_th of max(FAR, FRR); ties toward smaller n_th.
EerResult eer_search(int n, double p_inter, double p_intra);

struct CapabilityRow {
    EstimatorInputs config;
    double target_eer = 1e-6;
    int n = 0;
    int n_eer = 0;
    double log10_far = 0.0;
    double log10_frr = 0.0;
    bool reachable = true;
};

// Smallest n whose EER clears the target; increasing scan with
// exponential-then-binary refinement.
CapabilityRow min_crps_for_eer(const EstimatorInputs& in, double target_eer);

// Published operating points for the seven standard configurations, used by
// the capability discrepancy report.
struct ReferencePoint {
    EstimatorInputs config;
    double target_eer;
    int n;
    int n_eer;
    double log10_far;
    double log10_frr;
};
std::span<const ReferencePoint> reference_capability_table();

struct DistanceEstimates {
    double p_inter_all_pairs = 0.0;   // every emulated pair differs beyond tolerance
    double p_inter_single = 0.0;      // one draw per device, direct comparison
    double p_intra = 0.0;             // same device, same full challenge, re-evaluated
    double intra_ci_halfwidth = 0.0;  // binomial 95% half-width
    double inter_ci_halfwidth = 0.0;
    std::vector<std::size_t> inter_histogram;  // HD counts, all-pairs rule
    std::vector<std::size_t> intra_histogram;
    const char* better_inter_variant = "";     // "printed" or "corrected"
};

// Monte Carlo inter/intra estimates for a device family. Both Eq-form inter
// variants are compared against the all-pairs estimate and the closer one is
// recorded. Devices are noise-calibrated to intra_puf_target; 0 runs them
// noiseless. A cfg.noise_sigma > 0 overrides the calibration.
DistanceEstimates empirical_distances(const DeviceConfig& cfg, std::size_t trials,
                                      int n_mismatch, std::uint64_t seed,
                                      double intra_puf_target = 0.05);

}  // namespace obpuf
