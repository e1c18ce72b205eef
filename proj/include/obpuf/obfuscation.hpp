#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "obpuf/apuf.hpp"
#include "obpuf/bits.hpp"
#include "obpuf/rng.hpp"

namespace obpuf {

struct PatternVector {
    std::vector<int> insert_positions;  // 1-based, strictly ascending, in [1..k]
    BitVec insert_values;               // m bits
    BitVec response_mask;               // n_ins bits
};

struct PatternSet {
    int k = 0;
    int m = 0;
    int n_ins = 0;
    std::vector<PatternVector> patterns;

    int p() const { return static_cast<int>(patterns.size()); }
    void validate() const;  // throws on any structural violation
};

// Inserts pv.insert_values into c_ob at pv.insert_positions; remaining bits
// keep the order of c_ob.
Challenge expand_challenge(std::span<const Bit> c_ob, const PatternVector& pv, int k);

BitVec obfuscate_response(std::span<const Bit> r, const PatternVector& pv);

// p distinct m-bit value strings maximizing the minimum pairwise HD;
// lexicographically smallest such code, so results are stable.
std::vector<BitVec> max_min_hd_code(int m, int p);

// Response masks with column counts of ones in {floor(p/2), ceil(p/2)} and
// the pairwise row HD pushed as high as that constraint allows.
std::vector<BitVec> balanced_masks(int p, int n_ins, std::uint64_t seed);

struct PatternSetStats {
    double challenge_side_fhd = 0.0;    // mean pairwise FHD of full challenges
    double response_side_fhd = 0.0;     // mean pairwise FHD of raw PUF-block responses
    double masked_response_fhd = 0.0;   // same after masking
    std::vector<double> challenge_histogram;  // per sampled partial challenge
    std::vector<double> response_histogram;
};

// Monte Carlo FHD statistics over `samples` random partial challenges,
// using a probe bank of APUFs derived from `seed`.
PatternSetStats score_pattern_set(const PatternSet& ps, std::size_t samples,
                                  std::uint64_t seed, bool histograms = false);

struct DesignResult {
    PatternSet set;
    PatternSetStats stats;
    bool met_challenge_bar = false;  // challenge-side mean FHD >= 0.45
};

// Randomized search over position layouts (uniform spreads plus
// first/last staggered families), scored by simulated response-side FHD.
// Keeps the best candidate whose challenge-side FHD clears 0.45; if none
// does within the budget, returns the best found with met_challenge_bar
// false.
DesignResult design_pattern_set(int k, int m, int p, int n_ins, std::uint64_t seed,
                                int trial_budget = 64);

// The degenerate layout that inserts every pattern's values at positions
// 1..m. Used as the divergence baseline.
PatternSet first_positions_pattern_set(int k, int m, int p, int n_ins,
                                       std::uint64_t seed);

struct ObCrp {
    PartialChallenge partial_challenge;
    BitVec obfuscated_response;
};

struct ObPufDevice {
    std::vector<ApufInstance> puf_block;       // n_ins instances, k stages
    std::vector<ApufInstance> reconfig_block;  // xors instances, k-m stages
    PatternSet base_patterns;                  // positions and masks fixed at provisioning
    std::optional<std::vector<BitVec>> session_values;  // p strings of m bits

    int k() const { return base_patterns.k; }
    int m() const { return base_patterns.m; }
    int p() const { return base_patterns.p(); }
    int n_ins() const { return base_patterns.n_ins; }
    bool session_open() const { return session_values.has_value(); }

    // Positions and mask from base_patterns, inserted values from the
    // current session.
    PatternVector session_pattern(int index) const;
};

struct DeviceConfig {
    int k = 64;
    int n_ins = 4;
    int p = 4;
    int m = 3;
    int xors = 2;
    double noise_sigma = 0.0;
    int design_trial_budget = 64;
};

ObPufDevice make_device(const DeviceConfig& cfg, std::uint64_t seed);

// Same device but with insert values fixed at provisioning (no reconfig
// block in use); the session is opened immediately with the base values.
ObPufDevice make_fixed_pattern_device(const DeviceConfig& cfg, std::uint64_t seed);

// Device sharing an existing pattern design; avoids re-running the design
// search when sampling populations.
ObPufDevice make_device_with_patterns(const PatternSet& patterns, int xors,
                                      double noise_sigma, std::uint64_t seed,
                                      bool fixed_session = false);

// Uniform pattern index in [0, p); fresh draw per OB-CRP.
int choose_pattern_index(Rng& rng, int p);

ObCrp ob_puf_eval(ObPufDevice& dev, std::span<const Bit> c_ob, Rng& rng, bool noisy);

// Test/measurement hook: evaluate with a forced pattern index.
ObCrp ob_puf_eval_with_pattern(const ObPufDevice& dev, std::span<const Bit> c_ob,
                               int index, Rng& rng, bool noisy);

// Partitions p*m raw bits into p value strings and heals collisions with a
// bit stream keyed on the raw bits, so every party that derived the same raw
// bits lands on the same pairwise-distinct strings.
std::vector<BitVec> assemble_session_values(std::span<const Bit> raw_bits, int p, int m);

// Evaluates the reconfig XOR-APUF on p*m partial challenges, partitions the
// bits into p value strings, and stores them as the session values. Colliding
// strings are replaced via assemble_session_values.
void reconfigure_session(ObPufDevice& dev,
                         std::span<const PartialChallenge> reconfig_challenges,
                         Rng& rng, bool noisy);

}  // namespace obpuf
