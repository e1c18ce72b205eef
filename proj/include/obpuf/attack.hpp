#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "obpuf/cmaes.hpp"
#include "obpuf/obfuscation.hpp"
#include "obpuf/protocol.hpp"

namespace obpuf {

// Flat genome: n_ins delay vectors (k+1 each) for the PUF block, then xors
// delay vectors (k_reconfig+1 each) for the reconfig block. xors = 0 for
// fixed-pattern targets.
struct GenomeLayout {
    int n_ins = 0;
    int k = 0;
    int xors = 0;
    int k_reconfig = 0;

    int dim() const { return n_ins * (k + 1) + xors * (k_reconfig + 1); }
    Eigen::Map<const Eigen::MatrixXd> puf_part(const Eigen::VectorXd& g) const {
        return {g.data(), k + 1, n_ins};
    }
    Eigen::Map<const Eigen::MatrixXd> reconfig_part(const Eigen::VectorXd& g) const {
        return {g.data() + n_ins * (k + 1), k_reconfig + 1, xors};
    }
};

struct AttackDataset {
    PatternSet public_patterns;  // positions and masks are adversary knowledge
    bool reconfigurable = false;
    struct Session {
        std::vector<PartialChallenge> reconfig_challenges;
        std::vector<PartialChallenge> challenges;
        std::vector<BitVec> responses;
    };
    std::vector<Session> sessions;

    std::size_t total_crps() const {
        std::size_t n = 0;
        for (const auto& s : sessions) n += s.challenges.size();
        return n;
    }
};

AttackDataset dataset_from_transcripts(const PatternSet& public_patterns,
                                       std::span<const SessionTranscript> transcripts,
                                       bool reconfigurable);

struct FitnessStats {
    std::uint64_t feature_builds = 0;  // candidate-specific challenge-feature constructions
    std::uint64_t delay_evals = 0;     // modeled delay-difference evaluations
};

// Caches the dataset's challenge features once and evaluates candidate
// genomes against them. The fixed-pattern path bakes the known inserted
// values into the cache; the reconfigurable path must rebuild the inserted
// values and the affected feature combinations per candidate and session.
class FitnessEvaluator {
public:
    FitnessEvaluator(const AttackDataset& data, const GenomeLayout& layout);

    // Sum over OB-CRPs of the minimum FHD between the candidate's p emulated
    // obfuscated responses and the observed one, divided by the CRP count.
    double fixed(const Eigen::VectorXd& genome) const;
    double reconfigurable(const Eigen::VectorXd& genome) const;

    const FitnessStats& stats() const { return stats_; }
    const GenomeLayout& layout() const { return layout_; }

private:
    struct PatternCache {
        Eigen::MatrixXd folded_features;        // rounds x (k+1), values baked in
        Eigen::MatrixXd base_features;          // rounds x (k+1), inserted bits zeroed
        Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> adjusted_targets;  // R_OB xor mask
    };
    struct SessionCache {
        Eigen::MatrixXd reconfig_features;  // (p*m) x (k_reconfig+1)
        std::vector<PatternCache> per_pattern;
    };

    GenomeLayout layout_;
    PatternSet patterns_;
    std::vector<SessionCache> sessions_;
    std::vector<std::vector<int>> segment_bounds_;  // per pattern, m+2 column bounds
    std::size_t total_crps_ = 0;
    mutable FitnessStats stats_;
};

struct ApufFitResult {
    DelayVector model;
    double heldout_accuracy = 0.0;
    std::vector<double> trace;
};

// Single-APUF model fit from direct CRPs: summed-FHD fitness under the
// standard strategy defaults.
ApufFitResult attack_apuf_baseline(std::span<const Challenge> train,
                                   std::span<const Bit> train_responses,
                                   std::span<const Challenge> test,
                                   std::span<const Bit> test_responses,
                                   std::uint64_t seed, const CmaesOptions& options);

// Ground-truth evaluation set for prediction accuracy: fresh partial
// challenges with the device's chosen pattern index, its session values and
// its noiseless obfuscated responses revealed.
struct PredictionTestSet {
    std::vector<PartialChallenge> challenges;
    std::vector<int> pattern_indices;
    std::vector<BitVec> responses;          // noiseless device outputs
    std::vector<BitVec> session_values;     // the device's true inserted values
};

PredictionTestSet build_prediction_test_set(ObPufDevice& dev, std::size_t count,
                                            std::uint64_t seed);

// Mean per-bit agreement between the genome's emulated obfuscated response
// (ground-truth pattern index and inserted values) and the device's
// noiseless response.
double eval_p_pred(const Eigen::VectorXd& genome, const GenomeLayout& layout,
                   const PatternSet& patterns, const PredictionTestSet& test);

// Same agreement but letting the model pick, per CRP, the candidate pattern
// closest to the observed response.
double eval_p_pred_best_pattern(const Eigen::VectorXd& genome, const GenomeLayout& layout,
                                const PatternSet& patterns, const PredictionTestSet& test);

struct CampaignConfig {
    std::string family = "reconfigurable";  // fixed | reconfigurable | apuf-baseline
    int k = 64;
    int n_ins = 2;
    int p = 2;
    int m = 3;
    int xors = 2;
    int sessions = 50;
    int rounds = 300;
    int generations = 100;
    int population = 0;
    int restarts = 1;  // independent strategy runs; the best training fitness wins
    std::size_t test_crps = 4000;
    std::size_t baseline_crps = 5000;  // apuf-baseline family
    bool trace_p_pred = false;
    bool joint = true;  // false: model each PUF-block APUF in its own run
    std::uint64_t seed = 1;
};

struct CampaignReport {
    CampaignConfig config;
    double fitness = 0.0;
    double p_pred = 0.0;               // oracle per-bit, the primary metric
    double p_pred_best_pattern = 0.0;
    double p_min = 0.0;
    double wall_seconds = 0.0;
    std::vector<double> trace;         // best fitness per generation
    std::vector<double> p_pred_trace;  // per generation, when trace_p_pred
};

// Generates a device, collects noiseless transcripts through the protocol,
// runs the strategy with the matching fitness and evaluates the result.
CampaignReport run_attack_campaign(const CampaignConfig& cfg);

}  // namespace obpuf
