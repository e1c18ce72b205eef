#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "obpuf/channel.hpp"
#include "obpuf/obfuscation.hpp"

namespace obpuf {

struct AuthParams {
    int n = 42;          // rounds per decision
    int n_th = 30;       // accept iff mismatching rounds <= n_th
    int n_mismatch = 0;  // per-round HD tolerance
};

struct RoundRecord {
    PartialChallenge c_ob;
    BitVec r_ob;
    int matched_index = -1;  // -1 when no emulated response matched
    bool matched() const { return matched_index >= 0; }
};

struct SessionTranscript {
    std::uint64_t session_id = 0;
    std::vector<PartialChallenge> reconfig_challenges;
    std::vector<RoundRecord> rounds;
    int mismatches = 0;
    bool accepted = false;
    bool aborted = false;  // transport failure; rounds holds the partial record
};

struct ServerModel {
    std::string device_id;
    int k = 0, m = 0, n_ins = 0, xors = 0;
    double noise_sigma = 0.0;
    std::vector<DelayVector> puf_block_models;  // n_ins vectors of k+1
    std::vector<DelayVector> reconfig_models;   // xors vectors of k-m+1
    PatternSet base_patterns;
    std::vector<PartialChallenge> reliable_pool;
    std::size_t reliable_cursor = 0;
    std::set<std::string> used_log;             // partial challenges already issued
    std::vector<BitVec> session_values;         // current session's derived values

    std::size_t reliable_remaining() const { return reliable_pool.size() - reliable_cursor; }
    PatternVector session_pattern(int index) const;
};

enum class EnrollMode { Ideal, Learned };

struct EnrollOptions {
    EnrollMode mode = EnrollMode::Ideal;
    std::size_t crps_per_apuf = 5000;     // learned mode training set per APUF
    int generations = 400;
    double target_accuracy = 0.99;        // learned mode held-out bar
    int reliable_sessions = 64;           // pool sized for this many sessions
    std::size_t pool_candidates = 0;      // 0 -> derived from pool size
    double theta = -1.0;                  // -1 -> 5 * device noise_sigma
    std::uint64_t seed = 1;
};

// Builds the server-side record of a device. Ideal mode copies the true
// delay vectors; learned mode fits each APUF independently from direct
// noiseless CRPs and insists on the held-out accuracy bar. Also fills the
// reliable challenge pool for the reconfig block.
ServerModel enroll(const ObPufDevice& dev, const EnrollOptions& opts);

// Emulates the p obfuscated responses for c_ob under the session-current
// patterns and returns the smallest index within n_mismatch of r_ob, or -1.
int recover(std::span<const Bit> c_ob, std::span<const Bit> r_ob, const ServerModel& model,
            int n_mismatch);

// Derives the session values the device will hold after reconfiguring with
// these challenges, including the collision-healing step. Healing bits come
// from a substream keyed on the raw derived bits, so any party that can
// emulate the reconfig block reproduces them exactly.
std::vector<BitVec> derive_session_values(const std::vector<DelayVector>& reconfig_models,
                                          std::span<const PartialChallenge> challenges,
                                          int p, int m);

// Server side of one authentication session over a channel. Sends the
// reconfig challenges, runs n rounds, sends the decision. Transport failures
// abort with a partial transcript.
SessionTranscript run_session(ServerModel& model, Channel& channel,
                              const AuthParams& params, std::uint64_t seed);

// Prover side: reconfigures on SESSION_INIT, answers challenges until the
// decision arrives.
void run_prover(ObPufDevice& dev, Channel& channel, std::uint64_t seed, bool noisy);

enum class Transport { InProc, Socket };

// Convenience wrapper: runs server and prover over the chosen transport
// (prover on its own thread) and returns the server-side transcript.
SessionTranscript run_local_session(ServerModel& model, ObPufDevice& dev,
                                    const AuthParams& params, std::uint64_t seed,
                                    bool noisy, Transport transport = Transport::InProc);

}  // namespace obpuf
