#pragma once

#include <json.hpp>
#include <string>

#include "obpuf/apuf.hpp"
#include "obpuf/attack.hpp"
#include "obpuf/obfuscation.hpp"
#include "obpuf/protocol.hpp"

namespace obpuf {

using Json = nlohmann::json;

// Flat record of k, stage_delays (row-major, stage order) and noise_sigma;
// doubles round-trip at full binary64 precision.
Json to_json(const ApufInstance& a);
ApufInstance apuf_from_json(const Json& j);

Json to_json(const PatternVector& pv);
PatternVector pattern_vector_from_json(const Json& j);

Json to_json(const PatternSet& ps);
PatternSet pattern_set_from_json(const Json& j);

Json to_json(const ObCrp& crp);

// Enrollment record: pattern set plus the delay-vector models.
Json to_json(const ServerModel& model);
ServerModel server_model_from_json(const Json& j);

// One transcript per JSON-lines row.
Json to_json(const SessionTranscript& tr);
SessionTranscript transcript_from_json(const Json& j);

std::string transcripts_to_jsonl(std::span<const SessionTranscript> transcripts);
std::vector<SessionTranscript> transcripts_from_jsonl(const std::string& text);

}  // namespace obpuf
