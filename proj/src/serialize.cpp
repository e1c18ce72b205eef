#include "obpuf/serialize.hpp"

#include <sstream>

namespace obpuf {

namespace {

Json delay_vector_to_json(const DelayVector& w) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < w.size(); ++i) out.push_back(w[i]);
    return out;
}

DelayVector delay_vector_from_json(const Json& j) {
    DelayVector w(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i)
        w[i] = j[static_cast<std::size_t>(i)].get<double>();
    return w;
}

}  // namespace

Json to_json(const ApufInstance& a) {
    Json j;
    j["k"] = a.stage_count;
    j["noise_sigma"] = a.noise_sigma;
    Json delays = Json::array();
    for (Eigen::Index i = 0; i < a.stage_delays.rows(); ++i)
        for (Eigen::Index c = 0; c < 4; ++c) delays.push_back(a.stage_delays(i, c));
    j["stage_delays"] = std::move(delays);
    return j;
}

ApufInstance apuf_from_json(const Json& j) {
    ApufInstance a;
    a.stage_count = j.at("k").get<int>();
    a.noise_sigma = j.at("noise_sigma").get<double>();
    const auto& delays = j.at("stage_delays");
    if (delays.size() != static_cast<std::size_t>(a.stage_count) * 4)
        throw std::invalid_argument("apuf_from_json: stage_delays size mismatch");
    a.stage_delays.resize(a.stage_count, 4);
    std::size_t idx = 0;
    for (Eigen::Index i = 0; i < a.stage_delays.rows(); ++i)
        for (Eigen::Index c = 0; c < 4; ++c) a.stage_delays(i, c) = delays[idx++].get<double>();
    a.omega = omega_from_stage_delays(a.stage_delays);
    return a;
}

Json to_json(const PatternVector& pv) {
    return Json{{"positions", pv.insert_positions},
                {"values", to_string(pv.insert_values)},
                {"mask", to_string(pv.response_mask)}};
}

PatternVector pattern_vector_from_json(const Json& j) {
    PatternVector pv;
    pv.insert_positions = j.at("positions").get<std::vector<int>>();
    pv.insert_values = from_string(j.at("values").get<std::string>());
    pv.response_mask = from_string(j.at("mask").get<std::string>());
    return pv;
}

Json to_json(const PatternSet& ps) {
    Json j;
    j["k"] = ps.k;
    j["m"] = ps.m;
    j["n_ins"] = ps.n_ins;
    Json arr = Json::array();
    for (const auto& pv : ps.patterns) arr.push_back(to_json(pv));
    j["patterns"] = std::move(arr);
    return j;
}

PatternSet pattern_set_from_json(const Json& j) {
    PatternSet ps;
    ps.k = j.at("k").get<int>();
    ps.m = j.at("m").get<int>();
    ps.n_ins = j.at("n_ins").get<int>();
    for (const auto& pj : j.at("patterns")) ps.patterns.push_back(pattern_vector_from_json(pj));
    ps.validate();
    return ps;
}

Json to_json(const ObCrp& crp) {
    return Json{{"partial_challenge", to_string(crp.partial_challenge)},
                {"obfuscated_response", to_string(crp.obfuscated_response)}};
}

Json to_json(const ServerModel& model) {
    Json j;
    j["device_id"] = model.device_id;
    j["k"] = model.k;
    j["m"] = model.m;
    j["n_ins"] = model.n_ins;
    j["xors"] = model.xors;
    j["noise_sigma"] = model.noise_sigma;
    Json pm = Json::array();
    for (const auto& w : model.puf_block_models) pm.push_back(delay_vector_to_json(w));
    j["puf_block_models"] = std::move(pm);
    Json rm = Json::array();
    for (const auto& w : model.reconfig_models) rm.push_back(delay_vector_to_json(w));
    j["reconfig_models"] = std::move(rm);
    j["base_patterns"] = to_json(model.base_patterns);
    Json pool = Json::array();
    for (const auto& c : model.reliable_pool) pool.push_back(to_string(c));
    j["reliable_pool"] = std::move(pool);
    return j;
}

ServerModel server_model_from_json(const Json& j) {
    ServerModel model;
    model.device_id = j.at("device_id").get<std::string>();
    model.k = j.at("k").get<int>();
    model.m = j.at("m").get<int>();
    model.n_ins = j.at("n_ins").get<int>();
    model.xors = j.at("xors").get<int>();
    model.noise_sigma = j.at("noise_sigma").get<double>();
    for (const auto& w : j.at("puf_block_models"))
        model.puf_block_models.push_back(delay_vector_from_json(w));
    for (const auto& w : j.at("reconfig_models"))
        model.reconfig_models.push_back(delay_vector_from_json(w));
    model.base_patterns = pattern_set_from_json(j.at("base_patterns"));
    for (const auto& c : j.at("reliable_pool"))
        model.reliable_pool.push_back(from_string(c.get<std::string>()));
    return model;
}

Json to_json(const SessionTranscript& tr) {
    Json j;
    j["session_id"] = tr.session_id;
    Json rc = Json::array();
    for (const auto& c : tr.reconfig_challenges) rc.push_back(to_string(c));
    j["reconfig_challenges"] = std::move(rc);
    Json rounds = Json::array();
    for (const auto& r : tr.rounds)
        rounds.push_back(Json{{"c_ob", to_string(r.c_ob)},
                              {"r_ob", to_string(r.r_ob)},
                              {"matched", r.matched()},
                              {"matched_index", r.matched_index}});
    j["rounds"] = std::move(rounds);
    j["mismatches"] = tr.mismatches;
    j["accepted"] = tr.accepted;
    j["aborted"] = tr.aborted;
    return j;
}

SessionTranscript transcript_from_json(const Json& j) {
    SessionTranscript tr;
    tr.session_id = j.at("session_id").get<std::uint64_t>();
    for (const auto& c : j.at("reconfig_challenges"))
        tr.reconfig_challenges.push_back(from_string(c.get<std::string>()));
    for (const auto& r : j.at("rounds")) {
        RoundRecord rec;
        rec.c_ob = from_string(r.at("c_ob").get<std::string>());
        rec.r_ob = from_string(r.at("r_ob").get<std::string>());
        rec.matched_index = r.at("matched_index").get<int>();
        tr.rounds.push_back(std::move(rec));
    }
    tr.mismatches = j.at("mismatches").get<int>();
    tr.accepted = j.at("accepted").get<bool>();
    tr.aborted = j.at("aborted").get<bool>();
    return tr;
}

std::string transcripts_to_jsonl(std::span<const SessionTranscript> transcripts) {
    std::ostringstream out;
    for (const auto& tr : transcripts) out << to_json(tr).dump() << '\n';
    return out.str();
}

std::vector<SessionTranscript> transcripts_from_jsonl(const std::string& text) {
    std::vector<SessionTranscript> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(transcript_from_json(Json::parse(line)));
    }
    return out;
}

}  // namespace obpuf
