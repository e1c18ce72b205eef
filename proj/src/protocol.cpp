#include "obpuf/protocol.hpp"

#include <stdexcept>
#include <thread>

#include "obpuf/attack.hpp"
#include "obpuf/wire.hpp"

namespace obpuf {

PatternVector ServerModel::session_pattern(int index) const {
    PatternVector pv = base_patterns.patterns[static_cast<std::size_t>(index)];
    if (!session_values.empty())
        pv.insert_values = session_values[static_cast<std::size_t>(index)];
    return pv;
}

ServerModel enroll(const ObPufDevice& dev, const EnrollOptions& opts) {
    ServerModel model;
    model.device_id = "device";
    model.k = dev.k();
    model.m = dev.m();
    model.n_ins = dev.n_ins();
    model.xors = static_cast<int>(dev.reconfig_block.size());
    model.noise_sigma = dev.puf_block.empty() ? 0.0 : dev.puf_block.front().noise_sigma;
    model.base_patterns = dev.base_patterns;

    if (opts.mode == EnrollMode::Ideal) {
        for (const auto& a : dev.puf_block) model.puf_block_models.push_back(a.omega);
        for (const auto& a : dev.reconfig_block) model.reconfig_models.push_back(a.omega);
    } else {
        // Direct per-APUF access exists only during enrollment; each instance
        // is fitted on its own noiseless CRPs. A fit that misses the bar is
        // retried on a fresh, half-again larger query set.
        auto fit_one = [&](const ApufInstance& a, std::uint64_t salt) {
            Rng rng = make_rng(derive_seed(opts.seed, 0xf17ull, salt));
            Rng eval_rng = make_rng(0);
            const auto k = static_cast<std::size_t>(a.stage_count);
            std::vector<Challenge> test;
            std::vector<Bit> test_r;
            for (std::size_t i = 0; i < 2000; ++i) {
                test.push_back(random_bits(rng, k));
                test_r.push_back(eval_response(a, test.back(), false, eval_rng));
            }

            ApufFitResult best;
            CmaesOptions es;
            es.generations = opts.generations;
            std::size_t crps = opts.crps_per_apuf;
            for (int attempt = 0; attempt < 4; ++attempt) {
                std::vector<Challenge> train;
                std::vector<Bit> train_r;
                for (std::size_t i = 0; i < crps; ++i) {
                    train.push_back(random_bits(rng, k));
                    train_r.push_back(eval_response(a, train.back(), false, eval_rng));
                }
                auto fit = attack_apuf_baseline(train, train_r, test, test_r,
                                                derive_seed(opts.seed, salt, attempt), es);
                if (fit.heldout_accuracy > best.heldout_accuracy) best = std::move(fit);
                if (best.heldout_accuracy >= opts.target_accuracy) break;
                crps += crps / 2;
            }
            if (best.heldout_accuracy < opts.target_accuracy)
                throw std::runtime_error("enroll: learned model below accuracy target");
            return best.model;
        };
        std::uint64_t salt = 0;
        for (const auto& a : dev.puf_block) model.puf_block_models.push_back(fit_one(a, ++salt));
        for (const auto& a : dev.reconfig_block)
            model.reconfig_models.push_back(fit_one(a, 0x1000 + ++salt));
    }

    if (!dev.reconfig_block.empty()) {
        const double sigma = dev.reconfig_block.front().noise_sigma;
        const double theta = opts.theta >= 0.0 ? opts.theta : 5.0 * sigma;
        const std::size_t want =
            static_cast<std::size_t>(dev.p()) * static_cast<std::size_t>(dev.m()) *
            static_cast<std::size_t>(opts.reliable_sessions);
        const std::size_t candidates =
            opts.pool_candidates ? opts.pool_candidates : want * 3 + 1024;
        Rng rng = make_rng(derive_seed(opts.seed, 0x9001ull));
        model.reliable_pool =
            select_reliable_challenges(dev.reconfig_block, candidates, theta, rng);
        if (model.reliable_pool.size() > want) model.reliable_pool.resize(want);
        if (model.reliable_pool.size() < want)
            throw std::runtime_error("enroll: reliable pool short of requested size");
    }
    return model;
}

std::vector<BitVec> derive_session_values(const std::vector<DelayVector>& reconfig_models,
                                          std::span<const PartialChallenge> challenges,
                                          int p, int m) {
    if (static_cast<int>(challenges.size()) != p * m)
        throw std::invalid_argument("derive_session_values: need p*m challenges");
    std::vector<Bit> raw(static_cast<std::size_t>(p * m));
    for (int i = 0; i < p * m; ++i) {
        const auto phi = challenge_feature(challenges[static_cast<std::size_t>(i)]);
        Bit bit = 0;
        for (const auto& w : reconfig_models) bit ^= (w.dot(phi) > 0.0) ? 1 : 0;
        raw[static_cast<std::size_t>(i)] = bit;
    }
    return assemble_session_values(raw, p, m);
}

int recover(std::span<const Bit> c_ob, std::span<const Bit> r_ob, const ServerModel& model,
            int n_mismatch) {
    for (int i = 0; i < model.base_patterns.p(); ++i) {
        const PatternVector pv = model.session_pattern(i);
        const Challenge full = expand_challenge(c_ob, pv, model.k);
        const auto phi = challenge_feature(full);
        BitVec emulated(static_cast<std::size_t>(model.n_ins));
        for (int a = 0; a < model.n_ins; ++a)
            emulated[static_cast<std::size_t>(a)] =
                model.puf_block_models[static_cast<std::size_t>(a)].dot(phi) > 0.0 ? 1 : 0;
        emulated = obfuscate_response(emulated, pv);
        if (hd(emulated, r_ob) <= static_cast<std::size_t>(n_mismatch)) return i;
    }
    return -1;
}

SessionTranscript run_session(ServerModel& model, Channel& channel,
                              const AuthParams& params, std::uint64_t seed) {
    SessionTranscript tr;
    tr.session_id = derive_seed(seed, 0x5e5510ull);
    Rng rng = make_rng(derive_seed(seed, 0x5e77e7ull));
    const int p = model.base_patterns.p();
    const int m = model.m;

    const std::size_t need = model.reconfig_models.empty()
                                 ? 0
                                 : static_cast<std::size_t>(p) * static_cast<std::size_t>(m);
    if (model.reliable_remaining() < need)
        throw std::runtime_error("run_session: reliable pool exhausted");

    SessionInitMsg init;
    init.session_id = tr.session_id;
    init.challenge_bits = static_cast<std::uint16_t>(model.k - m);
    init.rounds = static_cast<std::uint16_t>(params.n);
    for (std::size_t i = 0; i < need; ++i)
        init.reconfig_challenges.push_back(model.reliable_pool[model.reliable_cursor++]);
    tr.reconfig_challenges = init.reconfig_challenges;

    if (!model.reconfig_models.empty())
        model.session_values =
            derive_session_values(model.reconfig_models, init.reconfig_challenges, p, m);
    else {
        model.session_values.clear();
        for (const auto& pv : model.base_patterns.patterns)
            model.session_values.push_back(pv.insert_values);
    }

    try {
        channel.send(encode_message(Message{init}));
        for (int r = 0; r < params.n; ++r) {
            PartialChallenge c_ob;
            do {
                c_ob = random_bits(rng, static_cast<std::size_t>(model.k - m));
            } while (model.used_log.contains(to_string(c_ob)));
            model.used_log.insert(to_string(c_ob));

            ChallengeMsg ch;
            ch.round = static_cast<std::uint16_t>(r);
            ch.challenge = c_ob;
            channel.send(encode_message(Message{ch}));

            const auto frame = channel.recv();
            const auto outcome = decode_message(frame);
            const auto* msg = std::get_if<Message>(&outcome);
            const auto* resp = msg ? std::get_if<ResponseMsg>(msg) : nullptr;
            if (!resp || resp->round != r ||
                resp->response.size() != static_cast<std::size_t>(model.n_ins))
                throw std::runtime_error("run_session: bad response frame");

            RoundRecord rec;
            rec.c_ob = std::move(c_ob);
            rec.r_ob = resp->response;
            rec.matched_index = recover(rec.c_ob, rec.r_ob, model, params.n_mismatch);
            tr.mismatches += rec.matched_index < 0;
            tr.rounds.push_back(std::move(rec));
        }
        tr.accepted = tr.mismatches <= params.n_th;
        DecisionMsg d;
        d.accept = tr.accepted;
        d.mismatches = static_cast<std::uint16_t>(tr.mismatches);
        channel.send(encode_message(Message{d}));
    } catch (const std::runtime_error&) {
        tr.aborted = true;
        tr.accepted = false;
    }
    return tr;
}

void run_prover(ObPufDevice& dev, Channel& channel, std::uint64_t seed, bool noisy) {
    Rng rng = make_rng(derive_seed(seed, 0x960feull));
    const auto init_frame = channel.recv();
    const auto init_out = decode_message(init_frame);
    const auto* init_msg = std::get_if<Message>(&init_out);
    const auto* init = init_msg ? std::get_if<SessionInitMsg>(init_msg) : nullptr;
    if (!init) throw std::runtime_error("run_prover: expected session init");

    if (!init->reconfig_challenges.empty()) {
        if (dev.reconfig_block.empty())
            throw std::runtime_error("run_prover: device has no reconfig block");
        reconfigure_session(dev, init->reconfig_challenges, rng, noisy);
    } else if (!dev.session_open()) {
        throw std::runtime_error("run_prover: no session values available");
    }

    for (int r = 0; r < init->rounds; ++r) {
        const auto frame = channel.recv();
        const auto out = decode_message(frame);
        const auto* msg = std::get_if<Message>(&out);
        const auto* ch = msg ? std::get_if<ChallengeMsg>(msg) : nullptr;
        if (!ch) throw std::runtime_error("run_prover: expected challenge");
        const ObCrp crp = ob_puf_eval(dev, ch->challenge, rng, noisy);
        ResponseMsg resp;
        resp.round = ch->round;
        resp.response = crp.obfuscated_response;
        channel.send(encode_message(Message{resp}));
    }
    (void)channel.recv();  // decision
}

SessionTranscript run_local_session(ServerModel& model, ObPufDevice& dev,
                                    const AuthParams& params, std::uint64_t seed,
                                    bool noisy, Transport transport) {
    // Fail before the prover thread exists; it would otherwise block on a
    // session init that never comes.
    const std::size_t need =
        model.reconfig_models.empty()
            ? 0
            : static_cast<std::size_t>(model.base_patterns.p()) *
                  static_cast<std::size_t>(model.m);
    if (model.reliable_remaining() < need)
        throw std::runtime_error("run_local_session: reliable pool exhausted");

    ChannelPair pair =
        transport == Transport::InProc ? make_inproc_pair() : make_socket_pair();
    std::exception_ptr prover_error;
    std::thread prover([&] {
        try {
            run_prover(dev, *pair.b, derive_seed(seed, 0x960be5ull), noisy);
        } catch (...) {
            prover_error = std::current_exception();
        }
    });
    SessionTranscript tr;
    try {
        tr = run_session(model, *pair.a, params, seed);
        prover.join();
    } catch (...) {
        prover.join();
        throw;
    }
    if (prover_error && !tr.aborted) std::rethrow_exception(prover_error);
    return tr;
}

}  // namespace obpuf
