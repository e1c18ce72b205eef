#include "obpuf/attack.hpp"

#include <chrono>
#include <limits>
#include <stdexcept>

#include "obpuf/metrics.hpp"

namespace obpuf {

AttackDataset dataset_from_transcripts(const PatternSet& public_patterns,
                                       std::span<const SessionTranscript> transcripts,
                                       bool reconfigurable) {
    AttackDataset data;
    data.public_patterns = public_patterns;
    data.reconfigurable = reconfigurable;
    for (const auto& tr : transcripts) {
        AttackDataset::Session s;
        s.reconfig_challenges = tr.reconfig_challenges;
        for (const auto& r : tr.rounds) {
            s.challenges.push_back(r.c_ob);
            s.responses.push_back(r.r_ob);
        }
        data.sessions.push_back(std::move(s));
    }
    return data;
}

namespace {

Eigen::MatrixXd features_for(const std::vector<PartialChallenge>& cobs,
                             const PatternVector& pv, int k) {
    std::vector<Challenge> fulls;
    fulls.reserve(cobs.size());
    for (const auto& c : cobs) fulls.push_back(expand_challenge(c, pv, k));
    return challenge_feature_matrix(fulls);
}

}  // namespace

FitnessEvaluator::FitnessEvaluator(const AttackDataset& data, const GenomeLayout& layout)
    : layout_(layout), patterns_(data.public_patterns) {
    const int k = patterns_.k;
    const int p = patterns_.p();
    total_crps_ = data.total_crps();
    if (total_crps_ == 0) throw std::invalid_argument("FitnessEvaluator: empty dataset");

    segment_bounds_.resize(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) {
        auto& b = segment_bounds_[static_cast<std::size_t>(j)];
        b.push_back(0);
        for (int q : patterns_.patterns[static_cast<std::size_t>(j)].insert_positions)
            b.push_back(q);  // 1-based position == first column of the next segment
        b.push_back(k + 1);
    }

    for (const auto& s : data.sessions) {
        SessionCache sc;
        if (data.reconfigurable) {
            std::vector<Challenge> rc(s.reconfig_challenges.begin(), s.reconfig_challenges.end());
            sc.reconfig_features = challenge_feature_matrix(rc);
        }
        for (int j = 0; j < p; ++j) {
            const auto& pv = patterns_.patterns[static_cast<std::size_t>(j)];
            PatternCache pc;
            if (data.reconfigurable) {
                PatternVector zero = pv;
                std::fill(zero.insert_values.begin(), zero.insert_values.end(), Bit{0});
                pc.base_features = features_for(s.challenges, zero, k);
            } else {
                pc.folded_features = features_for(s.challenges, pv, k);
            }
            stats_.feature_builds += s.challenges.size();
            pc.adjusted_targets.resize(static_cast<Eigen::Index>(s.responses.size()),
                                       patterns_.n_ins);
            for (Eigen::Index r = 0; r < pc.adjusted_targets.rows(); ++r) {
                const auto adj = xor_bits(s.responses[static_cast<std::size_t>(r)],
                                          pv.response_mask);
                for (int a = 0; a < patterns_.n_ins; ++a)
                    pc.adjusted_targets(r, a) = adj[static_cast<std::size_t>(a)];
            }
            sc.per_pattern.push_back(std::move(pc));
        }
        sessions_.push_back(std::move(sc));
    }
}

double FitnessEvaluator::fixed(const Eigen::VectorXd& genome) const {
    if (sessions_.front().per_pattern.front().folded_features.size() == 0)
        throw std::logic_error(
            "FitnessEvaluator::fixed: dataset was built for reconfigurable targets");
    const auto W = layout_.puf_part(genome);  // (k+1) x n_ins
    const int p = patterns_.p();
    double total = 0.0;
    for (const auto& sc : sessions_) {
        const auto rounds = sc.per_pattern.front().adjusted_targets.rows();
        Eigen::VectorXi best = Eigen::VectorXi::Constant(rounds, patterns_.n_ins + 1);
        for (int j = 0; j < p; ++j) {
            const auto& pc = sc.per_pattern[static_cast<std::size_t>(j)];
            const Eigen::MatrixXd t = pc.folded_features * W;
            stats_.delay_evals += static_cast<std::uint64_t>(t.size());
            const Eigen::VectorXi mism =
                ((t.array() > 0.0).cast<int>() != pc.adjusted_targets.array())
                    .cast<int>()
                    .rowwise()
                    .sum();
            best = best.cwiseMin(mism);
        }
        total += best.cast<double>().sum() / patterns_.n_ins;
    }
    return total / static_cast<double>(total_crps_);
}

double FitnessEvaluator::reconfigurable(const Eigen::VectorXd& genome) const {
    if (layout_.xors == 0 || sessions_.front().reconfig_features.size() == 0)
        throw std::logic_error(
            "FitnessEvaluator::reconfigurable: dataset lacks reconfig challenges");
    const auto W = layout_.puf_part(genome);
    const auto Wr = layout_.reconfig_part(genome);
    const int p = patterns_.p();
    const int m = patterns_.m;
    double total = 0.0;
    for (const auto& sc : sessions_) {
        // The inserted values have to be worked out from this candidate's
        // reconfig model before any response can be emulated.
        const Eigen::MatrixXd pred = sc.reconfig_features * Wr;  // (p*m) x xors
        std::vector<Bit> raw(static_cast<std::size_t>(p * m));
        for (int i = 0; i < p * m; ++i) {
            Bit b = 0;
            for (int x = 0; x < pred.cols(); ++x) b ^= pred(i, x) > 0.0 ? 1 : 0;
            raw[static_cast<std::size_t>(i)] = b;
        }
        stats_.delay_evals += static_cast<std::uint64_t>(pred.size());
        const auto values = assemble_session_values(raw, p, m);

        const auto rounds = sc.per_pattern.front().adjusted_targets.rows();
        Eigen::VectorXi best = Eigen::VectorXi::Constant(rounds, patterns_.n_ins + 1);
        for (int j = 0; j < p; ++j) {
            const auto& pc = sc.per_pattern[static_cast<std::size_t>(j)];
            const auto& bounds = segment_bounds_[static_cast<std::size_t>(j)];
            const auto& v = values[static_cast<std::size_t>(j)];
            // suffix sign of the inserted values per column segment
            std::vector<double> sign(static_cast<std::size_t>(m) + 1, 1.0);
            for (int s = m - 1; s >= 0; --s)
                sign[static_cast<std::size_t>(s)] =
                    sign[static_cast<std::size_t>(s) + 1] *
                    (v[static_cast<std::size_t>(s)] ? -1.0 : 1.0);

            Eigen::MatrixXd t = Eigen::MatrixXd::Zero(rounds, patterns_.n_ins);
            for (int s = 0; s <= m; ++s) {
                const int lo = bounds[static_cast<std::size_t>(s)];
                const int len = bounds[static_cast<std::size_t>(s) + 1] - lo;
                if (len == 0) continue;
                t.noalias() += sign[static_cast<std::size_t>(s)] *
                               (pc.base_features.middleCols(lo, len) * W.middleRows(lo, len));
            }
            stats_.feature_builds += static_cast<std::uint64_t>(rounds);
            stats_.delay_evals += static_cast<std::uint64_t>(t.size());
            const Eigen::VectorXi mism =
                ((t.array() > 0.0).cast<int>() != pc.adjusted_targets.array())
                    .cast<int>()
                    .rowwise()
                    .sum();
            best = best.cwiseMin(mism);
        }
        total += best.cast<double>().sum() / patterns_.n_ins;
    }
    return total / static_cast<double>(total_crps_);
}

ApufFitResult attack_apuf_baseline(std::span<const Challenge> train,
                                   std::span<const Bit> train_responses,
                                   std::span<const Challenge> test,
                                   std::span<const Bit> test_responses,
                                   std::uint64_t seed, const CmaesOptions& options) {
    if (train.size() != train_responses.size() || test.size() != test_responses.size())
        throw std::invalid_argument("attack_apuf_baseline: challenge/response size mismatch");
    const Eigen::MatrixXd F = challenge_feature_matrix(train);
    Eigen::VectorXd target(static_cast<Eigen::Index>(train.size()));
    for (Eigen::Index i = 0; i < target.size(); ++i)
        target[i] = train_responses[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    const auto objective = [&](const Eigen::VectorXd& w) {
        const Eigen::VectorXd t = F * w;
        double mism = 0.0;
        for (Eigen::Index i = 0; i < t.size(); ++i)
            mism += ((t[i] > 0.0) ? 1.0 : 0.0) != target[i];
        return mism / static_cast<double>(t.size());
    };

    const int dim = static_cast<int>(F.cols());
    const auto res = cmaes_minimize(objective, dim, seed, options);

    ApufFitResult out;
    out.model = res.best;
    out.trace = res.trace;
    if (!test.empty()) {
        const Eigen::MatrixXd Ft = challenge_feature_matrix(test);
        const Eigen::VectorXd t = Ft * res.best;
        std::size_t agree = 0;
        for (Eigen::Index i = 0; i < t.size(); ++i)
            agree += ((t[i] > 0.0) ? 1 : 0) == test_responses[static_cast<std::size_t>(i)];
        out.heldout_accuracy = static_cast<double>(agree) / static_cast<double>(test.size());
    }
    return out;
}

PredictionTestSet build_prediction_test_set(ObPufDevice& dev, std::size_t count,
                                            std::uint64_t seed) {
    Rng rng = make_rng(derive_seed(seed, 0x7e57ull));
    if (!dev.reconfig_block.empty()) {
        std::vector<PartialChallenge> rc;
        for (int i = 0; i < dev.p() * dev.m(); ++i)
            rc.push_back(random_bits(rng, static_cast<std::size_t>(dev.k() - dev.m())));
        reconfigure_session(dev, rc, rng, false);
    }
    if (!dev.session_open())
        throw std::logic_error("build_prediction_test_set: no session values");

    PredictionTestSet out;
    out.session_values = *dev.session_values;
    for (std::size_t i = 0; i < count; ++i) {
        PartialChallenge cob = random_bits(rng, static_cast<std::size_t>(dev.k() - dev.m()));
        const int idx = choose_pattern_index(rng, dev.p());
        const ObCrp crp = ob_puf_eval_with_pattern(dev, cob, idx, rng, false);
        out.challenges.push_back(std::move(cob));
        out.pattern_indices.push_back(idx);
        out.responses.push_back(crp.obfuscated_response);
    }
    return out;
}

namespace {

BitVec emulate_response(const Eigen::Map<const Eigen::MatrixXd>& W, const PatternSet& ps,
                        std::span<const Bit> c_ob, int index, const BitVec& values) {
    PatternVector pv = ps.patterns[static_cast<std::size_t>(index)];
    pv.insert_values = values;
    const Challenge full = expand_challenge(c_ob, pv, ps.k);
    const auto phi = challenge_feature(full);
    BitVec r(static_cast<std::size_t>(ps.n_ins));
    for (int a = 0; a < ps.n_ins; ++a)
        r[static_cast<std::size_t>(a)] = W.col(a).dot(phi) > 0.0 ? 1 : 0;
    return obfuscate_response(r, pv);
}

}  // namespace

double eval_p_pred(const Eigen::VectorXd& genome, const GenomeLayout& layout,
                   const PatternSet& patterns, const PredictionTestSet& test) {
    const auto W = layout.puf_part(genome);
    std::size_t agree = 0, bits = 0;
    for (std::size_t i = 0; i < test.challenges.size(); ++i) {
        const int idx = test.pattern_indices[i];
        const BitVec emulated =
            emulate_response(W, patterns, test.challenges[i], idx,
                             test.session_values[static_cast<std::size_t>(idx)]);
        bits += emulated.size();
        agree += emulated.size() - hd(emulated, test.responses[i]);
    }
    return static_cast<double>(agree) / static_cast<double>(bits);
}

double eval_p_pred_best_pattern(const Eigen::VectorXd& genome, const GenomeLayout& layout,
                                const PatternSet& patterns, const PredictionTestSet& test) {
    const auto W = layout.puf_part(genome);
    std::size_t agree = 0, bits = 0;
    for (std::size_t i = 0; i < test.challenges.size(); ++i) {
        std::size_t best_hd = static_cast<std::size_t>(patterns.n_ins) + 1;
        for (int j = 0; j < patterns.p(); ++j) {
            const BitVec emulated =
                emulate_response(W, patterns, test.challenges[i], j,
                                 test.session_values[static_cast<std::size_t>(j)]);
            best_hd = std::min(best_hd, hd(emulated, test.responses[i]));
        }
        bits += static_cast<std::size_t>(patterns.n_ins);
        agree += static_cast<std::size_t>(patterns.n_ins) - best_hd;
    }
    return static_cast<double>(agree) / static_cast<double>(bits);
}

CampaignReport run_attack_campaign(const CampaignConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    CampaignReport report;
    report.config = cfg;
    report.p_min = p_min({cfg.n_ins, cfg.p, 0, 0.05});

    if (cfg.family == "apuf-baseline") {
        Rng rng = make_rng(derive_seed(cfg.seed, 0xba5eull));
        const auto apuf = sample_apuf(cfg.k, derive_seed(cfg.seed, 0xdeull));
        std::vector<Challenge> train, test;
        std::vector<Bit> train_r, test_r;
        Rng eval_rng = make_rng(0);
        for (std::size_t i = 0; i < cfg.baseline_crps; ++i) {
            train.push_back(random_bits(rng, static_cast<std::size_t>(cfg.k)));
            train_r.push_back(eval_response(apuf, train.back(), false, eval_rng));
        }
        for (std::size_t i = 0; i < cfg.test_crps; ++i) {
            test.push_back(random_bits(rng, static_cast<std::size_t>(cfg.k)));
            test_r.push_back(eval_response(apuf, test.back(), false, eval_rng));
        }
        CmaesOptions es;
        es.population = cfg.population;
        es.generations = cfg.generations;
        const auto fit = attack_apuf_baseline(train, train_r, test, test_r,
                                              derive_seed(cfg.seed, 0xe5ull), es);
        report.fitness = fit.trace.empty() ? 0.0 : fit.trace.back();
        report.p_pred = fit.heldout_accuracy;
        report.p_pred_best_pattern = fit.heldout_accuracy;
        report.trace = fit.trace;
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return report;
    }

    const bool reconfigurable = cfg.family == "reconfigurable";
    if (!reconfigurable) report.config.xors = 0;  // no reconfig block on fixed targets
    DeviceConfig dc;
    dc.k = cfg.k;
    dc.n_ins = cfg.n_ins;
    dc.p = cfg.p;
    dc.m = cfg.m;
    dc.xors = reconfigurable ? cfg.xors : 0;
    dc.noise_sigma = 0.0;  // attacks run on the noiseless logic model

    ObPufDevice dev = reconfigurable ? make_device(dc, derive_seed(cfg.seed, 0xdeull))
                                     : make_fixed_pattern_device(dc, derive_seed(cfg.seed, 0xdeull));

    // Eavesdropped transcripts: the protocol run with a wide-open decision
    // threshold, noiseless devices.
    ServerModel server = enroll(dev, {EnrollMode::Ideal, 0, 0, 0.0,
                                      reconfigurable ? cfg.sessions + 2 : 1, 0, -1.0,
                                      derive_seed(cfg.seed, 0xe40ull)});
    AuthParams params{cfg.rounds, cfg.rounds, 0};
    std::vector<SessionTranscript> transcripts;
    const int n_sessions = reconfigurable ? cfg.sessions : std::max(1, cfg.sessions);
    for (int s = 0; s < n_sessions; ++s)
        transcripts.push_back(
            run_local_session(server, dev, params, derive_seed(cfg.seed, 0x5e55ull, s), false));

    const AttackDataset data =
        dataset_from_transcripts(dev.base_patterns, transcripts, reconfigurable);
    GenomeLayout layout{cfg.n_ins, cfg.k, reconfigurable ? cfg.xors : 0, cfg.k - cfg.m};
    const FitnessEvaluator evaluator(data, layout);

    const auto test = build_prediction_test_set(dev, cfg.test_crps,
                                                derive_seed(cfg.seed, 0x7e57e4ull));

    CmaesOptions opts;
    opts.population = cfg.population;
    opts.generations = cfg.generations;

    Eigen::VectorXd genome;
    if (cfg.joint) {
        const Objective objective = [&](const Eigen::VectorXd& g) {
            return reconfigurable ? evaluator.reconfigurable(g) : evaluator.fixed(g);
        };
        // The strategy can settle in a mirrored basin on small targets; an
        // attacker simply keeps the restart with the best training fitness.
        report.fitness = std::numeric_limits<double>::infinity();
        for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
            std::vector<double> p_pred_trace;
            if (cfg.trace_p_pred)
                opts.on_generation = [&](int, const Eigen::VectorXd& best, double) {
                    p_pred_trace.push_back(
                        eval_p_pred(best, layout, dev.base_patterns, test));
                };
            const auto res = cmaes_minimize(objective, layout.dim(),
                                            derive_seed(cfg.seed, 0xe5ull, r), opts);
            if (res.best_fitness < report.fitness) {
                genome = res.best;
                report.fitness = res.best_fitness;
                report.trace = res.trace;
                report.p_pred_trace = std::move(p_pred_trace);
            }
        }
    } else {
        // Comparison mode: one strategy run per PUF-block instance, single-bit
        // responses, assembled into one genome afterwards.
        genome = Eigen::VectorXd::Zero(layout.dim());
        for (int a = 0; a < cfg.n_ins; ++a) {
            AttackDataset slice = data;
            slice.public_patterns.n_ins = 1;
            for (auto& pv : slice.public_patterns.patterns)
                pv.response_mask = {pv.response_mask[static_cast<std::size_t>(a)]};
            for (auto& s : slice.sessions)
                for (auto& r : s.responses) r = {r[static_cast<std::size_t>(a)]};
            GenomeLayout bit_layout{1, cfg.k, reconfigurable ? cfg.xors : 0, cfg.k - cfg.m};
            const FitnessEvaluator bit_eval(slice, bit_layout);
            const Objective objective = [&](const Eigen::VectorXd& g) {
                return reconfigurable ? bit_eval.reconfigurable(g) : bit_eval.fixed(g);
            };
            const auto res = cmaes_minimize(objective, bit_layout.dim(),
                                            derive_seed(cfg.seed, 0xe5b17ull, a), opts);
            genome.segment(static_cast<Eigen::Index>(a) * (cfg.k + 1), cfg.k + 1) =
                res.best.head(cfg.k + 1);
            report.fitness += res.best_fitness / cfg.n_ins;
            if (a == 0) report.trace = res.trace;
        }
    }

    report.p_pred = eval_p_pred(genome, layout, dev.base_patterns, test);
    report.p_pred_best_pattern =
        eval_p_pred_best_pattern(genome, layout, dev.base_patterns, test);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

}  // namespace obpuf
