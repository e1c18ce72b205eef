#include <doctest.h>

#include <cmath>

#include "obpuf/attack.hpp"
#include "obpuf/serialize.hpp"

using namespace obpuf;

namespace {

DeviceConfig config(int n_ins, int p, int m, int xors) {
    DeviceConfig cfg;
    cfg.k = 64;
    cfg.n_ins = n_ins;
    cfg.p = p;
    cfg.m = m;
    cfg.xors = xors;
    cfg.design_trial_budget = 16;
    return cfg;
}

Eigen::VectorXd true_genome(const ObPufDevice& dev, const GenomeLayout& layout) {
    Eigen::VectorXd g(layout.dim());
    Eigen::Index at = 0;
    for (const auto& a : dev.puf_block) {
        g.segment(at, a.omega.size()) = a.omega;
        at += a.omega.size();
    }
    for (int i = 0; i < layout.xors; ++i) {
        const auto& a = dev.reconfig_block[static_cast<std::size_t>(i)];
        g.segment(at, a.omega.size()) = a.omega;
        at += a.omega.size();
    }
    return g;
}

std::vector<SessionTranscript> collect(ObPufDevice& dev, ServerModel& server, int sessions,
                                       int rounds, std::uint64_t seed) {
    AuthParams params{rounds, rounds, 0};
    std::vector<SessionTranscript> out;
    for (int s = 0; s < sessions; ++s)
        out.push_back(run_local_session(server, dev, params, derive_seed(seed, 0xc0u, s),
                                        false));
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("attack");

TEST_CASE("the true genome sits at fitness zero") {
    SUBCASE("fixed patterns") {
        ObPufDevice dev = make_fixed_pattern_device(config(2, 2, 3, 0), 500);
        ServerModel server = enroll(dev, {});
        auto transcripts = collect(dev, server, 4, 80, 1);
        const auto data = dataset_from_transcripts(dev.base_patterns, transcripts, false);
        GenomeLayout layout{2, 64, 0, 61};
        FitnessEvaluator eval(data, layout);
        CHECK(eval.fixed(true_genome(dev, layout)) == doctest::Approx(0.0));
    }
    SUBCASE("reconfigurable patterns") {
        ObPufDevice dev = make_device(config(2, 2, 3, 2), 501);
        ServerModel server = enroll(dev, {});
        auto transcripts = collect(dev, server, 6, 60, 2);
        const auto data = dataset_from_transcripts(dev.base_patterns, transcripts, true);
        GenomeLayout layout{2, 64, 2, 61};
        FitnessEvaluator eval(data, layout);
        CHECK(eval.reconfigurable(true_genome(dev, layout)) == doctest::Approx(0.0));
    }
}

TEST_CASE("single-pattern fitness is the plain summed FHD") {
    DeviceConfig cfg = config(2, 1, 1, 0);
    ObPufDevice dev = make_fixed_pattern_device(cfg, 502);
    ServerModel server = enroll(dev, {});
    auto transcripts = collect(dev, server, 1, 200, 3);
    const auto data = dataset_from_transcripts(dev.base_patterns, transcripts, false);
    GenomeLayout layout{2, 64, 0, 63};
    FitnessEvaluator eval(data, layout);

    const auto other = make_fixed_pattern_device(cfg, 777);
    const Eigen::VectorXd g = true_genome(other, layout);

    // direct recomputation with the single known pattern
    double expect = 0.0;
    const auto& s = data.sessions[0];
    Rng dummy = make_rng(0);
    for (std::size_t i = 0; i < s.challenges.size(); ++i) {
        const auto pv = dev.session_pattern(0);
        const Challenge full = expand_challenge(s.challenges[i], pv, 64);
        BitVec r(2);
        for (int a = 0; a < 2; ++a)
            r[static_cast<std::size_t>(a)] =
                eval_response(other.puf_block[static_cast<std::size_t>(a)], full, false,
                              dummy);
        expect += fhd(obfuscate_response(r, pv), s.responses[i]);
    }
    expect /= static_cast<double>(s.challenges.size());
    CHECK(eval.fixed(g) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("a random genome scores near the enumerated minimum-distance mean") {
    ObPufDevice dev = make_fixed_pattern_device(config(4, 4, 3, 0), 503);
    ServerModel server = enroll(dev, {});
    auto transcripts = collect(dev, server, 2, 400, 4);
    const auto data = dataset_from_transcripts(dev.base_patterns, transcripts, false);
    GenomeLayout layout{4, 64, 0, 61};
    FitnessEvaluator eval(data, layout);

    // E[min of p FHDs of independent uniform n_ins-bit strings], enumerated
    const int n_ins = 4, p = 4;
    double expected_min = 0.0;
    for (int t = 1; t <= n_ins; ++t) {
        double tail = 0.0;  // P(HD >= t)
        for (int i = t; i <= n_ins; ++i)
            tail += std::exp(std::lgamma(n_ins + 1) - std::lgamma(i + 1) -
                             std::lgamma(n_ins - i + 1)) /
                    std::exp2(n_ins);
        expected_min += std::pow(tail, p);
    }
    expected_min /= n_ins;
    CHECK(expected_min == doctest::Approx(0.2513580322).epsilon(1e-9));

    double mean = 0.0;
    for (int r = 0; r < 5; ++r) {
        const auto other = make_fixed_pattern_device(config(4, 4, 3, 0), 900 + r);
        mean += eval.fixed(true_genome(other, GenomeLayout{4, 64, 0, 61}));
    }
    mean /= 5;
    // real candidates are mildly correlated across patterns, so allow a band
    CHECK(mean > expected_min - 0.05);
    CHECK(mean < expected_min + 0.05);
}

TEST_CASE("corrupting the reconfig model hurts fitness") {
    ObPufDevice dev = make_device(config(2, 2, 3, 2), 504);
    EnrollOptions eo;
    eo.reliable_sessions = 104;
    ServerModel server = enroll(dev, eo);
    auto transcripts = collect(dev, server, 100, 30, 5);
    const auto data = dataset_from_transcripts(dev.base_patterns, transcripts, true);
    GenomeLayout layout{2, 64, 2, 61};
    FitnessEvaluator eval(data, layout);

    const Eigen::VectorXd truth = true_genome(dev, layout);
    Eigen::VectorXd corrupted = truth;
    const auto junk = sample_apuf(61, 999);
    corrupted.segment(2 * 65, 62) = junk.omega;
    corrupted.segment(2 * 65 + 62, 62) = -junk.omega;

    CHECK(eval.reconfigurable(truth) == doctest::Approx(0.0));
    CHECK(eval.reconfigurable(corrupted) > 0.05);
}

TEST_CASE("a wrong inserted bit corrupts responses at the parity-flip rate") {
    // Flipping the inserted bit at 1-based position q negates the first q
    // feature components, so for Gaussian weights the response flips with
    // probability arccos((k+1-2q)/(k+1))/pi. A mid-chain error scrambles
    // about half the bits; a late error scrambles most of them.
    Rng rng = make_rng(90);

    auto flip_rate = [&](int q_flip) {
        PatternVector pv{{5, 30, 60}, from_string("000"), from_string("0000")};
        std::size_t changed = 0, total = 0;
        for (int inst = 0; inst < 12; ++inst) {
            const auto a = sample_apuf(64, 700 + static_cast<std::uint64_t>(inst));
            for (int t = 0; t < 1500; ++t) {
                const PartialChallenge cob = random_bits(rng, 61);
                PatternVector flipped = pv;
                for (std::size_t i = 0; i < 3; ++i)
                    if (pv.insert_positions[i] == q_flip) flipped.insert_values[i] ^= 1;
                const auto phi_a = challenge_feature(expand_challenge(cob, pv, 64));
                const auto phi_b = challenge_feature(expand_challenge(cob, flipped, 64));
                changed += (a.omega.dot(phi_a) > 0) != (a.omega.dot(phi_b) > 0);
                ++total;
            }
        }
        return static_cast<double>(changed) / static_cast<double>(total);
    };

    auto predicted = [](int q, int k) {
        return std::acos(static_cast<double>(k + 1 - 2 * q) / (k + 1)) / M_PI;
    };

    CHECK(flip_rate(30) == doctest::Approx(predicted(30, 64)).epsilon(0.12));  // ~0.48
    CHECK(flip_rate(60) == doctest::Approx(predicted(60, 64)).epsilon(0.12));  // ~0.82
    CHECK(flip_rate(60) > flip_rate(30));
}

TEST_CASE("plain APUF models are learnable from direct CRPs") {
    Rng rng = make_rng(91);
    const auto apuf = sample_apuf(64, 600);
    Rng eval_rng = make_rng(0);

    auto crp_set = [&](std::size_t n) {
        std::pair<std::vector<Challenge>, std::vector<Bit>> out;
        for (std::size_t i = 0; i < n; ++i) {
            out.first.push_back(random_bits(rng, 64));
            out.second.push_back(eval_response(apuf, out.first.back(), false, eval_rng));
        }
        return out;
    };

    const auto [train, train_r] = crp_set(5000);
    const auto [test, test_r] = crp_set(2000);
    CmaesOptions opts;
    opts.generations = 300;
    const auto fit = attack_apuf_baseline(train, train_r, test, test_r, 92, opts);
    CHECK(fit.heldout_accuracy >= 0.95);

    SUBCASE("the generating model is perfect on its own CRPs") {
        const auto F = challenge_feature_matrix(train);
        const Eigen::VectorXd t = F * apuf.omega;
        for (Eigen::Index i = 0; i < t.size(); ++i)
            CHECK(((t[i] > 0) ? 1 : 0) == train_r[static_cast<std::size_t>(i)]);
    }

    SUBCASE("ten CRPs underdetermine the model") {
        const auto [tiny, tiny_r] = crp_set(10);
        CmaesOptions small;
        small.generations = 60;
        const auto weak = attack_apuf_baseline(tiny, tiny_r, test, test_r, 93, small);
        CHECK(weak.heldout_accuracy > 0.35);
        CHECK(weak.heldout_accuracy < 0.85);
    }
}

TEST_CASE("prediction accuracy oracle") {
    ObPufDevice dev = make_fixed_pattern_device(config(4, 4, 3, 0), 506);
    GenomeLayout layout{4, 64, 0, 61};
    auto test = build_prediction_test_set(dev, 2500, 95);

    const Eigen::VectorXd truth = true_genome(dev, layout);
    CHECK(eval_p_pred(truth, layout, dev.base_patterns, test) == doctest::Approx(1.0));
    CHECK(eval_p_pred_best_pattern(truth, layout, dev.base_patterns, test) ==
          doctest::Approx(1.0));

    const auto other = make_fixed_pattern_device(config(4, 4, 3, 0), 940);
    const double coin = eval_p_pred(true_genome(other, layout), layout, dev.base_patterns,
                                    test);
    CHECK(coin > 0.485);
    CHECK(coin < 0.515);

    SUBCASE("positive scaling changes no predicted bit") {
        const double base = eval_p_pred(truth, layout, dev.base_patterns, test);
        Eigen::VectorXd scaled = 3.7 * truth;
        CHECK(eval_p_pred(scaled, layout, dev.base_patterns, test) == doctest::Approx(base));
    }
}

TEST_CASE("scaling invariance of both fitness functions") {
    ObPufDevice dev = make_device(config(2, 2, 3, 2), 507);
    ServerModel server = enroll(dev, {});
    auto transcripts = collect(dev, server, 5, 50, 6);
    GenomeLayout layout{2, 64, 2, 61};
    FitnessEvaluator rec_eval(dataset_from_transcripts(dev.base_patterns, transcripts, true),
                              layout);
    FitnessEvaluator fix_eval(dataset_from_transcripts(dev.base_patterns, transcripts, false),
                              layout);

    const auto other = make_device(config(2, 2, 3, 2), 941);
    const Eigen::VectorXd g = true_genome(other, layout);
    const Eigen::VectorXd shrunk = 0.25 * g;
    const Eigen::VectorXd grown = 40.0 * g;
    CHECK(rec_eval.reconfigurable(g) == doctest::Approx(rec_eval.reconfigurable(shrunk)));
    CHECK(fix_eval.fixed(g) == doctest::Approx(fix_eval.fixed(grown)));

    SUBCASE("mismatched dataset and fitness flavors are rejected") {
        CHECK_THROWS_AS(rec_eval.fixed(g), std::logic_error);
        CHECK_THROWS_AS(fix_eval.reconfigurable(g), std::logic_error);
    }
}

TEST_CASE("negating one instance's weights flips exactly its bit") {
    const int k = 6;
    DeviceConfig cfg = config(3, 2, 1, 0);
    cfg.k = k;
    ObPufDevice dev = make_fixed_pattern_device(cfg, 508);
    GenomeLayout layout{3, k, 0, k - 1};
    const Eigen::VectorXd g = true_genome(dev, layout);
    Eigen::VectorXd negated = g;
    negated.segment(1 * (k + 1), k + 1) *= -1.0;  // second instance

    Rng rng = make_rng(96);
    for (std::uint32_t v = 0; v < (1u << (k - 1)); ++v) {
        PartialChallenge cob(static_cast<std::size_t>(k - 1));
        for (int i = 0; i < k - 1; ++i) cob[static_cast<std::size_t>(i)] = (v >> i) & 1;
        for (int j = 0; j < dev.p(); ++j) {
            const PatternVector pv = dev.session_pattern(j);
            const auto phi = challenge_feature(expand_challenge(cob, pv, k));
            for (int a = 0; a < 3; ++a) {
                const Bit rg = g.segment(a * (k + 1), k + 1).dot(phi) > 0 ? 1 : 0;
                const Bit rn = negated.segment(a * (k + 1), k + 1).dot(phi) > 0 ? 1 : 0;
                if (a == 1)
                    CHECK(rg != rn);
                else
                    CHECK(rg == rn);
            }
        }
    }
}

TEST_CASE("reconfigurable fitness rebuilds features per candidate, fixed does not") {
    ObPufDevice dev = make_device(config(2, 2, 3, 2), 509);
    ServerModel server = enroll(dev, {});
    auto transcripts = collect(dev, server, 4, 40, 7);

    const auto fixed_data = dataset_from_transcripts(dev.base_patterns, transcripts, false);
    const auto rec_data = dataset_from_transcripts(dev.base_patterns, transcripts, true);
    GenomeLayout layout{2, 64, 2, 61};
    FitnessEvaluator fixed_eval(fixed_data, layout);
    FitnessEvaluator rec_eval(rec_data, layout);
    const Eigen::VectorXd g = true_genome(dev, layout);

    const auto fixed_before = fixed_eval.stats().feature_builds;
    for (int i = 0; i < 10; ++i) fixed_eval.fixed(g);
    CHECK(fixed_eval.stats().feature_builds == fixed_before);  // cached once at build

    const auto rec_before = rec_eval.stats().feature_builds;
    for (int i = 0; i < 10; ++i) rec_eval.reconfigurable(g);
    const auto rebuilt = rec_eval.stats().feature_builds - rec_before;
    CHECK(rebuilt == 10ull * 4 * 40 * 2);  // evals * sessions * rounds * patterns
    CHECK(rebuilt > fixed_eval.stats().feature_builds);
}

TEST_CASE("campaign plumbing produces a sane report") {
    CampaignConfig cfg;
    cfg.family = "reconfigurable";
    cfg.n_ins = 2;
    cfg.p = 2;
    cfg.m = 3;
    cfg.xors = 2;
    cfg.sessions = 6;
    cfg.rounds = 60;
    cfg.generations = 8;
    cfg.test_crps = 1000;
    cfg.trace_p_pred = true;
    cfg.seed = 1234;
    const auto rep = run_attack_campaign(cfg);
    CHECK(rep.trace.size() == 8);
    CHECK(rep.p_pred_trace.size() == 8);
    CHECK(rep.p_pred > 0.3);
    CHECK(rep.p_pred <= 1.0);
    CHECK(rep.p_min == doctest::Approx(0.9025));
    CHECK(rep.wall_seconds > 0.0);

    // determinism of the primary outputs
    const auto rep2 = run_attack_campaign(cfg);
    CHECK(rep2.p_pred == rep.p_pred);
    CHECK(rep2.trace == rep.trace);
}

TEST_SUITE_END();
