#include <doctest.h>

#include <cmath>

#include "obpuf/apuf.hpp"

using namespace obpuf;

namespace {

ApufInstance instance_with_omega(std::vector<double> w) {
    ApufInstance a;
    a.stage_count = static_cast<int>(w.size()) - 1;
    a.stage_delays = Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(a.stage_count, 4);
    a.omega = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    return a;
}

}  // namespace

TEST_SUITE_BEGIN("apuf");

TEST_CASE("sampled instance has k+1 weights and is seed-deterministic") {
    const auto a = sample_apuf(64, 1);
    CHECK(a.omega.size() == 65);
    CHECK(a.stage_delays.rows() == 64);

    const auto b = sample_apuf(64, 1);
    CHECK(a.omega == b.omega);
    CHECK(a.stage_delays == b.stage_delays);

    const auto c = sample_apuf(64, 2);
    CHECK(a.omega != c.omega);

    CHECK_THROWS_AS(sample_apuf(0, 1), std::invalid_argument);
}

TEST_CASE("omega entries are zero-mean over many instances") {
    const int k = 64;
    const int trials = 10000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(k + 1);
    for (int i = 0; i < trials; ++i) mean += sample_apuf(k, 1000 + i).omega;
    mean /= trials;
    CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("challenge feature values") {
    CHECK(challenge_feature(from_string("0000")) == Eigen::VectorXd::Ones(5));

    const auto alt = challenge_feature(from_string("1111"));
    Eigen::VectorXd expect(5);
    expect << 1, -1, 1, -1, 1;
    CHECK(alt == expect);

    const auto mid = challenge_feature(from_string("010"));
    Eigen::VectorXd expect2(4);
    expect2 << -1, -1, 1, 1;
    CHECK(mid == expect2);
}

TEST_CASE("flipping challenge bit i negates feature entries up to i") {
    const int k = 8;
    Rng rng = make_rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Challenge c = random_bits(rng, k);
        const auto phi = challenge_feature(c);
        for (int i = 0; i < k; ++i) {
            Challenge flipped = c;
            flipped[static_cast<std::size_t>(i)] ^= 1;
            const auto phi2 = challenge_feature(flipped);
            for (int j = 0; j <= k; ++j) {
                if (j <= i)
                    CHECK(phi2[j] == -phi[j]);
                else
                    CHECK(phi2[j] == phi[j]);
            }
        }
    }
}

TEST_CASE("delay evaluation is the weight/feature inner product") {
    const auto a = instance_with_omega({0.5, 0, 0, 0, 0});
    CHECK(eval_delay(a, from_string("0000")) == doctest::Approx(0.5));

    const auto ones = instance_with_omega({1, 1, 1, 1, 1});
    CHECK(eval_delay(ones, from_string("0000")) == doctest::Approx(5.0));

    const auto b = sample_apuf(16, 9);
    Rng rng = make_rng(5);
    const Challenge c = random_bits(rng, 16);
    CHECK(eval_delay(b, c) == eval_delay(b, c));

    CHECK_THROWS_AS(eval_delay(b, from_string("01")), std::invalid_argument);
}

TEST_CASE("response is the delay sign with ties to zero") {
    Rng rng = make_rng(1);
    CHECK(eval_response(instance_with_omega({0.5, 0, 0, 0, 0}), from_string("0000"), false,
                        rng) == 1);
    CHECK(eval_response(instance_with_omega({-0.5, 0, 0, 0, 0}), from_string("0000"), false,
                        rng) == 0);
    CHECK(eval_response(instance_with_omega({0, 0, 0, 0, 0}), from_string("0000"), false,
                        rng) == 0);
}

TEST_CASE("xor group response") {
    Rng rng = make_rng(1);
    const Challenge c = from_string("0000");
    const auto pos = instance_with_omega({0.5, 0, 0, 0, 0});
    const auto neg = instance_with_omega({-0.5, 0, 0, 0, 0});

    std::vector<ApufInstance> one_zero{pos, neg};
    CHECK(eval_xor_apuf(one_zero, c, false, rng) == 1);
    std::vector<ApufInstance> one_one{pos, pos};
    CHECK(eval_xor_apuf(one_one, c, false, rng) == 0);
    std::vector<ApufInstance> single{neg};
    CHECK(eval_xor_apuf(single, c, false, rng) == eval_response(neg, c, false, rng));

    std::vector<ApufInstance> empty;
    CHECK_THROWS_AS(eval_xor_apuf(empty, c, false, rng), std::invalid_argument);
}

TEST_CASE("weight model matches the two-path race accumulation exhaustively") {
    for (int k = 2; k <= 6; ++k) {
        for (std::uint64_t seed = 40; seed < 44; ++seed) {
            const auto a = sample_apuf(k, seed);
            for (std::uint64_t v = 0; v < (1ULL << k); ++v) {
                Challenge c(static_cast<std::size_t>(k));
                for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = (v >> i) & 1;
                CHECK(eval_delay(a, c) == doctest::Approx(race_delay_difference(a, c))
                                              .epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("noiseless evaluation is deterministic") {
    const auto a = sample_apuf(64, 77);
    Rng rng = make_rng(3);
    const Challenge c = random_bits(rng, 64);
    const Bit first = eval_response(a, c, false, rng);
    for (int i = 0; i < 100; ++i) CHECK(eval_response(a, c, false, rng) == first);
}

TEST_CASE("responses are balanced over random instances and challenges") {
    Rng rng = make_rng(8);
    std::size_t ones = 0;
    const int instances = 2000, per_instance = 50;
    for (int i = 0; i < instances; ++i) {
        const auto a = sample_apuf(64, 5000 + static_cast<std::uint64_t>(i));
        for (int j = 0; j < per_instance; ++j)
            ones += eval_response(a, random_bits(rng, 64), false, rng);
    }
    const double frac = static_cast<double>(ones) / (instances * per_instance);
    CHECK(frac > 0.48);
    CHECK(frac < 0.52);
}

TEST_CASE("noise calibration hits the target repeat-disagreement rate") {
    CHECK(calibrate_noise(64, 0.0, 1000).sigma == 0.0);

    const auto cal = calibrate_noise(64, 0.05, 200000, 21);
    CHECK(cal.converged);

    // independent measurement with fresh instances, challenges and noise
    Rng rng = make_rng(22);
    std::size_t flips = 0;
    const std::size_t trials = 200000;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto a = sample_apuf(64, 31337 + t % 409, cal.sigma);
        const Challenge c = random_bits(rng, 64);
        flips += eval_response(a, c, true, rng) != eval_response(a, c, true, rng);
    }
    const double rate = static_cast<double>(flips) / static_cast<double>(trials);
    CHECK(rate > 0.045);
    CHECK(rate < 0.055);

    CHECK(calibrate_noise(64, 0.10, 100000, 21).sigma > cal.sigma);
}

TEST_CASE("reliable challenge selection") {
    Rng rng = make_rng(12);
    const auto cal = calibrate_noise(64, 0.05, 100000, 12);
    std::vector<ApufInstance> group;
    for (int i = 0; i < 2; ++i) group.push_back(sample_apuf(64, 900 + i, cal.sigma));

    SUBCASE("zero threshold keeps everything") {
        CHECK(select_reliable_challenges(group, 500, 0.0, rng).size() == 500);
    }

    SUBCASE("five-sigma challenges never flip in practice") {
        const double theta = 5.0 * cal.sigma;
        const auto selected = select_reliable_challenges(group, 1000, theta, rng);
        REQUIRE(selected.size() >= 100);
        std::size_t flips = 0;
        for (std::size_t i = 0; i < 100; ++i) {
            const auto& c = selected[i];
            for (const auto& a : group) {
                const Bit stable = eval_response(a, c, false, rng);
                for (int rep = 0; rep < 50; ++rep)
                    flips += eval_response(a, c, true, rng) != stable;
            }
        }
        CHECK(flips == 0);
    }

    SUBCASE("an unreachable threshold returns nothing") {
        CHECK(select_reliable_challenges(group, 10000, 1e3, rng).empty());
    }
}

TEST_SUITE_END();
