#include "obpuf/apuf.hpp"

#include <cmath>
#include <stdexcept>

namespace obpuf {

Eigen::VectorXd challenge_feature(std::span<const Bit> c) {
    const auto k = static_cast<Eigen::Index>(c.size());
    Eigen::VectorXd phi(k + 1);
    phi[k] = 1.0;
    double acc = 1.0;
    for (Eigen::Index j = k - 1; j >= 0; --j) {
        acc *= c[static_cast<std::size_t>(j)] ? -1.0 : 1.0;
        phi[j] = acc;
    }
    return phi;
}

Eigen::MatrixXd challenge_feature_matrix(std::span<const Challenge> cs) {
    if (cs.empty()) return {};
    const auto k = static_cast<Eigen::Index>(cs[0].size());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(cs.size()), k + 1);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const auto& c = cs[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(c.size()) != k)
            throw std::invalid_argument("challenge_feature_matrix: ragged challenge lengths");
        out(r, k) = 1.0;
        double acc = 1.0;
        for (Eigen::Index j = k - 1; j >= 0; --j) {
            acc *= c[static_cast<std::size_t>(j)] ? -1.0 : 1.0;
            out(r, j) = acc;
        }
    }
    return out;
}

DelayVector omega_from_stage_delays(const Eigen::Matrix<double, Eigen::Dynamic, 4>& d) {
    const Eigen::Index k = d.rows();
    // Per-stage differential delays: uncrossed sigma0 = tt - bb,
    // crossed sigma1 = bt - tb.
    Eigen::VectorXd s0 = d.col(0) - d.col(1);
    Eigen::VectorXd s1 = d.col(2) - d.col(3);
    DelayVector w(k + 1);
    w[0] = 0.5 * (s0[0] - s1[0]);
    for (Eigen::Index i = 1; i < k; ++i)
        w[i] = 0.5 * (s0[i - 1] + s1[i - 1] + s0[i] - s1[i]);
    w[k] = 0.5 * (s0[k - 1] + s1[k - 1]);
    return w;
}

ApufInstance sample_apuf(int k, std::uint64_t seed, double noise_sigma) {
    if (k < 1) throw std::invalid_argument("sample_apuf: stage count must be >= 1");
    if (noise_sigma < 0) throw std::invalid_argument("sample_apuf: negative noise_sigma");
    ApufInstance a;
    a.stage_count = k;
    a.noise_sigma = noise_sigma;
    a.stage_delays.resize(k, 4);
    Rng rng = make_rng(derive_seed(seed, 0xa90full));
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) a.stage_delays(i, j) = std_normal(rng);
    a.omega = omega_from_stage_delays(a.stage_delays);
    return a;
}

double race_delay_difference(const ApufInstance& a, std::span<const Bit> c) {
    if (static_cast<int>(c.size()) != a.stage_count)
        throw std::invalid_argument("race_delay_difference: challenge length mismatch");
    double top = 0.0, bottom = 0.0;
    for (int i = 0; i < a.stage_count; ++i) {
        const auto& d = a.stage_delays;
        if (c[static_cast<std::size_t>(i)] == 0) {
            top += d(i, 0);
            bottom += d(i, 1);
        } else {
            const double new_top = bottom + d(i, 2);
            const double new_bottom = top + d(i, 3);
            top = new_top;
            bottom = new_bottom;
        }
    }
    return top - bottom;
}

double eval_delay(const ApufInstance& a, std::span<const Bit> c, double noise_draw) {
    if (static_cast<int>(c.size()) != a.stage_count)
        throw std::invalid_argument("eval_delay: challenge length mismatch");
    return a.omega.dot(challenge_feature(c)) + noise_draw;
}

Bit eval_response(const ApufInstance& a, std::span<const Bit> c, bool noisy, Rng& rng) {
    const double noise = noisy ? a.noise_sigma * std_normal(rng) : 0.0;
    return eval_delay(a, c, noise) > 0.0 ? 1 : 0;
}

Bit eval_xor_apuf(std::span<const ApufInstance> members, std::span<const Bit> c,
                  bool noisy, Rng& rng) {
    if (members.empty()) throw std::invalid_argument("eval_xor_apuf: empty member list");
    Bit out = 0;
    for (const auto& m : members) out ^= eval_response(m, c, noisy, rng);
    return out;
}

NoiseCalibration calibrate_noise(int k, double target_flip_rate, std::size_t trials,
                                 std::uint64_t seed) {
    if (!(target_flip_rate >= 0.0 && target_flip_rate < 0.5))
        throw std::invalid_argument("calibrate_noise: flip rate must be in [0, 0.5)");
    if (target_flip_rate == 0.0) return {0.0, 0.0, true};

    Rng rng = make_rng(derive_seed(seed, 0xca11b8ull));
    const std::size_t n_instances = std::min<std::size_t>(trials, 512);
    std::vector<DelayVector> omegas;
    omegas.reserve(n_instances);
    for (std::size_t i = 0; i < n_instances; ++i)
        omegas.push_back(sample_apuf(k, derive_seed(seed, 0x1057a9ce, i)).omega);

    // Frozen evaluation set: a noiseless delay plus two unit noise draws per
    // trial. The empirical flip rate for a candidate sigma is then a
    // deterministic, near-monotone function and bisection is stable.
    Eigen::VectorXd t(static_cast<Eigen::Index>(trials));
    Eigen::VectorXd e1(t.size()), e2(t.size());
    double scale = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const auto& w = omegas[static_cast<std::size_t>(i) % n_instances];
        Challenge c = random_bits(rng, static_cast<std::size_t>(k));
        t[i] = w.dot(challenge_feature(c));
        e1[i] = std_normal(rng);
        e2[i] = std_normal(rng);
        scale = std::max(scale, std::abs(t[i]));
    }

    auto flip_rate = [&](double sigma) {
        Eigen::Index flips = 0;
        for (Eigen::Index i = 0; i < t.size(); ++i)
            flips += ((t[i] + sigma * e1[i] > 0.0) != (t[i] + sigma * e2[i] > 0.0));
        return static_cast<double>(flips) / static_cast<double>(t.size());
    };

    double lo = 0.0, hi = 4.0 * scale;
    NoiseCalibration out;
    if (flip_rate(hi) < target_flip_rate) {
        out.sigma = hi;
        out.measured_flip_rate = flip_rate(hi);
        out.converged = false;
        return out;
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (flip_rate(mid) < target_flip_rate)
            lo = mid;
        else
            hi = mid;
    }
    out.sigma = 0.5 * (lo + hi);
    out.measured_flip_rate = flip_rate(out.sigma);
    out.converged =
        std::abs(out.measured_flip_rate - target_flip_rate) <= 0.10 * target_flip_rate;
    return out;
}

std::vector<Challenge> select_reliable_challenges(std::span<const ApufInstance> group,
                                                  std::size_t candidate_count,
                                                  double theta, Rng& rng) {
    if (theta < 0.0) throw std::invalid_argument("select_reliable_challenges: theta < 0");
    if (group.empty())
        throw std::invalid_argument("select_reliable_challenges: empty group");
    const auto k = static_cast<std::size_t>(group[0].stage_count);
    std::vector<Challenge> out;
    for (std::size_t i = 0; i < candidate_count; ++i) {
        Challenge c = random_bits(rng, k);
        const Eigen::VectorXd phi = challenge_feature(c);
        bool ok = true;
        for (const auto& m : group) {
            if (std::abs(m.omega.dot(phi)) < theta) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(std::move(c));
    }
    return out;
}

}  // namespace obpuf
