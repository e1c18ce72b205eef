#include "obpuf/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace obpuf {

double mean_pairwise_fhd(std::span<const BitVec> strings) {
    if (strings.size() < 2)
        throw std::invalid_argument("mean_pairwise_fhd: need at least two strings");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < strings.size(); ++a)
        for (std::size_t b = a + 1; b < strings.size(); ++b) {
            acc += fhd(strings[a], strings[b]);
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

double p_inter_analytic(const EstimatorInputs& in) {
    const double inner =
        static_cast<double>(in.n_mismatch + 1) * std::exp2(-in.n_ins);
    return std::pow(1.0 - inner, static_cast<double>(in.p) * in.p);
}

namespace {

double log_binom(int n, int i) {
    return std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
}

}  // namespace

double p_inter_analytic_corrected(const EstimatorInputs& in) {
    double inner = 0.0;
    for (int i = 0; i <= in.n_mismatch; ++i)
        inner += std::exp(log_binom(in.n_ins, i) - in.n_ins * std::log(2.0));
    return std::pow(1.0 - inner, static_cast<double>(in.p) * in.p);
}

double p_intra_analytic(const EstimatorInputs& in) {
    const double q = in.p_intra_puf;
    if (q == 0.0) return 0.0;
    double keep = 0.0;
    for (int i = 0; i <= in.n_mismatch; ++i)
        keep += std::exp(log_binom(in.n_ins, i) + (in.n_ins - i) * std::log1p(-q) +
                         i * std::log(q));
    return 1.0 - keep;
}

double p_min(const EstimatorInputs& in) { return 1.0 - p_intra_analytic(in); }

namespace {

// Lower tail P(X <= n_th) summed term by term in log space.
double binom_cdf(int n, int n_th, double p) {
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return n_th >= n ? 1.0 : 0.0;
    const double lp = std::log(p), lq = std::log1p(-p);
    double acc = 0.0;
    for (int i = 0; i <= n_th; ++i)
        acc += std::exp(log_binom(n, i) + i * lp + (n - i) * lq);
    return std::min(acc, 1.0);
}

// Upper tail P(X > n_th); summed directly so tiny tails keep precision.
double binom_sf(int n, int n_th, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return n_th >= n ? 0.0 : 1.0;
    const double lp = std::log(p), lq = std::log1p(-p);
    double acc = 0.0;
    for (int i = n_th + 1; i <= n; ++i)
        acc += std::exp(log_binom(n, i) + i * lp + (n - i) * lq);
    return std::min(acc, 1.0);
}

}  // namespace

double far(int n, int n_th, double p_inter) {
    if (n_th < 0 || n_th > n) throw std::invalid_argument("far: n_th out of range");
    return binom_cdf(n, n_th, p_inter);
}

double frr(int n, int n_th, double p_intra) {
    if (n_th < 0 || n_th > n) throw std::invalid_argument("frr: n_th out of range");
    return binom_sf(n, n_th, p_intra);
}

EerResult eer_search(int n, double p_inter, double p_intra) {
    if (!(p_intra < p_inter))
        throw std::invalid_argument("eer_search: estimators in degenerate order");
    auto pmf = [n](double p) {
        std::vector<double> out(static_cast<std::size_t>(n) + 1, 0.0);
        if (p <= 0.0) {
            out[0] = 1.0;
        } else if (p >= 1.0) {
            out[static_cast<std::size_t>(n)] = 1.0;
        } else {
            const double lp = std::log(p), lq = std::log1p(-p);
            for (int i = 0; i <= n; ++i)
                out[static_cast<std::size_t>(i)] =
                    std::exp(log_binom(n, i) + i * lp + (n - i) * lq);
        }
        return out;
    };
    const std::vector<double> pmf_inter = pmf(p_inter), pmf_intra = pmf(p_intra);
    // FRR(t) as a suffix sum, accumulated small-to-large so tiny tails keep
    // their precision.
    std::vector<double> frr_tail(static_cast<std::size_t>(n) + 2, 0.0);
    for (int t = n - 1; t >= 0; --t)
        frr_tail[static_cast<std::size_t>(t)] = frr_tail[static_cast<std::size_t>(t) + 1] +
                                                pmf_intra[static_cast<std::size_t>(t) + 1];
    EerResult best;
    best.eer = 2.0;
    double far_acc = 0.0;
    for (int t = 0; t <= n; ++t) {
        far_acc += pmf_inter[static_cast<std::size_t>(t)];
        const double v =
            std::max(std::min(far_acc, 1.0), frr_tail[static_cast<std::size_t>(t)]);
        if (v < best.eer) {  // strict: ties keep the smaller n_th
            best.eer = v;
            best.n_eer = t;
        }
    }
    return best;
}

CapabilityRow min_crps_for_eer(const EstimatorInputs& in, double target_eer) {
    if (!(target_eer > 0.0 && target_eer < 1.0))
        throw std::invalid_argument("min_crps_for_eer: target out of (0,1)");
    CapabilityRow row;
    row.config = in;
    row.target_eer = target_eer;
    const double pi = p_inter_analytic(in);
    const double pa = p_intra_analytic(in);
    if (!(pa < pi)) {
        row.reachable = false;
        return row;
    }

    auto eer_at = [&](int n) { return eer_search(n, pi, pa).eer; };

    int hi = 1;
    while (eer_at(hi) > target_eer) {
        hi *= 2;
        if (hi > 1 << 20) {
            row.reachable = false;
            return row;
        }
    }
    int lo = hi / 2;  // eer(lo) > target or lo == 0
    while (lo + 1 < hi) {
        const int mid = lo + (hi - lo) / 2;
        if (eer_at(mid) <= target_eer)
            hi = mid;
        else
            lo = mid;
    }
    // EER(n) ripples as the optimal integer threshold shifts, so the binary
    // boundary can sit above an earlier passing n. Scan the bracket for the
    // true smallest.
    for (int n = lo; n >= 1 && n > lo - std::max(64, lo / 4); --n)
        if (eer_at(n) <= target_eer) hi = n;

    row.n = hi;
    const auto res = eer_search(hi, pi, pa);
    row.n_eer = res.n_eer;
    row.log10_far = std::log10(std::max(far(hi, res.n_eer, pi), 1e-300));
    row.log10_frr = std::log10(std::max(frr(hi, res.n_eer, pa), 1e-300));
    return row;
}

std::span<const ReferencePoint> reference_capability_table() {
    static const std::array<ReferencePoint, 21> table = {{
        {{2, 2, 0, 0.05}, 1e-6, 294, 57, -6.06, -6.06},
        {{2, 2, 0, 0.05}, 1e-9, 465, 90, -9.02, -9.06},
        {{2, 2, 0, 0.05}, 1e-12, 641, 124, -12.02, -12.13},
        {{4, 2, 0, 0.05}, 1e-6, 219, 46, -6.05, -6.01},
        {{4, 2, 0, 0.05}, 1e-9, 348, 73, -9.01, -9.05},
        {{4, 2, 0, 0.05}, 1e-12, 478, 100, -12.03, -12.00},
        {{4, 4, 0, 0.05}, 1e-6, 599, 159, -6.06, -6.02},
        {{4, 4, 0, 0.05}, 1e-9, 950, 252, -9.04, -9.01},
        {{4, 4, 0, 0.05}, 1e-12, 1308, 347, -12.03, -12.06},
        {{8, 4, 0, 0.05}, 1e-6, 42, 30, -6.14, -6.19},
        {{8, 4, 0, 0.05}, 1e-9, 68, 48, -9.49, -9.25},
        {{8, 4, 0, 0.05}, 1e-12, 92, 65, -12.15, -12.27},
        {{8, 4, 1, 0.05}, 1e-6, 58, 15, -6.22, -6.19},
        {{8, 4, 1, 0.05}, 1e-9, 90, 23, -9.14, -9.02},
        {{8, 4, 1, 0.05}, 1e-12, 125, 32, -12.15, -12.27},
        {{16, 4, 0, 0.05}, 1e-6, 39, 36, -7.71, -6.13},
        {{16, 4, 0, 0.05}, 1e-9, 57, 53, -9.17, -9.14},
        {{16, 4, 0, 0.05}, 1e-12, 79, 73, -12.64, -12.04},
        {{16, 4, 1, 0.05}, 1e-6, 15, 12, -6.43, -6.27},
        {{16, 4, 1, 0.05}, 1e-9, 24, 19, -9.22, -9.54},
        {{16, 4, 1, 0.05}, 1e-12, 32, 25, -12.11, -12.16},
    }};
    return table;
}

DistanceEstimates empirical_distances(const DeviceConfig& cfg, std::size_t trials,
                                      int n_mismatch, std::uint64_t seed,
                                      double intra_puf_target) {
    DistanceEstimates est;
    Rng rng = make_rng(derive_seed(seed, 0xd157ull));

    // A pool of devices sharing one pattern design; intra-noise calibrated so
    // two repeated evaluations of a bit disagree at intra_puf_target.
    DeviceConfig dc = cfg;
    if (dc.noise_sigma == 0.0 && intra_puf_target > 0.0)
        dc.noise_sigma =
            calibrate_noise(cfg.k, intra_puf_target, 200000, derive_seed(seed, 0xca1ull))
                .sigma;
    const auto design =
        design_pattern_set(dc.k, dc.m, dc.p, dc.n_ins, derive_seed(seed, 0xde51ull), 32);
    const int n_devices = 256;
    std::vector<ObPufDevice> devices;
    devices.reserve(n_devices);
    for (int i = 0; i < n_devices; ++i)
        devices.push_back(make_device_with_patterns(design.set, 0, dc.noise_sigma,
                                                    derive_seed(seed, 0xdeull, i), true));

    est.inter_histogram.assign(static_cast<std::size_t>(dc.n_ins) + 1, 0);
    est.intra_histogram.assign(static_cast<std::size_t>(dc.n_ins) + 1, 0);

    std::size_t inter_hits = 0, intra_hits = 0, single_hits = 0;
    const int p = dc.p;
    for (std::size_t t = 0; t < trials; ++t) {
        const PartialChallenge cob = random_bits(rng, static_cast<std::size_t>(dc.k - dc.m));

        // intra: same device, same full challenge (pattern index pinned),
        // two independent noisy evaluations
        {
            auto& dev = devices[t % devices.size()];
            const int idx = choose_pattern_index(rng, p);
            const auto r1 = ob_puf_eval_with_pattern(dev, cob, idx, rng, true);
            const auto r2 = ob_puf_eval_with_pattern(dev, cob, idx, rng, true);
            const auto d = hd(r1.obfuscated_response, r2.obfuscated_response);
            est.intra_histogram[d]++;
            intra_hits += d > static_cast<std::size_t>(n_mismatch);
        }

        // inter: two distinct devices, same partial challenge, noiseless
        {
            const std::size_t a = uniform_index(rng, devices.size());
            std::size_t b = uniform_index(rng, devices.size() - 1);
            if (b >= a) ++b;
            std::vector<BitVec> ra, rb;
            for (int j = 0; j < p; ++j) {
                ra.push_back(
                    ob_puf_eval_with_pattern(devices[a], cob, j, rng, false).obfuscated_response);
                rb.push_back(
                    ob_puf_eval_with_pattern(devices[b], cob, j, rng, false).obfuscated_response);
            }
            bool all_differ = true;
            std::size_t min_d = static_cast<std::size_t>(dc.n_ins);
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) {
                    const auto d = hd(ra[static_cast<std::size_t>(i)],
                                      rb[static_cast<std::size_t>(j)]);
                    min_d = std::min(min_d, d);
                    if (d <= static_cast<std::size_t>(n_mismatch)) all_differ = false;
                }
            est.inter_histogram[min_d]++;
            inter_hits += all_differ;
            const int ia = choose_pattern_index(rng, p), ib = choose_pattern_index(rng, p);
            single_hits += hd(ra[static_cast<std::size_t>(ia)],
                              rb[static_cast<std::size_t>(ib)]) >
                           static_cast<std::size_t>(n_mismatch);
        }
    }

    const auto n = static_cast<double>(trials);
    est.p_inter_all_pairs = static_cast<double>(inter_hits) / n;
    est.p_inter_single = static_cast<double>(single_hits) / n;
    est.p_intra = static_cast<double>(intra_hits) / n;
    est.intra_ci_halfwidth = 1.96 * std::sqrt(est.p_intra * (1 - est.p_intra) / n);
    est.inter_ci_halfwidth =
        1.96 * std::sqrt(est.p_inter_all_pairs * (1 - est.p_inter_all_pairs) / n);

    EstimatorInputs in{dc.n_ins, dc.p, n_mismatch, 0.05};
    const double printed = p_inter_analytic(in);
    const double corrected = p_inter_analytic_corrected(in);
    est.better_inter_variant =
        std::abs(est.p_inter_all_pairs - printed) <= std::abs(est.p_inter_all_pairs - corrected)
            ? "printed"
            : "corrected";
    return est;
}

}  // namespace obpuf
