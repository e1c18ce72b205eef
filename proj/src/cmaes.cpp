#include "obpuf/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "obpuf/rng.hpp"

namespace obpuf {

CmaesResult cmaes_minimize(const Objective& objective, int dim, std::uint64_t seed,
                           const CmaesOptions& options) {
    if (dim < 1) throw std::invalid_argument("cmaes_minimize: dim must be >= 1");
    if (options.generations < 1)
        throw std::invalid_argument("cmaes_minimize: generations must be >= 1");

    const int lambda =
        options.population > 0 ? options.population : 4 + static_cast<int>(3.0 * std::log(dim));
    const int mu = lambda / 2;

    Eigen::VectorXd weights(mu);
    for (int i = 0; i < mu; ++i) weights[i] = std::log(mu + 0.5) - std::log(i + 1.0);
    weights /= weights.sum();
    const double mu_eff = 1.0 / weights.squaredNorm();

    const double n = dim;
    const double c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    const double d_sigma =
        1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma;
    const double c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    const double c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    const double c_mu = std::min(
        1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
    const double chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    Rng init_rng = make_rng(derive_seed(seed, 0xc3a35ull));
    Eigen::VectorXd mean(dim);
    for (int i = 0; i < dim; ++i) mean[i] = options.initial_spread * std_normal(init_rng);
    double sigma = options.sigma0;

    Eigen::VectorXd p_sigma = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd p_c = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd D = Eigen::VectorXd::Ones(dim);
    int last_eigen_eval = 0;
    int evaluations = 0;
    const double lazy_gap = std::max(1.0, 0.1 * n / ((c_1 + c_mu) * n * lambda));

    CmaesResult result;
    result.best_fitness = std::numeric_limits<double>::infinity();
    result.trace.reserve(static_cast<std::size_t>(options.generations));

    Eigen::MatrixXd Y(dim, lambda);
    std::vector<double> fitness(static_cast<std::size_t>(lambda));
    std::vector<int> order(static_cast<std::size_t>(lambda));

    for (int gen = 0; gen < options.generations; ++gen) {
        const Eigen::MatrixXd BD = B * D.asDiagonal();
        for (int i = 0; i < lambda; ++i) {
            Rng crng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(gen) + 1,
                                            static_cast<std::uint64_t>(i)));
            Eigen::VectorXd z(dim);
            for (int d = 0; d < dim; ++d) z[d] = std_normal(crng);
            Y.col(i) = BD * z;
            const Eigen::VectorXd x = mean + sigma * Y.col(i);
            double f = objective(x);
            if (!std::isfinite(f)) f = std::numeric_limits<double>::max();
            fitness[static_cast<std::size_t>(i)] = f;
            ++evaluations;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return fitness[static_cast<std::size_t>(a)] < fitness[static_cast<std::size_t>(b)];
        });

        const int ibest = order[0];
        if (fitness[static_cast<std::size_t>(ibest)] < result.best_fitness) {
            result.best_fitness = fitness[static_cast<std::size_t>(ibest)];
            result.best = mean + sigma * Y.col(ibest);
        }
        result.trace.push_back(result.best_fitness);
        if (options.on_generation)
            options.on_generation(gen, result.best, result.best_fitness);

        Eigen::VectorXd y_w = Eigen::VectorXd::Zero(dim);
        for (int i = 0; i < mu; ++i) y_w += weights[i] * Y.col(order[static_cast<std::size_t>(i)]);
        mean += sigma * y_w;

        const Eigen::MatrixXd C_inv_sqrt = B * D.cwiseInverse().asDiagonal() * B.transpose();
        p_sigma = (1.0 - c_sigma) * p_sigma +
                  std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) * (C_inv_sqrt * y_w);
        const double ps_norm = p_sigma.norm();
        const bool h_sigma =
            ps_norm / std::sqrt(1.0 - std::pow(1.0 - c_sigma, 2.0 * (gen + 1))) <
            (1.4 + 2.0 / (n + 1.0)) * chi_n;
        p_c = (1.0 - c_c) * p_c +
              (h_sigma ? std::sqrt(c_c * (2.0 - c_c) * mu_eff) : 0.0) * y_w;

        Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(dim, dim);
        for (int i = 0; i < mu; ++i) {
            const auto& y = Y.col(order[static_cast<std::size_t>(i)]);
            rank_mu.noalias() += weights[i] * (y * y.transpose());
        }
        C = (1.0 - c_1 - c_mu) * C +
            c_1 * (p_c * p_c.transpose() + (h_sigma ? 0.0 : c_c * (2.0 - c_c)) * C) +
            c_mu * rank_mu;

        sigma *= std::exp((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0));

        if (evaluations - last_eigen_eval > lazy_gap * lambda || gen + 1 == options.generations) {
            last_eigen_eval = evaluations;
            C = 0.5 * (C + C.transpose().eval());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
            Eigen::VectorXd ev = es.eigenvalues();
            const double floor_ev = std::max(ev.maxCoeff() * 1e-14, 1e-30);
            ev = ev.cwiseMax(floor_ev);  // repair: keep C positive definite
            D = ev.cwiseSqrt();
            B = es.eigenvectors();
        }
    }
    result.evaluations = evaluations;
    return result;
}

}  // namespace obpuf
