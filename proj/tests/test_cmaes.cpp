#include <doctest.h>

#include <cmath>
#include <limits>

#include "obpuf/cmaes.hpp"

using namespace obpuf;

TEST_SUITE_BEGIN("cmaes");

TEST_CASE("sphere converges to machine-level minima") {
    CmaesOptions opts;
    opts.generations = 200;
    opts.sigma0 = 0.5;
    const auto res = cmaes_minimize(
        [](const Eigen::VectorXd& x) { return x.squaredNorm(); }, 10, 1, opts);
    CHECK(res.best_fitness < 1e-8);
    CHECK(res.trace.size() == 200);
}

TEST_CASE("a single generation returns the best of the first population") {
    CmaesOptions opts;
    opts.generations = 1;
    opts.population = 12;
    int evals = 0;
    const auto res = cmaes_minimize(
        [&](const Eigen::VectorXd& x) {
            ++evals;
            return (x.array() - 1.0).matrix().squaredNorm();
        },
        5, 2, opts);
    CHECK(evals == 12);
    CHECK(res.evaluations == 12);
    CHECK(res.trace.size() == 1);
    CHECK(res.trace[0] == res.best_fitness);
}

TEST_CASE("identical seeds give identical runs") {
    CmaesOptions opts;
    opts.generations = 40;
    const auto f = [](const Eigen::VectorXd& x) {
        double v = 0;
        for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
            v += 100 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1 - x[i], 2);
        return v;
    };
    const auto a = cmaes_minimize(f, 6, 33, opts);
    const auto b = cmaes_minimize(f, 6, 33, opts);
    CHECK(a.trace == b.trace);
    CHECK(a.best == b.best);

    const auto c = cmaes_minimize(f, 6, 34, opts);
    CHECK(a.trace != c.trace);
}

TEST_CASE("non-finite fitness values rank last instead of breaking the run") {
    CmaesOptions opts;
    opts.generations = 120;
    const auto res = cmaes_minimize(
        [](const Eigen::VectorXd& x) {
            if (x[0] < -0.5) return std::numeric_limits<double>::quiet_NaN();
            return (x.array() - 2.0).matrix().squaredNorm();
        },
        4, 3, opts);
    CHECK(std::isfinite(res.best_fitness));
    CHECK(res.best_fitness < 1e-4);
}

TEST_CASE("generation callback sees monotone best-so-far fitness") {
    CmaesOptions opts;
    opts.generations = 30;
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    opts.on_generation = [&](int, const Eigen::VectorXd&, double f) {
        monotone &= f <= prev;
        prev = f;
    };
    cmaes_minimize([](const Eigen::VectorXd& x) { return x.squaredNorm(); }, 8, 4, opts);
    CHECK(monotone);
}

TEST_CASE("argument validation") {
    CmaesOptions opts;
    CHECK_THROWS_AS(
        cmaes_minimize([](const Eigen::VectorXd&) { return 0.0; }, 0, 1, opts),
        std::invalid_argument);
    opts.generations = 0;
    CHECK_THROWS_AS(
        cmaes_minimize([](const Eigen::VectorXd&) { return 0.0; }, 3, 1, opts),
        std::invalid_argument);
}

TEST_SUITE_END();
