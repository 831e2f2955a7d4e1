#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "drmpc/ambiguity.hpp"
#include "drmpc/experiments.hpp"

using namespace drmpc;

namespace {

DiscreteDistribution random_distribution(Rng& rng, int points, int dim) {
    DiscreteDistribution d;
    Vector w(points);
    for (int i = 0; i < points; ++i) {
        Vector x(dim);
        for (int j = 0; j < dim; ++j) x[j] = 4.0 * rng.uniform() - 2.0;
        d.points.push_back(x);
        w[i] = 0.05 + rng.uniform();
    }
    d.weights = w / w.sum();
    return d;
}

}  // namespace

TEST_SUITE("ambiguity") {

TEST_CASE("sliding windows") {
    DisturbanceStore store(1);
    for (int k = 1; k <= 5; ++k) store.push(Vector::Constant(1, static_cast<double>(k)));

    SUBCASE("exactly one full window") {
        auto windows = window_samples(store, 5, 10);
        REQUIRE(windows.size() == 1);
        for (int t = 0; t < 5; ++t) CHECK(windows[0][t] == t + 1.0);
    }
    SUBCASE("stride one") {
        store.push(Vector::Constant(1, 6.0));
        auto windows = window_samples(store, 5, 10);
        REQUIRE(windows.size() == 2);
        CHECK(windows[0][0] == 1.0);
        CHECK(windows[0][4] == 5.0);
        CHECK(windows[1][0] == 2.0);
        CHECK(windows[1][4] == 6.0);
    }
    SUBCASE("cap keeps the most recent windows") {
        for (int k = 6; k <= 20; ++k) store.push(Vector::Constant(1, static_cast<double>(k)));
        auto windows = window_samples(store, 5, 10);
        REQUIRE(windows.size() == 10);
        CHECK(windows.back()[4] == 20.0);   // newest last
        CHECK(windows.front()[0] == 7.0);   // ten windows ending at 20
    }
    SUBCASE("too few records") {
        DisturbanceStore small(1);
        small.push(Vector::Zero(1));
        CHECK_THROWS_AS(window_samples(small, 5, 10), std::invalid_argument);
    }
}

TEST_CASE("store capacity evicts the oldest record") {
    DisturbanceStore store(1, 3);
    for (int k = 1; k <= 5; ++k) store.push(Vector::Constant(1, static_cast<double>(k)));
    REQUIRE(store.size() == 3);
    CHECK(store.records().front()[0] == 3.0);
    CHECK(store.records().back()[0] == 5.0);
}

TEST_CASE("store csv round trip") {
    DisturbanceStore store(2);
    Rng rng(5);
    for (int k = 0; k < 7; ++k) {
        Vector w(2);
        w << 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0;
        store.push(w);
    }
    const std::string path = (std::filesystem::temp_directory_path() / "store.csv").string();
    store.save_csv(path);

    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    CHECK(header == "w1,w2");
    is.close();

    DisturbanceStore loaded = DisturbanceStore::load_csv(path);
    REQUIRE(loaded.size() == store.size());
    for (std::size_t k = 0; k < store.size(); ++k)
        CHECK((loaded.records()[k] - store.records()[k]).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("box membership") {
    PolytopeSupport box = PolytopeSupport::box(3, 3.0);
    CHECK(box.contains(Vector::Zero(3)));
    Vector edge = Vector::Zero(3);
    edge[1] = 3.0;
    CHECK(box.contains(edge));
    edge[1] = 3.1;
    CHECK_FALSE(box.contains(edge));
}

TEST_CASE("sample windows are validated against the support") {
    PolytopeSupport box = PolytopeSupport::box(2, 1.0);
    CHECK_THROWS_AS(SampleWindow::checked(Vector::Constant(2, 1.5), box), std::invalid_argument);
    CHECK_THROWS_AS(AmbiguitySet::create({Vector::Constant(2, 1.5)}, box, 1.0, GroundNorm::L1),
                    std::invalid_argument);
    CHECK_THROWS_AS(AmbiguitySet::create({Vector::Zero(2)}, box, -1.0, GroundNorm::L1),
                    std::invalid_argument);
}

TEST_CASE("radius calibration") {
    RadiusSchedule sched{1.0, 1.0, 1.0, 2.0};
    const double beta = std::exp(-1.0);
    SUBCASE("branch boundary") { CHECK(calibrate_radius(sched, 1, beta) == doctest::Approx(1.0)); }
    SUBCASE("large-sample branch") {
        CHECK(calibrate_radius(sched, 4, beta) == doctest::Approx(0.5));
    }
    SUBCASE("monotone in samples and confidence") {
        RadiusSchedule s2{2.0, 0.7, 1.3, 2.0};
        for (double beta2 : {0.01, 0.05, 0.1, 0.3, 0.5}) {
            double prev = std::numeric_limits<double>::infinity();
            for (int ns = 1; ns <= 100; ++ns) {
                const double eps = calibrate_radius(s2, ns, beta2);
                CHECK(eps <= prev + 1e-12);
                prev = eps;
            }
        }
        for (int ns : {1, 10, 50}) {
            double prev = std::numeric_limits<double>::infinity();
            for (double beta2 : {0.01, 0.05, 0.1, 0.3, 0.5}) {
                const double eps = calibrate_radius(s2, ns, beta2);
                CHECK(eps <= prev + 1e-12);
                prev = eps;
            }
        }
    }
    SUBCASE("invalid confidence") {
        CHECK_THROWS_AS(calibrate_radius(sched, 1, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(calibrate_radius(sched, 1, 1.0), std::invalid_argument);
    }
}

TEST_CASE("transport distance basics") {
    Rng rng(3);
    SUBCASE("identity of indiscernibles") {
        DiscreteDistribution P = random_distribution(rng, 3, 2);
        CHECK(wasserstein_distance_discrete(P, P, GroundNorm::L1) <= 1e-12);
    }
    SUBCASE("two point masses") {
        DiscreteDistribution P{{Vector::Constant(2, 1.0)}, Vector::Ones(1)};
        DiscreteDistribution Q{{Vector::Constant(2, -1.0)}, Vector::Ones(1)};
        CHECK(wasserstein_distance_discrete(P, Q, GroundNorm::L1) == doctest::Approx(4.0));
        CHECK(wasserstein_distance_discrete(P, Q, GroundNorm::Linf) == doctest::Approx(2.0));
    }
    SUBCASE("two uniform pairs on the line") {
        DiscreteDistribution P{{Vector::Zero(1), Vector::Ones(1)}, Vector::Constant(2, 0.5)};
        DiscreteDistribution Q{{Vector::Constant(1, 0.5), Vector::Constant(1, 1.5)},
                               Vector::Constant(2, 0.5)};
        CHECK(wasserstein_distance_discrete(P, Q, GroundNorm::L1) == doctest::Approx(0.5));
    }
    SUBCASE("weight validation") {
        DiscreteDistribution P{{Vector::Zero(1)}, Vector::Constant(1, 0.9)};
        DiscreteDistribution Q{{Vector::Zero(1)}, Vector::Ones(1)};
        CHECK_THROWS_AS(wasserstein_distance_discrete(P, Q, GroundNorm::L1),
                        std::invalid_argument);
    }
}

TEST_CASE("transport distance is a metric on random triples") {
    Rng rng(13);
    for (int trial = 0; trial < 8; ++trial) {
        DiscreteDistribution P = random_distribution(rng, 2 + trial % 3, 2);
        DiscreteDistribution Q = random_distribution(rng, 2 + (trial + 1) % 3, 2);
        DiscreteDistribution R = random_distribution(rng, 2 + (trial + 2) % 3, 2);
        const double pq = wasserstein_distance_discrete(P, Q, GroundNorm::L1);
        const double qp = wasserstein_distance_discrete(Q, P, GroundNorm::L1);
        const double pr = wasserstein_distance_discrete(P, R, GroundNorm::L1);
        const double rq = wasserstein_distance_discrete(R, Q, GroundNorm::L1);
        CHECK(pq >= 0.0);
        CHECK(std::abs(pq - qp) <= 1e-9);
        CHECK(pq <= pr + rq + 1e-7);
    }
}

TEST_CASE("large supports agree with closed forms") {
    Rng rng(33);
    SUBCASE("one-dimensional distance equals the quantile coupling") {
        // On the line the optimal coupling is monotone, so the distance can be
        // computed by sweeping the pooled support and accumulating CDF gaps.
        for (int trial = 0; trial < 4; ++trial) {
            const int m = 6, n = 7;  // beyond the tree-enumeration limit
            DiscreteDistribution P = random_distribution(rng, m, 1);
            DiscreteDistribution Q = random_distribution(rng, n, 1);

            std::vector<std::pair<double, double>> events;  // (point, +dF)
            for (int i = 0; i < m; ++i) events.emplace_back(P.points[i][0], P.weights[i]);
            for (int j = 0; j < n; ++j) events.emplace_back(Q.points[j][0], -Q.weights[j]);
            std::sort(events.begin(), events.end());
            double cdf_gap = 0.0, expected = 0.0;
            for (std::size_t k = 0; k + 1 < events.size(); ++k) {
                cdf_gap += events[k].second;
                expected += std::abs(cdf_gap) * (events[k + 1].first - events[k].first);
            }
            const double actual = wasserstein_distance_discrete(P, Q, GroundNorm::L1);
            CHECK(actual == doctest::Approx(expected).epsilon(1e-6));
        }
    }
    SUBCASE("translation moves a distribution by exactly the shift length") {
        DiscreteDistribution P = random_distribution(rng, 6, 3);
        Vector shift(3);
        shift << 0.4, -0.7, 0.2;
        DiscreteDistribution Q = P;
        for (auto& x : Q.points) x += shift;
        CHECK(wasserstein_distance_discrete(P, Q, GroundNorm::L1) ==
              doctest::Approx(shift.lpNorm<1>()).epsilon(1e-6));
        CHECK(wasserstein_distance_discrete(P, Q, GroundNorm::Linf) ==
              doctest::Approx(shift.lpNorm<Eigen::Infinity>()).epsilon(1e-6));
    }
}

TEST_CASE("enumeration and linear-program routes agree") {
    Rng rng(23);
    for (int trial = 0; trial < 6; ++trial) {
        const int m = 3 + trial % 2;
        const int n = 4 - trial % 2;
        DiscreteDistribution P = random_distribution(rng, m, 3);
        DiscreteDistribution Q = random_distribution(rng, n, 3);
        Matrix cost(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) cost(i, j) = (P.points[i] - Q.points[j]).lpNorm<1>();
        const double by_trees = detail::emd_enumerate(cost, P.weights, Q.weights);
        const double by_lp = detail::emd_lp(cost, P.weights, Q.weights);
        CHECK(by_trees == doctest::Approx(by_lp).epsilon(1e-7));
    }
}

}  // TEST_SUITE
