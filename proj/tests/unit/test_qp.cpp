#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <limits>

#include "drmpc/experiments.hpp"
#include "drmpc/qp.hpp"

using namespace drmpc;

namespace {

Matrix random_psd(Rng& rng, int n, double ridge) {
    Matrix M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = 2.0 * rng.uniform() - 1.0;
    return M.transpose() * M + ridge * Matrix::Identity(n, n);
}

Vector random_vector(Rng& rng, int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = 2.0 * rng.uniform() - 1.0;
    return v;
}

// Reference solution of a box-constrained QP by plain projected gradient
// descent. Deliberately slow and independent of the interior-point path.
double projected_gradient_objective(const Matrix& P, const Vector& q, const Vector& lo,
                                    const Vector& hi, long iterations) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(P, Eigen::EigenvaluesOnly);
    const double step = 1.0 / es.eigenvalues().maxCoeff();
    Vector z = Vector::Zero(q.size());
    for (long it = 0; it < iterations; ++it) {
        z = (z - step * (P * z + q)).cwiseMax(lo).cwiseMin(hi);
    }
    return 0.5 * z.dot(P * z) + q.dot(z);
}

}  // namespace

TEST_SUITE("qp") {

TEST_CASE("unconstrained minimum at the origin") {
    const int n = 3;
    QpResult res = solve(QpInstance::from_dense(Matrix::Identity(n, n), Vector::Zero(n),
                                                Matrix::Zero(0, n), Vector::Zero(0)));
    CHECK(res.status == SolveStatus::optimal);
    CHECK(res.z.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("single active bound with unit multiplier") {
    Matrix G(1, 1);
    G << -1.0;
    QpInstance inst = QpInstance::from_dense(Matrix::Identity(1, 1), Vector::Zero(1), G,
                                             Vector::Constant(1, -1.0));
    QpResult res = solve(inst, SolverOptions{.tol = 1e-10, .abs_tol = 1e-9});
    CHECK(res.status == SolveStatus::optimal);
    CHECK(res.z[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(res.ineq_duals[0] == doctest::Approx(1.0).epsilon(1e-7));

    // The exact primal-dual pair has vanishing residuals.
    KktResiduals exact = check_kkt(inst, Vector::Ones(1), Vector::Ones(1));
    CHECK(exact.max() <= 1e-12);
}

TEST_CASE("residuals grow linearly under primal perturbation") {
    Matrix G(1, 1);
    G << -1.0;
    QpInstance inst = QpInstance::from_dense(Matrix::Identity(1, 1), Vector::Zero(1), G,
                                             Vector::Constant(1, -1.0));
    KktResiduals r1 = check_kkt(inst, Vector::Constant(1, 1.0 + 1e-3), Vector::Ones(1));
    KktResiduals r2 = check_kkt(inst, Vector::Constant(1, 1.0 + 2e-3), Vector::Ones(1));
    CHECK(r1.stationarity == doctest::Approx(1e-3).epsilon(1e-9));
    CHECK(r2.stationarity == doctest::Approx(2e-3).epsilon(1e-9));
}

TEST_CASE("box instances match a projected-gradient reference") {
    Rng rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 10 + trial * 10;  // up to 30 variables, 60 rows
        Matrix P = random_psd(rng, n, 0.5);
        Vector q = 3.0 * random_vector(rng, n);
        Vector hi = Vector::Constant(n, 0.5);
        Vector lo = Vector::Constant(n, -0.5);
        Matrix G(2 * n, n);
        G.topRows(n) = Matrix::Identity(n, n);
        G.bottomRows(n) = -Matrix::Identity(n, n);
        Vector h(2 * n);
        h.head(n) = hi;
        h.tail(n) = -lo;

        QpResult res =
            solve(QpInstance::from_dense(P, q, G, h), SolverOptions{.tol = 1e-10, .abs_tol = 1e-8});
        REQUIRE(res.status == SolveStatus::optimal);
        const double reference = projected_gradient_objective(P, q, lo, hi, 1000000);
        CHECK(res.objective == doctest::Approx(reference).epsilon(1e-5));
        CHECK(res.kkt.max() <= 1e-6);
    }
}

TEST_CASE("contradictory rows yield a certified infeasibility") {
    Matrix G(2, 1);
    G << 1.0, -1.0;  // z <= 0 and z >= 1
    Vector h(2);
    h << 0.0, -1.0;
    QpResult res = solve(QpInstance::from_dense(Matrix::Identity(1, 1), Vector::Zero(1), G, h));
    REQUIRE(res.status == SolveStatus::primal_infeasible);
    REQUIRE(res.certificate.size() == 2);
    CHECK(res.certificate.minCoeff() >= 0.0);
    Vector ray = Matrix(G.transpose()) * res.certificate;
    CHECK(ray.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(h.dot(res.certificate) < -1e-8);
}

TEST_CASE("identical instances produce identical solutions") {
    Rng rng(17);
    const int n = 8;
    Matrix P = random_psd(rng, n, 0.1);
    Vector q = random_vector(rng, n);
    Matrix G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = 2.0 * rng.uniform() - 1.0;
    Vector h = Vector::Ones(n);
    QpInstance inst = QpInstance::from_dense(P, q, G, h);
    QpResult a = solve(inst);
    QpResult b = solve(inst);
    CHECK(a.status == b.status);
    CHECK(a.iterations == b.iterations);
    CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.ineq_duals - b.ineq_duals).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("argmin is invariant under positive rescaling") {
    Rng rng(27);
    const int n = 6;
    Matrix P = random_psd(rng, n, 0.3);
    Vector q = random_vector(rng, n);
    Matrix G(4, n);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = 2.0 * rng.uniform() - 1.0;
    Vector h = Vector::Ones(4);

    SolverOptions opts{.tol = 1e-10, .abs_tol = 1e-9};
    QpResult base = solve(QpInstance::from_dense(P, q, G, h), opts);
    REQUIRE(base.status == SolveStatus::optimal);

    QpResult cost_scaled = solve(QpInstance::from_dense(7.5 * P, 7.5 * q, G, h), opts);
    REQUIRE(cost_scaled.status == SolveStatus::optimal);
    CHECK((cost_scaled.z - base.z).cwiseAbs().maxCoeff() <= 1e-6);

    Vector row_scale(4);
    for (int i = 0; i < 4; ++i) row_scale[i] = 0.1 + 5.0 * rng.uniform();
    QpResult row_scaled = solve(
        QpInstance::from_dense(P, q, row_scale.asDiagonal() * G, row_scale.cwiseProduct(h)), opts);
    REQUIRE(row_scaled.status == SolveStatus::optimal);
    CHECK((row_scaled.z - base.z).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("equality constraints") {
    // min 1/2 z'z subject to z1 + z2 = 3: optimum at (1.5, 1.5).
    Matrix A(1, 2);
    A << 1.0, 1.0;
    QpInstance inst = QpInstance::from_dense(Matrix::Identity(2, 2), Vector::Zero(2),
                                             Matrix::Zero(0, 2), Vector::Zero(0), A,
                                             Vector::Constant(1, 3.0));
    QpResult res = solve(inst);
    CHECK(res.status == SolveStatus::optimal);
    CHECK(res.z[0] == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(res.z[1] == doctest::Approx(1.5).epsilon(1e-8));

    // Mixed equality + inequality: same problem with z1 <= 1 active.
    Matrix G(1, 2);
    G << 1.0, 0.0;
    QpInstance mixed = QpInstance::from_dense(Matrix::Identity(2, 2), Vector::Zero(2), G,
                                              Vector::Constant(1, 1.0), A, Vector::Constant(1, 3.0));
    QpResult res2 = solve(mixed, SolverOptions{.tol = 1e-10, .abs_tol = 1e-9});
    CHECK(res2.status == SolveStatus::optimal);
    CHECK(res2.z[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(res2.z[1] == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("reported residuals agree with an independent recheck") {
    Rng rng(37);
    const int n = 12;
    Matrix P = random_psd(rng, n, 0.2);
    Vector q = random_vector(rng, n);
    Matrix G(2 * n, n);
    G.topRows(n) = Matrix::Identity(n, n);
    G.bottomRows(n) = -Matrix::Identity(n, n);
    Vector h = Vector::Ones(2 * n);
    QpInstance inst = QpInstance::from_dense(P, q, G, h);
    QpResult res = solve(inst);
    REQUIRE(res.status == SolveStatus::optimal);
    KktResiduals re = check_kkt(inst, res.z, res.ineq_duals);
    CHECK(std::abs(re.stationarity - res.kkt.stationarity) <= 1e-10);
    CHECK(std::abs(re.primal - res.kkt.primal) <= 1e-10);
    CHECK(std::abs(re.complementarity - res.kkt.complementarity) <= 1e-10);
}

TEST_CASE("instance dump round-trips exactly") {
    Rng rng(47);
    const int n = 5;
    Matrix P = random_psd(rng, n, 0.1);
    Vector q = random_vector(rng, n);
    Matrix G(3, n);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = rng.uniform() < 0.4 ? 2.0 * rng.uniform() - 1.0 : 0.0;
    Vector h = random_vector(rng, 3);
    QpInstance inst = QpInstance::from_dense(P, q, G, h);

    const std::string path = (std::filesystem::temp_directory_path() / "roundtrip.qp").string();
    save_qp(inst, path);
    QpInstance loaded = load_qp(path);
    CHECK(Matrix(loaded.P - inst.P).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.q - inst.q).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Matrix(loaded.G - inst.G).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.h - inst.h).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("input validation") {
    Matrix asym(2, 2);
    asym << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS_AS(solve(QpInstance::from_dense(asym, Vector::Zero(2), Matrix::Zero(0, 2),
                                                 Vector::Zero(0))),
                    std::invalid_argument);
    Matrix nan_p = Matrix::Identity(2, 2);
    nan_p(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(solve(QpInstance::from_dense(nan_p, Vector::Zero(2), Matrix::Zero(0, 2),
                                                 Vector::Zero(0))),
                    std::invalid_argument);
}

}  // TEST_SUITE
