#include <doctest.h>

#include <limits>
#include <random>

#include "drmpc/experiments.hpp"
#include "drmpc/lti.hpp"

using namespace drmpc;

namespace {

LtiSystem random_system(Rng& rng, int n_x, int n_u, int n_y, int n_w) {
    auto fill = [&](int r, int c) {
        Matrix m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = 2.0 * rng.uniform() - 1.0;
        return m;
    };
    return LtiSystem::create(fill(n_x, n_x), fill(n_x, n_u), fill(n_x, n_w), fill(n_y, n_x),
                             fill(n_y, n_w));
}

Vector random_vector(Rng& rng, int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = 2.0 * rng.uniform() - 1.0;
    return v;
}

PobPolicy random_causal_policy(Rng& rng, int N, int n_u, int n_y, double scale = 0.5) {
    Matrix H = Matrix::Zero(N * n_u, 1 + N * n_y);
    for (int r = 0; r < H.rows(); ++r)
        for (int c = 0; c < H.cols(); ++c)
            if (PobPolicy::entry_is_free(N, n_u, n_y, r, c))
                H(r, c) = scale * (2.0 * rng.uniform() - 1.0);
    return PobPolicy::from_matrix(N, n_u, n_y, H);
}

Vector stack_states(const std::vector<Vector>& xs) {
    const int n = static_cast<int>(xs.front().size());
    Vector out(static_cast<int>(xs.size()) * n);
    for (std::size_t i = 0; i < xs.size(); ++i) out.segment(static_cast<int>(i) * n, n) = xs[i];
    return out;
}

// Closed loop under the purified-output law, with the nominal model starting
// at xhat0. Returns stacked states and the applied inputs.
struct ClosedLoopRun {
    std::vector<Vector> states;
    std::vector<Vector> inputs;
};

ClosedLoopRun simulate_policy(const LtiSystem& sys, const PobPolicy& policy, const Vector& x0,
                              const Vector& xhat0, const std::vector<Vector>& w_seq) {
    ClosedLoopRun run;
    NominalState nominal(sys);
    nominal.reset(sys, xhat0);
    Vector x = x0;
    run.states.push_back(x);
    std::vector<Vector> history;
    for (std::size_t t = 0; t < w_seq.size(); ++t) {
        const Vector y = sys.D * x + sys.E * w_seq[t];
        history.push_back(purified_output(y, nominal));
        const Vector u = apply_policy(policy, history, static_cast<int>(t));
        run.inputs.push_back(u);
        x = sys.A * x + sys.B * u + sys.C * w_seq[t];
        nominal.advance(sys, u);
        run.states.push_back(x);
    }
    return run;
}

}  // namespace

TEST_SUITE("lti") {

TEST_CASE("scalar integrator input block") {
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    LtiSystem sys = LtiSystem::create(one, one, one, one, Matrix::Zero(1, 1));
    StackedHorizon st = build_stacked(sys, 2, Vector::Zero(1));
    Matrix expected(3, 2);
    expected << 0, 0, 1, 0, 1, 1;
    CHECK((st.B_x - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one step stacking") {
    Rng rng(11);
    LtiSystem sys = random_system(rng, 3, 2, 1, 2);
    StackedHorizon st = build_stacked(sys, 1, random_vector(rng, 3));
    CHECK((st.A_x.topRows(3) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.A_x.bottomRows(3) - sys.A).cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.C_x.topRows(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.C_x.bottomRows(3) - sys.C).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stacked prediction equals step rollout on the mass-spring plant") {
    Preset p = preset_mass_spring();
    Rng rng(21);
    const int N = 5;
    for (int trial = 0; trial < 100; ++trial) {
        const Vector x0 = random_vector(rng, 2);
        std::vector<Vector> u_seq, w_seq;
        for (int t = 0; t < N; ++t) {
            u_seq.push_back(random_vector(rng, 1));
            w_seq.push_back(random_vector(rng, 2));
        }
        StackedHorizon st = build_stacked(p.system, N, x0);
        Rollout roll = rollout(p.system, x0, u_seq, w_seq);
        Vector predicted = st.A_x * x0 + st.B_x * stack_states(u_seq) + st.C_x * stack_states(w_seq);
        CHECK((predicted - stack_states(roll.states)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("rollout basics") {
    const Matrix one = Matrix::Constant(1, 1, 1.0);
    LtiSystem sys = LtiSystem::create(Matrix::Constant(1, 1, 2.0), one, one, one, Matrix::Zero(1, 1));
    SUBCASE("equilibrium at the origin") {
        std::vector<Vector> zeros(4, Vector::Zero(1));
        Rollout r = rollout(sys, Vector::Zero(1), zeros, zeros);
        for (const auto& x : r.states) CHECK(x.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("single arithmetic step") {
        Rollout r = rollout(sys, Vector::Ones(1), {Vector::Zero(1)}, {Vector::Ones(1)});
        CHECK(r.states.back()[0] == doctest::Approx(3.0).epsilon(1e-15));
    }
}

TEST_CASE("rollout windows match stacked prediction on a random plant") {
    Rng rng(31);
    LtiSystem sys = random_system(rng, 4, 2, 2, 1);
    const Vector x0 = random_vector(rng, 4);
    std::vector<Vector> u_seq, w_seq;
    for (int t = 0; t < 20; ++t) {
        u_seq.push_back(random_vector(rng, 2));
        w_seq.push_back(random_vector(rng, 1));
    }
    Rollout r = rollout(sys, x0, u_seq, w_seq);
    const int N = 4;
    for (int k = 0; k + N <= 20; k += 3) {
        StackedHorizon st = build_stacked(sys, N, r.states[k]);
        std::vector<Vector> uw(u_seq.begin() + k, u_seq.begin() + k + N);
        std::vector<Vector> ww(w_seq.begin() + k, w_seq.begin() + k + N);
        Vector predicted = st.A_x * r.states[k] + st.B_x * stack_states(uw) + st.C_x * stack_states(ww);
        std::vector<Vector> window(r.states.begin() + k, r.states.begin() + k + N + 1);
        CHECK((predicted - stack_states(window)).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("purified output") {
    Rng rng(41);
    LtiSystem sys = random_system(rng, 3, 1, 2, 1);
    SUBCASE("plain subtraction") {
        LtiSystem scalar = LtiSystem::create(Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                                             Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                                             Matrix::Zero(1, 1));
        NominalState nominal(scalar);
        nominal.reset(scalar, Vector::Constant(1, 0.1));
        CHECK(purified_output(Vector::Constant(1, 0.3), nominal)[0] ==
              doctest::Approx(0.2).epsilon(1e-14));
    }
    SUBCASE("zero under exact model and no disturbance") {
        const Vector x0 = random_vector(rng, 3);
        NominalState nominal(sys);
        nominal.reset(sys, x0);
        Vector x = x0;
        for (int t = 0; t < 10; ++t) {
            const Vector u = random_vector(rng, 1);
            const Vector y = sys.D * x;
            CHECK(purified_output(y, nominal).cwiseAbs().maxCoeff() <= 1e-12);
            x = sys.A * x + sys.B * u;
            nominal.advance(sys, u);
        }
    }
    SUBCASE("matches the model-gap recursion") {
        const Vector x0 = random_vector(rng, 3);
        const Vector xhat0 = random_vector(rng, 3);
        NominalState nominal(sys);
        nominal.reset(sys, xhat0);
        Vector x = x0;
        Vector delta = x0 - xhat0;
        for (int t = 0; t < 12; ++t) {
            const Vector u = random_vector(rng, 1);
            const Vector w = random_vector(rng, 1);
            const Vector y = sys.D * x + sys.E * w;
            const Vector v = purified_output(y, nominal);
            CHECK((v - (sys.D * delta + sys.E * w)).cwiseAbs().maxCoeff() <= 1e-9);
            x = sys.A * x + sys.B * u + sys.C * w;
            delta = sys.A * delta + sys.C * w;
            nominal.advance(sys, u);
        }
    }
}

TEST_CASE("apply_policy") {
    Rng rng(51);
    const int N = 4, n_u = 2, n_y = 1;
    SUBCASE("affine term only under zero history") {
        PobPolicy policy = random_causal_policy(rng, N, n_u, n_y);
        std::vector<Vector> history;
        for (int t = 0; t < N; ++t) {
            history.push_back(Vector::Zero(n_y));
            CHECK((apply_policy(policy, history, t) - policy.affine_term(t)).cwiseAbs().maxCoeff() ==
                  0.0);
        }
    }
    SUBCASE("pure feedforward ignores disturbances") {
        Matrix H = Matrix::Zero(N * n_u, 1 + N * n_y);
        for (int r = 0; r < H.rows(); ++r) H(r, 0) = r + 1.0;
        PobPolicy policy = PobPolicy::from_matrix(N, n_u, n_y, H);
        std::vector<Vector> history;
        for (int t = 0; t < N; ++t) {
            history.push_back(random_vector(rng, n_y));
            const Vector u = apply_policy(policy, history, t);
            CHECK(u[0] == doctest::Approx(2.0 * t + 1.0));
            CHECK(u[1] == doctest::Approx(2.0 * t + 2.0));
        }
    }
    SUBCASE("errors") {
        PobPolicy policy = PobPolicy::zero(N, n_u, n_y);
        std::vector<Vector> history(N + 1, Vector::Zero(n_y));
        CHECK_THROWS_AS(apply_policy(policy, history, N), std::out_of_range);
        std::vector<Vector> short_history(1, Vector::Zero(n_y));
        CHECK_THROWS_AS(apply_policy(policy, short_history, 1), std::invalid_argument);
    }
}

TEST_CASE("disturbance-affine form reproduces the purified-output loop") {
    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        const int n_x = 1 + static_cast<int>(rng.uniform() * 3);
        const int n_u = 1 + static_cast<int>(rng.uniform() * 2);
        const int n_y = 1 + static_cast<int>(rng.uniform() * 2);
        const int n_w = 1 + static_cast<int>(rng.uniform() * 2);
        const int N = 2 + static_cast<int>(rng.uniform() * 4);
        LtiSystem sys = random_system(rng, n_x, n_u, n_y, n_w);
        PobPolicy policy = random_causal_policy(rng, N, n_u, n_y);
        const Vector x0 = random_vector(rng, n_x);
        std::vector<Vector> w_seq;
        for (int t = 0; t < N; ++t) w_seq.push_back(random_vector(rng, n_w));
        const Vector wt = ExtendedDisturbance::from_sequence(w_seq).wtilde;

        // Nominal reset at the plant state: the extended output map carries no
        // initial-state column.
        {
            StackedHorizon st = build_stacked(sys, N, x0);
            const Matrix Ht = policy_to_disturbance_form(policy, st);
            ClosedLoopRun run = simulate_policy(sys, policy, x0, x0, w_seq);
            const Vector x_pred = (st.B_x * Ht + st.Ctilde_x) * wt;
            const Vector u_pred = Ht * wt;
            CHECK((x_pred - stack_states(run.states)).cwiseAbs().maxCoeff() <= 1e-9);
            CHECK((u_pred - stack_states(run.inputs)).cwiseAbs().maxCoeff() <= 1e-9);
        }
        // Nominal pinned at the origin: the initial gap enters the output map.
        {
            StackedHorizon st = build_stacked(sys, N, x0, x0);
            const Matrix Ht = policy_to_disturbance_form(policy, st);
            ClosedLoopRun run = simulate_policy(sys, policy, x0, Vector::Zero(n_x), w_seq);
            const Vector x_pred = (st.B_x * Ht + st.Ctilde_x) * wt;
            CHECK((x_pred - stack_states(run.states)).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
}

TEST_CASE("memoryless plant turns purified outputs into delayed disturbances") {
    // With A = 0, D = I, E = 0 the purified output at step t is exactly the
    // previous disturbance, so the disturbance-feedback form is the policy's
    // feedback block shifted one step.
    Rng rng(65);
    const int n = 2, N = 2;
    Matrix B(n, 1);
    B << 0.3, -0.4;
    LtiSystem sys = LtiSystem::create(Matrix::Zero(n, n), B, Matrix::Identity(n, n),
                                      Matrix::Identity(n, n), Matrix::Zero(n, n));
    PobPolicy policy = random_causal_policy(rng, N, 1, n);
    StackedHorizon st = build_stacked(sys, N, Vector::Zero(n));
    Matrix Ht = policy_to_disturbance_form(policy, st);

    CHECK((Ht.col(0) - policy.H.col(0)).cwiseAbs().maxCoeff() <= 1e-15);
    for (int t = 0; t < N; ++t) {
        // Disturbance w_0 reaches the outputs at step 1, so its feedback
        // coefficient is the policy block at output index 1.
        Matrix expected = t >= 1 ? Matrix(policy.feedback_block(t, 1)) : Matrix::Zero(1, n);
        CHECK((Ht.block(t, 1, 1, n) - expected).cwiseAbs().maxCoeff() <= 1e-15);
        // No second disturbance block: w_1 is seen only after the horizon.
        CHECK(Ht.block(t, 1 + n, 1, n).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("zero policy maps to zero disturbance form") {
    Rng rng(71);
    LtiSystem sys = random_system(rng, 2, 1, 1, 1);
    StackedHorizon st = build_stacked(sys, 3, random_vector(rng, 2));
    CHECK(policy_to_disturbance_form(PobPolicy::zero(3, 1, 1), st).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("future disturbances never influence past inputs") {
    Rng rng(81);
    LtiSystem sys = random_system(rng, 3, 1, 2, 2);
    PobPolicy policy = random_causal_policy(rng, 6, 1, 2);
    const Vector x0 = random_vector(rng, 3);
    std::vector<Vector> w_seq;
    for (int t = 0; t < 6; ++t) w_seq.push_back(random_vector(rng, 2));
    ClosedLoopRun base = simulate_policy(sys, policy, x0, x0, w_seq);
    for (int s = 1; s < 6; ++s) {
        std::vector<Vector> perturbed = w_seq;
        perturbed[s] += Vector::Constant(2, 0.7);
        ClosedLoopRun run = simulate_policy(sys, policy, x0, x0, perturbed);
        for (int t = 0; t < s; ++t)
            CHECK((run.inputs[t] - base.inputs[t]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("no disturbance reduces the plant to the nominal model") {
    Rng rng(91);
    LtiSystem sys = random_system(rng, 3, 2, 1, 1);
    const Vector x0 = random_vector(rng, 3);
    NominalState nominal(sys);
    nominal.reset(sys, x0);
    Vector x = x0;
    for (int t = 0; t < 15; ++t) {
        const Vector u = random_vector(rng, 2);
        x = sys.A * x + sys.B * u + sys.C * Vector::Zero(1);
        nominal.advance(sys, u);
        CHECK((x - nominal.xhat()).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("construction guards") {
    CHECK_THROWS_AS(LtiSystem::create(Matrix::Zero(2, 3), Matrix::Zero(2, 1), Matrix::Zero(2, 1),
                                      Matrix::Zero(1, 2), Matrix::Zero(1, 1)),
                    std::invalid_argument);
    Matrix bad = Matrix::Zero(2, 3);  // feedback above the block diagonal
    bad(0, 2) = 1.0;
    CHECK_THROWS_AS(PobPolicy::from_matrix(2, 1, 1, bad), std::invalid_argument);
    Matrix nan_mat = Matrix::Zero(1, 1);
    nan_mat(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(LtiSystem::create(nan_mat, Matrix::Zero(1, 1), Matrix::Zero(1, 1),
                                      Matrix::Zero(1, 1), Matrix::Zero(1, 1)),
                    std::invalid_argument);
}

}  // TEST_SUITE
