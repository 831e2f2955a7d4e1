#include "drmpc/lti.hpp"

#include <stdexcept>
#include <string>

namespace drmpc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

LtiSystem LtiSystem::create(Matrix A, Matrix B, Matrix C, Matrix D, Matrix E) {
    LtiSystem sys;
    sys.n_x = static_cast<int>(A.rows());
    sys.n_u = static_cast<int>(B.cols());
    sys.n_w = static_cast<int>(C.cols());
    sys.n_y = static_cast<int>(D.rows());

    require(sys.n_x > 0 && sys.n_u > 0 && sys.n_w > 0 && sys.n_y > 0,
            "LtiSystem: all dimensions must be positive");
    require(A.cols() == sys.n_x, "LtiSystem: A must be square");
    require(B.rows() == sys.n_x, "LtiSystem: B row count must equal n_x");
    require(C.rows() == sys.n_x, "LtiSystem: C row count must equal n_x");
    require(D.cols() == sys.n_x, "LtiSystem: D column count must equal n_x");
    require(E.rows() == sys.n_y && E.cols() == sys.n_w,
            "LtiSystem: E must be n_y x n_w");
    require(all_finite(A) && all_finite(B) && all_finite(C) && all_finite(D) && all_finite(E),
            "LtiSystem: matrices must be finite");

    sys.A = std::move(A);
    sys.B = std::move(B);
    sys.C = std::move(C);
    sys.D = std::move(D);
    sys.E = std::move(E);
    return sys;
}

void NominalState::reset(const LtiSystem& sys, const Vector& x) {
    require(x.size() == sys.n_x, "NominalState::reset: state dimension mismatch");
    xhat_ = x;
    yhat_ = sys.D * xhat_;
}

void NominalState::advance(const LtiSystem& sys, const Vector& u) {
    require(u.size() == sys.n_u, "NominalState::advance: input dimension mismatch");
    xhat_ = sys.A * xhat_ + sys.B * u;
    yhat_ = sys.D * xhat_;
}

PobPolicy PobPolicy::zero(int N, int n_u, int n_y) {
    require(N >= 1 && n_u >= 1 && n_y >= 1, "PobPolicy: dimensions must be positive");
    PobPolicy p;
    p.N = N;
    p.n_u = n_u;
    p.n_y = n_y;
    p.H = Matrix::Zero(N * n_u, 1 + N * n_y);
    return p;
}

bool PobPolicy::entry_is_free(int N, int n_u, int n_y, int r, int c) {
    (void)N;
    if (c == 0) return true;  // affine term
    const int t = r / n_u;
    const int tau = (c - 1) / n_y;
    return tau <= t;
}

PobPolicy PobPolicy::from_matrix(int N, int n_u, int n_y, Matrix H) {
    require(H.rows() == N * n_u && H.cols() == 1 + N * n_y,
            "PobPolicy: matrix must be N n_u x (1 + N n_y)");
    require(all_finite(H), "PobPolicy: entries must be finite");
    for (int r = 0; r < H.rows(); ++r) {
        for (int c = 0; c < H.cols(); ++c) {
            if (!entry_is_free(N, n_u, n_y, r, c)) {
                require(H(r, c) == 0.0, "PobPolicy: causality violated (nonzero above diagonal block)");
            }
        }
    }
    PobPolicy p;
    p.N = N;
    p.n_u = n_u;
    p.n_y = n_y;
    p.H = std::move(H);
    return p;
}

ExtendedDisturbance ExtendedDisturbance::from_sequence(const std::vector<Vector>& w_seq) {
    require(!w_seq.empty(), "ExtendedDisturbance: empty sequence");
    const int n_w = static_cast<int>(w_seq.front().size());
    Vector wt(1 + static_cast<int>(w_seq.size()) * n_w);
    wt(0) = 1.0;
    for (std::size_t i = 0; i < w_seq.size(); ++i) {
        require(w_seq[i].size() == n_w, "ExtendedDisturbance: inconsistent entry size");
        wt.segment(1 + static_cast<int>(i) * n_w, n_w) = w_seq[i];
    }
    return ExtendedDisturbance{std::move(wt)};
}

StackedHorizon build_stacked(const LtiSystem& sys, int N, const Vector& x0) {
    return build_stacked(sys, N, x0, Vector::Zero(sys.n_x));
}

StackedHorizon build_stacked(const LtiSystem& sys, int N, const Vector& x0,
                             const Vector& delta0) {
    require(N >= 1, "build_stacked: horizon must be >= 1");
    require(x0.size() == sys.n_x, "build_stacked: x0 dimension mismatch");
    require(delta0.size() == sys.n_x, "build_stacked: delta0 dimension mismatch");

    const int n_x = sys.n_x, n_u = sys.n_u, n_y = sys.n_y, n_w = sys.n_w;

    StackedHorizon st;
    st.N = N;
    st.n_x = n_x;
    st.n_u = n_u;
    st.n_y = n_y;
    st.n_w = n_w;

    // Powers A^0 .. A^N.
    std::vector<Matrix> Apow(N + 1);
    Apow[0] = Matrix::Identity(n_x, n_x);
    for (int t = 1; t <= N; ++t) Apow[t] = sys.A * Apow[t - 1];

    st.A_x = Matrix::Zero((N + 1) * n_x, n_x);
    st.B_x = Matrix::Zero((N + 1) * n_x, N * n_u);
    st.C_x = Matrix::Zero((N + 1) * n_x, N * n_w);
    for (int t = 0; t <= N; ++t) {
        st.A_x.block(t * n_x, 0, n_x, n_x) = Apow[t];
        for (int tau = 0; tau < t; ++tau) {
            st.B_x.block(t * n_x, tau * n_u, n_x, n_u) = Apow[t - 1 - tau] * sys.B;
            st.C_x.block(t * n_x, tau * n_w, n_x, n_w) = Apow[t - 1 - tau] * sys.C;
        }
    }

    st.A_y = Matrix::Zero(N * n_y, n_x);
    st.B_y = Matrix::Zero(N * n_y, N * n_u);
    st.C_y = Matrix::Zero(N * n_y, N * n_w);
    st.E_y = Matrix::Zero(N * n_y, N * n_w);
    for (int t = 0; t < N; ++t) {
        st.A_y.block(t * n_y, 0, n_y, n_x) = sys.D * Apow[t];
        for (int tau = 0; tau < t; ++tau) {
            st.B_y.block(t * n_y, tau * n_u, n_y, n_u) = sys.D * Apow[t - 1 - tau] * sys.B;
            st.C_y.block(t * n_y, tau * n_w, n_y, n_w) = sys.D * Apow[t - 1 - tau] * sys.C;
        }
        st.E_y.block(t * n_y, t * n_w, n_y, n_w) = sys.E;
    }

    st.Ctilde_x = Matrix::Zero((N + 1) * n_x, 1 + N * n_w);
    st.Ctilde_x.col(0) = st.A_x * x0;
    st.Ctilde_x.rightCols(N * n_w) = st.C_x;

    st.Ctilde_y = Matrix::Zero(1 + N * n_y, 1 + N * n_w);
    st.Ctilde_y.block(1, 0, N * n_y, 1) = st.A_y * delta0;
    st.Ctilde_y.block(1, 1, N * n_y, N * n_w) = st.C_y;

    st.Etilde_y = Matrix::Zero(1 + N * n_y, 1 + N * n_w);
    st.Etilde_y(0, 0) = 1.0;
    st.Etilde_y.block(1, 1, N * n_y, N * n_w) = st.E_y;

    return st;
}

Rollout rollout(const LtiSystem& sys, const Vector& x0,
                const std::vector<Vector>& u_seq,
                const std::vector<Vector>& w_seq) {
    require(x0.size() == sys.n_x, "rollout: x0 dimension mismatch");
    require(u_seq.size() == w_seq.size(), "rollout: input/disturbance length mismatch");

    Rollout out;
    out.states.reserve(u_seq.size() + 1);
    out.outputs.reserve(u_seq.size());
    Vector x = x0;
    out.states.push_back(x);
    for (std::size_t t = 0; t < u_seq.size(); ++t) {
        require(u_seq[t].size() == sys.n_u, "rollout: input dimension mismatch");
        require(w_seq[t].size() == sys.n_w, "rollout: disturbance dimension mismatch");
        out.outputs.push_back(sys.D * x + sys.E * w_seq[t]);
        x = sys.A * x + sys.B * u_seq[t] + sys.C * w_seq[t];
        out.states.push_back(x);
    }
    return out;
}

Vector purified_output(const Vector& y_observed, const NominalState& nominal) {
    require(y_observed.size() == nominal.yhat().size(),
            "purified_output: output dimension mismatch");
    return y_observed - nominal.yhat();
}

Vector apply_policy(const PobPolicy& policy, const std::vector<Vector>& purified_history,
                    int offset) {
    if (offset >= policy.N) throw std::out_of_range("apply_policy: offset beyond policy horizon");
    require(offset >= 0, "apply_policy: negative offset");
    require(static_cast<int>(purified_history.size()) == offset + 1,
            "apply_policy: history length must be offset + 1");

    Vector u = policy.affine_term(offset);
    for (int tau = 0; tau <= offset; ++tau) {
        require(purified_history[tau].size() == policy.n_y,
                "apply_policy: purified output dimension mismatch");
        u += policy.feedback_block(offset, tau) * purified_history[tau];
    }
    return u;
}

Matrix policy_to_disturbance_form(const PobPolicy& policy, const StackedHorizon& stacked) {
    require(policy.N == stacked.N && policy.n_u == stacked.n_u && policy.n_y == stacked.n_y,
            "policy_to_disturbance_form: policy/horizon shape mismatch");
    return policy.H * stacked.output_map();
}

}  // namespace drmpc
