#pragma once

#include <Eigen/Dense>

#include <vector>

namespace drmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Discrete-time LTI plant with additive process and measurement disturbance:
///
///   x_{k+1} = A x_k + B u_k + C w_k
///   y_k     = D x_k + E w_k
///
/// All matrices are dense double precision; dimensions are validated once at
/// construction and assumed consistent everywhere else.
struct LtiSystem {
    Matrix A;  // n_x x n_x
    Matrix B;  // n_x x n_u
    Matrix C;  // n_x x n_w
    Matrix D;  // n_y x n_x
    Matrix E;  // n_y x n_w

    int n_x = 0;
    int n_u = 0;
    int n_y = 0;
    int n_w = 0;

    /// Validates mutual dimension consistency and finiteness of all entries.
    /// Throws std::invalid_argument on any violation.
    static LtiSystem create(Matrix A, Matrix B, Matrix C, Matrix D, Matrix E);
};

/// Undisturbed copy of the plant driven by the same inputs (x' = A x + B u,
/// y = D x). The gap between the measured output and this model's output is
/// the purified output fed to the feedback policy.
class NominalState {
public:
    NominalState() = default;
    explicit NominalState(const LtiSystem& sys)
        : xhat_(Vector::Zero(sys.n_x)), yhat_(sys.D * xhat_) {}

    /// Restart the model at a given state (used when a new policy is
    /// installed, so the purified outputs restart at zero).
    void reset(const LtiSystem& sys, const Vector& x);

    /// Advance one step with the applied input.
    void advance(const LtiSystem& sys, const Vector& u);

    const Vector& xhat() const { return xhat_; }
    const Vector& yhat() const { return yhat_; }

private:
    Vector xhat_;
    Vector yhat_;
};

/// Block matrices expressing the whole horizon as one linear map of the
/// initial state, the stacked inputs and the stacked disturbances:
///
///   x_[0:N]   = A_x x0 + B_x u_[0:N-1] + C_x w_[0:N-1]
///   y_[0:N-1] = A_y x0 + B_y u_[0:N-1] + (C_y + E_y) w_[0:N-1]
///
/// The tilde variants absorb the initial condition into an extended
/// disturbance vector wtilde = [1; w_[0:N-1]], so that
///
///   x_[0:N] = (B_x Htilde + Ctilde_x) wtilde,   Htilde = H (Ctilde_y + Etilde_y).
struct StackedHorizon {
    int N = 0;
    int n_x = 0, n_u = 0, n_y = 0, n_w = 0;

    Matrix A_x;  // (N+1)n_x x n_x, first block row is the identity
    Matrix B_x;  // (N+1)n_x x N n_u, strictly block lower triangular
    Matrix C_x;  // (N+1)n_x x N n_w
    Matrix A_y;  // N n_y x n_x
    Matrix B_y;  // N n_y x N n_u
    Matrix C_y;  // N n_y x N n_w
    Matrix E_y;  // N n_y x N n_w, block diagonal of E

    Matrix Ctilde_x;  // (N+1)n_x x (1 + N n_w), first column A_x x0
    Matrix Ctilde_y;  // (1 + N n_y) x (1 + N n_w), zero first row
    Matrix Etilde_y;  // (1 + N n_y) x (1 + N n_w), diag(1, E_y)

    /// Ctilde_y + Etilde_y, the map from wtilde to the extended purified
    /// output vector [1; v_[0:N-1]].
    Matrix output_map() const { return Ctilde_y + Etilde_y; }
};

/// Affine feedback on purified-output history:
///
///   u_t = h_t + sum_{tau=0..t} H_{t,tau} v_tau
///
/// stored as one matrix H of size N n_u x (1 + N n_y) whose first column
/// stacks the affine terms and whose remaining columns hold the feedback
/// blocks. Causality blocks H_{t,tau} with tau > t are structural zeros.
struct PobPolicy {
    int N = 0;
    int n_u = 0;
    int n_y = 0;
    Matrix H;  // N n_u x (1 + N n_y)

    /// Zero policy of the given shape.
    static PobPolicy zero(int N, int n_u, int n_y);

    /// Wraps an existing matrix; throws if the causality pattern is violated
    /// (any entry in a tau > t block nonzero) or any entry is not finite.
    static PobPolicy from_matrix(int N, int n_u, int n_y, Matrix H);

    /// True when entry (r, c) of H may be nonzero.
    static bool entry_is_free(int N, int n_u, int n_y, int r, int c);

    Vector affine_term(int t) const { return H.block(t * n_u, 0, n_u, 1); }
    Matrix feedback_block(int t, int tau) const {
        return H.block(t * n_u, 1 + tau * n_y, n_u, n_y);
    }
};

/// Extended disturbance vector wtilde = [1; w_0; ...; w_{N-1}].
struct ExtendedDisturbance {
    Vector wtilde;

    static ExtendedDisturbance from_sequence(const std::vector<Vector>& w_seq);
};

struct Rollout {
    std::vector<Vector> states;   // x_0 .. x_T
    std::vector<Vector> outputs;  // y_0 .. y_{T-1}
};

/// Builds the stacked-horizon matrices for horizon N and initial state x0.
///
/// delta0 is the initial gap between plant state and nominal-model state; it
/// feeds the lower-left block A_y delta0 of Ctilde_y. The closed loop resets
/// the nominal model to the plant state whenever a policy is installed, so
/// its gap is zero and the default applies. Passing delta0 = x0 recovers the
/// convention of a nominal model pinned at the origin.
StackedHorizon build_stacked(const LtiSystem& sys, int N, const Vector& x0);
StackedHorizon build_stacked(const LtiSystem& sys, int N, const Vector& x0,
                             const Vector& delta0);

/// Exact recursion of the plant over T = u_seq.size() steps.
Rollout rollout(const LtiSystem& sys, const Vector& x0,
                const std::vector<Vector>& u_seq,
                const std::vector<Vector>& w_seq);

/// v = y - yhat.
Vector purified_output(const Vector& y_observed, const NominalState& nominal);

/// Evaluates u_t for offset = t - k given the purified outputs v_k..v_t
/// collected since the policy was installed. Throws when offset >= N or the
/// history length does not match offset + 1.
Vector apply_policy(const PobPolicy& policy, const std::vector<Vector>& purified_history,
                    int offset);

/// Htilde = H (Ctilde_y + Etilde_y); substituting it into the stacked state
/// equation reproduces the closed loop driven by apply_policy.
Matrix policy_to_disturbance_form(const PobPolicy& policy, const StackedHorizon& stacked);

}  // namespace drmpc
