#pragma once

#include <string>
#include <utility>
#include <vector>

#include "drmpc/ambiguity.hpp"
#include "drmpc/lti.hpp"
#include "drmpc/qp.hpp"

namespace drmpc {

/// Stage, terminal and input weights of the discounted quadratic cost.
struct CostWeights {
    Matrix Q;   // PSD, n_x x n_x
    Matrix Qf;  // PSD, n_x x n_x
    Matrix R;   // PD, n_u x n_u
    double discount = 1.0;  // in (0, 1]

    static CostWeights create(Matrix Q, Matrix Qf, Matrix R, double discount = 1.0);
};

/// First two moments of the stacked disturbance sequence (length N n_w).
struct DisturbanceMoments {
    Vector mu;
    Matrix Sigma;

    static DisturbanceMoments create(Vector mu, Matrix Sigma);
    /// Stacks i.i.d. per-step moments into block-diagonal sequence moments.
    static DisturbanceMoments iid(const Vector& mu_step, const Matrix& Sigma_step, int N);
};

enum class BoundDirection { upper, lower };

/// One scalar bound on a state entry, enforced in worst-case expectation at
/// every predicted step of the horizon.
struct StateBound {
    int state_index = 0;  // zero-based entry of the state vector
    BoundDirection direction = BoundDirection::upper;
    double value = 0.0;
};

struct CostBlocks {
    Matrix J_x;  // (N+1)n_x square, discounted stage + terminal weights
    Matrix J_u;  // N n_u square
};

CostBlocks build_cost_blocks(const CostWeights& weights, int N);

/// Indexing of the decision entries of the policy matrix: causality zeros are
/// excluded, the remaining entries are enumerated column-major.
struct PolicyStructure {
    int N = 0, n_u = 0, n_y = 0;
    std::vector<std::pair<int, int>> free_entries;  // (row, col) of H

    static PolicyStructure make(int N, int n_u, int n_y);

    int num_free() const { return static_cast<int>(free_entries.size()); }
    Matrix unpack(const Vector& v) const;
    Vector pack(const Matrix& H) const;
};

struct QuadraticObjective {
    Matrix P;  // over free policy entries, PSD
    Vector q;
    double constant = 0.0;
};

/// Expected discounted quadratic cost as a quadratic form in the free policy
/// entries: 1/2 v'Pv + q'v + constant equals Tr(M S) where M is the stacked
/// cost matrix of the policy and S the second-moment matrix of the extended
/// disturbance vector.
QuadraticObjective objective_quadratic(const StackedHorizon& stacked, const Matrix& J_x,
                                       const Matrix& J_u, const DisturbanceMoments& moments);

/// Offsets of the assembled decision vector [policy | lambda | s | gamma | aux]
/// and of the emitted constraint rows.
struct VariableLayout {
    int n_policy = 0;
    int n_bounds = 0;
    int n_samples = 0;
    int horizon = 0;
    int xi_dim = 0;    // length of a disturbance window (N n_w)
    int gamma_dim = 0; // rows of the support polytope
    int aux_dim = 0;   // nonzero only for the Linf ground norm

    int lambda_offset(int j) const { return n_policy + j; }
    int s_offset(int i, int j) const { return n_policy + n_bounds + j * n_samples + i; }
    int gamma_offset(int i, int j, int t) const {
        return gamma_base() + ((j * n_samples + i) * horizon + (t - 1)) * gamma_dim;
    }
    int aux_offset(int i, int j, int t) const {
        return aux_base() + ((j * n_samples + i) * horizon + (t - 1)) * aux_dim;
    }
    int gamma_base() const { return n_policy + n_bounds + n_bounds * n_samples; }
    int aux_base() const { return gamma_base() + n_bounds * n_samples * horizon * gamma_dim; }
    int total() const { return aux_base() + n_bounds * n_samples * horizon * aux_dim; }

    // Row bookkeeping. Rows are emitted per bound j as one budget row followed
    // by identical blocks for t = 1..N and, inside each t, sample i = 0..N_s-1:
    // the epigraph row, the dual-norm rows, then the gamma >= 0 rows.
    int dual_norm_rows() const { return aux_dim > 0 ? 2 * xi_dim + 1 : 2 * xi_dim; }
    int rows_per_sample_block() const { return 1 + dual_norm_rows() + gamma_dim; }
    int rows_per_bound() const { return 1 + horizon * n_samples * rows_per_sample_block(); }
    int budget_row(int j) const { return j * rows_per_bound(); }
    int sample_block_row(int i, int j, int t) const {
        return budget_row(j) + 1 + ((t - 1) * n_samples + i) * rows_per_sample_block();
    }
    int epigraph_row(int i, int j, int t) const { return sample_block_row(i, j, t); }
    int dual_norm_row(int i, int j, int t) const { return sample_block_row(i, j, t) + 1; }
    int gamma_nonneg_row(int i, int j, int t) const {
        return sample_block_row(i, j, t) + 1 + dual_norm_rows();
    }
    int total_rows() const { return n_bounds * rows_per_bound(); }
};

struct QpProblem {
    QpInstance instance;
    VariableLayout layout;
    PolicyStructure structure;
    double objective_constant = 0.0;
};

/// Full worst-case program: quadratic objective over the policy entries plus
/// the per-sample, per-step linear rows enforcing every state bound in
/// worst-case expectation over the Wasserstein ball.
QpProblem assemble(const StackedHorizon& stacked, const CostWeights& weights,
                   const DisturbanceMoments& moments, const std::vector<StateBound>& bounds,
                   const AmbiguitySet& ambiguity);

struct PolicySolution {
    PobPolicy policy;
    Vector lambda;  // one multiplier per bound
    Matrix s;       // n_samples x n_bounds
    double objective_value = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    KktResiduals kkt;
    int iterations = 0;
};

PolicySolution solve_policy(const QpProblem& problem, const SolverOptions& opts = {});

/// Affine pieces of a bound's constraint functional at a fixed policy:
/// piece t (t = 1..N) is l_t(xi) = a_t . xi + b_t selecting the bounded state
/// entry at predicted step t (rows are sign-flipped for lower bounds).
struct ConstraintPieces {
    Matrix a;  // N x (N n_w)
    Vector b;  // N
    double bound_value = 0.0;

    double evaluate(const Vector& xi) const;
};

ConstraintPieces constraint_pieces(const StackedHorizon& stacked, const StateBound& bound,
                                   const Matrix& Htilde);

/// Minimal feasible lambda*eps + mean_i(s_i) over the reformulated rows with
/// the policy held fixed; by strong duality this equals the worst-case
/// expectation of the constraint functional over the ball. Solved tighter
/// than the control-path default because it backs the validation checks.
double reformulation_constraint_value(
    const StackedHorizon& stacked, const StateBound& bound, const AmbiguitySet& ambiguity,
    const Matrix& Htilde,
    const SolverOptions& opts = SolverOptions{.tol = 1e-10, .abs_tol = 1e-9, .max_iter = 300});

struct OracleOptions {
    double tol = 1e-5;
    int max_golden_iters = 120;
    SolverOptions lp;
};

/// Worst-case expectation of the constraint functional over the ball,
/// evaluated from first principles: golden-section over the scalar dual
/// variable, with each inner supremum solved as a bounded linear program over
/// the support. Independent of the reformulation rows; validation oracle.
double worst_case_expectation_oracle(const StackedHorizon& stacked, const StateBound& bound,
                                     const AmbiguitySet& ambiguity, const Matrix& Htilde,
                                     const OracleOptions& opts = {});

/// Writes `prefix`.qp (triplet dump readable by load_qp) and `prefix`.json
/// (variable-layout header).
void dump_qp(const QpProblem& problem, const std::string& prefix);

}  // namespace drmpc
