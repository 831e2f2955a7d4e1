#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "drmpc/ambiguity.hpp"
#include "drmpc/lti.hpp"
#include "drmpc/qp.hpp"
#include "drmpc/reform.hpp"

namespace drmpc {

/// Everything the receding-horizon loop needs besides the plant itself.
struct LoopConfig {
    int N = 5;            // prediction horizon
    int N_u = 1;          // policy update period
    int max_samples = 10; // cap on sample windows handed to the program
    double epsilon = 1.0;
    std::optional<RadiusSchedule> radius_schedule;  // overrides epsilon when set
    double confidence_beta = 0.05;                  // confidence level for the schedule

    std::vector<StateBound> bounds;
    CostWeights weights;
    Vector mu_step;     // per-step disturbance mean, length n_w
    Matrix sigma_step;  // per-step disturbance covariance, n_w x n_w
    PolytopeSupport window_support;  // support of the N-step window
    GroundNorm ground_norm = GroundNorm::L1;
    double delta_t = 0.1;
    SolverOptions solver;
    bool allow_full_horizon_update = false;  // permit N_u == N
};

/// Startup report on the rank precondition for recursive feasibility: the
/// full condition on the predicted-block rows of B_x, and the relaxed
/// per-element condition for separately constrained state entries.
struct FeasibilityPrecheck {
    bool full_rank_condition = false;
    int bx_rank = 0;
    int required_rank = 0;
    bool relaxed_condition = false;
};

FeasibilityPrecheck check_assumption_rank(const LtiSystem& sys, int N,
                                          const std::vector<StateBound>& bounds);

struct StepRecord {
    int k = 0;
    double time = 0.0;
    Vector x;      // plant state before the step
    Vector u;
    Vector v;      // purified output
    Vector w_hat;  // estimated disturbance
    bool solved = false;             // a program was solved this step
    bool policy_refreshed = false;   // ... and its policy installed
    SolveStatus status = SolveStatus::max_iter;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int n_samples_used = 0;
    double solve_ms = 0.0;
    KktResiduals kkt;
};

struct EpisodeLog {
    std::vector<StepRecord> records;
    int infeasible_solves = 0;    // failed solves after the first
    bool first_solve_failed = false;
    FeasibilityPrecheck precheck;
    double max_kkt = 0.0;  // across successful solves

    void to_csv(std::ostream& os, int n_x, int n_u, int n_y, int n_w) const;
    void save_csv(const std::string& path, int n_x, int n_u, int n_y, int n_w) const;
};

/// w = pinv(C) (x_next - A x - B u); requires C with full column rank.
Vector estimate_disturbance(const LtiSystem& sys, const Vector& x, const Vector& u,
                            const Vector& x_next);

/// Joint estimate from state evolution and the output residual,
/// w = pinv([C; E]) [x_next - A x - B u; y - D x]; covers plants whose C
/// alone is rank deficient but whose measurement channel sees the rest.
Vector estimate_disturbance_io(const LtiSystem& sys, const Vector& x, const Vector& u,
                               const Vector& y, const Vector& x_next);

/// The receding-horizon loop: re-solves the worst-case program every N_u
/// steps, applies purified-output feedback in between, and feeds estimated
/// disturbances back into the dataset.
class ClosedLoop {
public:
    ClosedLoop(LtiSystem sys, LoopConfig cfg, Vector x0, DisturbanceStore store);

    StepRecord step(const Vector& w_k);

    int k() const { return k_; }
    int t_law() const { return t_law_; }
    const Vector& plant_state() const { return x_; }
    const NominalState& nominal() const { return nominal_; }
    const std::vector<Vector>& purified_history() const { return purified_; }
    const DisturbanceStore& store() const { return store_; }
    const FeasibilityPrecheck& precheck() const { return precheck_; }
    bool has_policy() const { return policy_.has_value(); }
    const PobPolicy& policy() const;

private:
    LtiSystem sys_;
    LoopConfig cfg_;
    DisturbanceMoments moments_;
    DisturbanceStore store_;
    FeasibilityPrecheck precheck_;
    bool use_io_estimator_ = false;

    int k_ = 0;
    int t_law_ = 0;
    Vector x_;
    NominalState nominal_;
    std::vector<Vector> purified_;
    std::optional<PobPolicy> policy_;
    double last_objective_ = std::numeric_limits<double>::quiet_NaN();
};

/// Runs a full episode: the store is pre-seeded with `preseed` and the plant
/// driven by `disturbances`. Solver failures are logged and fall back to the
/// previous policy; they never abort the episode.
EpisodeLog run_episode(const LtiSystem& sys, const LoopConfig& cfg, const Vector& x0,
                       const std::vector<Vector>& preseed,
                       const std::vector<Vector>& disturbances);

}  // namespace drmpc
