#include "drmpc/loop.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace drmpc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

int matrix_rank(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::ColPivHouseholderQR<Matrix> qr(m);
    return static_cast<int>(qr.rank());
}

Vector pinv_solve(const Matrix& m, const Vector& rhs, const char* what) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(m);
    if (cod.rank() < m.cols())
        throw std::invalid_argument(std::string(what) + ": matrix is column rank deficient");
    return cod.solve(rhs);
}

}  // namespace

FeasibilityPrecheck check_assumption_rank(const LtiSystem& sys, int N,
                                          const std::vector<StateBound>& bounds) {
    FeasibilityPrecheck out;
    const StackedHorizon st = build_stacked(sys, N, Vector::Zero(sys.n_x));
    const Matrix bx_pred = st.B_x.bottomRows(N * sys.n_x);
    out.bx_rank = matrix_rank(bx_pred);
    out.required_rank = N * sys.n_x;
    out.full_rank_condition = out.bx_rank >= out.required_rank;

    // Relaxed condition: each constrained state row of A^t B nonzero at every
    // step, with one input per constrained entry available.
    std::set<int> constrained;
    for (const auto& b : bounds) constrained.insert(b.state_index);
    bool relaxed = sys.n_u >= static_cast<int>(constrained.size()) && !constrained.empty();
    Matrix At = Matrix::Identity(sys.n_x, sys.n_x);
    for (int t = 0; t < N && relaxed; ++t) {
        const Matrix AtB = At * sys.B;
        for (int m : constrained) {
            if (AtB.row(m).cwiseAbs().maxCoeff() <= 1e-12) {
                relaxed = false;
                break;
            }
        }
        At = sys.A * At;
    }
    out.relaxed_condition = relaxed;
    return out;
}

Vector estimate_disturbance(const LtiSystem& sys, const Vector& x, const Vector& u,
                            const Vector& x_next) {
    require(x.size() == sys.n_x && u.size() == sys.n_u && x_next.size() == sys.n_x,
            "estimate_disturbance: dimension mismatch");
    const Vector residual = x_next - sys.A * x - sys.B * u;
    return pinv_solve(sys.C, residual, "estimate_disturbance");
}

Vector estimate_disturbance_io(const LtiSystem& sys, const Vector& x, const Vector& u,
                               const Vector& y, const Vector& x_next) {
    require(x.size() == sys.n_x && u.size() == sys.n_u && x_next.size() == sys.n_x &&
                y.size() == sys.n_y,
            "estimate_disturbance_io: dimension mismatch");
    Matrix M(sys.n_x + sys.n_y, sys.n_w);
    M.topRows(sys.n_x) = sys.C;
    M.bottomRows(sys.n_y) = sys.E;
    Vector residual(sys.n_x + sys.n_y);
    residual.head(sys.n_x) = x_next - sys.A * x - sys.B * u;
    residual.tail(sys.n_y) = y - sys.D * x;
    return pinv_solve(M, residual, "estimate_disturbance_io");
}

ClosedLoop::ClosedLoop(LtiSystem sys, LoopConfig cfg, Vector x0, DisturbanceStore store)
    : sys_(std::move(sys)), cfg_(std::move(cfg)),
      moments_(DisturbanceMoments::iid(cfg_.mu_step, cfg_.sigma_step, cfg_.N)),
      store_(std::move(store)) {
    require(cfg_.N >= 1, "ClosedLoop: horizon must be positive");
    const int max_nu = cfg_.allow_full_horizon_update ? cfg_.N : cfg_.N - 1;
    require(cfg_.N_u >= 1 && (cfg_.N_u <= max_nu || cfg_.N == 1),
            "ClosedLoop: update period must lie in [1, N-1]");
    require(cfg_.max_samples >= 1, "ClosedLoop: max_samples must be positive");
    require(cfg_.epsilon >= 0.0, "ClosedLoop: radius must be nonnegative");
    require(x0.size() == sys_.n_x, "ClosedLoop: x0 dimension mismatch");
    require(store_.n_w() == sys_.n_w, "ClosedLoop: store dimension mismatch");
    require(cfg_.mu_step.size() == sys_.n_w, "ClosedLoop: per-step moments dimension mismatch");
    require(cfg_.window_support.dim() == cfg_.N * sys_.n_w,
            "ClosedLoop: support must cover the N-step window");
    for (const auto& b : cfg_.bounds)
        require(b.state_index >= 0 && b.state_index < sys_.n_x,
                "ClosedLoop: bound index out of range");

    // Disturbance estimator: state evolution alone when C spans the
    // disturbance space, otherwise jointly with the output residual.
    if (matrix_rank(sys_.C) == sys_.n_w) {
        use_io_estimator_ = false;
    } else {
        Matrix M(sys_.n_x + sys_.n_y, sys_.n_w);
        M.topRows(sys_.n_x) = sys_.C;
        M.bottomRows(sys_.n_y) = sys_.E;
        require(matrix_rank(M) == sys_.n_w,
                "ClosedLoop: disturbance is unobservable ([C; E] column rank deficient)");
        use_io_estimator_ = true;
    }

    precheck_ = check_assumption_rank(sys_, cfg_.N, cfg_.bounds);
    x_ = std::move(x0);
    nominal_ = NominalState(sys_);
    nominal_.reset(sys_, x_);
}

const PobPolicy& ClosedLoop::policy() const {
    if (!policy_) throw std::logic_error("ClosedLoop::policy: no policy installed yet");
    return *policy_;
}

StepRecord ClosedLoop::step(const Vector& w_k) {
    require(w_k.size() == sys_.n_w, "ClosedLoop::step: disturbance dimension mismatch");

    StepRecord rec;
    rec.k = k_;
    rec.time = k_ * cfg_.delta_t;
    rec.x = x_;

    if (k_ % cfg_.N_u == 0) {
        const auto t0 = std::chrono::steady_clock::now();
        const StackedHorizon stacked = build_stacked(sys_, cfg_.N, x_);
        const std::vector<Vector> windows = window_samples(store_, cfg_.N, cfg_.max_samples);
        const double eps = cfg_.radius_schedule
                               ? calibrate_radius(*cfg_.radius_schedule,
                                                  static_cast<int>(windows.size()),
                                                  cfg_.confidence_beta)
                               : cfg_.epsilon;
        const AmbiguitySet amb =
            AmbiguitySet::create(windows, cfg_.window_support, eps, cfg_.ground_norm);
        const QpProblem qp = assemble(stacked, cfg_.weights, moments_, cfg_.bounds, amb);
        const PolicySolution sol = solve_policy(qp, cfg_.solver);
        rec.solve_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        rec.solved = true;
        rec.status = sol.status;
        rec.n_samples_used = static_cast<int>(windows.size());
        rec.kkt = sol.kkt;

        if (sol.status == SolveStatus::optimal) {
            policy_ = sol.policy;
            t_law_ = k_;
            nominal_.reset(sys_, x_);
            purified_.clear();
            last_objective_ = sol.objective_value;
            rec.policy_refreshed = true;
        } else if (!policy_) {
            // No previous policy to fall back to; hold at zero input.
            policy_ = PobPolicy::zero(cfg_.N, sys_.n_u, sys_.n_y);
            t_law_ = k_;
            nominal_.reset(sys_, x_);
            purified_.clear();
        }
        // On failure with an existing policy: keep applying it, shifted.
    }
    rec.objective = last_objective_;

    const Vector y = sys_.D * x_ + sys_.E * w_k;
    const Vector v = purified_output(y, nominal_);
    purified_.push_back(v);
    rec.v = v;

    // Offset into the installed policy; a string of failed refreshes can run
    // past the horizon, in which case the newest window of outputs is used
    // with the last block.
    int offset = k_ - t_law_;
    std::vector<Vector> history;
    if (offset < cfg_.N) {
        history.assign(purified_.begin(), purified_.end());
    } else {
        offset = cfg_.N - 1;
        history.assign(purified_.end() - cfg_.N, purified_.end());
    }
    const Vector u = apply_policy(*policy_, history, offset);
    rec.u = u;

    const Vector x_next = sys_.A * x_ + sys_.B * u + sys_.C * w_k;
    nominal_.advance(sys_, u);

    const Vector w_hat = use_io_estimator_ ? estimate_disturbance_io(sys_, x_, u, y, x_next)
                                           : estimate_disturbance(sys_, x_, u, x_next);
    store_.push(w_hat);
    rec.w_hat = w_hat;

    x_ = x_next;
    ++k_;
    return rec;
}

EpisodeLog run_episode(const LtiSystem& sys, const LoopConfig& cfg, const Vector& x0,
                       const std::vector<Vector>& preseed,
                       const std::vector<Vector>& disturbances) {
    DisturbanceStore store(sys.n_w);
    for (const auto& w : preseed) store.push(w);

    ClosedLoop loop(sys, cfg, x0, std::move(store));

    EpisodeLog log;
    log.precheck = loop.precheck();
    log.records.reserve(disturbances.size());
    for (const auto& w : disturbances) {
        StepRecord rec = loop.step(w);
        if (rec.solved) {
            if (rec.status == SolveStatus::optimal) {
                log.max_kkt = std::max(log.max_kkt, rec.kkt.max());
            } else if (rec.k == 0) {
                log.first_solve_failed = true;
            } else {
                ++log.infeasible_solves;
            }
        }
        log.records.push_back(std::move(rec));
    }
    return log;
}

void EpisodeLog::to_csv(std::ostream& os, int n_x, int n_u, int n_y, int n_w) const {
    os << "time";
    for (int i = 1; i <= n_x; ++i) os << ",x" << i;
    for (int i = 1; i <= n_u; ++i) os << ",u" << i;
    for (int i = 1; i <= n_y; ++i) os << ",v" << i;
    for (int i = 1; i <= n_w; ++i) os << ",what" << i;
    os << ",objective,solver_status,solve_ms\n";

    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << ',' << buf;
    };
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.time);
        os << buf;
        for (int i = 0; i < n_x; ++i) put(r.x[i]);
        for (int i = 0; i < n_u; ++i) put(r.u[i]);
        for (int i = 0; i < n_y; ++i) put(r.v[i]);
        for (int i = 0; i < n_w; ++i) put(r.w_hat[i]);
        put(r.objective);
        os << ',' << (r.solved ? to_string(r.status) : "held");
        put(r.solve_ms);
        os << '\n';
    }
}

void EpisodeLog::save_csv(const std::string& path, int n_x, int n_u, int n_y, int n_w) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("EpisodeLog::save_csv: cannot open " + path);
    to_csv(os, n_x, n_u, n_y, n_w);
}

}  // namespace drmpc
