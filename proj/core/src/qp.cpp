#include "drmpc/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace drmpc {

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::primal_infeasible: return "primal_infeasible";
        case SolveStatus::max_iter: return "max_iter";
    }
    return "unknown";
}

double KktResiduals::max() const {
    return std::max(stationarity, std::max(primal, complementarity));
}

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double max_abs(const SparseMat& m) {
    double v = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMat::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
    return v;
}

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool sparse_finite(const SparseMat& m) {
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMat::InnerIterator it(m, k); it; ++it)
            if (!std::isfinite(it.value())) return false;
    return true;
}

}  // namespace

QpInstance QpInstance::from_dense(const Matrix& P, const Vector& q,
                                  const Matrix& G, const Vector& h) {
    return from_dense(P, q, G, h, Matrix(0, q.size()), Vector(0));
}

QpInstance QpInstance::from_dense(const Matrix& P, const Vector& q,
                                  const Matrix& G, const Vector& h,
                                  const Matrix& A, const Vector& b) {
    QpInstance inst;
    inst.P = P.sparseView();
    inst.q = q;
    inst.G = G.sparseView();
    inst.h = h;
    inst.A = A.sparseView();
    inst.b = b;
    inst.validate();
    return inst;
}

void QpInstance::validate() const {
    const int n = num_vars();
    require(n > 0, "QpInstance: empty variable vector");
    require(P.rows() == n && P.cols() == n, "QpInstance: P must be n x n");
    require(G.cols() == n && G.rows() == h.size(), "QpInstance: G/h dimension mismatch");
    require(A.cols() == n && A.rows() == b.size(), "QpInstance: A/b dimension mismatch");
    require(q.allFinite() && h.allFinite() && b.allFinite(), "QpInstance: NaN/Inf in data");
    require(sparse_finite(P) && sparse_finite(G) && sparse_finite(A),
            "QpInstance: NaN/Inf in data");

    SparseMat Pt = SparseMat(P.transpose());
    SparseMat diff = P - Pt;
    const double asym = max_abs(diff);
    require(asym <= 1e-12 * (1.0 + max_abs(P)), "QpInstance: P is not symmetric");
}

KktResiduals check_kkt(const QpInstance& inst, const Vector& z, const Vector& ineq_duals) {
    return check_kkt(inst, z, ineq_duals, Vector(0));
}

KktResiduals check_kkt(const QpInstance& inst, const Vector& z, const Vector& ineq_duals,
                       const Vector& eq_duals) {
    require(z.size() == inst.num_vars(), "check_kkt: z dimension mismatch");
    require(ineq_duals.size() == inst.num_ineq(), "check_kkt: dual dimension mismatch");

    Vector grad = inst.P * z + inst.q;
    if (inst.num_ineq() > 0) grad += inst.G.transpose() * ineq_duals;
    if (eq_duals.size() > 0) {
        require(eq_duals.size() == inst.num_eq(), "check_kkt: eq dual dimension mismatch");
        grad += inst.A.transpose() * eq_duals;
    }

    KktResiduals r;
    r.stationarity = inf_norm(grad);
    if (inst.num_ineq() > 0) {
        Vector slack_violation = (inst.G * z - inst.h).cwiseMax(0.0);
        r.primal = inf_norm(slack_violation);
        Vector comp = ineq_duals.cwiseProduct(inst.G * z - inst.h);
        r.complementarity = inf_norm(comp);
    }
    if (inst.num_eq() > 0) {
        r.primal = std::max(r.primal, inf_norm(inst.A * z - inst.b));
    }
    return r;
}

namespace {

// Sparse LDL' of the quasi-definite augmented KKT matrix
//
//   [ P + dI   A'      G'     ]
//   [ A       -dI      0      ]
//   [ G        0      -W - dI ]
//
// with W = diag(s ./ lambda) refreshed every interior-point iteration. The
// pattern is fixed, so symbolic analysis runs once and only the numeric
// factor is recomputed.
class KktSolver {
public:
    KktSolver(const QpInstance& inst, double static_reg)
        : inst_(inst),
          n_(inst.num_vars()),
          p_(inst.num_eq()),
          m_(inst.num_ineq()),
          reg_(static_reg) {
        const int dim = n_ + p_ + m_;
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(inst.P.nonZeros() + 2 * inst.A.nonZeros() + 2 * inst.G.nonZeros() + dim);

        for (int k = 0; k < inst.P.outerSize(); ++k)
            for (SparseMat::InnerIterator it(inst.P, k); it; ++it)
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                   it.value());
        for (int k = 0; k < inst.A.outerSize(); ++k)
            for (SparseMat::InnerIterator it(inst.A, k); it; ++it) {
                const int r = n_ + static_cast<int>(it.row());
                const int c = static_cast<int>(it.col());
                trips.emplace_back(r, c, it.value());
                trips.emplace_back(c, r, it.value());
            }
        for (int k = 0; k < inst.G.outerSize(); ++k)
            for (SparseMat::InnerIterator it(inst.G, k); it; ++it) {
                const int r = n_ + p_ + static_cast<int>(it.row());
                const int c = static_cast<int>(it.col());
                trips.emplace_back(r, c, it.value());
                trips.emplace_back(c, r, it.value());
            }
        // Explicit diagonal everywhere so regularization and W updates can be
        // written in place.
        for (int i = 0; i < dim; ++i) trips.emplace_back(i, i, 0.0);

        kkt_.resize(dim, dim);
        kkt_.setFromTriplets(trips.begin(), trips.end());
        kkt_.makeCompressed();

        diag_.resize(dim);
        for (int i = 0; i < dim; ++i) diag_[i] = &kkt_.coeffRef(i, i);
        base_diag_.resize(dim);
        {
            // coeffRef above may have been summed with block entries; recover the
            // structural diagonal contribution of P (A and G have no diagonal in
            // their off-diagonal blocks).
            for (int i = 0; i < dim; ++i) base_diag_[i] = *diag_[i];
        }

        ldlt_.analyzePattern(kkt_);
    }

    /// Refresh the (3,3) block with -w and refactor. Returns false if the
    /// factorization failed even after bumping the regularization.
    bool factorize(const Vector& w) {
        double reg = reg_;
        for (int attempt = 0; attempt < 4; ++attempt) {
            for (int i = 0; i < n_; ++i) *diag_[i] = base_diag_[i] + reg;
            for (int i = 0; i < p_; ++i) *diag_[n_ + i] = base_diag_[n_ + i] - reg;
            for (int i = 0; i < m_; ++i) *diag_[n_ + p_ + i] = base_diag_[n_ + p_ + i] - w[i] - reg;
            ldlt_.factorize(kkt_);
            if (ldlt_.info() == Eigen::Success) {
                w_ = w;
                return true;
            }
            reg *= 100.0;
        }
        return false;
    }

    /// Solve against the unregularized KKT matrix using the regularized
    /// factor plus iterative refinement. Refines until the backward error
    /// reaches machine level or stops contracting, up to max_refine rounds.
    Vector solve(const Vector& rhs, int max_refine) const {
        Vector x = ldlt_.solve(rhs);
        const double scale = 1.0 + (rhs.size() > 0 ? rhs.cwiseAbs().maxCoeff() : 0.0);
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < max_refine; ++it) {
            Vector r = rhs - multiply_unregularized(x);
            const double rn = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
            if (rn <= 1e-13 * scale || rn >= prev) break;
            prev = rn;
            x += ldlt_.solve(r);
        }
        return x;
    }

private:
    Vector multiply_unregularized(const Vector& x) const {
        Vector out(n_ + p_ + m_);
        const auto z = x.head(n_);
        const auto y = x.segment(n_, p_);
        const auto l = x.tail(m_);
        Vector top = inst_.P * z;
        if (p_ > 0) top += inst_.A.transpose() * y;
        if (m_ > 0) top += inst_.G.transpose() * l;
        out.head(n_) = top;
        if (p_ > 0) out.segment(n_, p_) = inst_.A * z;
        if (m_ > 0) out.tail(m_) = inst_.G * z - w_.cwiseProduct(l);
        return out;
    }

    const QpInstance& inst_;
    int n_, p_, m_;
    double reg_;
    SparseMat kkt_;
    std::vector<double*> diag_;
    std::vector<double> base_diag_;
    Vector w_;
    Eigen::SimplicialLDLT<SparseMat, Eigen::Lower> ldlt_;
};

double step_to_boundary(const Vector& x, const Vector& dx) {
    double alpha = 1.0;
    for (int i = 0; i < x.size(); ++i) {
        if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
    }
    return alpha;
}

// Active-set polish: re-solves the equality KKT system over the constraints
// the interior-point iterate identifies as active. When the guess is right
// this lands residuals near machine precision; a failed guess is detected by
// the residual check and discarded.
bool try_polish(const QpInstance& inst, double static_reg, Vector& z, Vector& y, Vector& lambda,
                KktResiduals& kkt) {
    const int n = inst.num_vars();
    const int p = inst.num_eq();
    const int m = inst.num_ineq();

    std::vector<int> act;
    {
        const Vector s = inst.h - inst.G * z;
        for (int i = 0; i < m; ++i)
            if (lambda[i] > s[i]) act.push_back(i);
    }
    const int ma = static_cast<int>(act.size());
    const int dim = n + p + ma;

    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < inst.P.outerSize(); ++k)
        for (SparseMat::InnerIterator it(inst.P, k); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < inst.A.outerSize(); ++k)
        for (SparseMat::InnerIterator it(inst.A, k); it; ++it) {
            trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                               it.value());
            trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                               it.value());
        }
    // Gather active rows of G.
    std::vector<int> act_pos(m, -1);
    for (int k = 0; k < ma; ++k) act_pos[act[k]] = k;
    for (int k = 0; k < inst.G.outerSize(); ++k)
        for (SparseMat::InnerIterator it(inst.G, k); it; ++it) {
            const int pos = act_pos[it.row()];
            if (pos < 0) continue;
            trips.emplace_back(n + p + pos, static_cast<int>(it.col()), it.value());
            trips.emplace_back(static_cast<int>(it.col()), n + p + pos, it.value());
        }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, static_reg);
    for (int i = n; i < dim; ++i) trips.emplace_back(i, i, -static_reg);

    SparseMat K(dim, dim);
    K.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SparseMat, Eigen::Lower> ldlt(K);
    if (ldlt.info() != Eigen::Success) return false;

    Vector rhs(dim);
    rhs.head(n) = -inst.q;
    if (p > 0) rhs.segment(n, p) = inst.b;
    for (int k = 0; k < ma; ++k) rhs[n + p + k] = inst.h[act[k]];

    Vector x = ldlt.solve(rhs);
    for (int r = 0; r < 3; ++r) {
        // Residual against the unregularized system; the active-row products
        // are accumulated by column iteration over G.
        Vector res = rhs;
        const Vector zx = x.head(n);
        Vector top = inst.P * zx;
        if (p > 0) top += inst.A.transpose() * x.segment(n, p);
        Vector gact_z = Vector::Zero(ma);
        for (int k = 0; k < inst.G.outerSize(); ++k)
            for (SparseMat::InnerIterator it(inst.G, k); it; ++it) {
                const int pos = act_pos[it.row()];
                if (pos < 0) continue;
                top[it.col()] += it.value() * x[n + p + pos];
                gact_z[pos] += it.value() * zx[it.col()];
            }
        res.head(n) -= top;
        if (p > 0) res.segment(n, p) -= inst.A * zx;
        res.tail(ma) -= gact_z;
        x += ldlt.solve(res);
    }

    Vector z_new = x.head(n);
    Vector y_new = p > 0 ? Vector(x.segment(n, p)) : Vector(0);
    Vector l_new = Vector::Zero(m);
    for (int k = 0; k < ma; ++k) l_new[act[k]] = std::max(x[n + p + k], 0.0);

    const KktResiduals polished = check_kkt(inst, z_new, l_new, y_new);
    if (polished.max() < kkt.max()) {
        z = std::move(z_new);
        y = std::move(y_new);
        lambda = std::move(l_new);
        kkt = polished;
        return true;
    }
    return false;
}

// Modified Ruiz equilibration of the stacked data [P G' A'; G 0 0; A 0 0]:
// symmetric variable scaling D plus row scalings for the constraint blocks.
// Brings the mixed magnitudes of assembled programs (unit polytope rows next
// to 1e-3 disturbance channels) toward 1, which the interior-point iteration
// repays in reliability.
struct Scaling {
    Vector d_var;
    Vector e_ineq;
    Vector f_eq;
};

QpInstance scale_instance(const QpInstance& inst, Scaling& sc, int sweeps = 10) {
    const int n = inst.num_vars();
    const int m = inst.num_ineq();
    const int p = inst.num_eq();
    sc.d_var = Vector::Ones(n);
    sc.e_ineq = Vector::Ones(m);
    sc.f_eq = Vector::Ones(p);

    QpInstance out = inst;

    auto col_max = [](const SparseMat& M, Vector& c) {
        for (int k = 0; k < M.outerSize(); ++k)
            for (SparseMat::InnerIterator it(M, k); it; ++it)
                c[it.col()] = std::max(c[it.col()], std::abs(it.value()));
    };
    auto row_max = [](const SparseMat& M, Vector& r) {
        for (int k = 0; k < M.outerSize(); ++k)
            for (SparseMat::InnerIterator it(M, k); it; ++it)
                r[it.row()] = std::max(r[it.row()], std::abs(it.value()));
    };
    auto to_factor = [](Vector& v) {
        for (int i = 0; i < v.size(); ++i) v[i] = v[i] > 1e-12 ? 1.0 / std::sqrt(v[i]) : 1.0;
    };

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        Vector c = Vector::Zero(n);
        col_max(out.P, c);
        col_max(out.G, c);
        col_max(out.A, c);
        to_factor(c);
        for (int k = 0; k < out.P.outerSize(); ++k)
            for (SparseMat::InnerIterator it(out.P, k); it; ++it)
                it.valueRef() *= c[it.row()] * c[it.col()];
        for (int k = 0; k < out.G.outerSize(); ++k)
            for (SparseMat::InnerIterator it(out.G, k); it; ++it) it.valueRef() *= c[it.col()];
        for (int k = 0; k < out.A.outerSize(); ++k)
            for (SparseMat::InnerIterator it(out.A, k); it; ++it) it.valueRef() *= c[it.col()];
        sc.d_var = sc.d_var.cwiseProduct(c);

        if (m > 0) {
            Vector r = Vector::Zero(m);
            row_max(out.G, r);
            to_factor(r);
            for (int k = 0; k < out.G.outerSize(); ++k)
                for (SparseMat::InnerIterator it(out.G, k); it; ++it) it.valueRef() *= r[it.row()];
            sc.e_ineq = sc.e_ineq.cwiseProduct(r);
        }
        if (p > 0) {
            Vector r = Vector::Zero(p);
            row_max(out.A, r);
            to_factor(r);
            for (int k = 0; k < out.A.outerSize(); ++k)
                for (SparseMat::InnerIterator it(out.A, k); it; ++it) it.valueRef() *= r[it.row()];
            sc.f_eq = sc.f_eq.cwiseProduct(r);
        }
    }

    out.q = sc.d_var.cwiseProduct(inst.q);
    out.h = sc.e_ineq.cwiseProduct(inst.h);
    out.b = sc.f_eq.cwiseProduct(inst.b);
    return out;
}

bool gates_pass(const QpInstance& inst, const Vector& z, const Vector& lambda,
                const KktResiduals& kkt, const SolverOptions& opts) {
    const double stat_scale =
        1.0 + std::max({inf_norm(inst.q), inf_norm(inst.P * z),
                        lambda.size() ? inf_norm(inst.G.transpose() * lambda) : 0.0});
    const double prim_scale =
        1.0 + std::max({inf_norm(inst.h), inf_norm(inst.b),
                        lambda.size() ? inf_norm(inst.G * z) : 0.0});
    const double objective = 0.5 * z.dot(inst.P * z) + inst.q.dot(z);
    const double comp_scale = 1.0 + std::abs(objective);
    return kkt.stationarity <= std::max(opts.tol * stat_scale, opts.abs_tol) &&
           kkt.primal <= std::max(opts.tol * prim_scale, opts.abs_tol) &&
           kkt.complementarity <= std::max(opts.tol * comp_scale, opts.abs_tol);
}

// Runs the interior-point iteration on the scaled data while measuring
// progress, convergence and infeasibility on the original instance.
QpResult solve_core(const QpInstance& inst, const QpInstance& orig, const Scaling& sc,
                    const SolverOptions& opts) {
    require(opts.tol > 0.0, "solve: tolerance must be positive");

    const int n = inst.num_vars();
    const int p = inst.num_eq();
    const int m = inst.num_ineq();

    QpResult res;

    KktSolver kkt(inst, opts.static_reg);

    const double gscale = std::max({1.0, max_abs(orig.G), max_abs(orig.A)});

    // No inequalities: a single linear solve settles the problem.
    if (m == 0) {
        if (!kkt.factorize(Vector(0))) {
            res.status = SolveStatus::max_iter;
            res.z = Vector::Zero(n);
            res.eq_duals = Vector::Zero(p);
            res.ineq_duals = Vector(0);
            return res;
        }
        Vector rhs(n + p);
        rhs.head(n) = -inst.q;
        rhs.tail(p) = inst.b;
        Vector sol = kkt.solve(rhs, opts.refinement_steps + 2);
        res.z = sc.d_var.cwiseProduct(sol.head(n));
        res.eq_duals = p > 0 ? Vector(sc.f_eq.cwiseProduct(sol.tail(p))) : Vector(0);
        res.ineq_duals = Vector(0);
        res.iterations = 1;
        res.kkt = check_kkt(orig, res.z, res.ineq_duals, res.eq_duals);
        const double scale = 1.0 + inf_norm(orig.q) + inf_norm(res.z);
        res.status = (res.kkt.max() <= std::max(opts.tol * scale, 1e-8 * scale))
                         ? SolveStatus::optimal
                         : SolveStatus::max_iter;
        res.objective = 0.5 * res.z.dot(orig.P * res.z) + orig.q.dot(res.z);
        return res;
    }

    // Starting point: least-squares-style solve with unit scaling matrix,
    // then Mehrotra's shift to the positive orthant.
    Vector z, y, s, lambda;
    {
        if (!kkt.factorize(Vector::Ones(m))) {
            res.status = SolveStatus::max_iter;
            res.z = Vector::Zero(n);
            return res;
        }
        Vector rhs(n + p + m);
        rhs.head(n) = -inst.q;
        rhs.segment(n, p) = inst.b;
        rhs.tail(m) = inst.h;
        Vector sol = kkt.solve(rhs, opts.refinement_steps);
        z = sol.head(n);
        y = sol.segment(n, p);
        Vector s_raw = inst.h - inst.G * z;
        Vector l_raw = -sol.tail(m);

        const double ds = std::max(0.0, -1.5 * s_raw.minCoeff());
        const double dl = std::max(0.0, -1.5 * l_raw.minCoeff());
        Vector s_hat = (s_raw.array() + ds).matrix();
        Vector l_hat = (l_raw.array() + dl).matrix();
        double dot = s_hat.dot(l_hat);
        if (dot <= 0.0) dot = 1.0;
        const double sum_l = std::max(l_hat.sum(), 1e-12);
        const double sum_s = std::max(s_hat.sum(), 1e-12);
        s = (s_hat.array() + 0.5 * dot / sum_l).matrix();
        lambda = (l_hat.array() + 0.5 * dot / sum_s).matrix();
        const double floor = 1e-8 * (1.0 + inf_norm(inst.h));
        s = s.cwiseMax(floor);
        lambda = lambda.cwiseMax(floor);
    }

    KktResiduals best_kkt;
    double best_metric = std::numeric_limits<double>::infinity();
    Vector best_z = z, best_y = y, best_lambda = lambda;
    int stall = 0;

    int iter = 0;
    for (; iter < opts.max_iter; ++iter) {
        // Scaled residuals drive the Newton steps.
        Vector r_d = inst.P * z + inst.q;
        if (p > 0) r_d += inst.A.transpose() * y;
        r_d += inst.G.transpose() * lambda;
        Vector r_p = p > 0 ? Vector(inst.A * z - inst.b) : Vector(0);
        Vector gz = inst.G * z;
        Vector r_g = gz + s - inst.h;
        const double mu = s.dot(lambda) / m;

        // Convergence, progress and infeasibility are all judged against the
        // original (unscaled) instance.
        Vector z_o = sc.d_var.cwiseProduct(z);
        Vector l_o = sc.e_ineq.cwiseProduct(lambda);
        Vector y_o = p > 0 ? Vector(sc.f_eq.cwiseProduct(y)) : Vector(0);
        Vector gz_o = orig.G * z_o;
        Vector grad_o = orig.P * z_o + orig.q + orig.G.transpose() * l_o;
        if (p > 0) grad_o += orig.A.transpose() * y_o;

        KktResiduals cur;
        cur.stationarity = inf_norm(grad_o);
        cur.primal = std::max(inf_norm((gz_o - orig.h).cwiseMax(0.0)),
                              p > 0 ? inf_norm(orig.A * z_o - orig.b) : 0.0);
        cur.complementarity = inf_norm(l_o.cwiseProduct(gz_o - orig.h));

        const double stat_scale =
            1.0 + std::max({inf_norm(orig.q), inf_norm(orig.P * z_o),
                            inf_norm(orig.G.transpose() * l_o)});
        const double prim_scale = 1.0 + std::max(inf_norm(orig.h), inf_norm(gz_o));
        const double objective = 0.5 * z_o.dot(orig.P * z_o) + orig.q.dot(z_o);
        const double comp_scale = 1.0 + std::abs(objective);

        const double metric = cur.stationarity / stat_scale + cur.primal / prim_scale +
                              cur.complementarity / comp_scale;
        if (metric < 0.999 * best_metric) {
            best_metric = metric;
            best_kkt = cur;
            best_z = z_o;
            best_y = y_o;
            best_lambda = l_o;
            stall = 0;
        } else if (++stall >= 30) {
            break;  // wandering near the floor; hand over to the polish step
        }

        if (cur.stationarity <= std::max(opts.tol * stat_scale, opts.abs_tol) &&
            cur.primal <= std::max(opts.tol * prim_scale, opts.abs_tol) &&
            cur.complementarity <= std::max(opts.tol * comp_scale, opts.abs_tol)) {
            res.status = SolveStatus::optimal;
            res.z = z_o;
            res.eq_duals = y_o;
            res.ineq_duals = l_o;
            res.iterations = iter;
            res.kkt = cur;
            res.objective = objective;
            return res;
        }

        // Farkas certificate test: a normalized dual iterate with G'y ~ 0 and
        // h'y < 0 proves there is no feasible point. The ray residual bound is
        // kept several orders below the violation so that feasible problems
        // with moderately sized solutions can never trip it.
        {
            const double lnorm = inf_norm(l_o);
            if (lnorm > 1e-10) {
                Vector yc = l_o / lnorm;
                Vector yce = p > 0 ? Vector(y_o / lnorm) : Vector(0);
                Vector ray = orig.G.transpose() * yc;
                if (p > 0) ray += orig.A.transpose() * yce;
                const double val = orig.h.dot(yc) + (p > 0 ? orig.b.dot(yce) : 0.0);
                if (inf_norm(ray) <= opts.infeas_tol * gscale && val < -1e-8) {
                    res.status = SolveStatus::primal_infeasible;
                    res.z = z_o;
                    res.eq_duals = y_o;
                    res.ineq_duals = l_o;
                    res.certificate = yc;
                    res.certificate_eq = yce;
                    res.iterations = iter;
                    res.kkt = cur;
                    res.objective = objective;
                    return res;
                }
            }
        }

        Vector w = (s.array() / lambda.array()).matrix();
        w = w.cwiseMax(1e-16).cwiseMin(1e16);
        if (!kkt.factorize(w)) break;

        // Predictor (affine scaling) direction.
        Vector rhs(n + p + m);
        rhs.head(n) = -r_d;
        if (p > 0) rhs.segment(n, p) = -r_p;
        rhs.tail(m) = -r_g + s;
        Vector sol = kkt.solve(rhs, opts.refinement_steps);
        Vector dz_a = sol.head(n);
        Vector dl_a = sol.tail(m);
        Vector ds_a = -r_g - inst.G * dz_a;

        const double ap_a = step_to_boundary(s, ds_a);
        const double ad_a = step_to_boundary(lambda, dl_a);
        const double mu_aff = (s + ap_a * ds_a).dot(lambda + ad_a * dl_a) / m;
        double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
        sigma = std::clamp(sigma, 1e-8, 1.0);

        // Corrector with centering.
        Vector r_c = (lambda.array() * s.array() + dl_a.array() * ds_a.array() - sigma * mu).matrix();
        rhs.tail(m) = -r_g + (r_c.array() / lambda.array()).matrix();
        sol = kkt.solve(rhs, opts.refinement_steps);
        Vector dz = sol.head(n);
        Vector dy = p > 0 ? Vector(sol.segment(n, p)) : Vector(0);
        Vector dl = sol.tail(m);
        Vector dsv = -r_g - inst.G * dz;

        const double tau = opts.step_fraction;
        const double ap = std::min(1.0, tau * step_to_boundary(s, dsv));
        const double ad = std::min(1.0, tau * step_to_boundary(lambda, dl));

        z += ap * dz;
        s += ap * dsv;
        if (p > 0) y += ad * dy;
        lambda += ad * dl;

        if (mu < 1e-16 && metric > 1e-2) break;  // numerically stuck
    }

    res.status = SolveStatus::max_iter;
    res.z = best_z;
    res.eq_duals = best_y;
    res.ineq_duals = best_lambda;
    res.iterations = iter;
    res.kkt = best_kkt;
    res.objective = 0.5 * best_z.dot(orig.P * best_z) + orig.q.dot(best_z);
    return res;
}

}  // namespace

QpResult solve(const QpInstance& inst, const SolverOptions& opts) {
    inst.validate();

    Scaling sc;
    const QpInstance scaled = scale_instance(inst, sc);

    // No single configuration suits every instance: regularization that is
    // too small loses the factorization on degenerate active sets, too large
    // floors the attainable stationarity, and an aggressive boundary fraction
    // can wreck centrality on hard geometries. Walk a deterministic ladder of
    // (regularization, step fraction) pairs and keep the best iterate.
    struct Attempt {
        double reg;
        double tau;
    };
    const Attempt ladder[] = {{opts.static_reg, opts.step_fraction},
                              {1e-10, opts.step_fraction},
                              {1e-8, opts.step_fraction},
                              {opts.static_reg, 0.9},
                              {1e-10, 0.9}};
    QpResult best;
    bool have_best = false;
    for (const Attempt& step : ladder) {
        if (have_best && step.reg <= opts.static_reg && step.tau == opts.step_fraction) continue;
        SolverOptions attempt = opts;
        attempt.static_reg = step.reg;
        attempt.step_fraction = step.tau;
        QpResult res = solve_core(scaled, inst, sc, attempt);
        if (res.status == SolveStatus::primal_infeasible || res.status == SolveStatus::optimal)
            return res;

        if (inst.num_ineq() + inst.num_eq() > 0) {
            try_polish(inst, step.reg, res.z, res.eq_duals, res.ineq_duals, res.kkt);
            res.objective = 0.5 * res.z.dot(inst.P * res.z) + inst.q.dot(res.z);
            if (gates_pass(inst, res.z, res.ineq_duals, res.kkt, opts)) {
                res.status = SolveStatus::optimal;
                return res;
            }
        }
        if (!have_best || res.kkt.max() < best.kkt.max()) {
            best = std::move(res);
            have_best = true;
        }
    }
    return best;
}

namespace {

void write_sparse(std::ostream& os, const char* tag, const SparseMat& m) {
    char buf[64];
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMat::InnerIterator it(m, k); it; ++it) {
            std::snprintf(buf, sizeof(buf), "%.17g", it.value());
            os << tag << ' ' << it.row() << ' ' << it.col() << ' ' << buf << '\n';
        }
}

void write_vector(std::ostream& os, const char* tag, const Vector& v) {
    char buf[64];
    for (int i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
        os << tag << ' ' << i << ' ' << buf << '\n';
    }
}

}  // namespace

void save_qp(const QpInstance& inst, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_qp: cannot open " + path);
    os << "# wdrmpc qp 1\n";
    os << "dims " << inst.num_vars() << ' ' << inst.num_ineq() << ' ' << inst.num_eq() << '\n';
    write_sparse(os, "P", inst.P);
    write_vector(os, "q", inst.q);
    write_sparse(os, "G", inst.G);
    write_vector(os, "h", inst.h);
    write_sparse(os, "A", inst.A);
    write_vector(os, "b", inst.b);
}

QpInstance load_qp(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_qp: cannot open " + path);

    std::string line;
    int n = -1, m = -1, p = -1;
    std::vector<Eigen::Triplet<double>> tp, tg, ta;
    Vector q, h, b;

    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "dims") {
            ss >> n >> m >> p;
            if (!ss || n <= 0 || m < 0 || p < 0) throw std::runtime_error("load_qp: bad dims line");
            q = Vector::Zero(n);
            h = Vector::Zero(m);
            b = Vector::Zero(p);
        } else if (tag == "P" || tag == "G" || tag == "A") {
            int r, c;
            double v;
            ss >> r >> c >> v;
            if (!ss) throw std::runtime_error("load_qp: bad triplet line: " + line);
            if (tag == "P") tp.emplace_back(r, c, v);
            if (tag == "G") tg.emplace_back(r, c, v);
            if (tag == "A") ta.emplace_back(r, c, v);
        } else if (tag == "q" || tag == "h" || tag == "b") {
            int r;
            double v;
            ss >> r >> v;
            if (!ss) throw std::runtime_error("load_qp: bad vector line: " + line);
            if (tag == "q") q[r] = v;
            if (tag == "h") h[r] = v;
            if (tag == "b") b[r] = v;
        } else {
            throw std::runtime_error("load_qp: unknown tag: " + tag);
        }
    }
    if (n < 0) throw std::runtime_error("load_qp: missing dims line");

    QpInstance inst;
    inst.P.resize(n, n);
    inst.P.setFromTriplets(tp.begin(), tp.end());
    inst.G.resize(m, n);
    inst.G.setFromTriplets(tg.begin(), tg.end());
    inst.A.resize(p, n);
    inst.A.setFromTriplets(ta.begin(), ta.end());
    inst.q = q;
    inst.h = h;
    inst.b = b;
    inst.validate();
    return inst;
}

}  // namespace drmpc
