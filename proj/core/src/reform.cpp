#include "drmpc/reform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace drmpc {

namespace {

using Triplet = Eigen::Triplet<double>;

// Tiny linear cost on each dual-scale multiplier. At epsilon = 0 the
// multiplier is otherwise free to drift along an unbounded optimal face;
// the penalty pins it at its lower envelope and biases the objective by
// no more than ~1e-9 times its magnitude.
constexpr double kLambdaPenalty = 1e-9;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_symmetric(const Matrix& M, const std::string& name) {
    require(M.rows() == M.cols(), name + " must be square");
    const double scale = 1.0 + M.cwiseAbs().maxCoeff();
    require((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, name + " must be symmetric");
}

double min_eigenvalue(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

CostWeights CostWeights::create(Matrix Q, Matrix Qf, Matrix R, double discount) {
    require_symmetric(Q, "CostWeights: Q");
    require_symmetric(Qf, "CostWeights: Qf");
    require_symmetric(R, "CostWeights: R");
    require(Q.rows() == Qf.rows(), "CostWeights: Q and Qf dimension mismatch");
    require(min_eigenvalue(Q) >= -1e-9, "CostWeights: Q must be positive semidefinite");
    require(min_eigenvalue(Qf) >= -1e-9, "CostWeights: Qf must be positive semidefinite");
    require(min_eigenvalue(R) > 0.0, "CostWeights: R must be positive definite");
    require(discount > 0.0 && discount <= 1.0, "CostWeights: discount must be in (0, 1]");
    return CostWeights{std::move(Q), std::move(Qf), std::move(R), discount};
}

DisturbanceMoments DisturbanceMoments::create(Vector mu, Matrix Sigma) {
    require_symmetric(Sigma, "DisturbanceMoments: Sigma");
    require(Sigma.rows() == mu.size(), "DisturbanceMoments: mu/Sigma dimension mismatch");
    require(min_eigenvalue(Sigma) >= -1e-9, "DisturbanceMoments: Sigma must be PSD");
    return DisturbanceMoments{std::move(mu), std::move(Sigma)};
}

DisturbanceMoments DisturbanceMoments::iid(const Vector& mu_step, const Matrix& Sigma_step,
                                           int N) {
    require(N >= 1, "DisturbanceMoments::iid: N must be positive");
    const int n_w = static_cast<int>(mu_step.size());
    Vector mu(N * n_w);
    Matrix Sigma = Matrix::Zero(N * n_w, N * n_w);
    for (int t = 0; t < N; ++t) {
        mu.segment(t * n_w, n_w) = mu_step;
        Sigma.block(t * n_w, t * n_w, n_w, n_w) = Sigma_step;
    }
    return create(std::move(mu), std::move(Sigma));
}

CostBlocks build_cost_blocks(const CostWeights& weights, int N) {
    require(N >= 1, "build_cost_blocks: N must be positive");
    const int n_x = static_cast<int>(weights.Q.rows());
    const int n_u = static_cast<int>(weights.R.rows());

    CostBlocks blocks;
    blocks.J_x = Matrix::Zero((N + 1) * n_x, (N + 1) * n_x);
    blocks.J_u = Matrix::Zero(N * n_u, N * n_u);
    double beta_t = 1.0;
    for (int t = 0; t < N; ++t) {
        blocks.J_x.block(t * n_x, t * n_x, n_x, n_x) = beta_t * weights.Q;
        blocks.J_u.block(t * n_u, t * n_u, n_u, n_u) = beta_t * weights.R;
        beta_t *= weights.discount;
    }
    blocks.J_x.block(N * n_x, N * n_x, n_x, n_x) = beta_t * weights.Qf;
    return blocks;
}

PolicyStructure PolicyStructure::make(int N, int n_u, int n_y) {
    PolicyStructure ps;
    ps.N = N;
    ps.n_u = n_u;
    ps.n_y = n_y;
    const int rows = N * n_u;
    const int cols = 1 + N * n_y;
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r)
            if (PobPolicy::entry_is_free(N, n_u, n_y, r, c)) ps.free_entries.emplace_back(r, c);
    return ps;
}

Matrix PolicyStructure::unpack(const Vector& v) const {
    require(v.size() == num_free(), "PolicyStructure::unpack: size mismatch");
    Matrix H = Matrix::Zero(N * n_u, 1 + N * n_y);
    for (int k = 0; k < num_free(); ++k) H(free_entries[k].first, free_entries[k].second) = v[k];
    return H;
}

Vector PolicyStructure::pack(const Matrix& H) const {
    require(H.rows() == N * n_u && H.cols() == 1 + N * n_y,
            "PolicyStructure::pack: shape mismatch");
    Vector v(num_free());
    for (int k = 0; k < num_free(); ++k) v[k] = H(free_entries[k].first, free_entries[k].second);
    return v;
}

QuadraticObjective objective_quadratic(const StackedHorizon& stacked, const Matrix& J_x,
                                       const Matrix& J_u, const DisturbanceMoments& moments) {
    const int N = stacked.N;
    const int d = N * stacked.n_w;
    require(moments.mu.size() == d, "objective_quadratic: moments must cover N n_w entries");
    require(J_x.rows() == (N + 1) * stacked.n_x && J_x.cols() == J_x.rows(),
            "objective_quadratic: J_x dimension mismatch");
    require(J_u.rows() == N * stacked.n_u && J_u.cols() == J_u.rows(),
            "objective_quadratic: J_u dimension mismatch");

    // Second moment of the extended disturbance wtilde = [1; w].
    Vector mu_t(1 + d);
    mu_t(0) = 1.0;
    mu_t.tail(d) = moments.mu;
    Matrix S = Matrix::Zero(1 + d, 1 + d);
    S.block(1, 1, d, d) = moments.Sigma;
    S += mu_t * mu_t.transpose();

    const Matrix T = stacked.output_map();
    const Matrix W = stacked.B_x.transpose() * J_x * stacked.B_x + J_u;
    const Matrix Gs = T * S * T.transpose();
    const Matrix Z = stacked.B_x.transpose() * J_x * stacked.Ctilde_x * S * T.transpose();

    const PolicyStructure ps = PolicyStructure::make(N, stacked.n_u, stacked.n_y);
    const int nf = ps.num_free();

    QuadraticObjective obj;
    obj.P.resize(nf, nf);
    obj.q.resize(nf);
    for (int i = 0; i < nf; ++i) {
        const auto [ri, ci] = ps.free_entries[i];
        obj.q[i] = 2.0 * Z(ri, ci);
        for (int j = 0; j < nf; ++j) {
            const auto [rj, cj] = ps.free_entries[j];
            obj.P(i, j) = 2.0 * Gs(ci, cj) * W(ri, rj);
        }
    }
    obj.P = 0.5 * (obj.P + obj.P.transpose()).eval();
    obj.constant = (stacked.Ctilde_x.transpose() * J_x * stacked.Ctilde_x * S).trace();
    return obj;
}

ConstraintPieces constraint_pieces(const StackedHorizon& stacked, const StateBound& bound,
                                   const Matrix& Htilde) {
    const int N = stacked.N;
    const int d = N * stacked.n_w;
    require(bound.state_index >= 0 && bound.state_index < stacked.n_x,
            "constraint_pieces: state index out of range");
    require(Htilde.rows() == N * stacked.n_u && Htilde.cols() == 1 + d,
            "constraint_pieces: Htilde shape mismatch");

    const double sign = bound.direction == BoundDirection::upper ? 1.0 : -1.0;
    const Matrix M = stacked.B_x * Htilde + stacked.Ctilde_x;

    ConstraintPieces pieces;
    pieces.a.resize(N, d);
    pieces.b.resize(N);
    pieces.bound_value = sign * bound.value;
    for (int t = 1; t <= N; ++t) {
        const int rho = t * stacked.n_x + bound.state_index;
        pieces.a.row(t - 1) = sign * M.row(rho).tail(d);
        pieces.b(t - 1) = sign * M(rho, 0);
    }
    return pieces;
}

double ConstraintPieces::evaluate(const Vector& xi) const {
    return (a * xi + b).maxCoeff();
}

QpProblem assemble(const StackedHorizon& stacked, const CostWeights& weights,
                   const DisturbanceMoments& moments, const std::vector<StateBound>& bounds,
                   const AmbiguitySet& ambiguity) {
    const int N = stacked.N;
    const int n_x = stacked.n_x, n_u = stacked.n_u, n_w = stacked.n_w;
    const int d = N * n_w;

    require(ambiguity.dim() == d, "assemble: support dimension must equal N n_w");
    require(weights.Q.rows() == n_x, "assemble: Q dimension mismatch");
    require(weights.R.rows() == n_u, "assemble: R dimension mismatch");
    for (const auto& bd : bounds)
        require(bd.state_index >= 0 && bd.state_index < n_x, "assemble: bound index out of range");

    const CostBlocks cost = build_cost_blocks(weights, N);
    const QuadraticObjective obj = objective_quadratic(stacked, cost.J_x, cost.J_u, moments);
    PolicyStructure ps = PolicyStructure::make(N, n_u, stacked.n_y);
    const int nf = ps.num_free();

    VariableLayout lay;
    lay.n_policy = nf;
    lay.n_bounds = static_cast<int>(bounds.size());
    lay.n_samples = ambiguity.n_samples();
    lay.horizon = N;
    lay.xi_dim = d;
    lay.gamma_dim = static_cast<int>(ambiguity.support.C.rows());
    lay.aux_dim = ambiguity.ground_norm == GroundNorm::Linf ? d : 0;

    const int nz = lay.total();
    const int N_s = lay.n_samples;
    const int gd = lay.gamma_dim;
    const Matrix& Cxi = ambiguity.support.C;
    const Vector& dxi = ambiguity.support.d;
    const Matrix T = stacked.output_map();

    std::vector<Triplet> ptrips;
    for (int i = 0; i < nf; ++i)
        for (int j = 0; j < nf; ++j)
            if (obj.P(i, j) != 0.0) ptrips.emplace_back(i, j, obj.P(i, j));
    Vector q = Vector::Zero(nz);
    q.head(nf) = obj.q;
    for (int j = 0; j < lay.n_bounds; ++j) q[lay.lambda_offset(j)] = kLambdaPenalty;

    std::vector<Triplet> gtrips;
    std::vector<double> hvals;
    int row = 0;
    auto add = [&](int r, int c, double v) {
        if (v != 0.0) gtrips.emplace_back(r, c, v);
    };

    for (int j = 0; j < lay.n_bounds; ++j) {
        const StateBound& bd = bounds[j];
        const double sign = bd.direction == BoundDirection::upper ? 1.0 : -1.0;
        const double bound_value = sign * bd.value;

        // Budget row: lambda_j eps + (1/N_s) sum_i s_ij <= U_j.
        add(row, lay.lambda_offset(j), ambiguity.epsilon);
        for (int i = 0; i < N_s; ++i) add(row, lay.s_offset(i, j), 1.0 / N_s);
        hvals.push_back(bound_value);
        ++row;

        for (int t = 1; t <= N; ++t) {
            const int rho = t * n_x + bd.state_index;

            // Affine dependence of the constrained state row on the free
            // policy entries: coefficient of entry (r, c) of H on wtilde
            // coordinate `col` is sign * B_x(rho, r) * T(c, col).
            Matrix V = Matrix::Zero(nf, 1 + d);
            for (int f = 0; f < nf; ++f) {
                const auto [r, c] = ps.free_entries[f];
                const double br = stacked.B_x(rho, r);
                if (br != 0.0) V.row(f) = sign * br * T.row(c);
            }
            const Eigen::RowVectorXd cons = sign * stacked.Ctilde_x.row(rho);

            for (int i = 0; i < N_s; ++i) {
                const Vector& xi = ambiguity.samples[i].xi;
                const int gofs = lay.gamma_offset(i, j, t);

                // Epigraph: b_t + <a_t, xi_i> + <gamma, d - C xi_i> <= s_ij.
                for (int f = 0; f < nf; ++f) {
                    const double coef = V(f, 0) + V.row(f).tail(d).dot(xi);
                    add(row, f, coef);
                }
                const Vector gcoef = dxi - Cxi * xi;
                for (int r = 0; r < gd; ++r) add(row, gofs + r, gcoef[r]);
                add(row, lay.s_offset(i, j), -1.0);
                hvals.push_back(-(cons[0] + cons.tail(d).dot(xi)));
                ++row;

                // Dual-norm rows on u = C' gamma - a_t.
                if (ambiguity.ground_norm == GroundNorm::L1) {
                    // Dual is Linf: |u_r| <= lambda_j coordinate-wise.
                    for (int r0 = 0; r0 < d; ++r0) {
                        for (int r = 0; r < gd; ++r) add(row, gofs + r, Cxi(r, r0));
                        for (int f = 0; f < nf; ++f) add(row, f, -V(f, 1 + r0));
                        add(row, lay.lambda_offset(j), -1.0);
                        hvals.push_back(cons[1 + r0]);
                        ++row;
                        for (int r = 0; r < gd; ++r) add(row, gofs + r, -Cxi(r, r0));
                        for (int f = 0; f < nf; ++f) add(row, f, V(f, 1 + r0));
                        add(row, lay.lambda_offset(j), -1.0);
                        hvals.push_back(-cons[1 + r0]);
                        ++row;
                    }
                } else {
                    // Dual is L1: sum_r |u_r| <= lambda_j via auxiliaries.
                    const int aofs = lay.aux_offset(i, j, t);
                    for (int r0 = 0; r0 < d; ++r0) {
                        for (int r = 0; r < gd; ++r) add(row, gofs + r, Cxi(r, r0));
                        for (int f = 0; f < nf; ++f) add(row, f, -V(f, 1 + r0));
                        add(row, aofs + r0, -1.0);
                        hvals.push_back(cons[1 + r0]);
                        ++row;
                        for (int r = 0; r < gd; ++r) add(row, gofs + r, -Cxi(r, r0));
                        for (int f = 0; f < nf; ++f) add(row, f, V(f, 1 + r0));
                        add(row, aofs + r0, -1.0);
                        hvals.push_back(-cons[1 + r0]);
                        ++row;
                    }
                    for (int r0 = 0; r0 < d; ++r0) add(row, aofs + r0, 1.0);
                    add(row, lay.lambda_offset(j), -1.0);
                    hvals.push_back(0.0);
                    ++row;
                }

                // gamma >= 0.
                for (int r = 0; r < gd; ++r) {
                    add(row, gofs + r, -1.0);
                    hvals.push_back(0.0);
                    ++row;
                }
            }
        }
    }

    if (row != lay.total_rows())
        throw std::logic_error("assemble: row bookkeeping out of sync with emission");

    QpProblem problem;
    problem.layout = lay;
    problem.structure = std::move(ps);
    problem.objective_constant = obj.constant;

    problem.instance.P.resize(nz, nz);
    problem.instance.P.setFromTriplets(ptrips.begin(), ptrips.end());
    problem.instance.q = q;
    problem.instance.G.resize(row, nz);
    problem.instance.G.setFromTriplets(gtrips.begin(), gtrips.end());
    problem.instance.h = Eigen::Map<const Vector>(hvals.data(), static_cast<Eigen::Index>(hvals.size()));
    problem.instance.A.resize(0, nz);
    problem.instance.b = Vector(0);
    problem.instance.validate();
    return problem;
}

PolicySolution solve_policy(const QpProblem& problem, const SolverOptions& opts) {
    const QpResult res = solve(problem.instance, opts);
    const VariableLayout& lay = problem.layout;

    PolicySolution sol;
    const Vector v = res.z.head(lay.n_policy);
    sol.policy = PobPolicy::from_matrix(problem.structure.N, problem.structure.n_u,
                                        problem.structure.n_y, problem.structure.unpack(v));
    sol.lambda.resize(lay.n_bounds);
    for (int j = 0; j < lay.n_bounds; ++j) sol.lambda[j] = res.z[lay.lambda_offset(j)];
    sol.s.resize(lay.n_samples, lay.n_bounds);
    for (int j = 0; j < lay.n_bounds; ++j)
        for (int i = 0; i < lay.n_samples; ++i) sol.s(i, j) = res.z[lay.s_offset(i, j)];
    sol.objective_value = res.objective + problem.objective_constant;
    sol.status = res.status;
    sol.kkt = res.kkt;
    sol.iterations = res.iterations;
    return sol;
}

namespace {

// Fixed-policy program over (lambda, s, gamma[, aux]) shared by the
// reformulation-value evaluation.
QpInstance fixed_policy_program(const ConstraintPieces& pieces, const AmbiguitySet& amb) {
    const int N = static_cast<int>(pieces.b.size());
    const int d = static_cast<int>(pieces.a.cols());
    const int N_s = amb.n_samples();
    const int gd = static_cast<int>(amb.support.C.rows());
    const bool linf_ground = amb.ground_norm == GroundNorm::Linf;
    const int aux_dim = linf_ground ? d : 0;

    const int lambda_idx = 0;
    auto s_idx = [&](int i) { return 1 + i; };
    auto g_idx = [&](int i, int t) { return 1 + N_s + (i * N + (t - 1)) * gd; };
    auto a_idx = [&](int i, int t) {
        return 1 + N_s + N_s * N * gd + (i * N + (t - 1)) * aux_dim;
    };
    const int nz = 1 + N_s + N_s * N * gd + N_s * N * aux_dim;

    const Matrix& Cxi = amb.support.C;
    const Vector& dxi = amb.support.d;

    Vector q = Vector::Zero(nz);
    q[lambda_idx] = amb.epsilon;
    for (int i = 0; i < N_s; ++i) q[s_idx(i)] = 1.0 / N_s;

    std::vector<Triplet> gtrips;
    std::vector<double> hvals;
    int row = 0;
    auto add = [&](int r, int c, double v) {
        if (v != 0.0) gtrips.emplace_back(r, c, v);
    };

    // Tight cap on lambda: values beyond the Lipschitz constant of the pieces
    // never help, so the cap keeps the optimal face bounded without moving
    // the optimum.
    double lip = 0.0;
    for (int t = 0; t < N; ++t) {
        const double dual = amb.ground_norm == GroundNorm::L1
                                ? pieces.a.row(t).lpNorm<Eigen::Infinity>()
                                : pieces.a.row(t).lpNorm<1>();
        lip = std::max(lip, dual);
    }
    add(row, lambda_idx, 1.0);
    hvals.push_back(lip + 1.0);
    ++row;

    for (int i = 0; i < N_s; ++i) {
        const Vector& xi = amb.samples[i].xi;
        for (int t = 1; t <= N; ++t) {
            const Vector a_t = pieces.a.row(t - 1).transpose();
            const double b_t = pieces.b(t - 1);
            const int gofs = g_idx(i, t);

            const Vector gcoef = dxi - Cxi * xi;
            for (int r = 0; r < gd; ++r) add(row, gofs + r, gcoef[r]);
            add(row, s_idx(i), -1.0);
            hvals.push_back(-(b_t + a_t.dot(xi)));
            ++row;

            if (!linf_ground) {
                for (int r0 = 0; r0 < d; ++r0) {
                    for (int r = 0; r < gd; ++r) add(row, gofs + r, Cxi(r, r0));
                    add(row, lambda_idx, -1.0);
                    hvals.push_back(a_t[r0]);
                    ++row;
                    for (int r = 0; r < gd; ++r) add(row, gofs + r, -Cxi(r, r0));
                    add(row, lambda_idx, -1.0);
                    hvals.push_back(-a_t[r0]);
                    ++row;
                }
            } else {
                const int aofs = a_idx(i, t);
                for (int r0 = 0; r0 < d; ++r0) {
                    for (int r = 0; r < gd; ++r) add(row, gofs + r, Cxi(r, r0));
                    add(row, aofs + r0, -1.0);
                    hvals.push_back(a_t[r0]);
                    ++row;
                    for (int r = 0; r < gd; ++r) add(row, gofs + r, -Cxi(r, r0));
                    add(row, aofs + r0, -1.0);
                    hvals.push_back(-a_t[r0]);
                    ++row;
                }
                for (int r0 = 0; r0 < d; ++r0) add(row, aofs + r0, 1.0);
                add(row, lambda_idx, -1.0);
                hvals.push_back(0.0);
                ++row;
            }

            for (int r = 0; r < gd; ++r) {
                add(row, gofs + r, -1.0);
                hvals.push_back(0.0);
                ++row;
            }
        }
    }

    QpInstance inst;
    inst.P.resize(nz, nz);
    inst.q = q;
    inst.G.resize(row, nz);
    inst.G.setFromTriplets(gtrips.begin(), gtrips.end());
    inst.h = Eigen::Map<const Vector>(hvals.data(), static_cast<Eigen::Index>(hvals.size()));
    inst.A.resize(0, nz);
    inst.b = Vector(0);
    return inst;
}

}  // namespace

double reformulation_constraint_value(const StackedHorizon& stacked, const StateBound& bound,
                                      const AmbiguitySet& ambiguity, const Matrix& Htilde,
                                      const SolverOptions& opts) {
    const ConstraintPieces pieces = constraint_pieces(stacked, bound, Htilde);
    const QpInstance inst = fixed_policy_program(pieces, ambiguity);
    const QpResult res = solve(inst, opts);
    if (res.status != SolveStatus::optimal)
        throw std::runtime_error("reformulation_constraint_value: program did not reach optimality");
    return res.objective;
}

namespace {

// Per-coordinate interval of the support, read off singleton rows. The
// default box support yields exact intervals; more general supports must
// still bound every coordinate through singleton rows.
void support_intervals(const PolytopeSupport& sup, Vector& lo, Vector& hi) {
    const int dim = sup.dim();
    lo = Vector::Constant(dim, -std::numeric_limits<double>::infinity());
    hi = Vector::Constant(dim, std::numeric_limits<double>::infinity());
    for (int r = 0; r < sup.C.rows(); ++r) {
        int nz = 0, col = -1;
        for (int c = 0; c < dim; ++c)
            if (sup.C(r, c) != 0.0) {
                ++nz;
                col = c;
            }
        if (nz != 1) continue;
        const double coef = sup.C(r, col);
        if (coef > 0.0)
            hi[col] = std::min(hi[col], sup.d[r] / coef);
        else
            lo[col] = std::max(lo[col], sup.d[r] / coef);
    }
    for (int c = 0; c < dim; ++c) {
        if (!std::isfinite(lo[c]) || !std::isfinite(hi[c]))
            throw std::invalid_argument(
                "worst_case_expectation_oracle: support must bound every coordinate");
    }
}

// sup_{xi in support} a.xi + b - lambda ||xi - xi_hat|| as a bounded LP with
// the norm handled through epigraph auxiliaries.
double inner_sup(const Vector& a, double b, double lambda, const Vector& xi_hat,
                 const PolytopeSupport& sup, GroundNorm norm, const Vector& lo, const Vector& hi,
                 const SolverOptions& lp_opts) {
    const int d = static_cast<int>(a.size());
    const int n_aux = norm == GroundNorm::L1 ? d : 1;
    const int nz = d + n_aux;

    Vector q = Vector::Zero(nz);
    q.head(d) = -a;        // maximize a.xi
    q.tail(n_aux).array() = lambda;

    std::vector<Triplet> gtrips;
    std::vector<double> hvals;
    int row = 0;
    auto add = [&](int r, int c, double v) {
        if (v != 0.0) gtrips.emplace_back(r, c, v);
    };

    for (int r = 0; r < sup.C.rows(); ++r) {
        for (int c = 0; c < d; ++c) add(row, c, sup.C(r, c));
        hvals.push_back(sup.d[r]);
        ++row;
    }

    if (norm == GroundNorm::L1) {
        for (int c = 0; c < d; ++c) {
            add(row, c, 1.0);
            add(row, d + c, -1.0);
            hvals.push_back(xi_hat[c]);
            ++row;
            add(row, c, -1.0);
            add(row, d + c, -1.0);
            hvals.push_back(-xi_hat[c]);
            ++row;
            add(row, d + c, 1.0);
            hvals.push_back(std::max(hi[c] - xi_hat[c], xi_hat[c] - lo[c]) + 1.0);
            ++row;
        }
    } else {
        double cap = 0.0;
        for (int c = 0; c < d; ++c) {
            add(row, c, 1.0);
            add(row, d, -1.0);
            hvals.push_back(xi_hat[c]);
            ++row;
            add(row, c, -1.0);
            add(row, d, -1.0);
            hvals.push_back(-xi_hat[c]);
            ++row;
            cap = std::max(cap, std::max(hi[c] - xi_hat[c], xi_hat[c] - lo[c]));
        }
        add(row, d, 1.0);
        hvals.push_back(cap + 1.0);
        ++row;
    }

    QpInstance inst;
    inst.P.resize(nz, nz);
    inst.q = q;
    inst.G.resize(row, nz);
    inst.G.setFromTriplets(gtrips.begin(), gtrips.end());
    inst.h = Eigen::Map<const Vector>(hvals.data(), static_cast<Eigen::Index>(hvals.size()));
    inst.A.resize(0, nz);
    inst.b = Vector(0);

    const QpResult res = solve(inst, lp_opts);
    if (res.status != SolveStatus::optimal && res.kkt.max() > 1e-6)
        throw std::runtime_error("worst_case_expectation_oracle: inner supremum did not solve");
    return b - res.objective;
}

}  // namespace

double worst_case_expectation_oracle(const StackedHorizon& stacked, const StateBound& bound,
                                     const AmbiguitySet& ambiguity, const Matrix& Htilde,
                                     const OracleOptions& opts) {
    const ConstraintPieces pieces = constraint_pieces(stacked, bound, Htilde);
    const int N = static_cast<int>(pieces.b.size());
    const int N_s = ambiguity.n_samples();

    Vector lo, hi;
    support_intervals(ambiguity.support, lo, hi);

    SolverOptions lp_opts = opts.lp;
    lp_opts.tol = std::min(lp_opts.tol, 1e-10);
    lp_opts.abs_tol = std::min(lp_opts.abs_tol, 1e-9);

    // Value of the dual function at a fixed multiplier: average over samples
    // of the best affine piece's penalized supremum.
    auto phi = [&](double lambda) {
        double acc = 0.0;
        for (int i = 0; i < N_s; ++i) {
            const Vector& xi_hat = ambiguity.samples[i].xi;
            double best = -std::numeric_limits<double>::infinity();
            for (int t = 0; t < N; ++t) {
                best = std::max(best, inner_sup(pieces.a.row(t).transpose(), pieces.b[t], lambda,
                                                xi_hat, ambiguity.support, ambiguity.ground_norm,
                                                lo, hi, lp_opts));
            }
            acc += best;
        }
        return ambiguity.epsilon * lambda + acc / N_s;
    };

    // Beyond the Lipschitz constant of the pieces the inner suprema freeze at
    // the samples, so the minimum lies in [0, lip + 1].
    double lip = 0.0;
    for (int t = 0; t < N; ++t) {
        const double dual = ambiguity.ground_norm == GroundNorm::L1
                                ? pieces.a.row(t).lpNorm<Eigen::Infinity>()
                                : pieces.a.row(t).lpNorm<1>();
        lip = std::max(lip, dual);
    }

    double best_value = std::numeric_limits<double>::infinity();
    auto eval = [&](double lambda) {
        const double v = phi(lambda);
        best_value = std::min(best_value, v);
        return v;
    };

    double a = 0.0, b = lip + 1.0;
    eval(a);
    eval(b);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = eval(x1);
    double f2 = eval(x2);
    for (int it = 0; it < opts.max_golden_iters && (b - a) > 1e-10 * (1.0 + lip); ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = eval(x2);
        }
    }
    return best_value;
}

void dump_qp(const QpProblem& problem, const std::string& prefix) {
    save_qp(problem.instance, prefix + ".qp");

    std::ofstream os(prefix + ".json");
    if (!os) throw std::runtime_error("dump_qp: cannot open " + prefix + ".json");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", problem.objective_constant);
    os << "{\n";
    os << "  \"format\": \"wdrmpc-qp-1\",\n";
    os << "  \"num_vars\": " << problem.instance.num_vars() << ",\n";
    os << "  \"num_ineq\": " << problem.instance.num_ineq() << ",\n";
    os << "  \"num_eq\": " << problem.instance.num_eq() << ",\n";
    os << "  \"objective_constant\": " << buf << ",\n";
    os << "  \"policy\": {\"horizon\": " << problem.structure.N << ", \"n_u\": "
       << problem.structure.n_u << ", \"n_y\": " << problem.structure.n_y
       << ", \"num_free\": " << problem.structure.num_free() << "},\n";
    const VariableLayout& l = problem.layout;
    os << "  \"layout\": {\"n_policy\": " << l.n_policy << ", \"n_bounds\": " << l.n_bounds
       << ", \"n_samples\": " << l.n_samples << ", \"horizon\": " << l.horizon
       << ", \"gamma_dim\": " << l.gamma_dim << ", \"aux_dim\": " << l.aux_dim
       << ", \"lambda_base\": " << l.n_policy << ", \"s_base\": " << (l.n_policy + l.n_bounds)
       << ", \"gamma_base\": " << l.gamma_base() << ", \"aux_base\": " << l.aux_base() << "}\n";
    os << "}\n";
}

}  // namespace drmpc
