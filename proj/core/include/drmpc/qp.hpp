#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>

#include "drmpc/lti.hpp"

namespace drmpc {

using SparseMat = Eigen::SparseMatrix<double>;

enum class SolveStatus { optimal, primal_infeasible, max_iter };

const char* to_string(SolveStatus status);

/// Convex quadratic program
///
///   minimize    1/2 z'Pz + q'z
///   subject to  G z <= h,   A z = b
///
/// with P symmetric positive semidefinite. The equality block may be empty
/// (and is for every program assembled in this repo; it exists for the
/// transport linear programs used by the validation oracles).
struct QpInstance {
    SparseMat P;  // n x n
    Vector q;     // n
    SparseMat G;  // m x n
    Vector h;     // m
    SparseMat A;  // p x n
    Vector b;     // p

    int num_vars() const { return static_cast<int>(q.size()); }
    int num_ineq() const { return static_cast<int>(h.size()); }
    int num_eq() const { return static_cast<int>(b.size()); }

    static QpInstance from_dense(const Matrix& P, const Vector& q,
                                 const Matrix& G, const Vector& h);
    static QpInstance from_dense(const Matrix& P, const Vector& q,
                                 const Matrix& G, const Vector& h,
                                 const Matrix& A, const Vector& b);

    /// Dimension consistency, symmetry of P within 1e-12 (relative), and
    /// finiteness of all data. Throws std::invalid_argument.
    void validate() const;
};

struct KktResiduals {
    double stationarity = 0.0;     // ||Pz + q + G'mu (+ A'y)||_inf
    double primal = 0.0;           // ||max(Gz - h, 0)||_inf (and ||Az - b||_inf)
    double complementarity = 0.0;  // ||mu .* (Gz - h)||_inf

    double max() const;
};

struct SolverOptions {
    double tol = 1e-6;      // relative feasibility/optimality tolerance
    double abs_tol = 1e-7;  // a residual also passes below this absolute level
    int max_iter = 200;
    double step_fraction = 0.99;    // fraction of the step to the boundary taken
    double static_reg = 1e-12;      // diagonal regularization of the KKT factor
    int refinement_steps = 10;      // refinement cap per KKT solve (stops at machine level)
    double infeas_tol = 1e-12;      // Farkas certificate ray-residual threshold
};

struct QpResult {
    Vector z;
    Vector ineq_duals;  // nonnegative multipliers for G z <= h
    Vector eq_duals;
    SolveStatus status = SolveStatus::max_iter;
    KktResiduals kkt;
    int iterations = 0;
    double objective = 0.0;

    // Populated when status == primal_infeasible: y >= 0 with G'y + A'y_eq ~ 0
    // and h'y + b'y_eq < 0.
    Vector certificate;
    Vector certificate_eq;
};

/// Primal-dual interior-point solve (Mehrotra predictor-corrector). The KKT
/// systems are factored with a sparse LDL' on the quasi-definite augmented
/// matrix; identical inputs produce bit-identical iterates.
QpResult solve(const QpInstance& inst, const SolverOptions& opts = {});

KktResiduals check_kkt(const QpInstance& inst, const Vector& z, const Vector& ineq_duals);
KktResiduals check_kkt(const QpInstance& inst, const Vector& z, const Vector& ineq_duals,
                       const Vector& eq_duals);

/// Plain-text triplet dump of an instance ("P r c v" / "q r v" / ... lines),
/// the same format emitted for assembled programs. Round-trips exactly.
void save_qp(const QpInstance& inst, const std::string& path);
QpInstance load_qp(const std::string& path);

}  // namespace drmpc
