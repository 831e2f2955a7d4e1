#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "drmpc/lti.hpp"

namespace drmpc {

/// Ground norm on the disturbance-sequence space. Both choices have a
/// polyhedral dual ball, so every dual-norm constraint stays linear.
enum class GroundNorm { L1, Linf };

const char* to_string(GroundNorm n);

/// Chronological record of per-step disturbance vectors. With a capacity set,
/// inserting beyond it drops the oldest record.
class DisturbanceStore {
public:
    DisturbanceStore(int n_w, std::optional<std::size_t> capacity = std::nullopt);

    void push(const Vector& w);
    std::size_t size() const { return records_.size(); }
    int n_w() const { return n_w_; }
    const std::deque<Vector>& records() const { return records_; }

    /// One row per time step, columns w1..w{n_w}.
    void save_csv(const std::string& path) const;
    static DisturbanceStore load_csv(const std::string& path,
                                     std::optional<std::size_t> capacity = std::nullopt);

private:
    int n_w_;
    std::optional<std::size_t> capacity_;
    std::deque<Vector> records_;
};

/// Bounded polyhedron { xi : C xi <= d } supporting every admissible
/// disturbance sequence.
struct PolytopeSupport {
    Matrix C;
    Vector d;

    /// Per-entry box [-b, b]^dim as C = [I; -I], d = b * ones.
    static PolytopeSupport box(int dim, double b);

    int dim() const { return static_cast<int>(C.cols()); }
    bool contains(const Vector& xi, double tol = 1e-9) const;
};

/// One training point: N consecutive disturbances flattened in chronological
/// order, guaranteed inside the support.
struct SampleWindow {
    Vector xi;

    static SampleWindow checked(Vector xi, const PolytopeSupport& support);
};

/// Wasserstein ball data: empirical samples, radius, ground norm and support.
struct AmbiguitySet {
    std::vector<SampleWindow> samples;
    double epsilon = 0.0;
    GroundNorm ground_norm = GroundNorm::L1;
    PolytopeSupport support;

    static AmbiguitySet create(const std::vector<Vector>& windows,
                               PolytopeSupport support, double epsilon,
                               GroundNorm ground_norm);

    int n_samples() const { return static_cast<int>(samples.size()); }
    int dim() const { return support.dim(); }
};

/// Concentration constants of the finite-sample radius formula. Not derivable
/// from data here; exposed as configuration.
struct RadiusSchedule {
    double Cconst = 1.0;
    double cconst = 1.0;
    double alpha = 1.0;
    double kappa = 2.0;
};

/// Up to max_samples most recent stride-1 windows of length N, newest last.
std::vector<Vector> window_samples(const DisturbanceStore& store, int N, int max_samples);

/// Two-branch radius as a function of sample count and confidence level.
double calibrate_radius(const RadiusSchedule& sched, int n_samples, double beta);

/// Finitely supported distribution: points with matching weights.
struct DiscreteDistribution {
    std::vector<Vector> points;
    Vector weights;
};

/// Exact type-1 Wasserstein distance between two discrete distributions,
/// computed as the optimal transport cost between their supports. Validation
/// oracle only; not used on any control path.
double wasserstein_distance_discrete(const DiscreteDistribution& P,
                                     const DiscreteDistribution& Q, GroundNorm norm);

namespace detail {

/// Transport cost by exhaustive enumeration of the basic feasible couplings
/// (spanning trees of the bipartite support graph). Requires <= 4x4 supports.
double emd_enumerate(const Matrix& cost, const Vector& a, const Vector& b);

/// Transport cost as a linear program handed to the interior-point solver.
double emd_lp(const Matrix& cost, const Vector& a, const Vector& b);

}  // namespace detail

}  // namespace drmpc
