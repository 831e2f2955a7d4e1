#include "drmpc/ambiguity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "drmpc/qp.hpp"

namespace drmpc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double ground_distance(const Vector& x, const Vector& y, GroundNorm norm) {
    switch (norm) {
        case GroundNorm::L1: return (x - y).lpNorm<1>();
        case GroundNorm::Linf: return (x - y).lpNorm<Eigen::Infinity>();
    }
    return 0.0;
}

}  // namespace

const char* to_string(GroundNorm n) {
    return n == GroundNorm::L1 ? "l1" : "linf";
}

DisturbanceStore::DisturbanceStore(int n_w, std::optional<std::size_t> capacity)
    : n_w_(n_w), capacity_(capacity) {
    require(n_w >= 1, "DisturbanceStore: n_w must be positive");
    if (capacity_) require(*capacity_ >= 1, "DisturbanceStore: capacity must be positive");
}

void DisturbanceStore::push(const Vector& w) {
    require(w.size() == n_w_, "DisturbanceStore::push: dimension mismatch");
    records_.push_back(w);
    if (capacity_ && records_.size() > *capacity_) records_.pop_front();
}

void DisturbanceStore::save_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("DisturbanceStore::save_csv: cannot open " + path);
    for (int j = 0; j < n_w_; ++j) os << (j ? "," : "") << 'w' << (j + 1);
    os << '\n';
    char buf[64];
    for (const auto& w : records_) {
        for (int j = 0; j < n_w_; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", w[j]);
            os << (j ? "," : "") << buf;
        }
        os << '\n';
    }
}

DisturbanceStore DisturbanceStore::load_csv(const std::string& path,
                                            std::optional<std::size_t> capacity) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("DisturbanceStore::load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("DisturbanceStore::load_csv: empty file");
    int n_w = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));

    DisturbanceStore store(n_w, capacity);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        Vector w(n_w);
        std::string cell;
        for (int j = 0; j < n_w; ++j) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("DisturbanceStore::load_csv: short row");
            w[j] = std::stod(cell);
        }
        store.push(w);
    }
    return store;
}

PolytopeSupport PolytopeSupport::box(int dim, double b) {
    require(dim >= 1, "PolytopeSupport::box: dimension must be positive");
    require(b > 0.0, "PolytopeSupport::box: bound must be positive");
    PolytopeSupport s;
    s.C = Matrix::Zero(2 * dim, dim);
    s.C.topRows(dim) = Matrix::Identity(dim, dim);
    s.C.bottomRows(dim) = -Matrix::Identity(dim, dim);
    s.d = Vector::Constant(2 * dim, b);
    return s;
}

bool PolytopeSupport::contains(const Vector& xi, double tol) const {
    require(xi.size() == dim(), "PolytopeSupport::contains: dimension mismatch");
    return ((C * xi - d).array() <= tol).all();
}

SampleWindow SampleWindow::checked(Vector xi, const PolytopeSupport& support) {
    require(support.contains(xi), "SampleWindow: point outside the support polytope");
    return SampleWindow{std::move(xi)};
}

AmbiguitySet AmbiguitySet::create(const std::vector<Vector>& windows,
                                  PolytopeSupport support, double epsilon,
                                  GroundNorm ground_norm) {
    require(!windows.empty(), "AmbiguitySet: at least one sample required");
    require(epsilon >= 0.0, "AmbiguitySet: radius must be nonnegative");
    AmbiguitySet set;
    set.samples.reserve(windows.size());
    for (const auto& w : windows) set.samples.push_back(SampleWindow::checked(w, support));
    set.support = std::move(support);
    set.epsilon = epsilon;
    set.ground_norm = ground_norm;
    return set;
}

std::vector<Vector> window_samples(const DisturbanceStore& store, int N, int max_samples) {
    require(N >= 1, "window_samples: N must be positive");
    require(max_samples >= 1, "window_samples: max_samples must be positive");
    const int total = static_cast<int>(store.size());
    if (total < N) throw std::invalid_argument("window_samples: fewer than N records");

    const int available = total - N + 1;
    const int count = std::min(available, max_samples);
    const int n_w = store.n_w();
    const auto& rec = store.records();

    std::vector<Vector> out;
    out.reserve(count);
    for (int start = available - count; start <= total - N; ++start) {
        Vector xi(N * n_w);
        for (int t = 0; t < N; ++t) xi.segment(t * n_w, n_w) = rec[start + t];
        out.push_back(std::move(xi));
    }
    return out;
}

double calibrate_radius(const RadiusSchedule& sched, int n_samples, double beta) {
    require(sched.Cconst > 0 && sched.cconst > 0 && sched.alpha > 0 && sched.kappa > 0,
            "calibrate_radius: schedule constants must be positive");
    require(n_samples >= 1, "calibrate_radius: sample count must be positive");
    require(beta > 0.0 && beta < 1.0, "calibrate_radius: confidence must be in (0,1)");

    const double log_term = std::log(sched.Cconst / beta);
    if (log_term <= 0.0) return 0.0;  // bound already holds at zero radius

    const double base = log_term / (sched.cconst * n_samples);
    const double threshold = log_term / sched.cconst;
    const double exponent = (n_samples >= threshold) ? 1.0 / sched.kappa : 1.0 / sched.alpha;
    return std::pow(base, exponent);
}

namespace detail {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

}  // namespace

double emd_enumerate(const Matrix& cost, const Vector& a, const Vector& b) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    require(m >= 1 && n >= 1 && m <= 4 && n <= 4, "emd_enumerate: supports must be <= 4x4");

    const int cells = m * n;
    const int edges = m + n - 1;
    double best = std::numeric_limits<double>::infinity();

    std::vector<int> pick(edges);
    std::iota(pick.begin(), pick.end(), 0);

    // Iterate over all subsets of `edges` cells; each spanning tree of the
    // bipartite graph is a basic feasible coupling candidate.
    while (true) {
        UnionFind uf(m + n);
        bool tree = true;
        for (int e : pick) {
            const int i = e / n, j = e % n;
            if (!uf.unite(i, m + j)) {
                tree = false;
                break;
            }
        }
        if (tree) {
            // Solve the tree flows by repeatedly peeling degree-one nodes.
            std::vector<double> supply(m + n);
            for (int i = 0; i < m; ++i) supply[i] = a[i];
            for (int j = 0; j < n; ++j) supply[m + j] = -b[j];
            std::vector<std::vector<int>> incident(m + n);
            for (int idx = 0; idx < edges; ++idx) {
                const int e = pick[idx];
                incident[e / n].push_back(idx);
                incident[m + e % n].push_back(idx);
            }
            std::vector<double> flow(edges, 0.0);
            std::vector<bool> done_edge(edges, false);
            std::vector<bool> done_node(m + n, false);
            std::vector<int> degree(m + n);
            for (int v = 0; v < m + n; ++v) degree[v] = static_cast<int>(incident[v].size());

            for (int step = 0; step < edges; ++step) {
                int leaf = -1;
                for (int v = 0; v < m + n; ++v) {
                    if (!done_node[v] && degree[v] == 1) {
                        leaf = v;
                        break;
                    }
                }
                if (leaf < 0) break;
                int edge_idx = -1;
                for (int idx : incident[leaf])
                    if (!done_edge[idx]) edge_idx = idx;
                const int e = pick[edge_idx];
                const int i = e / n, j = m + e % n;
                const int other = (leaf == i) ? j : i;
                // Flow on a supply->demand edge equals the remaining leaf mass.
                const double f = (leaf == i) ? supply[leaf] : -supply[leaf];
                flow[edge_idx] = f;
                supply[other] += supply[leaf];
                supply[leaf] = 0.0;
                done_edge[edge_idx] = true;
                done_node[leaf] = true;
                --degree[leaf];
                --degree[other];
            }

            bool feasible = true;
            double total = 0.0;
            for (int idx = 0; idx < edges; ++idx) {
                if (flow[idx] < -1e-12) {
                    feasible = false;
                    break;
                }
                const int e = pick[idx];
                total += std::max(flow[idx], 0.0) * cost(e / n, e % n);
            }
            if (feasible) best = std::min(best, total);
        }

        // Next combination.
        int pos = edges - 1;
        while (pos >= 0 && pick[pos] == cells - edges + pos) --pos;
        if (pos < 0) break;
        ++pick[pos];
        for (int k = pos + 1; k < edges; ++k) pick[k] = pick[k - 1] + 1;
    }

    require(std::isfinite(best), "emd_enumerate: no feasible coupling found");
    return best;
}

double emd_lp(const Matrix& cost, const Vector& a, const Vector& b) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    const int nv = m * n;

    Vector q(nv);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) q[i * n + j] = cost(i, j);

    // Marginal equalities; the final column-sum row is redundant and dropped.
    const int ne = m + n - 1;
    Matrix A = Matrix::Zero(ne, nv);
    Vector rhs(ne);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) A(i, i * n + j) = 1.0;
        rhs[i] = a[i];
    }
    for (int j = 0; j + 1 < n; ++j) {
        for (int i = 0; i < m; ++i) A(m + j, i * n + j) = 1.0;
        rhs[m + j] = b[j];
    }

    Matrix G = -Matrix::Identity(nv, nv);
    Vector h = Vector::Zero(nv);

    SolverOptions opts;
    opts.tol = 1e-10;
    opts.abs_tol = 1e-10;
    opts.max_iter = 200;
    QpResult res = solve(QpInstance::from_dense(Matrix::Zero(nv, nv), q, G, h, A, rhs), opts);
    if (res.status != SolveStatus::optimal)
        throw std::runtime_error("emd_lp: transport program did not solve to optimality");
    return res.objective;
}

}  // namespace detail

double wasserstein_distance_discrete(const DiscreteDistribution& P,
                                     const DiscreteDistribution& Q, GroundNorm norm) {
    require(!P.points.empty() && !Q.points.empty(),
            "wasserstein_distance_discrete: empty distribution");
    require(P.weights.size() == static_cast<Eigen::Index>(P.points.size()) &&
                Q.weights.size() == static_cast<Eigen::Index>(Q.points.size()),
            "wasserstein_distance_discrete: weight/point count mismatch");
    require(std::abs(P.weights.sum() - 1.0) <= 1e-9 && std::abs(Q.weights.sum() - 1.0) <= 1e-9,
            "wasserstein_distance_discrete: weights must sum to one");
    require(P.weights.minCoeff() >= -1e-12 && Q.weights.minCoeff() >= -1e-12,
            "wasserstein_distance_discrete: negative weight");

    const int dim = static_cast<int>(P.points.front().size());
    for (const auto& x : P.points)
        require(x.size() == dim, "wasserstein_distance_discrete: point dimension mismatch");
    for (const auto& x : Q.points)
        require(x.size() == dim, "wasserstein_distance_discrete: point dimension mismatch");

    const int m = static_cast<int>(P.points.size());
    const int n = static_cast<int>(Q.points.size());
    Matrix cost(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) cost(i, j) = ground_distance(P.points[i], Q.points[j], norm);

    if (m <= 4 && n <= 4) return detail::emd_enumerate(cost, P.weights, Q.weights);
    return detail::emd_lp(cost, P.weights, Q.weights);
}

}  // namespace drmpc
