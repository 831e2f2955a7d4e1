#include "drmpc/experiments.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace drmpc {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

double Rng::uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Vector DisturbanceModel::sample(Rng& rng) const {
    Vector w(n_w);
    for (int i = 0; i < n_w; ++i) w[i] = bound * std::sin(rng.gaussian());
    return w;
}

// Frozen from one offline run of 1e6 draws (Rng seed 20240601); the analytic
// values are 0 and 4.5 (1 - exp(-2)) = 3.8909912254352428.
const double kSineGaussianMean = 7.8432539460713944e-05;
const double kSineGaussianVariance = 3.886496429425633;

ZohPair discretize_zoh(const Matrix& Ac, const Matrix& Bc, double dt) {
    require(Ac.rows() == Ac.cols(), "discretize_zoh: Ac must be square");
    require(Bc.rows() == Ac.rows(), "discretize_zoh: Bc row mismatch");
    require(dt > 0.0, "discretize_zoh: dt must be positive");
    const int n = static_cast<int>(Ac.rows());
    const int m = static_cast<int>(Bc.cols());
    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = Ac * dt;
    aug.topRightCorner(n, m) = Bc * dt;
    const Matrix e = aug.exp();
    return ZohPair{e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

Preset preset_mass_spring() {
    Matrix Ac(2, 2);
    Ac << 0, 1, -1, 0;
    Matrix Bc(2, 1);
    Bc << 0, 1;
    const ZohPair zoh = discretize_zoh(Ac, Bc, 0.1);

    Matrix C = Matrix::Zero(2, 2);
    C(0, 0) = 1e-3;
    Matrix D(1, 2);
    D << 1, 0;
    Matrix E(1, 2);
    E << 0, 1e-3;

    Preset p;
    p.name = "mass_spring";
    p.system = LtiSystem::create(zoh.A, zoh.B, C, D, E);

    Matrix Q = Matrix::Zero(2, 2);
    Q(0, 0) = 10.0;
    Q(1, 1) = 1.0;
    Matrix Qf = Matrix::Zero(2, 2);
    Qf(0, 0) = 15.0;
    Qf(1, 1) = 1.0;

    p.loop.N = 5;
    p.loop.N_u = 1;
    p.loop.max_samples = 10;
    p.loop.epsilon = 1.0;
    p.loop.bounds = {StateBound{1, BoundDirection::upper, 0.4}};
    p.loop.weights = CostWeights::create(Q, Qf, Matrix::Identity(1, 1), 1.0);
    p.loop.mu_step = Vector::Constant(2, kSineGaussianMean);
    p.loop.sigma_step = kSineGaussianVariance * Matrix::Identity(2, 2);
    p.loop.window_support = PolytopeSupport::box(p.loop.N * 2, 3.0);
    p.loop.ground_norm = GroundNorm::L1;
    p.loop.delta_t = 0.1;
    p.loop.solver.tol = 1e-12;
    p.loop.solver.abs_tol = 9e-7;

    p.x0 = Vector(2);
    p.x0 << -2.0, 0.0;
    p.disturbance = DisturbanceModel{DisturbanceModel::Kind::sine_of_gaussian, 2, 3.0};
    p.sim_seconds = 8.0;
    p.violation_window_seconds = 4.0;
    return p;
}

Preset preset_inverted_pendulum() {
    // Cart 0.5 kg, point-mass pendulum 0.2 kg at 0.3 m, no friction,
    // linearized about the upright equilibrium. States: cart position and
    // velocity, pendulum angle and angular velocity.
    const double cart = 0.5, mass = 0.2, length = 0.3, grav = 9.81;
    Matrix Ac = Matrix::Zero(4, 4);
    Ac(0, 1) = 1.0;
    Ac(1, 2) = -mass * grav / cart;
    Ac(2, 3) = 1.0;
    Ac(3, 2) = (cart + mass) * grav / (cart * length);
    Matrix Bc = Matrix::Zero(4, 1);
    Bc(1, 0) = 1.0 / cart;
    Bc(3, 0) = -1.0 / (cart * length);
    const ZohPair zoh = discretize_zoh(Ac, Bc, 0.1);

    Matrix C = Matrix::Zero(4, 2);
    C(3, 0) = 1e-2;
    Matrix D = Matrix::Zero(1, 4);
    D(0, 2) = 1.0;
    Matrix E(1, 2);
    E << 0, 1e-2;

    Preset p;
    p.name = "inverted_pendulum";
    p.system = LtiSystem::create(zoh.A, zoh.B, C, D, E);

    Matrix Q = Matrix::Zero(4, 4);
    Q(0, 0) = 1000.0;
    Q(1, 1) = 1.0;
    Q(2, 2) = 1500.0;
    Q(3, 3) = 1.0;

    p.loop.N = 5;
    p.loop.N_u = 1;
    p.loop.max_samples = 1;
    p.loop.epsilon = 1.0;
    p.loop.bounds = {StateBound{3, BoundDirection::upper, 0.5}};
    p.loop.weights = CostWeights::create(Q, Q, Matrix::Identity(1, 1), 1.0);
    p.loop.mu_step = Vector::Constant(2, kSineGaussianMean);
    p.loop.sigma_step = kSineGaussianVariance * Matrix::Identity(2, 2);
    p.loop.window_support = PolytopeSupport::box(p.loop.N * 2, 3.0);
    p.loop.ground_norm = GroundNorm::L1;
    p.loop.delta_t = 0.1;
    p.loop.solver.tol = 1e-12;
    p.loop.solver.abs_tol = 9e-7;

    p.x0 = Vector(4);
    p.x0 << 2.0, 0.0, 0.0, 0.0;
    p.disturbance = DisturbanceModel{DisturbanceModel::Kind::sine_of_gaussian, 2, 3.0};
    p.sim_seconds = 4.0;
    p.violation_window_seconds = 2.0;
    p.default_sweep = SweepSpec{"epsilon", {0.01, 0.1, 1.0, 3.0, 5.0, 10.0, 100.0}};
    return p;
}

double percentile_nearest_rank(std::vector<double> values, double pct) {
    require(!values.empty(), "percentile_nearest_rank: empty sample");
    require(pct >= 0.0 && pct <= 100.0, "percentile_nearest_rank: pct out of range");
    std::sort(values.begin(), values.end());
    const int n = static_cast<int>(values.size());
    int rank = static_cast<int>(std::ceil(pct / 100.0 * n));
    rank = std::clamp(rank, 1, n);
    return values[rank - 1];
}

namespace {

StatsSummary summarize(const Preset& preset, const std::vector<EpisodeLog>& logs) {
    StatsSummary s;
    s.preset = preset.name;
    s.realizations = static_cast<int>(logs.size());
    if (logs.empty()) return s;
    s.precheck = logs.front().precheck;

    const int steps = static_cast<int>(logs.front().records.size());
    const int state_index = preset.loop.bounds.empty() ? 0 : preset.loop.bounds.front().state_index;

    s.time.resize(steps);
    s.mean_path.resize(steps);
    s.p25_path.resize(steps);
    s.p75_path.resize(steps);
    for (int t = 0; t < steps; ++t) {
        std::vector<double> vals;
        vals.reserve(logs.size());
        for (const auto& log : logs) vals.push_back(log.records[t].x[state_index]);
        s.time[t] = logs.front().records[t].time;
        s.mean_path[t] =
            std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
        s.p25_path[t] = percentile_nearest_rank(vals, 25.0);
        s.p75_path[t] = percentile_nearest_rank(vals, 75.0);
    }

    // Violation rate per bound over the early window, averaged over
    // (realization, step) pairs.
    for (const StateBound& bd : preset.loop.bounds) {
        long long violations = 0, total = 0;
        for (const auto& log : logs) {
            for (const auto& rec : log.records) {
                if (rec.time > preset.violation_window_seconds + 1e-9) break;
                ++total;
                const double x = rec.x[bd.state_index];
                const bool violated =
                    bd.direction == BoundDirection::upper ? x > bd.value : x < bd.value;
                if (violated) ++violations;
            }
        }
        s.violation_rate_per_bound.push_back(total > 0 ? static_cast<double>(violations) / total
                                                       : 0.0);
    }
    if (!s.violation_rate_per_bound.empty()) s.violation_rate = s.violation_rate_per_bound.front();

    std::vector<double> episode_obj;
    for (const auto& log : logs) {
        double acc = 0.0;
        int count = 0;
        for (const auto& rec : log.records) {
            if (rec.policy_refreshed && std::isfinite(rec.objective)) {
                acc += rec.objective;
                ++count;
            }
        }
        if (count > 0) episode_obj.push_back(acc / count);
        s.infeasible_count += log.infeasible_solves;
        if (log.first_solve_failed) ++s.first_solve_failures;
        s.max_kkt = std::max(s.max_kkt, log.max_kkt);
    }
    if (!episode_obj.empty()) {
        s.obj_mean = std::accumulate(episode_obj.begin(), episode_obj.end(), 0.0) /
                     static_cast<double>(episode_obj.size());
        s.obj_p25 = percentile_nearest_rank(episode_obj, 25.0);
        s.obj_p75 = percentile_nearest_rank(episode_obj, 75.0);
    }
    return s;
}

}  // namespace

MonteCarloRun run_realizations(const Preset& preset, int realizations, std::uint64_t seed,
                               int n_init, double sim_seconds, int threads) {
    require(realizations >= 1, "run_realizations: need at least one realization");
    require(n_init >= 1, "run_realizations: n_init must be positive");
    const int steps = static_cast<int>(std::llround(sim_seconds / preset.loop.delta_t));
    require(steps >= 0, "run_realizations: negative episode length");

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<EpisodeLog> logs(realizations);
    std::vector<std::exception_ptr> errors(realizations);
    std::atomic<int> next{0};

    auto work = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= realizations) return;
            try {
                Rng rng(split_seed(seed, static_cast<std::uint64_t>(i)));
                std::vector<Vector> preseed;
                preseed.reserve(static_cast<std::size_t>(n_init) * preset.loop.N);
                for (int k = 0; k < n_init * preset.loop.N; ++k)
                    preseed.push_back(preset.disturbance.sample(rng));
                std::vector<Vector> stream;
                stream.reserve(steps);
                for (int k = 0; k < steps; ++k) stream.push_back(preset.disturbance.sample(rng));
                logs[i] = run_episode(preset.system, preset.loop, preset.x0, preseed, stream);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    int pool = threads > 0 ? threads
                           : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    pool = std::min(pool, realizations);
    if (pool <= 1) {
        work();
    } else {
        std::vector<std::thread> workers;
        workers.reserve(pool);
        for (int t = 0; t < pool; ++t) workers.emplace_back(work);
        for (auto& w : workers) w.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    MonteCarloRun out;
    out.logs = std::move(logs);
    out.stats = summarize(preset, out.logs);
    out.stats.wallclock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
    return out;
}

Preset make_preset(const ExperimentConfig& cfg) {
    Preset p;
    if (cfg.custom) {
        p = *cfg.custom;
    } else if (cfg.preset == "mass_spring") {
        p = preset_mass_spring();
    } else if (cfg.preset == "inverted_pendulum") {
        p = preset_inverted_pendulum();
    } else {
        throw std::invalid_argument("make_preset: unknown preset '" + cfg.preset + "'");
    }
    if (cfg.epsilon) p.loop.epsilon = *cfg.epsilon;
    if (cfg.radius_schedule) p.loop.radius_schedule = cfg.radius_schedule;
    if (cfg.confidence_beta) p.loop.confidence_beta = *cfg.confidence_beta;
    if (cfg.sim_seconds) p.sim_seconds = *cfg.sim_seconds;
    if (cfg.max_samples) p.loop.max_samples = *cfg.max_samples;
    if (cfg.update_period) p.loop.N_u = *cfg.update_period;
    return p;
}

std::vector<StatsSummary> run_monte_carlo(const ExperimentConfig& cfg) {
    const Preset base = make_preset(cfg);

    std::vector<std::pair<std::string, double>> points;
    if (cfg.sweep) {
        require(cfg.sweep->parameter == "epsilon" || cfg.sweep->parameter == "n_init",
                "run_monte_carlo: sweep parameter must be 'epsilon' or 'n_init'");
        require(!cfg.sweep->values.empty(), "run_monte_carlo: empty sweep");
        for (double v : cfg.sweep->values) points.emplace_back(cfg.sweep->parameter, v);
    } else {
        points.emplace_back("", std::numeric_limits<double>::quiet_NaN());
    }

    const bool writing = !cfg.output_dir.empty();
    std::filesystem::path out_dir(cfg.output_dir);
    if (writing) std::filesystem::create_directories(out_dir);

    std::vector<StatsSummary> summaries;
    for (const auto& [param, value] : points) {
        Preset p = base;
        int n_init = cfg.n_init;
        if (param == "epsilon") {
            require(value >= 0.0, "run_monte_carlo: negative radius in sweep");
            p.loop.epsilon = value;
        } else if (param == "n_init") {
            n_init = static_cast<int>(std::llround(value));
            require(n_init >= 1, "run_monte_carlo: n_init sweep values must be positive");
        }

        MonteCarloRun mc =
            run_realizations(p, cfg.realizations, cfg.seed, n_init, p.sim_seconds, cfg.threads);
        mc.stats.sweep_parameter = param;
        mc.stats.sweep_value = value;

        if (writing) {
            std::string tag = p.name;
            if (!param.empty()) tag += "_" + param + "_" + format_short(value);
            if (cfg.save_episode_logs) {
                std::filesystem::create_directories(out_dir / "logs");
                for (std::size_t i = 0; i < mc.logs.size(); ++i) {
                    std::ostringstream name;
                    name << "episode_" << tag << "_r" << i << ".csv";
                    mc.logs[i].save_csv((out_dir / "logs" / name.str()).string(), p.system.n_x,
                                        p.system.n_u, p.system.n_y, p.system.n_w);
                }
            }
            write_bands_csv(mc.stats, (out_dir / ("bands_" + tag + ".csv")).string());
        }
        summaries.push_back(std::move(mc.stats));
    }

    if (writing) {
        std::ofstream os(out_dir / "summary.json");
        if (!os) throw std::runtime_error("run_monte_carlo: cannot write summary.json");
        os << summaries_to_json(summaries);
    }
    return summaries;
}

std::string summaries_to_json(const std::vector<StatsSummary>& summaries) {
    std::ostringstream os;
    os << "[\n";
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const StatsSummary& s = summaries[i];
        os << "  {\n";
        os << "    \"preset\": \"" << s.preset << "\",\n";
        if (s.sweep_parameter.empty()) {
            os << "    \"sweep_parameter\": null,\n";
            os << "    \"sweep_value\": null,\n";
        } else {
            os << "    \"sweep_parameter\": \"" << s.sweep_parameter << "\",\n";
            os << "    \"sweep_value\": " << format_double(s.sweep_value) << ",\n";
        }
        os << "    \"realizations\": " << s.realizations << ",\n";
        os << "    \"violation_rate\": " << format_double(s.violation_rate) << ",\n";
        os << "    \"obj_mean\": " << format_double(s.obj_mean) << ",\n";
        os << "    \"obj_p25\": " << format_double(s.obj_p25) << ",\n";
        os << "    \"obj_p75\": " << format_double(s.obj_p75) << ",\n";
        os << "    \"infeasible_count\": " << s.infeasible_count << ",\n";
        os << "    \"wallclock_ms\": " << s.wallclock_ms << "\n";
        os << "  }" << (i + 1 < summaries.size() ? "," : "") << "\n";
    }
    os << "]\n";
    return os.str();
}

void write_bands_csv(const StatsSummary& stats, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_bands_csv: cannot open " + path);
    os << "time,mean,p25,p75\n";
    for (std::size_t t = 0; t < stats.time.size(); ++t) {
        os << format_double(stats.time[t]) << ',' << format_double(stats.mean_path[t]) << ','
           << format_double(stats.p25_path[t]) << ',' << format_double(stats.p75_path[t]) << '\n';
    }
}

SmallInstance make_small_instance(Rng& rng, double epsilon, int n_samples) {
    const int n_x = 2, n_u = 1, n_y = 1, n_w = 1, N = 2;
    auto entry = [&](double scale) { return scale * (2.0 * rng.uniform() - 1.0); };

    Matrix A(n_x, n_x), B(n_x, n_u), C(n_x, n_w), D(n_y, n_x), E(n_y, n_w);
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_x; ++j) A(i, j) = entry(0.8);
    for (int i = 0; i < n_x; ++i) B(i, 0) = entry(1.0);
    C(0, 0) = 0.5 + rng.uniform();
    C(1, 0) = entry(1.0);
    for (int j = 0; j < n_x; ++j) D(0, j) = entry(1.0);
    E(0, 0) = entry(0.5);

    SmallInstance inst;
    inst.sys = LtiSystem::create(A, B, C, D, E);

    Vector x0(n_x);
    for (int i = 0; i < n_x; ++i) x0[i] = entry(1.0);
    inst.stacked = build_stacked(inst.sys, N, x0);

    const int d = N * n_w;
    std::vector<Vector> windows;
    for (int i = 0; i < n_samples; ++i) {
        Vector xi(d);
        for (int r = 0; r < d; ++r) xi[r] = entry(2.5);
        windows.push_back(xi);
    }
    inst.ambiguity =
        AmbiguitySet::create(windows, PolytopeSupport::box(d, 3.0), epsilon, GroundNorm::L1);

    inst.bound.state_index = rng.uniform() < 0.5 ? 0 : 1;
    inst.bound.direction = rng.uniform() < 0.75 ? BoundDirection::upper : BoundDirection::lower;
    inst.bound.value = 0.0;

    Matrix M(n_x, n_x);
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_x; ++j) M(i, j) = entry(1.0);
    Matrix Q = M.transpose() * M + 0.1 * Matrix::Identity(n_x, n_x);
    inst.weights = CostWeights::create(Q, Q, Matrix::Constant(1, 1, 0.5 + rng.uniform()), 1.0);

    inst.moments = DisturbanceMoments::iid(Vector::Zero(n_w),
                                           Matrix::Constant(1, 1, 0.5 + rng.uniform()), N);

    const PolicyStructure ps = PolicyStructure::make(N, n_u, n_y);
    Vector v(ps.num_free());
    for (int i = 0; i < v.size(); ++i) v[i] = entry(0.5);
    inst.policy = PobPolicy::from_matrix(N, n_u, n_y, ps.unpack(v));
    inst.Htilde = policy_to_disturbance_form(inst.policy, inst.stacked);
    return inst;
}

namespace {

double robust_max_over_box(const ConstraintPieces& pieces, double b) {
    const int d = static_cast<int>(pieces.a.cols());
    double best = -std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < (1 << d); ++mask) {
        Vector xi(d);
        for (int r = 0; r < d; ++r) xi[r] = (mask >> r) & 1 ? b : -b;
        best = std::max(best, pieces.evaluate(xi));
    }
    return best;
}

}  // namespace

bool run_validation_suite(std::ostream& os, bool small_only) {
    bool all_pass = true;
    auto report = [&](const std::string& name, bool pass, const std::string& detail) {
        os << (pass ? "PASS" : "FAIL") << "  " << name;
        if (!detail.empty()) os << "  (" << detail << ")";
        os << "\n";
        all_pass = all_pass && pass;
    };
    const int instances = small_only ? 5 : 10;

    // Metric axioms of the discrete transport distance.
    {
        Rng rng(101);
        double worst = 0.0;
        bool pass = true;
        for (int trial = 0; trial < instances; ++trial) {
            auto random_dist = [&](int pts) {
                DiscreteDistribution dd;
                Vector w(pts);
                for (int i = 0; i < pts; ++i) {
                    Vector x(2);
                    x << 4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0;
                    dd.points.push_back(x);
                    w[i] = rng.uniform() + 0.05;
                }
                dd.weights = w / w.sum();
                return dd;
            };
            DiscreteDistribution P = random_dist(3), Q = random_dist(3), R = random_dist(2);
            const double pq = wasserstein_distance_discrete(P, Q, GroundNorm::L1);
            const double qp = wasserstein_distance_discrete(Q, P, GroundNorm::L1);
            const double pp = wasserstein_distance_discrete(P, P, GroundNorm::L1);
            const double pr = wasserstein_distance_discrete(P, R, GroundNorm::L1);
            const double rq = wasserstein_distance_discrete(R, Q, GroundNorm::L1);
            worst = std::max({worst, std::abs(pq - qp), pp, pq - (pr + rq)});
            pass = pass && pq >= 0 && std::abs(pq - qp) <= 1e-9 && pp <= 1e-9 &&
                   pq <= pr + rq + 1e-7;
        }
        report("wasserstein metric axioms", pass, "worst gap " + format_short(worst));
    }

    // Strong duality: reformulated rows against the first-principles oracle.
    {
        Rng rng(202);
        double worst = 0.0;
        bool pass = true;
        for (int trial = 0; trial < instances; ++trial) {
            const double eps = trial % 2 == 0 ? 0.5 : 1.5;
            SmallInstance inst = make_small_instance(rng, eps, 1 + trial % 3);
            const double lhs =
                reformulation_constraint_value(inst.stacked, inst.bound, inst.ambiguity, inst.Htilde);
            const double rhs =
                worst_case_expectation_oracle(inst.stacked, inst.bound, inst.ambiguity, inst.Htilde);
            worst = std::max(worst, std::abs(lhs - rhs));
            pass = pass && std::abs(lhs - rhs) <= 1e-4;
        }
        report("reformulation matches worst-case oracle", pass, "worst gap " + format_short(worst));
    }

    // Radius limits: sample average at zero, robust box maximum when the ball
    // swallows the support.
    {
        Rng rng(303);
        double worst0 = 0.0, worst_inf = 0.0;
        bool pass = true;
        for (int trial = 0; trial < instances; ++trial) {
            SmallInstance inst = make_small_instance(rng, 0.0, 2);
            const ConstraintPieces pieces =
                constraint_pieces(inst.stacked, inst.bound, inst.Htilde);
            double avg = 0.0;
            for (const auto& s : inst.ambiguity.samples) avg += pieces.evaluate(s.xi);
            avg /= inst.ambiguity.n_samples();
            const double at_zero = reformulation_constraint_value(inst.stacked, inst.bound,
                                                                  inst.ambiguity, inst.Htilde);
            worst0 = std::max(worst0, std::abs(at_zero - avg));

            AmbiguitySet big = inst.ambiguity;
            big.epsilon = 2.0 * 3.0 * inst.ambiguity.dim() + 1.0;
            const double robust =
                reformulation_constraint_value(inst.stacked, inst.bound, big, inst.Htilde);
            const double vertex = robust_max_over_box(pieces, 3.0);
            worst_inf = std::max(worst_inf, std::abs(robust - vertex));
            pass = pass && std::abs(at_zero - avg) <= 1e-6 && std::abs(robust - vertex) <= 1e-5;
        }
        report("radius limits (sample average / robust maximum)", pass,
               "gaps " + format_short(worst0) + ", " + format_short(worst_inf));
    }

    // Monotonicity of the worst-case value in the radius.
    {
        Rng rng(404);
        bool pass = true;
        for (int trial = 0; trial < std::max(3, instances / 2); ++trial) {
            SmallInstance inst = make_small_instance(rng, 1.0, 2);
            double prev = -std::numeric_limits<double>::infinity();
            for (double eps : {0.0, 0.1, 1.0, 10.0}) {
                AmbiguitySet amb = inst.ambiguity;
                amb.epsilon = eps;
                const double v =
                    reformulation_constraint_value(inst.stacked, inst.bound, amb, inst.Htilde);
                pass = pass && v >= prev - 1e-7;
                prev = v;
            }
        }
        report("worst-case value nondecreasing in radius", pass, "");
    }

    return all_pass;
}

}  // namespace drmpc
