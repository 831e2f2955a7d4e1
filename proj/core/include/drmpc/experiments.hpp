#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drmpc/loop.hpp"

namespace drmpc {

/// Deterministic random source: mt19937_64 with an explicit Box-Muller
/// transform, so sequences are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform();   // [0, 1)
    double gaussian();  // standard normal

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Decorrelated per-stream seed derived from a master seed (splitmix64 step).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream);

/// Bounded disturbance process: every entry is 3 sin(X) with X standard
/// normal, hence supported on [-bound, bound].
struct DisturbanceModel {
    enum class Kind { sine_of_gaussian };
    Kind kind = Kind::sine_of_gaussian;
    int n_w = 1;
    double bound = 3.0;

    Vector sample(Rng& rng) const;
};

/// Sample moments of the scalar 3 sin(X) process, frozen from one offline
/// Monte Carlo run of 1e6 draws (Rng seed 20240601). The analytic values are
/// mean 0 and variance 4.5 (1 - exp(-2)) ~ 3.8909912.
extern const double kSineGaussianMean;
extern const double kSineGaussianVariance;

struct ZohPair {
    Matrix A;
    Matrix B;
};

/// Exact zero-order-hold discretization via the augmented matrix exponential.
ZohPair discretize_zoh(const Matrix& Ac, const Matrix& Bc, double dt);

struct SweepSpec {
    std::string parameter;  // "epsilon" or "n_init"
    std::vector<double> values;
};

/// A named case study: plant, loop configuration, initial state, disturbance
/// process and default episode length.
struct Preset {
    std::string name;
    LtiSystem system;
    LoopConfig loop;
    Vector x0;
    DisturbanceModel disturbance;
    double sim_seconds = 8.0;
    double violation_window_seconds = 4.0;
    std::optional<SweepSpec> default_sweep;  // applied by batch drivers when none is given
};

/// Mass-spring benchmark: unit mass and stiffness discretized at 0.1 s,
/// position driven by 1e-3-scaled disturbance, measured position noised by a
/// second 1e-3-scaled disturbance, velocity bounded above by 0.4.
Preset preset_mass_spring();

/// Linearized cart-pole: angular velocity driven by a 1e-2-scaled
/// disturbance, measured angle noised by a second 1e-2-scaled one, angular
/// velocity bounded above by 0.5.
Preset preset_inverted_pendulum();

struct ExperimentConfig {
    std::string preset = "mass_spring";
    std::optional<Preset> custom;  // takes precedence over the named preset
    int realizations = 50;
    std::uint64_t seed = 1;
    int n_init = 1;  // pre-seeded records = n_init * N
    std::optional<double> epsilon;
    std::optional<RadiusSchedule> radius_schedule;  // radius from sample count
    std::optional<double> confidence_beta;
    std::optional<double> sim_seconds;
    std::optional<int> max_samples;
    std::optional<int> update_period;
    std::optional<SweepSpec> sweep;
    std::string output_dir;  // empty: keep results in memory only
    int threads = 0;         // 0 = hardware concurrency
    bool save_episode_logs = true;
};

struct StatsSummary {
    std::string preset;
    std::string sweep_parameter;  // empty when not sweeping
    double sweep_value = std::numeric_limits<double>::quiet_NaN();
    int realizations = 0;

    double violation_rate = 0.0;               // of the first bound, over the violation window
    std::vector<double> violation_rate_per_bound;
    double obj_mean = 0.0;
    double obj_p25 = 0.0;
    double obj_p75 = 0.0;
    int infeasible_count = 0;      // failed solves after each episode's first
    int first_solve_failures = 0;  // episodes whose very first solve failed
    double max_kkt = 0.0;
    FeasibilityPrecheck precheck;
    long long wallclock_ms = 0;

    // Per-step distribution of the constrained state across realizations.
    std::vector<double> time;
    std::vector<double> mean_path;
    std::vector<double> p25_path;
    std::vector<double> p75_path;
};

/// Nearest-rank percentile (pct in [0, 100]).
double percentile_nearest_rank(std::vector<double> values, double pct);

struct MonteCarloRun {
    StatsSummary stats;
    std::vector<EpisodeLog> logs;
};

/// Runs `realizations` independent seeded episodes of the preset in a worker
/// pool and aggregates the summary. Results depend only on (preset, seed,
/// n_init, steps), never on the thread count.
MonteCarloRun run_realizations(const Preset& preset, int realizations, std::uint64_t seed,
                               int n_init, double sim_seconds, int threads);

/// Applies the config overrides onto the named preset.
Preset make_preset(const ExperimentConfig& cfg);

/// Full experiment driver: resolves the preset, runs the sweep (or a single
/// run), optionally writes episode CSVs, band CSVs and summary JSON to
/// output_dir, and returns the per-sweep-value summaries.
std::vector<StatsSummary> run_monte_carlo(const ExperimentConfig& cfg);

/// Deterministic JSON rendering of the summaries (17 significant digits).
std::string summaries_to_json(const std::vector<StatsSummary>& summaries);

void write_bands_csv(const StatsSummary& stats, const std::string& path);

/// Randomized small problem used by the validation suite: a stable random
/// plant with scalar disturbance, a short horizon, a box support and a fixed
/// causal policy.
struct SmallInstance {
    LtiSystem sys;
    StackedHorizon stacked;
    AmbiguitySet ambiguity;
    StateBound bound;
    CostWeights weights;
    DisturbanceMoments moments;
    PobPolicy policy;
    Matrix Htilde;
};

SmallInstance make_small_instance(Rng& rng, double epsilon, int n_samples);

/// Cross-checks the reformulation against the independent oracles on random
/// small instances, printing one line per property. Returns true when all
/// properties hold.
bool run_validation_suite(std::ostream& os, bool small_only = true);

}  // namespace drmpc
