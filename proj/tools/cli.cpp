#include "cli.hpp"

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drmpc/reform.hpp"

namespace drmpc {

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> realizations;
    std::optional<double> epsilon;
    std::optional<double> sim_seconds;
    std::optional<int> n_init;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON configuration file");
    cmd->add_option("--preset", args.preset, "Named preset (mass_spring | inverted_pendulum)");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--seed", args.seed, "Master seed");
    cmd->add_option("--realizations", args.realizations, "Number of realizations");
    cmd->add_option("--epsilon", args.epsilon, "Ball radius override");
    cmd->add_option("--sim-seconds", args.sim_seconds, "Episode length in seconds");
    cmd->add_option("--n-init", args.n_init, "Samples collected prior to initialization");
    cmd->add_option("--threads", args.threads, "Worker threads (0 = hardware)");
}

ExperimentConfig resolve(const CommonArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    if (!args.preset.empty()) cfg.preset = args.preset;
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    if (args.seed) cfg.seed = *args.seed;
    if (args.realizations) cfg.realizations = *args.realizations;
    if (args.epsilon) cfg.epsilon = *args.epsilon;
    if (args.sim_seconds) cfg.sim_seconds = *args.sim_seconds;
    if (args.n_init) cfg.n_init = *args.n_init;
    if (args.threads) cfg.threads = *args.threads;
    return cfg;
}

int run_command(const ExperimentConfig& cfg) {
    const std::vector<StatsSummary> summaries = run_monte_carlo(cfg);
    for (const auto& s : summaries) {
        std::cout << s.preset;
        if (!s.sweep_parameter.empty())
            std::cout << "  " << s.sweep_parameter << "=" << s.sweep_value;
        std::cout << "  violation_rate=" << s.violation_rate << "  obj_mean=" << s.obj_mean
                  << "  infeasible=" << s.infeasible_count << "\n";
        if (s.first_solve_failures > 0) {
            std::cerr << "error: " << s.first_solve_failures
                      << " realization(s) failed their first solve\n";
            return 3;
        }
    }
    return 0;
}

int dump_qp_command(const ExperimentConfig& cfg, const std::string& prefix, int samples) {
    Preset preset = make_preset(cfg);
    Rng rng(cfg.seed);
    std::vector<Vector> records;
    for (int k = 0; k < samples + preset.loop.N - 1; ++k)
        records.push_back(preset.disturbance.sample(rng));
    DisturbanceStore store(preset.system.n_w);
    for (const auto& w : records) store.push(w);

    const StackedHorizon stacked = build_stacked(preset.system, preset.loop.N, preset.x0);
    const std::vector<Vector> windows =
        window_samples(store, preset.loop.N, preset.loop.max_samples);
    const AmbiguitySet amb = AmbiguitySet::create(windows, preset.loop.window_support,
                                                  preset.loop.epsilon, preset.loop.ground_norm);
    const DisturbanceMoments moments =
        DisturbanceMoments::iid(preset.loop.mu_step, preset.loop.sigma_step, preset.loop.N);
    const QpProblem problem =
        assemble(stacked, preset.loop.weights, moments, preset.loop.bounds, amb);
    dump_qp(problem, prefix);
    std::cout << "wrote " << prefix << ".qp and " << prefix << ".json (" <<
        problem.instance.num_vars() << " vars, " << problem.instance.num_ineq() << " rows)\n";
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Data-driven distributionally robust MPC experiments"};
    app.require_subcommand(1);

    CommonArgs run_args, mc_args, dump_args;
    std::string sweep_text, dump_prefix = "program";
    int dump_samples = 10;
    bool validate_small = false;

    CLI::App* run = app.add_subcommand("run", "Run a single closed-loop episode");
    add_common(run, run_args);

    CLI::App* mc = app.add_subcommand("montecarlo", "Monte Carlo sweep with statistics");
    add_common(mc, mc_args);
    mc->add_option("--sweep", sweep_text, "Sweep spec, e.g. epsilon=0.01,1,100 or n_init=1,3,5");

    CLI::App* dump = app.add_subcommand("dump-qp", "Assemble one program and dump it");
    add_common(dump, dump_args);
    dump->add_option("--prefix", dump_prefix, "Output file prefix");
    dump->add_option("--samples", dump_samples, "Number of sample windows");

    CLI::App* validate = app.add_subcommand("validate", "Run the oracle cross-check suite");
    validate->add_flag("--small", validate_small, "Reduced instance count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            ExperimentConfig cfg = resolve(run_args);
            cfg.realizations = run_args.realizations.value_or(1);
            return run_command(cfg);
        }
        if (mc->parsed()) {
            ExperimentConfig cfg = resolve(mc_args);
            if (!sweep_text.empty()) cfg.sweep = parse_sweep(sweep_text);
            if (!cfg.sweep) cfg.sweep = make_preset(cfg).default_sweep;
            return run_command(cfg);
        }
        if (dump->parsed()) {
            return dump_qp_command(resolve(dump_args), dump_prefix, dump_samples);
        }
        if (validate->parsed()) {
            return run_validation_suite(std::cout, validate_small) ? 0 : 3;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}

}  // namespace drmpc
