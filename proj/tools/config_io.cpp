#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cli.hpp"

namespace drmpc {

namespace {

Matrix parse_matrix(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty() || rows.front().empty())
        throw std::invalid_argument("load_config: empty matrix");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size())
            throw std::invalid_argument("load_config: ragged matrix");
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

Vector parse_vector(const nlohmann::json& j) {
    const auto vals = j.get<std::vector<double>>();
    Vector v(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
    return v;
}

// Fully custom case study: plant matrices, weights, bounds and initial state
// are required; the rest mirrors the named presets' defaults.
Preset parse_custom_preset(const nlohmann::json& j) {
    Preset p;
    p.name = "custom";
    const auto& sys = j.at("system");
    p.system = LtiSystem::create(parse_matrix(sys.at("A")), parse_matrix(sys.at("B")),
                                 parse_matrix(sys.at("C")), parse_matrix(sys.at("D")),
                                 parse_matrix(sys.at("E")));

    const auto& w = j.at("weights");
    p.loop.weights = CostWeights::create(parse_matrix(w.at("Q")), parse_matrix(w.at("Qf")),
                                         parse_matrix(w.at("R")),
                                         w.value("discount", 1.0));

    for (const auto& b : j.at("bounds")) {
        StateBound bound;
        bound.state_index = b.at("state_index").get<int>();
        const std::string dir = b.value("direction", "upper");
        if (dir != "upper" && dir != "lower")
            throw std::invalid_argument("load_config: bound direction must be upper or lower");
        bound.direction = dir == "upper" ? BoundDirection::upper : BoundDirection::lower;
        bound.value = b.at("value").get<double>();
        p.loop.bounds.push_back(bound);
    }

    p.x0 = parse_vector(j.at("x0"));
    p.loop.N = j.value("horizon", 5);
    p.loop.N_u = j.value("update_period", 1);
    p.loop.max_samples = j.value("max_samples", 10);
    p.loop.epsilon = j.value("epsilon", 1.0);
    p.loop.delta_t = j.value("delta_t", 0.1);
    p.loop.solver.tol = 1e-12;
    p.loop.solver.abs_tol = 9e-7;

    const double bound_b = j.contains("disturbance") ? j["disturbance"].value("bound", 3.0) : 3.0;
    p.disturbance = DisturbanceModel{DisturbanceModel::Kind::sine_of_gaussian, p.system.n_w,
                                     bound_b};
    p.loop.window_support = PolytopeSupport::box(p.loop.N * p.system.n_w, bound_b);

    const std::string norm = j.value("ground_norm", "l1");
    if (norm != "l1" && norm != "linf")
        throw std::invalid_argument("load_config: ground_norm must be l1 or linf");
    p.loop.ground_norm = norm == "l1" ? GroundNorm::L1 : GroundNorm::Linf;

    // Per-step moments default to the bounded sine process; the scale factor
    // tracks the configured amplitude.
    const double variance = kSineGaussianVariance * (bound_b / 3.0) * (bound_b / 3.0);
    p.loop.mu_step = Vector::Constant(p.system.n_w, kSineGaussianMean * bound_b / 3.0);
    p.loop.sigma_step = variance * Matrix::Identity(p.system.n_w, p.system.n_w);

    p.sim_seconds = j.value("sim_seconds", 8.0);
    p.violation_window_seconds = j.value("violation_window_seconds", 4.0);
    return p;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("load_config: cannot open " + path);

    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_config: malformed JSON: " + std::string(e.what()));
    }

    ExperimentConfig cfg;
    try {
        if (j.contains("preset")) cfg.preset = j["preset"].get<std::string>();
        if (j.contains("system") && j["system"].is_object()) {
            cfg.custom = parse_custom_preset(j);
        } else if (j.contains("system")) {
            cfg.preset = j["system"].get<std::string>();
        }
        if (j.contains("radius_schedule")) {
            const auto& rs = j["radius_schedule"];
            RadiusSchedule sched;
            sched.Cconst = rs.value("C", 1.0);
            sched.cconst = rs.value("c", 1.0);
            sched.alpha = rs.value("alpha", 1.0);
            sched.kappa = rs.value("kappa", 2.0);
            cfg.radius_schedule = sched;
            if (rs.contains("beta")) cfg.confidence_beta = rs["beta"].get<double>();
        }
        if (j.contains("realizations")) cfg.realizations = j["realizations"].get<int>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("n_init")) cfg.n_init = j["n_init"].get<int>();
        if (j.contains("epsilon")) cfg.epsilon = j["epsilon"].get<double>();
        if (j.contains("sim_seconds")) cfg.sim_seconds = j["sim_seconds"].get<double>();
        if (j.contains("max_samples")) cfg.max_samples = j["max_samples"].get<int>();
        if (j.contains("update_period")) cfg.update_period = j["update_period"].get<int>();
        if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
        if (j.contains("save_episode_logs"))
            cfg.save_episode_logs = j["save_episode_logs"].get<bool>();
        if (j.contains("sweep")) {
            SweepSpec sweep;
            sweep.parameter = j["sweep"]["parameter"].get<std::string>();
            sweep.values = j["sweep"]["values"].get<std::vector<double>>();
            cfg.sweep = std::move(sweep);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("load_config: bad field: " + std::string(e.what()));
    }
    return cfg;
}

SweepSpec parse_sweep(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("parse_sweep: expected name=v1,v2,...");
    SweepSpec spec;
    spec.parameter = text.substr(0, eq);
    std::stringstream ss(text.substr(eq + 1));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            spec.values.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw std::invalid_argument("parse_sweep: bad value '" + cell + "'");
        }
    }
    if (spec.values.empty()) throw std::invalid_argument("parse_sweep: no values given");
    return spec;
}

}  // namespace drmpc
