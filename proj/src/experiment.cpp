#include "heartinv/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <type_traits>

#include <json.hpp>

#include "heartinv/csv.hpp"
#include "heartinv/render.hpp"

namespace heartinv {

namespace fs = std::filesystem;
using nlohmann::json;

NetworkConfig NetworkSpec::config(std::uint64_t seed) const {
    NetworkConfig c = NetworkConfig::with_depth(depth, blocks, width);
    c.seed = seed;
    return c;
}

std::string NetworkSpec::label() const {
    return "d" + std::to_string(depth) + "b" + std::to_string(blocks) + "w" + std::to_string(width);
}

std::uint64_t derive_seed(std::uint64_t base, int run_index) {
    return base + static_cast<std::uint64_t>(run_index) * kSeedStride;
}

const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> names{"tikh0", "tikh1", "tikh2", "stre",
                                                "epdl-ad", "eand-nd-spatial", "eand-nd"};
    return names;
}

bool is_network_method(const std::string& method) {
    return method == "epdl-ad" || method == "eand-nd-spatial" || method == "eand-nd";
}

namespace {

DerivativeBackend method_backend(const std::string& method) {
    if (method == "epdl-ad") return DerivativeBackend::AD;
    if (method == "eand-nd-spatial") return DerivativeBackend::NDSpatialOnly;
    return DerivativeBackend::ND;
}

int tikhonov_order(const std::string& method) { return method[4] - '0'; }

}  // namespace

void ExperimentConfig::validate() const {
    if (methods.empty()) throw UsageError("methods must not be empty");
    for (const auto& m : methods) {
        const auto& k = known_methods();
        if (std::find(k.begin(), k.end(), m) == k.end()) throw UsageError("unknown method '" + m + "'");
    }
    if (repeats < 1) throw UsageError("repeats must be >= 1");
    if (mesh_path.empty() && (subdivisions < 0 || subdivisions > 6)) throw UsageError("subdivisions must be in [0, 6]");
    if (!(heart_radius > 0.0)) throw UsageError("heart_radius must be positive");
    if (sensors < 1) throw UsageError("sensors must be >= 1");
    if (!(torso_factor > 1.0)) throw UsageError("torso_factor must exceed 1");
    if (!(dt > 0.0)) throw UsageError("dt must be positive");
    if (stride < 1) throw UsageError("stride must be >= 1");
    if (sim_steps < 1 || (sim_steps - 1) / stride + 1 < 5) throw UsageError("need at least 5 stored samples");
    if (stimulus_steps < 1) throw UsageError("stimulus_steps must be >= 1");
    for (double s : noise_levels) {
        if (!(s >= 0.0)) throw UsageError("noise levels must be >= 0");
    }
    if (noise_levels.empty()) throw UsageError("noise_levels must not be empty");
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw UsageError("lambdas must be >= 0");
    }
    if (networks.empty()) throw UsageError("networks must not be empty");
    for (const auto& n : networks) {
        try {
            n.config(0);
        } catch (const Error& e) {
            throw UsageError(std::string("network ") + n.label() + ": " + e.what());
        }
    }
    if (threads < 1) throw UsageError("threads must be >= 1");
    if (tikhonov_grid.empty() || stre_space_grid.empty() || stre_time_grid.empty()) {
        throw UsageError("baseline grids must not be empty");
    }
    try {
        train_config(lambda, DerivativeBackend::ND, 0).validate();
        ap.validate();
    } catch (const UsageError&) {
        throw;
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

TrainConfig ExperimentConfig::train_config(double lam, DerivativeBackend backend, std::uint64_t seed) const {
    TrainConfig t;
    t.lambda = lam;
    t.collocation_count = collocation_count;
    t.collocation_batch = collocation_batch;
    t.resample_collocation = resample_collocation;
    t.iterations = iterations;
    t.learning_rate = learning_rate;
    t.seed = seed;
    t.time_batch = time_batch;
    t.backend = backend;
    t.include_rb = include_rb;
    t.ap = ap;
    return t;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T>
T get_as(const json& j, const std::string& key) {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!j.is_number_integer() || (std::is_unsigned_v<T> && !j.is_number_unsigned())) {
            throw UsageError("config key '" + key + "' must be an integer");
        }
    }
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw UsageError("config key '" + key + "' has the wrong type");
    }
}

void check_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw UsageError(where + " must be a JSON object");
}

NetworkSpec parse_network(const json& j) {
    check_object(j, "network entry");
    NetworkSpec n;
    for (const auto& [key, value] : j.items()) {
        if (key == "depth") n.depth = get_as<int>(value, key);
        else if (key == "blocks") n.blocks = get_as<int>(value, key);
        else if (key == "width") n.width = get_as<int>(value, key);
        else throw UsageError("unknown network key '" + key + "'");
    }
    return n;
}

APParams parse_ap(const json& j) {
    check_object(j, "ap");
    APParams p;
    for (const auto& [key, value] : j.items()) {
        if (key == "a") p.a = get_as<double>(value, key);
        else if (key == "D") p.D = get_as<double>(value, key);
        else if (key == "k") p.k = get_as<double>(value, key);
        else if (key == "e0") p.e0 = get_as<double>(value, key);
        else if (key == "mu1") p.mu1 = get_as<double>(value, key);
        else if (key == "mu2") p.mu2 = get_as<double>(value, key);
        else throw UsageError("unknown ap key '" + key + "'");
    }
    return p;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    check_object(j, "config");
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "subdivisions") c.subdivisions = get_as<int>(value, key);
        else if (key == "mesh_path") c.mesh_path = get_as<std::string>(value, key);
        else if (key == "heart_radius") c.heart_radius = get_as<double>(value, key);
        else if (key == "sensors") c.sensors = get_as<int>(value, key);
        else if (key == "torso_factor") c.torso_factor = get_as<double>(value, key);
        else if (key == "dt") c.dt = get_as<double>(value, key);
        else if (key == "sim_steps") c.sim_steps = get_as<int>(value, key);
        else if (key == "stride") c.stride = get_as<int>(value, key);
        else if (key == "stimulus_vertex") c.stimulus_vertex = get_as<int>(value, key);
        else if (key == "stimulus_amplitude") c.stimulus_amplitude = get_as<double>(value, key);
        else if (key == "stimulus_steps") c.stimulus_steps = get_as<int>(value, key);
        else if (key == "ap") c.ap = parse_ap(value);
        else if (key == "noise_levels") c.noise_levels = get_as<std::vector<double>>(value, key);
        else if (key == "lambdas") c.lambdas = get_as<std::vector<double>>(value, key);
        else if (key == "networks") {
            if (!value.is_array()) throw UsageError("config key 'networks' must be an array");
            c.networks.clear();
            for (const auto& n : value) c.networks.push_back(parse_network(n));
        }
        else if (key == "methods") c.methods = get_as<std::vector<std::string>>(value, key);
        else if (key == "repeats") c.repeats = get_as<int>(value, key);
        else if (key == "base_seed") c.base_seed = get_as<std::uint64_t>(value, key);
        else if (key == "output_dir") c.output_dir = get_as<std::string>(value, key);
        else if (key == "threads") c.threads = get_as<int>(value, key);
        else if (key == "lambda") c.lambda = get_as<double>(value, key);
        else if (key == "iterations") c.iterations = get_as<int>(value, key);
        else if (key == "collocation_count") c.collocation_count = get_as<int>(value, key);
        else if (key == "collocation_batch") c.collocation_batch = get_as<int>(value, key);
        else if (key == "time_batch") c.time_batch = get_as<int>(value, key);
        else if (key == "learning_rate") c.learning_rate = get_as<double>(value, key);
        else if (key == "resample_collocation") c.resample_collocation = get_as<bool>(value, key);
        else if (key == "include_rb") {
            if (value.is_null()) c.include_rb.reset();
            else c.include_rb = get_as<bool>(value, key);
        }
        else if (key == "tikhonov_grid") c.tikhonov_grid = get_as<std::vector<double>>(value, key);
        else if (key == "stre_space_grid") c.stre_space_grid = get_as<std::vector<double>>(value, key);
        else if (key == "stre_time_grid") c.stre_time_grid = get_as<std::vector<double>>(value, key);
        else throw UsageError("unknown config key '" + key + "'");
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    return parse_config(text);
}

std::string config_json(const ExperimentConfig& c) {
    json nets = json::array();
    for (const auto& n : c.networks) nets.push_back({{"depth", n.depth}, {"blocks", n.blocks}, {"width", n.width}});
    json j = {
        {"subdivisions", c.subdivisions},
        {"mesh_path", c.mesh_path},
        {"heart_radius", c.heart_radius},
        {"sensors", c.sensors},
        {"torso_factor", c.torso_factor},
        {"dt", c.dt},
        {"sim_steps", c.sim_steps},
        {"stride", c.stride},
        {"stimulus_vertex", c.stimulus_vertex},
        {"stimulus_amplitude", c.stimulus_amplitude},
        {"stimulus_steps", c.stimulus_steps},
        {"ap", {{"a", c.ap.a}, {"D", c.ap.D}, {"k", c.ap.k}, {"e0", c.ap.e0}, {"mu1", c.ap.mu1}, {"mu2", c.ap.mu2}}},
        {"noise_levels", c.noise_levels},
        {"lambdas", c.lambdas},
        {"networks", nets},
        {"methods", c.methods},
        {"repeats", c.repeats},
        {"base_seed", c.base_seed},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
        {"lambda", c.lambda},
        {"iterations", c.iterations},
        {"collocation_count", c.collocation_count},
        {"collocation_batch", c.collocation_batch},
        {"time_batch", c.time_batch},
        {"learning_rate", c.learning_rate},
        {"resample_collocation", c.resample_collocation},
        {"include_rb", c.include_rb ? json(*c.include_rb) : json(nullptr)},
        {"tikhonov_grid", c.tikhonov_grid},
        {"stre_space_grid", c.stre_space_grid},
        {"stre_time_grid", c.stre_time_grid},
    };
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Data

namespace {

TriMesh make_mesh(const ExperimentConfig& cfg) {
    if (!cfg.mesh_path.empty()) return load_off(cfg.mesh_path);
    return icosphere(cfg.subdivisions, cfg.heart_radius);
}

fs::path obs_path(const fs::path& dir, std::size_t i) { return dir / ("obs_" + std::to_string(i) + ".csv"); }

double sample_step(const ExperimentConfig& cfg) { return cfg.dt * cfg.stride; }

// The config fields that determine the stored dataset.
json data_fields(const json& config) {
    json out = json::object();
    for (const char* key : {"subdivisions", "mesh_path", "heart_radius", "sensors", "torso_factor", "dt", "sim_steps",
                            "stride", "stimulus_vertex", "stimulus_amplitude", "stimulus_steps", "ap", "noise_levels",
                            "base_seed"}) {
        if (config.contains(key)) out[key] = config.at(key);
    }
    return out;
}

bool dataset_matches(const ExperimentConfig& cfg, const fs::path& dir) {
    const json manifest = json::parse(read_text(dir / "simulate_manifest.json"));
    return data_fields(manifest.at("config")) == data_fields(json::parse(config_json(cfg)));
}

}  // namespace

Dataset simulate_dataset(const ExperimentConfig& cfg) {
    Dataset d;
    d.mesh = make_mesh(cfg);
    const Adjacency adj = build_adjacency(d.mesh);
    const LaplacianOperator lap(adj);
    const StimulusSpec stim{cfg.stimulus_vertex, cfg.stimulus_amplitude, cfg.stimulus_steps};
    SimulationResult sim = simulate(d.mesh, adj, lap, cfg.ap, stim, TemporalGrid(cfg.dt, cfg.sim_steps));
    d.u = downsample(sim.u, cfg.stride);
    d.v = downsample(sim.v, cfg.stride);
    d.tm = synth_transfer(d.mesh, cfg.sensors, cfg.torso_factor, cfg.base_seed);
    const std::uint64_t seed = derive_seed(cfg.base_seed, 0);
    for (double sigma : cfg.noise_levels) d.observations.push_back(observe(d.tm, d.u, sigma, seed));
    return d;
}

void write_dataset(const ExperimentConfig& cfg, const Dataset& data, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    save_off(data.mesh, dir / "mesh.off");
    save_field_csv(data.u, dir / "u.csv");
    save_field_csv(data.v, dir / "v.csv");
    save_transfer(data.tm, dir / "transfer.csv");

    json obs = json::array();
    for (std::size_t i = 0; i < data.observations.size(); ++i) {
        save_observation_csv(data.observations[i], obs_path(dir, i));
        obs.push_back({{"file", obs_path(dir, i).filename().string()},
                       {"noise_std", data.observations[i].noise_std},
                       {"seed", data.observations[i].seed}});
    }
    json manifest = {
        {"config", json::parse(config_json(cfg))},
        {"mesh", "mesh.off"},
        {"u", "u.csv"},
        {"v", "v.csv"},
        {"transfer", "transfer.csv"},
        {"transfer_seed", cfg.base_seed},
        {"sample_step", sample_step(cfg)},
        {"samples", data.u.samples()},
        {"observations", obs},
    };
    write_text(dir / "simulate_manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const ExperimentConfig& cfg, const fs::path& dir) {
    std::vector<fs::path> needed{dir / "mesh.off", dir / "u.csv", dir / "v.csv", dir / "transfer.csv"};
    for (std::size_t i = 0; i < cfg.noise_levels.size(); ++i) needed.push_back(obs_path(dir, i));
    for (const auto& p : needed) {
        if (!fs::exists(p)) throw Error("missing input " + p.string() + " (run simulate first)");
    }
    if (fs::exists(dir / "simulate_manifest.json") && !dataset_matches(cfg, dir)) {
        throw Error("data in " + dir.string() + " was simulated with a different configuration (run simulate again)");
    }
    Dataset d;
    d.mesh = load_off(dir / "mesh.off");
    d.u = load_field_csv(dir / "u.csv", sample_step(cfg));
    d.v = load_field_csv(dir / "v.csv", sample_step(cfg));
    d.tm = load_transfer(dir / "transfer.csv");
    if (d.tm.num_nodes() != d.u.nodes()) throw Error("transfer.csv does not match u.csv");
    const std::uint64_t seed = derive_seed(cfg.base_seed, 0);
    for (std::size_t i = 0; i < cfg.noise_levels.size(); ++i) {
        Observation o;
        o.y = load_observation_csv(obs_path(dir, i));
        if (o.y.rows() != d.tm.num_sensors() || o.y.cols() != d.u.samples()) {
            throw Error(obs_path(dir, i).string() + " has the wrong shape");
        }
        o.noise_std = cfg.noise_levels[i];
        o.seed = seed;
        d.observations.push_back(std::move(o));
    }
    return d;
}

Observation run_observation(const Dataset& data, double noise_std, std::uint64_t run_seed) {
    for (const auto& o : data.observations) {
        if (o.noise_std == noise_std && o.seed == run_seed) return o;
    }
    return observe(data.tm, data.u, noise_std, run_seed);
}

// ---------------------------------------------------------------------------
// Cells

namespace {

Eigen::MatrixXd solve_baseline(const Dataset& data, const Adjacency& adj, const LaplacianOperator& lap,
                               const std::string& method, const BaselineParams& bp, const Observation& obs) {
    if (method == "stre") {
        return stre(data.tm, obs, {bp.stre_space, bp.stre_time}, lap, data.u.grid).values;
    }
    return tikhonov(data.tm, obs, {bp.tikhonov_lambda, tikhonov_order(method)}, adj, lap, data.u.grid).values;
}

}  // namespace

BaselineParams tune_baseline(const ExperimentConfig& cfg, const Dataset& data, const std::string& method,
                             double noise_std) {
    const Adjacency adj = build_adjacency(data.mesh);
    const LaplacianOperator lap(adj);
    const Observation obs = run_observation(data, noise_std, derive_seed(cfg.base_seed, cfg.repeats));
    BaselineParams best;
    double best_re = std::numeric_limits<double>::infinity();
    auto consider = [&](const BaselineParams& bp) {
        double re;
        try {
            re = evaluate(data.u.values, solve_baseline(data, adj, lap, method, bp, obs)).re;
        } catch (const Error&) {
            return;  // singular or non-convergent grid point
        }
        if (re < best_re) {
            best_re = re;
            best = bp;
        }
    };
    if (method == "stre") {
        for (double ls : cfg.stre_space_grid) {
            for (double lt : cfg.stre_time_grid) consider({0.0, ls, lt});
        }
    } else {
        for (double l : cfg.tikhonov_grid) consider({l, 0.0, 0.0});
    }
    if (!std::isfinite(best_re)) throw Error("no usable grid point for " + method);
    return best;
}

CellResult run_cell(const ExperimentConfig& cfg, const Dataset& data, const CellSpec& spec) {
    CellResult r;
    r.spec = spec;
    r.seed = derive_seed(cfg.base_seed, spec.run_index);
    const Observation obs = run_observation(data, spec.noise_std, r.seed);
    if (is_network_method(spec.method)) {
        Problem problem(data.mesh, data.u.grid, data.tm, obs.y);
        const TrainConfig tc = cfg.train_config(spec.lambda, method_backend(spec.method), r.seed ^ 0x9e3779b97f4a7c15ULL);
        TrainResult tr = train(tc, spec.network.config(r.seed), problem);
        r.estimate = reconstruct_field(tr.params, problem);
        r.history = std::move(tr.history);
        r.params = std::move(tr.params);
    } else {
        const Adjacency adj = build_adjacency(data.mesh);
        const LaplacianOperator lap(adj);
        r.estimate = solve_baseline(data, adj, lap, spec.method, spec.baseline, obs);
    }
    r.metrics = evaluate(data.u.values, r.estimate);
    return r;
}

std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const Dataset& data, const std::vector<CellSpec>& specs,
                                  const std::function<void(const CellResult&)>& on_done) {
    std::vector<std::optional<CellResult>> results(specs.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            try {
                CellResult r = run_cell(cfg, data, specs[i]);
                std::lock_guard lock(done_mutex);
                if (on_done) on_done(r);
                results[i] = std::move(r);
            } catch (...) {
                std::lock_guard lock(done_mutex);
                if (!failure) failure = std::current_exception();
                next = specs.size();
                return;
            }
        }
    };
    const int n = std::min<int>(cfg.threads, static_cast<int>(specs.size()));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<CellResult> out;
    out.reserve(specs.size());
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

// ---------------------------------------------------------------------------
// Summaries

SummaryRow summarize(const std::string& axis, const std::string& value, const std::string& method,
                     const std::vector<const CellResult*>& cells) {
    if (cells.empty()) throw Error("empty result set for " + axis + "=" + value + " " + method);
    SummaryRow row;
    row.axis = axis;
    row.value = value;
    row.method = method;
    row.n = static_cast<int>(cells.size());
    auto stats = [&](auto field, double& mean, double& sd) {
        mean = 0.0;
        for (const auto* c : cells) mean += field(*c);
        mean /= static_cast<double>(cells.size());
        double ss = 0.0;
        for (const auto* c : cells) ss += (field(*c) - mean) * (field(*c) - mean);
        sd = cells.size() > 1 ? std::sqrt(ss / static_cast<double>(cells.size() - 1)) : 0.0;
    };
    stats([](const CellResult& c) { return c.metrics.re; }, row.re_mean, row.re_std);
    stats([](const CellResult& c) { return c.metrics.cc; }, row.cc_mean, row.cc_std);
    stats([](const CellResult& c) { return c.metrics.mse; }, row.mse_mean, row.mse_std);
    if (cells.front()->history) {
        int bad = 0;
        for (const auto* c : cells) bad += c->history->bad_init ? 1 : 0;
        row.bad_init_rate = static_cast<double>(bad) / static_cast<double>(cells.size());
    }
    return row;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "axis,value,method,n,re_mean,re_std,cc_mean,cc_std,mse_mean,mse_std,bad_init_rate\n";
    for (const auto& r : rows) {
        out += r.axis + "," + r.value + "," + r.method + "," + std::to_string(r.n);
        for (double v : {r.re_mean, r.re_std, r.cc_mean, r.cc_std, r.mse_mean, r.mse_std}) out += "," + format_real(v, 17);
        out += "," + (r.bad_init_rate ? format_real(*r.bad_init_rate, 17) : std::string());
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string value_label(double v) { return format_real(v, 6); }

std::string runs_header() { return "axis,value,method,run,seed,re,cc,mse,n,bad_init\n"; }

std::string runs_row(const std::string& axis, const std::string& value, const CellResult& c) {
    return axis + "," + value + "," + c.spec.method + "," + std::to_string(c.spec.run_index) + "," +
           std::to_string(c.seed) + "," + format_real(c.metrics.re, 17) + "," + format_real(c.metrics.cc, 17) + "," +
           format_real(c.metrics.mse, 17) + "," + std::to_string(c.metrics.n) + "," +
           (c.history ? std::to_string(c.history->bad_init ? 1 : 0) : std::string()) + "\n";
}

void write_cell(const fs::path& dir, const CellResult& c, double step) {
    fs::create_directories(dir);
    save_field_csv(SpatioTemporalField(c.estimate, TemporalGrid(step, static_cast<int>(c.estimate.cols()))),
                   dir / "field.csv");
    write_text(dir / "metrics.csv", MetricsReport::csv_header() + "\n" + c.metrics.csv_row() + "\n");
    if (c.history) write_text(dir / "history.csv", c.history->csv());
    if (c.params) save_checkpoint(*c.params, dir / "checkpoint.json");
}

std::string cell_dir_name(const CellResult& c) {
    return c.spec.method + "/sigma_" + value_label(c.spec.noise_std) + "/run_" + std::to_string(c.spec.run_index);
}

Dataset ensure_dataset(const ExperimentConfig& cfg, const fs::path& data_dir, const Logger& log) {
    if (fs::exists(data_dir / "simulate_manifest.json") && dataset_matches(cfg, data_dir)) {
        return read_dataset(cfg, data_dir);
    }
    log("simulating ground truth into " + data_dir.string());
    Dataset d = simulate_dataset(cfg);
    write_dataset(cfg, d, data_dir);
    return read_dataset(cfg, data_dir);
}

json baseline_json(const std::string& method, const BaselineParams& bp) {
    if (method == "stre") return {{"lambda_space", bp.stre_space}, {"lambda_time", bp.stre_time}, {"label", "STRE-style"}};
    return {{"lambda", bp.tikhonov_lambda}, {"order", tikhonov_order(method)}};
}

}  // namespace

void cmd_simulate(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    const fs::path dir = fs::path(cfg.output_dir) / "data";
    log("simulating " + std::to_string(cfg.sim_steps) + " steps");
    const Dataset d = simulate_dataset(cfg);
    write_dataset(cfg, d, dir);
    log("wrote " + dir.string());
}

void cmd_reconstruct(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    const fs::path root(cfg.output_dir);
    const Dataset data = read_dataset(cfg, root / "data");

    std::vector<CellSpec> specs;
    json tuned = json::object();
    for (const auto& method : cfg.methods) {
        for (double sigma : cfg.noise_levels) {
            BaselineParams bp;
            if (!is_network_method(method)) {
                bp = tune_baseline(cfg, data, method, sigma);
                tuned[method][value_label(sigma)] = baseline_json(method, bp);
                log("tuned " + method + " at sigma " + value_label(sigma));
            }
            for (int r = 0; r < cfg.repeats; ++r) {
                specs.push_back({method, sigma, r, cfg.lambda, cfg.networks.front(), bp});
            }
        }
    }

    const fs::path out = root / "reconstruct";
    const double step = data.u.grid.step;
    const auto results = run_cells(cfg, data, specs, [&](const CellResult& c) {
        write_cell(out / cell_dir_name(c), c, step);
        log(c.spec.method + " sigma " + value_label(c.spec.noise_std) + " run " + std::to_string(c.spec.run_index) +
            " RE " + format_real(c.metrics.re, 4));
    });

    std::string runs = runs_header();
    json cells = json::array();
    for (const auto& c : results) {
        runs += runs_row("noise", value_label(c.spec.noise_std), c);
        cells.push_back({{"method", c.spec.method},
                         {"noise_std", c.spec.noise_std},
                         {"run", c.spec.run_index},
                         {"seed", c.seed},
                         {"dir", cell_dir_name(c)}});
    }
    write_text(out / "runs.csv", runs);
    json manifest = {{"config", json::parse(config_json(cfg))},
                     {"seed_stride", kSeedStride},
                     {"tuning_seed", derive_seed(cfg.base_seed, cfg.repeats)},
                     {"tuned_baselines", tuned},
                     {"cells", cells}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<SummaryRow> cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, const Logger& log) {
    if (axis != "lambda" && axis != "noise" && axis != "network") {
        throw UsageError("unknown sweep axis '" + axis + "' (expected lambda, noise or network)");
    }
    cfg.validate();
    const fs::path root(cfg.output_dir);
    const Dataset data = ensure_dataset(cfg, root / "data", log);

    std::string net_method = "eand-nd";
    for (const auto& m : cfg.methods) {
        if (is_network_method(m)) {
            net_method = m;
            break;
        }
    }

    struct Group {
        std::string value, method;
        std::size_t first, count;
    };
    std::vector<Group> groups;
    std::vector<CellSpec> specs;
    auto add_group = [&](const std::string& value, CellSpec base) {
        groups.push_back({value, base.method, specs.size(), static_cast<std::size_t>(cfg.repeats)});
        for (int r = 0; r < cfg.repeats; ++r) {
            base.run_index = r;
            specs.push_back(base);
        }
    };

    const double sigma0 = cfg.noise_levels.front();
    if (axis == "lambda") {
        for (double lam : cfg.lambdas) {
            add_group(value_label(lam), {net_method, sigma0, 0, lam, cfg.networks.front(), {}});
        }
    } else if (axis == "noise") {
        for (const auto& method : cfg.methods) {
            for (double sigma : cfg.noise_levels) {
                BaselineParams bp;
                if (!is_network_method(method)) bp = tune_baseline(cfg, data, method, sigma);
                add_group(value_label(sigma), {method, sigma, 0, cfg.lambda, cfg.networks.front(), bp});
            }
        }
    } else {
        for (const auto& net : cfg.networks) {
            add_group(net.label(), {net_method, sigma0, 0, cfg.lambda, net, {}});
        }
    }

    const fs::path out = root / ("sweep_" + axis);
    const double step = data.u.grid.step;
    std::vector<std::string> cell_dirs(specs.size());
    for (const auto& g : groups) {
        for (std::size_t i = g.first; i < g.first + g.count; ++i) {
            cell_dirs[i] = g.value + "/" + g.method + "/run_" + std::to_string(specs[i].run_index);
        }
    }
    std::size_t done = 0;
    const auto results = run_cells(cfg, data, specs, [&](const CellResult& c) {
        ++done;
        log(axis + " " + c.spec.method + " run " + std::to_string(c.spec.run_index) + " RE " +
            format_real(c.metrics.re, 4) + " (" + std::to_string(done) + "/" + std::to_string(specs.size()) + ")");
    });

    std::vector<SummaryRow> rows;
    std::string runs = runs_header();
    for (const auto& g : groups) {
        std::vector<const CellResult*> cells;
        for (std::size_t i = g.first; i < g.first + g.count; ++i) {
            cells.push_back(&results[i]);
            runs += runs_row(axis, g.value, results[i]);
            write_cell(out / cell_dirs[i], results[i], step);
        }
        rows.push_back(summarize(axis, g.value, g.method, cells));
    }
    if (rows.empty()) throw Error("sweep produced no results");
    write_text(out / "runs.csv", runs);
    write_text(out / "summary.csv", summary_csv(rows));
    return rows;
}

void cmd_render(const fs::path& field_csv, const fs::path& mesh_off, int time_index, const fs::path& svg_out) {
    const TriMesh mesh = load_off(mesh_off);
    const Eigen::MatrixXd field = parse_labeled_matrix(read_text(field_csv));
    if (field.rows() != static_cast<Eigen::Index>(mesh.num_vertices())) {
        throw Error("field has " + std::to_string(field.rows()) + " rows but the mesh has " +
                    std::to_string(mesh.num_vertices()) + " vertices");
    }
    if (time_index < 0 || time_index >= field.cols()) {
        throw Error("time index " + std::to_string(time_index) + " outside [0, " + std::to_string(field.cols() - 1) + "]");
    }
    write_text(svg_out, render_svg(mesh, field.col(time_index)));
}

std::string cmd_compare(const fs::path& reference, const std::vector<fs::path>& estimates) {
    const Eigen::MatrixXd ref = parse_labeled_matrix(read_text(reference));
    std::string out = "file," + MetricsReport::csv_header() + "\n";
    for (const auto& e : estimates) {
        const MetricsReport m = evaluate(ref, parse_labeled_matrix(read_text(e)));
        out += e.string() + "," + m.csv_row() + "\n";
    }
    return out;
}

}  // namespace heartinv
