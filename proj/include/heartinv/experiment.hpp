#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heartinv/apsim.hpp"
#include "heartinv/baselines.hpp"
#include "heartinv/forward.hpp"
#include "heartinv/metrics.hpp"
#include "heartinv/training.hpp"

namespace heartinv {

/// Configuration problems detected before any work starts (exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

struct NetworkSpec {
    int depth = 10;
    int blocks = 3;
    int width = 15;

    NetworkConfig config(std::uint64_t seed) const;
    std::string label() const;
};

struct ExperimentConfig {
    // geometry
    int subdivisions = 2;
    std::string mesh_path;  // OFF file; overrides subdivisions when set
    double heart_radius = 10.0;
    int sensors = 64;
    double torso_factor = 2.0;

    // ground truth
    double dt = 0.005;
    int sim_steps = 2001;
    int stride = 10;
    int stimulus_vertex = 0;
    double stimulus_amplitude = 1.0;
    int stimulus_steps = 200;
    APParams ap;

    // experiment axes
    std::vector<double> noise_levels{0.01, 0.05, 0.1};
    std::vector<double> lambdas{0.05, 0.1, 0.3, 0.5, 0.7};
    std::vector<NetworkSpec> networks{NetworkSpec{}};
    std::vector<std::string> methods{"tikh2", "stre", "eand-nd"};
    int repeats = 5;
    std::uint64_t base_seed = 1;
    std::string output_dir = "out";
    int threads = 1;

    // network training
    double lambda = 0.1;
    int iterations = 20000;
    int collocation_count = 5000;
    int collocation_batch = 256;
    int time_batch = 32;
    double learning_rate = 1e-3;
    bool resample_collocation = false;
    std::optional<bool> include_rb;

    // baseline hyperparameter grids, searched on a held-out seed
    std::vector<double> tikhonov_grid{0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 5.0};
    std::vector<double> stre_space_grid{0.03, 0.1, 0.3, 1.0};
    std::vector<double> stre_time_grid{0.03, 0.1, 0.3, 1.0, 3.0};

    void validate() const;
    TrainConfig train_config(double lambda, DerivativeBackend backend, std::uint64_t seed) const;
};

inline constexpr std::uint64_t kSeedStride = 1000003;
std::uint64_t derive_seed(std::uint64_t base, int run_index);

const std::vector<std::string>& known_methods();
bool is_network_method(const std::string& method);

/// Strict JSON: unknown keys and wrong types are usage errors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_json(const ExperimentConfig& cfg);

/// Ground truth, forward model and one noisy observation per noise level.
struct Dataset {
    TriMesh mesh;
    SpatioTemporalField u;
    SpatioTemporalField v;
    TransferModel tm;
    std::vector<Observation> observations;  // aligned with noise_levels
};

Dataset simulate_dataset(const ExperimentConfig& cfg);

/// Writes mesh.off, u.csv, v.csv, transfer.csv, obs_<i>.csv and
/// simulate_manifest.json into `dir`.
void write_dataset(const ExperimentConfig& cfg, const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Observation for run `run_index`. Run 0 is the stored observation; the
/// same run seed drives every noise level so noise comparisons are paired.
Observation run_observation(const Dataset& data, double noise_std, std::uint64_t run_seed);

struct BaselineParams {
    double tikhonov_lambda = 0.0;
    double stre_space = 0.0;
    double stre_time = 0.0;
};

/// Grid search minimizing RE against the ground truth for one method at one
/// noise level, on the held-out seed derive_seed(base, repeats).
BaselineParams tune_baseline(const ExperimentConfig& cfg, const Dataset& data, const std::string& method,
                             double noise_std);

struct CellSpec {
    std::string method;
    double noise_std = 0.0;
    int run_index = 0;
    double lambda = 0.1;
    NetworkSpec network;
    BaselineParams baseline;
};

struct CellResult {
    CellSpec spec;
    std::uint64_t seed = 0;
    MetricsReport metrics;
    Eigen::MatrixXd estimate;
    std::optional<TrainHistory> history;
    std::optional<NetworkParams> params;
};

CellResult run_cell(const ExperimentConfig& cfg, const Dataset& data, const CellSpec& spec);

/// Runs cells on up to `threads` workers; results keep the input order.
std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const Dataset& data, const std::vector<CellSpec>& specs,
                                  const std::function<void(const CellResult&)>& on_done = {});

struct SummaryRow {
    std::string axis;
    std::string value;
    std::string method;
    int n = 0;
    double re_mean = 0, re_std = 0, cc_mean = 0, cc_std = 0, mse_mean = 0, mse_std = 0;
    std::optional<double> bad_init_rate;
};

/// Mean and sample standard deviation (n - 1) over the given cells.
SummaryRow summarize(const std::string& axis, const std::string& value, const std::string& method,
                     const std::vector<const CellResult*>& cells);
std::string summary_csv(const std::vector<SummaryRow>& rows);

using Logger = std::function<void(const std::string&)>;

void cmd_simulate(const ExperimentConfig& cfg, const Logger& log);
void cmd_reconstruct(const ExperimentConfig& cfg, const Logger& log);
std::vector<SummaryRow> cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, const Logger& log);
void cmd_render(const std::filesystem::path& field_csv, const std::filesystem::path& mesh_off, int time_index,
                const std::filesystem::path& svg_out);
/// One "file,re,cc,mse,n" row per estimate against the reference field.
std::string cmd_compare(const std::filesystem::path& reference, const std::vector<std::filesystem::path>& estimates);

}  // namespace heartinv
