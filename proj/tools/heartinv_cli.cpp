#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heartinv/experiment.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inverse reconstruction of heart surface potentials from body surface signals"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON experiment configuration");
    app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
    app.add_option("--seed", seed, "Base seed (overrides base_seed)");
    app.add_flag("--quiet", quiet, "Suppress progress messages");

    auto* simulate = app.add_subcommand("simulate", "Simulate ground truth and observations");
    auto* reconstruct = app.add_subcommand("reconstruct", "Run every configured method on every noise level");
    auto* sweep = app.add_subcommand("sweep", "Aggregate repeats along one experiment axis");
    std::string axis;
    sweep->add_option("--axis", axis, "lambda, noise or network")->required();

    auto* render = app.add_subcommand("render", "Render one time column of a field as SVG");
    std::string field_path, mesh_path, svg_path;
    int time_index = 0;
    render->add_option("--field", field_path, "Field CSV")->required();
    render->add_option("--mesh", mesh_path, "Mesh OFF")->required();
    render->add_option("--time", time_index, "Time index")->required();
    render->add_option("--svg", svg_path, "Output SVG")->required();

    auto* compare = app.add_subcommand("compare", "Metrics of estimate fields against a reference field");
    std::string reference;
    std::vector<std::string> estimates;
    compare->add_option("reference", reference, "Reference field CSV")->required();
    compare->add_option("estimates", estimates, "Estimate field CSVs")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    const heartinv::Logger log = [quiet](const std::string& msg) {
        if (!quiet) std::cerr << msg << "\n";
    };

    try {
        heartinv::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = heartinv::load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (seed) cfg.base_seed = *seed;

        if (*simulate) {
            heartinv::cmd_simulate(cfg, log);
        } else if (*reconstruct) {
            heartinv::cmd_reconstruct(cfg, log);
        } else if (*sweep) {
            const auto rows = heartinv::cmd_sweep(cfg, axis, log);
            std::cout << heartinv::summary_csv(rows);
        } else if (*render) {
            heartinv::cmd_render(field_path, mesh_path, time_index, svg_path);
        } else if (*compare) {
            std::vector<std::filesystem::path> paths(estimates.begin(), estimates.end());
            std::cout << heartinv::cmd_compare(reference, paths);
        }
    } catch (const heartinv::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return 0;
}
