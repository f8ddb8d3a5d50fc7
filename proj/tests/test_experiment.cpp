#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "heartinv/csv.hpp"
#include "heartinv/experiment.hpp"
#include "heartinv/render.hpp"

using namespace heartinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("heartinv_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig small_config(const std::string& out) {
    ExperimentConfig c;
    c.subdivisions = 1;
    c.sensors = 16;
    c.sim_steps = 601;
    c.stride = 10;
    c.noise_levels = {0.0, 0.1};
    c.repeats = 2;
    c.output_dir = out;
    c.iterations = 3;
    c.collocation_count = 100;
    c.collocation_batch = 16;
    c.time_batch = 4;
    c.networks = {NetworkSpec{4, 1, 6}};
    c.tikhonov_grid = {0.1, 0.5, 2.0};
    c.stre_space_grid = {0.1, 0.5};
    c.stre_time_grid = {0.1, 1.0};
    return c;
}

std::set<std::string> fills(const std::string& svg) {
    std::set<std::string> out;
    const std::regex re("fill=\"(#[0-9a-f]{6})\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
        out.insert((*it)[1]);
    }
    return out;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

const Logger quiet = [](const std::string&) {};

}  // namespace

TEST_CASE("config parsing is strict") {
    const ExperimentConfig d = parse_config("{}");
    CHECK(d.noise_levels == std::vector<double>{0.01, 0.05, 0.1});
    CHECK(d.lambdas == std::vector<double>{0.05, 0.1, 0.3, 0.5, 0.7});
    CHECK(d.repeats == 5);
    CHECK_THROWS_AS(parse_config(R"({"repeat": 3})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"repeats": "3"})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"repeats": 2.5})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"repeats": 0})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"base_seed": -1})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"methods": []})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"methods": ["tikh2", "kalman"]})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"networks": [{"depth": 10, "blocks": 3, "widht": 15}]})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"networks": [{"depth": 4, "blocks": 3, "width": 15}]})"), UsageError);
    CHECK_THROWS_AS(parse_config(R"({"ap": {"b": 1}})"), UsageError);
    CHECK_THROWS_AS(parse_config("{not json"), UsageError);
    CHECK_THROWS_AS(parse_config("[]"), UsageError);
    CHECK_THROWS_AS(load_config("/nonexistent/heartinv.json"), UsageError);

    const ExperimentConfig c = parse_config(
        R"({"methods": ["tikh0", "eand-nd"], "networks": [{"depth": 10, "blocks": 0, "width": 15}], "include_rb": true,
            "ap": {"k": 7.5}, "lambdas": [0.1]})");
    CHECK(c.methods.size() == 2);
    CHECK(c.networks.front().blocks == 0);
    CHECK(c.include_rb == true);
    CHECK(c.ap.k == 7.5);
    CHECK(config_json(parse_config(config_json(c))) == config_json(c));
}

TEST_CASE("seeds and method names") {
    CHECK(derive_seed(5, 0) == 5);
    CHECK(derive_seed(5, 2) == 5 + 2 * 1000003ULL);
    const auto& m = known_methods();
    CHECK(m.size() == 7);
    for (const char* name : {"tikh0", "tikh1", "tikh2", "stre", "epdl-ad", "eand-nd-spatial", "eand-nd"}) {
        CHECK(std::find(m.begin(), m.end(), name) != m.end());
    }
    CHECK(is_network_method("eand-nd"));
    CHECK(is_network_method("epdl-ad"));
    CHECK_FALSE(is_network_method("stre"));
    const NetworkSpec spec;
    CHECK(spec.label() == "d10b3w15");
    const NetworkConfig nc = spec.config(9);
    CHECK(nc.n_plain_layers == 4);
    CHECK(nc.seed == 9);
    CHECK(nc.total_layers() == 10);
}

TEST_CASE("dataset simulation, storage and paired noise") {
    const fs::path dir = scratch("dataset");
    ExperimentConfig cfg = small_config(dir.string());
    cfg.noise_levels = {0.0, 0.05, 0.1};
    const Dataset d = simulate_dataset(cfg);
    CHECK(d.u.nodes() == 42);
    CHECK(d.u.samples() == 61);
    REQUIRE(d.observations.size() == 3);
    CHECK(d.observations[0].y == d.tm.R * d.u.values);

    write_dataset(cfg, d, dir);
    const Dataset back = read_dataset(cfg, dir);
    CHECK((back.u.values - d.u.values).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(back.tm.R == d.tm.R);
    CHECK(back.observations.size() == 3);

    CHECK(run_observation(back, 0.1, derive_seed(cfg.base_seed, 0)).y == back.observations[2].y);
    const std::uint64_t s1 = derive_seed(cfg.base_seed, 1);
    const Eigen::MatrixXd clean = d.tm.R * d.u.values;
    const Eigen::MatrixXd e5 = run_observation(d, 0.05, s1).y - clean;
    const Eigen::MatrixXd e10 = run_observation(d, 0.1, s1).y - clean;
    CHECK((e10 - 2.0 * e5).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(run_observation(d, 0.1, s1).y != run_observation(d, 0.1, derive_seed(cfg.base_seed, 2)).y);

    ExperimentConfig other = cfg;
    other.base_seed = 2;
    CHECK_THROWS_WITH(read_dataset(other, dir), doctest::Contains("different configuration"));

    try {
        read_dataset(cfg, dir / "missing");
        FAIL("missing dataset accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("run simulate first") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("baseline tuning picks the grid minimum") {
    ExperimentConfig cfg = small_config("unused");
    const Dataset d = simulate_dataset(cfg);
    const BaselineParams bp = tune_baseline(cfg, d, "tikh2", 0.1);
    const Observation obs = run_observation(d, 0.1, derive_seed(cfg.base_seed, cfg.repeats));
    const Adjacency adj = build_adjacency(d.mesh);
    const LaplacianOperator lap(adj);
    double best = 1e300, arg = 0.0;
    for (double l : cfg.tikhonov_grid) {
        const double re = evaluate(d.u, tikhonov(d.tm, obs, {l, 2}, adj, lap, d.u.grid)).re;
        if (re < best) {
            best = re;
            arg = l;
        }
    }
    CHECK(bp.tikhonov_lambda == arg);
    const BaselineParams sp = tune_baseline(cfg, d, "stre", 0.1);
    CHECK(std::find(cfg.stre_space_grid.begin(), cfg.stre_space_grid.end(), sp.stre_space) != cfg.stre_space_grid.end());
    CHECK(std::find(cfg.stre_time_grid.begin(), cfg.stre_time_grid.end(), sp.stre_time) != cfg.stre_time_grid.end());
}

TEST_CASE("summary statistics") {
    std::vector<CellResult> cells(3);
    const double re[3] = {0.1, 0.2, 0.6};
    for (int i = 0; i < 3; ++i) {
        cells[static_cast<std::size_t>(i)].metrics.re = re[i];
        cells[static_cast<std::size_t>(i)].metrics.cc = 1.0 - re[i];
        cells[static_cast<std::size_t>(i)].metrics.mse = re[i] * re[i];
        cells[static_cast<std::size_t>(i)].history = TrainHistory{};
    }
    cells[1].history->bad_init = true;
    std::vector<const CellResult*> ptrs{&cells[0], &cells[1], &cells[2]};
    const SummaryRow row = summarize("lambda", "0.1", "eand-nd", ptrs);
    CHECK(row.n == 3);
    CHECK(std::abs(row.re_mean - 0.3) < 1e-15);
    // deviations -0.2, -0.1, 0.3: (0.04 + 0.01 + 0.09) / 2 = 0.07
    CHECK(std::abs(row.re_std - std::sqrt(0.07)) < 1e-15);
    REQUIRE(row.bad_init_rate);
    CHECK(std::abs(*row.bad_init_rate - 1.0 / 3.0) < 1e-15);
    CHECK(summary_csv({row}).rfind("axis,value,method,n,re_mean,re_std,cc_mean,cc_std,mse_mean,mse_std,bad_init_rate\n",
                                   0) == 0);
    CHECK_THROWS(summarize("lambda", "0.1", "eand-nd", {}));
}

TEST_CASE("colormap and rendering") {
    CHECK(colormap_rgb(0) == std::array<int, 3>{0, 0, 255});
    CHECK(colormap_rgb(255) == std::array<int, 3>{255, 0, 0});
    CHECK(colormap_hex(255) == "#ff0000");
    CHECK(colormap_index(0.0, 0.0, 1.0) == 0);
    CHECK(colormap_index(1.0, 0.0, 1.0) == 255);
    CHECK(colormap_index(0.5, 0.5, 0.5) == 0);

    const TriMesh m = icosphere(2, 10.0);
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(162, 0.3);
    const std::string svg = render_svg(m, flat);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(fills(svg).size() == 1);
    Eigen::VectorXd ramp(162);
    for (int i = 0; i < 162; ++i) ramp[i] = m.vertices[static_cast<std::size_t>(i)].x();
    CHECK(render_svg(m, ramp) == render_svg(m, ramp));
    CHECK(fills(render_svg(m, ramp)).size() > 10);
}

TEST_CASE("simulate command") {
    const fs::path dir = scratch("cmd_sim");
    ExperimentConfig cfg;
    cfg.sim_steps = 401;
    cfg.output_dir = dir.string();
    cmd_simulate(cfg, quiet);
    const auto manifest = nlohmann::json::parse(read_text(dir / "data" / "simulate_manifest.json"));
    CHECK(manifest.at("observations").size() == cfg.noise_levels.size());
    const std::string u1 = read_text(dir / "data" / "u.csv");
    CHECK(csv_rows(u1).size() == 163);  // header plus 162 nodes
    const std::string obs1 = read_text(dir / "data" / "obs_2.csv");
    cmd_simulate(cfg, quiet);
    CHECK(read_text(dir / "data" / "u.csv") == u1);
    CHECK(read_text(dir / "data" / "obs_2.csv") == obs1);

    // A mid-run frame shows the wavefront.
    const Eigen::MatrixXd u = parse_labeled_matrix(u1);
    const fs::path svg = dir / "frame.svg";
    cmd_render(dir / "data" / "u.csv", dir / "data" / "mesh.off", static_cast<int>(u.cols() / 2), svg);
    CHECK(fills(read_text(svg)).size() >= 2);
    CHECK_THROWS(cmd_render(dir / "data" / "u.csv", dir / "data" / "mesh.off", static_cast<int>(u.cols()), svg));

    ExperimentConfig bad = cfg;
    bad.methods = {"nope"};
    CHECK_THROWS_AS(cmd_simulate(bad, quiet), UsageError);
    fs::remove_all(dir);
}

TEST_CASE("reconstruct command") {
    const fs::path dir = scratch("cmd_rec");
    ExperimentConfig cfg = small_config(dir.string());
    cfg.methods = {"tikh2", "stre", "eand-nd"};
    CHECK_THROWS_WITH(cmd_reconstruct(cfg, quiet), doctest::Contains("run simulate first"));
    cmd_simulate(cfg, quiet);
    cmd_reconstruct(cfg, quiet);
    const fs::path out = dir / "reconstruct";
    const auto manifest = nlohmann::json::parse(read_text(out / "manifest.json"));
    std::set<std::uint64_t> seeds;
    for (const auto& c : manifest.at("cells")) seeds.insert(c.at("seed").get<std::uint64_t>());
    CHECK(seeds.size() == 2);
    CHECK(manifest.at("tuned_baselines").at("stre").begin()->at("label") == "STRE-style");
    CHECK(fs::exists(out / "eand-nd" / "sigma_0.1" / "run_1" / "history.csv"));
    CHECK(fs::exists(out / "eand-nd" / "sigma_0.1" / "run_1" / "checkpoint.json"));
    CHECK(fs::exists(out / "stre" / "sigma_0" / "run_0" / "field.csv"));

    std::map<std::string, double> re;
    for (const auto& row : csv_rows(read_text(out / "runs.csv"))) {
        if (row[0] == "axis" || row[2] != "tikh2" || row[3] != "0") continue;
        re[row[1]] = std::stod(row[5]);
    }
    CHECK(re.at("0") < re.at("0.1"));

    const std::string cmp = cmd_compare(dir / "data" / "u.csv", {out / "tikh2" / "sigma_0" / "run_0" / "field.csv",
                                                                 dir / "data" / "u.csv"});
    const auto rows = csv_rows(cmp);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"file", "re", "cc", "mse", "n"});
    CHECK(std::stod(rows[2][1]) == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("sweep command") {
    const fs::path dir = scratch("cmd_sweep");
    ExperimentConfig cfg = small_config(dir.string());
    CHECK_THROWS_AS(cmd_sweep(cfg, "depth", quiet), UsageError);

    const auto lam = cmd_sweep(cfg, "lambda", quiet);
    CHECK(lam.size() == 5);
    for (const auto& r : lam) {
        CHECK(r.n == 2);
        CHECK(r.re_std >= 0.0);
        CHECK(r.bad_init_rate.has_value());
    }

    cfg.networks = {NetworkSpec{10, 0, 6}, NetworkSpec{10, 1, 6}, NetworkSpec{10, 2, 6}, NetworkSpec{10, 3, 6}};
    const auto net = cmd_sweep(cfg, "network", quiet);
    CHECK(net.size() == 4);
    const auto header = csv_rows(read_text(dir / "sweep_network" / "summary.csv")).front();
    CHECK(header.back() == "bad_init_rate");
    for (const auto& row : csv_rows(read_text(dir / "sweep_network" / "summary.csv"))) CHECK_FALSE(row.back().empty());

    cfg.methods = {"tikh2", "stre"};
    cfg.noise_levels = {0.01, 0.05, 0.1};
    const auto noise = cmd_sweep(cfg, "noise", quiet);
    CHECK(noise.size() == 6);
    for (std::size_t i = 0; i + 1 < noise.size(); ++i) {
        if (noise[i].method == noise[i + 1].method) CHECK(noise[i].re_mean <= noise[i + 1].re_mean);
    }

    // Recompute the summary from the raw per-run rows.
    std::map<std::pair<std::string, std::string>, std::vector<double>> raw;
    for (const auto& row : csv_rows(read_text(dir / "sweep_noise" / "runs.csv"))) {
        if (row[0] == "axis") continue;
        raw[{row[1], row[2]}].push_back(std::stod(row[5]));
    }
    for (const auto& r : noise) {
        const auto& v = raw.at({r.value, r.method});
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        CHECK(std::abs(mean - r.re_mean) < 1e-12);
        CHECK(std::abs(std::sqrt(ss / static_cast<double>(v.size() - 1)) - r.re_std) < 1e-12);
    }
    fs::remove_all(dir);
}
