#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "heartinv/apsim.hpp"

using namespace heartinv;

namespace {

struct Desk {
    TriMesh mesh = icosphere(2, 10.0);
    Adjacency adj = build_adjacency(mesh);
    LaplacianOperator lap{adj};
};

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("reaction terms at hand-computed points") {
    const APParams p;
    auto r = reaction_terms(0.0, 0.0, p);
    CHECK(r.du == 0.0);
    CHECK(r.dv == 0.0);
    r = reaction_terms(1.0, 0.0, p);
    CHECK(r.du == doctest::Approx(0.0));
    CHECK(r.dv == doctest::Approx(0.0016).epsilon(1e-12));
    r = reaction_terms(0.5, 0.0, p);
    CHECK(r.du == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.dv == doctest::Approx(0.0048).epsilon(1e-12));
    CHECK(recovery_coupling(0.2, 0.5, p) == doctest::Approx(0.002 + 0.3 * 0.5 / 0.5));
    CHECK_THROWS(recovery_coupling(-0.3, 0.1, p));
}

TEST_CASE("parameter validation") {
    APParams p;
    CHECK_NOTHROW(p.validate());
    p.k = 0.0;
    CHECK_THROWS(p.validate());
}

TEST_CASE("zero stimulus keeps the rest state") {
    const Desk d;
    StimulusSpec stim{0, 0.0, 50};
    const auto sim = simulate(d.mesh, d.adj, d.lap, APParams{}, stim, TemporalGrid(0.005, 200));
    CHECK(sim.u.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(sim.v.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("wave spreads outward from the stimulus in graph distance order") {
    const Desk d;
    const auto sim = simulate(d.mesh, d.adj, d.lap, APParams{}, StimulusSpec{0, 1.0, 200}, TemporalGrid(0.005, 3001));
    const auto hops = graph_distances(d.adj, 0);
    std::vector<double> act, dist;
    for (Eigen::Index i = 0; i < sim.u.nodes(); ++i) {
        Eigen::Index t = 0;
        while (t < sim.u.samples() && sim.u.values(i, t) <= 0.5) ++t;
        REQUIRE(t < sim.u.samples());
        act.push_back(static_cast<double>(t));
        dist.push_back(hops[static_cast<std::size_t>(i)]);
    }
    CHECK(pearson(ranks(act), ranks(dist)) > 0.9);
    CHECK(sim.u.values.minCoeff() >= -0.25);
    CHECK(sim.u.values.maxCoeff() <= 1.25);
}

TEST_CASE("simulation is deterministic") {
    const Desk d;
    const StimulusSpec stim{5, 1.0, 100};
    const auto a = simulate(d.mesh, d.adj, d.lap, APParams{}, stim, TemporalGrid(0.005, 400));
    const auto b = simulate(d.mesh, d.adj, d.lap, APParams{}, stim, TemporalGrid(0.005, 400));
    CHECK(a.u.values == b.u.values);
    CHECK(a.v.values == b.v.values);
    CHECK(a.u.samples() == 400);
}

TEST_CASE("stability and argument checks") {
    const TriMesh m = icosphere(2, 1.0);
    const Adjacency adj = build_adjacency(m);
    const LaplacianOperator lap(adj);
    CHECK_THROWS(simulate(m, adj, lap, APParams{}, StimulusSpec{0, 1.0, 10}, TemporalGrid(0.05, 20)));
    const Desk d;
    CHECK_THROWS(simulate(d.mesh, d.adj, d.lap, APParams{}, StimulusSpec{500, 1.0, 10}, TemporalGrid(0.005, 20)));
    CHECK_THROWS(simulate(d.mesh, d.adj, d.lap, APParams{}, StimulusSpec{0, 1.0, 0}, TemporalGrid(0.005, 20)));
}

TEST_CASE("downsampling") {
    Eigen::MatrixXd v = Eigen::MatrixXd::Random(3, 101);
    const SpatioTemporalField f(v, TemporalGrid(0.01, 101));
    const auto same = downsample(f, 1);
    CHECK(same.values == f.values);
    const auto ten = downsample(f, 10);
    CHECK(ten.samples() == 11);
    CHECK(ten.grid.step == doctest::Approx(0.1));
    CHECK(ten.values.col(3) == f.values.col(30));
    CHECK_THROWS(downsample(f, 30));
    CHECK_THROWS(downsample(f, 0));
}

TEST_CASE("field CSV round trip") {
    Eigen::MatrixXd v(2, 5);
    v << 0.1, 0.2, 0.3, 0.4, 0.5, -1.5, 2.25, 1e-7, 3.0, 0.0;
    const SpatioTemporalField f(v, TemporalGrid(0.05, 5));
    const std::string text = format_field_csv(f);
    CHECK(text.rfind("node,t0,t1,t2,t3,t4\n", 0) == 0);
    const auto path = std::filesystem::temp_directory_path() / "heartinv_field.csv";
    save_field_csv(f, path);
    const auto back = load_field_csv(path, 0.05);
    std::filesystem::remove(path);
    CHECK((back.values - v).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_THROWS(SpatioTemporalField(v, TemporalGrid(0.05, 6)));
}
