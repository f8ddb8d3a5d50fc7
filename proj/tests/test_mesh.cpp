#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <Eigen/Geometry>

#include "heartinv/mesh.hpp"

using namespace heartinv;

namespace {

TriMesh tetrahedron() {
    // Regular tetrahedron with unit edges, centered at the origin.
    const double s = 1.0 / std::sqrt(8.0);
    TriMesh m;
    m.vertices = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    m.is_closed = true;
    return m;
}

std::map<std::pair<int, int>, int> edge_face_counts(const TriMesh& m) {
    std::map<std::pair<int, int>, int> counts;
    for (const auto& f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            counts[{std::min(a, b), std::max(a, b)}]++;
        }
    }
    return counts;
}

}  // namespace

TEST_CASE("single triangle gives two neighbors per vertex") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    m.validate();
    const Adjacency adj = build_adjacency(m);
    for (std::size_t i = 0; i < 3; ++i) CHECK(adj.degree(i) == 2);
}

TEST_CASE("regular tetrahedron adjacency") {
    const Adjacency adj = build_adjacency(tetrahedron());
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(adj.degree(i) == 3);
        for (double d : adj.edge_lengths[i]) CHECK(d == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(adj.ring_radius[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("icosphere counts and Euler characteristic") {
    for (int s = 0; s <= 4; ++s) {
        const TriMesh m = icosphere(s);
        const long v = 10L * (1L << (2 * s)) + 2;
        CHECK(static_cast<long>(m.num_vertices()) == v);
        CHECK(static_cast<long>(m.num_faces()) == 20L * (1L << (2 * s)));
        const long e = static_cast<long>(m.num_edges());
        CHECK(v - e + static_cast<long>(m.num_faces()) == 2);
        CHECK(m.is_closed);
        for (const auto& [edge, count] : edge_face_counts(m)) CHECK(count == 2);
    }
    CHECK(icosphere(0).num_faces() == 20);
    CHECK(icosphere(2).num_vertices() == 162);
    CHECK(icosphere(2).num_faces() == 320);
    CHECK_THROWS(icosphere(7));
}

TEST_CASE("icosphere radius projection") {
    const TriMesh m = icosphere(1, 2.0);
    for (const auto& p : m.vertices) CHECK(std::abs(p.norm() - 2.0) < 1e-12);
}

TEST_CASE("icosphere(1) valences from a brute-force edge scan") {
    const TriMesh m = icosphere(1);
    std::vector<std::set<int>> ring(m.num_vertices());
    for (const auto& f : m.faces) {
        for (int a : f) {
            for (int b : f) {
                if (a != b) ring[static_cast<std::size_t>(a)].insert(b);
            }
        }
    }
    const Adjacency adj = build_adjacency(m);
    int five = 0, six = 0;
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
        CHECK(adj.degree(i) == ring[i].size());
        five += ring[i].size() == 5;
        six += ring[i].size() == 6;
    }
    CHECK(m.num_vertices() == 42);
    CHECK(five == 12);
    CHECK(six == 30);
}

TEST_CASE("adjacency is symmetric with consistent lengths up to 642 vertices") {
    for (int s = 0; s <= 3; ++s) {
        const TriMesh m = icosphere(s, 1.5);
        const Adjacency adj = build_adjacency(m);
        for (std::size_t i = 0; i < adj.size(); ++i) {
            CHECK(std::is_sorted(adj.neighbors[i].begin(), adj.neighbors[i].end()));
            double sum = 0.0;
            for (std::size_t k = 0; k < adj.degree(i); ++k) {
                const int j = adj.neighbors[i][k];
                const auto& back = adj.neighbors[static_cast<std::size_t>(j)];
                const auto it = std::find(back.begin(), back.end(), static_cast<int>(i));
                REQUIRE(it != back.end());
                const double dji = adj.edge_lengths[static_cast<std::size_t>(j)][static_cast<std::size_t>(it - back.begin())];
                CHECK(adj.edge_lengths[i][k] == dji);
                CHECK(adj.edge_lengths[i][k] > 0.0);
                CHECK(std::abs(adj.edge_lengths[i][k] - (m.vertices[i] - m.vertices[static_cast<std::size_t>(j)]).norm()) < 1e-14);
                sum += adj.edge_lengths[i][k];
            }
            CHECK(std::abs(adj.ring_radius[i] - sum / static_cast<double>(adj.degree(i))) < 1e-12);
            CHECK(adj.degree(i) >= 2);
        }
    }
}

TEST_CASE("isolated vertex is rejected") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(build_adjacency(m), MeshError);
}

TEST_CASE("mesh validation") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(m.validate(), MeshError);  // zero area
    m.faces = {{0, 1, 3}};
    CHECK_THROWS_AS(m.validate(), MeshError);
    m.faces = {{0, 0, 1}};
    CHECK_THROWS_AS(m.validate(), MeshError);
    TriMesh open = tetrahedron();
    open.faces.pop_back();
    CHECK_THROWS_AS(open.validate(), MeshError);
}

TEST_CASE("vertex normals") {
    const TriMesh sphere = icosphere(2);
    const auto n = vertex_normals(sphere);
    for (std::size_t i = 0; i < n.size(); ++i) {
        CHECK(std::abs(n[i].norm() - 1.0) < 1e-12);
        CHECK(n[i].dot(sphere.vertices[i]) > 0.999);
    }
    const TriMesh tet = tetrahedron();
    const auto nt = vertex_normals(tet);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(nt[i].cross(tet.vertices[i]).norm() < 1e-12);
        CHECK(nt[i].dot(tet.vertices[i]) > 0.0);
    }
}

TEST_CASE("graph distances on the icosahedron") {
    const Adjacency adj = build_adjacency(icosphere(0));
    const auto d = graph_distances(adj, 0);
    CHECK(d[0] == 0);
    CHECK(std::count(d.begin(), d.end(), 1) == 5);
    CHECK(std::count(d.begin(), d.end(), 2) == 5);
    CHECK(std::count(d.begin(), d.end(), 3) == 1);
}

TEST_CASE("OFF round trip") {
    const TriMesh m = icosphere(0, 1.3);
    const auto path = std::filesystem::temp_directory_path() / "heartinv_roundtrip.off";
    save_off(m, path);
    const TriMesh back = load_off(path);
    std::filesystem::remove(path);
    REQUIRE(back.num_vertices() == 12);
    REQUIRE(back.num_faces() == 20);
    CHECK(back.faces == m.faces);
    CHECK(back.is_closed);
    for (std::size_t i = 0; i < 12; ++i) CHECK((back.vertices[i] - m.vertices[i]).norm() < 1e-8);
}

TEST_CASE("OFF parse errors are distinct") {
    auto kind_of = [](const std::string& text) {
        try {
            parse_off(text);
        } catch (const OffParseError& e) {
            return e.kind();
        }
        FAIL("expected a parse error");
        return OffParseError::Kind::Io;
    };
    const std::string verts = "0 0 0\n1 0 0\n0 1 0\n0 0 1\n";
    CHECK(kind_of("PLY\n4 1 0\n" + verts + "3 0 1 2\n") == OffParseError::Kind::BadHeader);
    CHECK(kind_of("OFF\n4 1 0\n" + verts + "4 0 1 2 3\n") == OffParseError::Kind::NonTriangularFace);
    CHECK(kind_of("OFF\n4 1 0\n" + verts + "3 0 1 4\n") == OffParseError::Kind::IndexOutOfRange);
    CHECK(kind_of("OFF\nx 1 0\n") == OffParseError::Kind::BadCounts);
    CHECK(kind_of("OFF\n4 1 0\n0 0\n") == OffParseError::Kind::BadVertex);
    CHECK_THROWS_AS(load_off("/nonexistent/dir/mesh.off"), OffParseError);
}
