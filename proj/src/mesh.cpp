#include "heartinv/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <utility>

#include <Eigen/Geometry>

namespace heartinv {

namespace {

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

std::map<EdgeKey, int> edge_face_counts(const TriMesh& mesh) {
    std::map<EdgeKey, int> counts;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            ++counts[edge_key(f[k], f[(k + 1) % 3])];
        }
    }
    return counts;
}

bool all_edges_manifold(const TriMesh& mesh) {
    const auto counts = edge_face_counts(mesh);
    return !counts.empty() &&
           std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second == 2; });
}

Eigen::Vector3d face_area_normal(const TriMesh& mesh, const std::array<int, 3>& f) {
    const auto& a = mesh.vertices[f[0]];
    const auto& b = mesh.vertices[f[1]];
    const auto& c = mesh.vertices[f[2]];
    return 0.5 * (b - a).cross(c - a);
}

}  // namespace

std::size_t TriMesh::num_edges() const { return edge_face_counts(*this).size(); }

void TriMesh::validate() const {
    const int nv = static_cast<int>(vertices.size());
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        const auto& f = faces[fi];
        for (int idx : f) {
            if (idx < 0 || idx >= nv) {
                throw MeshError("face " + std::to_string(fi) + " references vertex " + std::to_string(idx) +
                                " outside [0, " + std::to_string(nv) + ")");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw MeshError("face " + std::to_string(fi) + " repeats a vertex");
        }
        if (face_area_normal(*this, f).norm() <= 0.0) {
            throw MeshError("face " + std::to_string(fi) + " has zero area");
        }
    }
    if (is_closed) {
        for (const auto& [edge, count] : edge_face_counts(*this)) {
            if (count != 2) {
                throw MeshError("closed mesh edge (" + std::to_string(edge.first) + ", " +
                                std::to_string(edge.second) + ") is shared by " + std::to_string(count) +
                                " faces");
            }
        }
    }
}

Eigen::Vector3d TriMesh::centroid() const {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& v : vertices) c += v;
    return vertices.empty() ? c : Eigen::Vector3d(c / static_cast<double>(vertices.size()));
}

double TriMesh::bounding_radius() const {
    const Eigen::Vector3d c = centroid();
    double r = 0.0;
    for (const auto& v : vertices) r = std::max(r, (v - c).norm());
    return r;
}

Eigen::Vector3d TriMesh::bbox_min() const {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) lo = lo.cwiseMin(v);
    return lo;
}

Eigen::Vector3d TriMesh::bbox_max() const {
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
    for (const auto& v : vertices) hi = hi.cwiseMax(v);
    return hi;
}

Adjacency build_adjacency(const TriMesh& mesh) {
    const std::size_t nv = mesh.num_vertices();
    std::vector<std::vector<int>> nbrs(nv);
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[k];
            const int b = f[(k + 1) % 3];
            nbrs[a].push_back(b);
            nbrs[b].push_back(a);
        }
    }

    Adjacency adj;
    adj.neighbors.resize(nv);
    adj.edge_lengths.resize(nv);
    adj.ring_radius.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        auto& list = nbrs[i];
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        if (list.empty()) {
            throw MeshError("vertex " + std::to_string(i) + " is isolated");
        }
        double total = 0.0;
        for (int j : list) {
            const double d = (mesh.vertices[i] - mesh.vertices[j]).norm();
            if (!(d > 0.0)) {
                throw MeshError("vertices " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
            }
            adj.edge_lengths[i].push_back(d);
            total += d;
        }
        adj.ring_radius[i] = total / static_cast<double>(list.size());
        adj.neighbors[i] = std::move(list);
    }
    return adj;
}

TriMesh icosphere(int subdivisions, double radius) {
    if (subdivisions < 0 || subdivisions > 6) {
        throw MeshError("icosphere subdivisions must be in [0, 6], got " + std::to_string(subdivisions));
    }
    if (!(radius > 0.0)) {
        throw MeshError("icosphere radius must be positive");
    }

    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& v : verts) v.normalize();

    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };

    for (int s = 0; s < subdivisions; ++s) {
        std::map<EdgeKey, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = edge_key(a, b);
            if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
            verts.push_back((verts[a] + verts[b]).normalized());
            const int idx = static_cast<int>(verts.size()) - 1;
            midpoints.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> refined;
        refined.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = midpoint(f[0], f[1]);
            const int bc = midpoint(f[1], f[2]);
            const int ca = midpoint(f[2], f[0]);
            refined.push_back({f[0], ab, ca});
            refined.push_back({f[1], bc, ab});
            refined.push_back({f[2], ca, bc});
            refined.push_back({ab, bc, ca});
        }
        faces = std::move(refined);
    }

    TriMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const auto& v : verts) mesh.vertices.push_back(radius * v);
    mesh.faces = std::move(faces);
    mesh.is_closed = true;
    return mesh;
}

std::vector<Eigen::Vector3d> vertex_normals(const TriMesh& mesh) {
    std::vector<Eigen::Vector3d> normals(mesh.num_vertices(), Eigen::Vector3d::Zero());
    for (const auto& f : mesh.faces) {
        // Length equals the face area, so the sum is area weighted.
        const Eigen::Vector3d n = face_area_normal(mesh, f);
        for (int idx : f) normals[idx] += n;
    }
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const double len = normals[i].norm();
        if (!(len > 0.0)) {
            throw MeshError("vertex " + std::to_string(i) + " has a zero accumulated normal");
        }
        normals[i] /= len;
    }
    return normals;
}

std::vector<int> graph_distances(const Adjacency& adj, int source) {
    std::vector<int> dist(adj.size(), -1);
    std::queue<int> frontier;
    dist[source] = 0;
    frontier.push(source);
    while (!frontier.empty()) {
        const int i = frontier.front();
        frontier.pop();
        for (int j : adj.neighbors[i]) {
            if (dist[j] < 0) {
                dist[j] = dist[i] + 1;
                frontier.push(j);
            }
        }
    }
    return dist;
}

// ---------------------------------------------------------------------------

namespace {

// Next non-empty, non-comment line.
bool next_line(std::istringstream& in, std::string& line, int& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TriMesh parse_off(const std::string& text) {
    using Kind = OffParseError::Kind;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;

    if (!next_line(in, line, lineno)) throw OffParseError(Kind::BadHeader, "empty OFF file");
    {
        std::istringstream hs(line);
        std::string tag;
        hs >> tag;
        if (tag != "OFF") throw OffParseError(Kind::BadHeader, "line " + std::to_string(lineno) + ": expected 'OFF' header");
    }

    long nv = -1, nf = -1, ne = 0;
    if (!next_line(in, line, lineno)) throw OffParseError(Kind::BadCounts, "missing counts line");
    {
        std::istringstream cs(line);
        if (!(cs >> nv >> nf) || nv < 0 || nf < 0) {
            throw OffParseError(Kind::BadCounts, "line " + std::to_string(lineno) + ": malformed 'V F E' counts");
        }
        cs >> ne;
    }

    TriMesh mesh;
    mesh.vertices.reserve(static_cast<std::size_t>(nv));
    for (long i = 0; i < nv; ++i) {
        if (!next_line(in, line, lineno)) throw OffParseError(Kind::BadVertex, "unexpected end of file in vertex list");
        std::istringstream vs(line);
        Eigen::Vector3d p;
        if (!(vs >> p.x() >> p.y() >> p.z())) {
            throw OffParseError(Kind::BadVertex, "line " + std::to_string(lineno) + ": malformed vertex");
        }
        mesh.vertices.push_back(p);
    }

    mesh.faces.reserve(static_cast<std::size_t>(nf));
    for (long i = 0; i < nf; ++i) {
        if (!next_line(in, line, lineno)) throw OffParseError(Kind::BadFace, "unexpected end of file in face list");
        std::istringstream fs(line);
        int count = 0;
        if (!(fs >> count)) throw OffParseError(Kind::BadFace, "line " + std::to_string(lineno) + ": malformed face");
        if (count != 3) {
            throw OffParseError(Kind::NonTriangularFace,
                                "line " + std::to_string(lineno) + ": face has " + std::to_string(count) + " vertices");
        }
        std::array<int, 3> f{};
        if (!(fs >> f[0] >> f[1] >> f[2])) {
            throw OffParseError(Kind::BadFace, "line " + std::to_string(lineno) + ": malformed face indices");
        }
        for (int idx : f) {
            if (idx < 0 || idx >= nv) {
                throw OffParseError(Kind::IndexOutOfRange, "line " + std::to_string(lineno) + ": vertex index " +
                                                               std::to_string(idx) + " out of range");
            }
        }
        mesh.faces.push_back(f);
    }

    mesh.is_closed = all_edges_manifold(mesh);
    return mesh;
}

TriMesh load_off(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw OffParseError(OffParseError::Kind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_off(ss.str());
}

std::string format_off(const TriMesh& mesh) {
    std::string out = "OFF\n";
    out += std::to_string(mesh.num_vertices()) + " " + std::to_string(mesh.num_faces()) + " " +
           std::to_string(mesh.num_edges()) + "\n";
    char buf[96];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", v.x(), v.y(), v.z());
        out += buf;
    }
    for (const auto& f : mesh.faces) {
        std::snprintf(buf, sizeof buf, "3 %d %d %d\n", f[0], f[1], f[2]);
        out += buf;
    }
    return out;
}

void save_off(const TriMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write " + path.string());
    out << format_off(mesh);
}

}  // namespace heartinv
