#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace heartinv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MeshError : public Error {
public:
    using Error::Error;
};

/// Triangulated surface. Vertices are in the same (dimensionless) units the
/// Laplacian and transfer generator work with.
struct TriMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> faces;
    bool is_closed = false;

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_faces() const { return faces.size(); }

    /// Number of distinct undirected edges.
    std::size_t num_edges() const;

    /// Throws MeshError when an index is out of range, a face is degenerate,
    /// or a mesh flagged closed has an edge not shared by exactly two faces.
    void validate() const;

    /// Largest distance of a vertex from the centroid.
    double bounding_radius() const;
    Eigen::Vector3d centroid() const;
    Eigen::Vector3d bbox_min() const;
    Eigen::Vector3d bbox_max() const;
};

/// One-ring neighborhoods. Neighbor lists are sorted by vertex index.
struct Adjacency {
    std::vector<std::vector<int>> neighbors;
    std::vector<std::vector<double>> edge_lengths;  // parallel to neighbors
    std::vector<double> ring_radius;                // mean of edge_lengths[i]

    std::size_t size() const { return neighbors.size(); }
    std::size_t degree(std::size_t i) const { return neighbors[i].size(); }
};

/// Neighbors are vertices sharing an edge. Rejects isolated vertices.
Adjacency build_adjacency(const TriMesh& mesh);

/// Subdivided icosahedron projected onto a sphere. subdivisions <= 6.
TriMesh icosphere(int subdivisions, double radius = 1.0);

/// Area-weighted vertex normals, unit length.
std::vector<Eigen::Vector3d> vertex_normals(const TriMesh& mesh);

/// Hop distance from `source` to every vertex (breadth-first search).
std::vector<int> graph_distances(const Adjacency& adj, int source);

// ---------------------------------------------------------------------------
// OFF files

class OffParseError : public MeshError {
public:
    enum class Kind { BadHeader, BadCounts, BadVertex, NonTriangularFace, IndexOutOfRange, BadFace, Io };

    OffParseError(Kind kind, const std::string& what) : MeshError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Reads ASCII OFF. Closedness is inferred from the edge-face incidence.
TriMesh load_off(const std::filesystem::path& path);
TriMesh parse_off(const std::string& text);

/// Writes ASCII OFF with 9 significant digits per coordinate.
void save_off(const TriMesh& mesh, const std::filesystem::path& path);
std::string format_off(const TriMesh& mesh);

}  // namespace heartinv
