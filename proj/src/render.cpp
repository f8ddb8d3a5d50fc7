#include "heartinv/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include <Eigen/Geometry>

namespace heartinv {

std::array<int, 3> colormap_rgb(int index) {
    const int i = std::clamp(index, 0, 255);
    return {i, 0, 255 - i};
}

std::string colormap_hex(int index) {
    const auto rgb = colormap_rgb(index);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

int colormap_index(double value, double lo, double hi) {
    if (!(hi > lo)) return 0;
    const double x = (value - lo) / (hi - lo);
    return std::clamp(static_cast<int>(std::lround(x * 255.0)), 0, 255);
}

std::string render_svg(const TriMesh& mesh, const Eigen::VectorXd& values, const RenderOptions& options) {
    if (values.size() != static_cast<Eigen::Index>(mesh.num_vertices())) {
        throw Error("render: " + std::to_string(values.size()) + " values for " +
                    std::to_string(mesh.num_vertices()) + " vertices");
    }
    if (!values.allFinite()) throw Error("render: field contains non-finite values");
    const double lo = values.minCoeff();
    const double hi = values.maxCoeff();

    const Eigen::Vector3d bmin = mesh.bbox_min();
    const Eigen::Vector3d bmax = mesh.bbox_max();
    const double span = std::max({bmax.x() - bmin.x(), bmax.y() - bmin.y(), 1e-12});
    const double scale = (options.size - 2.0 * options.margin) / span;
    auto project = [&](const Eigen::Vector3d& p) {
        return Eigen::Vector2d(options.margin + (p.x() - bmin.x()) * scale,
                               options.size - options.margin - (p.y() - bmin.y()) * scale);
    };

    std::vector<std::size_t> order;
    std::vector<double> depth(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& tri = mesh.faces[f];
        const auto& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
        const auto& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
        const auto& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
        if (mesh.is_closed && (b - a).cross(c - a).z() <= 0.0) continue;
        depth[f] = (a.z() + b.z() + c.z()) / 3.0;
        order.push_back(f);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return depth[i] < depth[j]; });

    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                  options.size, options.size, options.size, options.size);
    out += buf;
    std::snprintf(buf, sizeof buf, "<!-- range %.9g %.9g -->\n", lo, hi);
    out += buf;
    for (std::size_t f : order) {
        const auto& tri = mesh.faces[f];
        double mean = 0.0;
        for (int v : tri) mean += values[v];
        mean /= 3.0;
        const auto p0 = project(mesh.vertices[static_cast<std::size_t>(tri[0])]);
        const auto p1 = project(mesh.vertices[static_cast<std::size_t>(tri[1])]);
        const auto p2 = project(mesh.vertices[static_cast<std::size_t>(tri[2])]);
        const std::string fill = colormap_hex(colormap_index(mean, lo, hi));
        std::snprintf(buf, sizeof buf,
                      "<polygon points=\"%.3f,%.3f %.3f,%.3f %.3f,%.3f\" fill=\"%s\" stroke=\"%s\" stroke-width=\"0.5\"/>\n",
                      p0.x(), p0.y(), p1.x(), p1.y(), p2.x(), p2.y(), fill.c_str(), fill.c_str());
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace heartinv
