#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "heartinv/mesh.hpp"

namespace heartinv {

/// 256-step linear ramp from pure blue (index 0) to pure red (index 255).
std::array<int, 3> colormap_rgb(int index);
std::string colormap_hex(int index);

/// Colormap index of `value` over [lo, hi]; a degenerate range maps to 0.
int colormap_index(double value, double lo, double hi);

struct RenderOptions {
    int size = 512;  // square canvas, pixels
    double margin = 8.0;
};

/// Orthographic view along -z: x to the right, y up. Faces are filled with
/// the mean of their vertex values and drawn back to front; on closed meshes
/// faces pointing away from the viewer are culled.
std::string render_svg(const TriMesh& mesh, const Eigen::VectorXd& values, const RenderOptions& options = {});

}  // namespace heartinv
