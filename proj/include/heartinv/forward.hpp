#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "heartinv/apsim.hpp"
#include "heartinv/mesh.hpp"

namespace heartinv {

/// Linear body-heart map: y = R u, R is sensors x heart nodes.
struct TransferModel {
    Eigen::MatrixXd R;
    std::vector<Eigen::Vector3d> sensors;  // only set by synth_transfer

    Eigen::Index num_sensors() const { return R.rows(); }
    Eigen::Index num_nodes() const { return R.cols(); }

    /// Underdetermined, finite, no all-zero rows.
    void validate() const;
};

struct Observation {
    Eigen::MatrixXd y;  // sensors x time
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

/// `n` quasi-uniform points on a sphere of the given radius (golden-angle spiral).
std::vector<Eigen::Vector3d> fibonacci_sphere(int n, double radius, const Eigen::Vector3d& center);

/// Inverse-square kernel from heart vertices to sensors on an enclosing sphere
/// of radius `torso_radius_factor` x the heart bounding radius. The constant is
/// chosen so the largest row sum is 1. `seed` rotates the sensor layout.
TransferModel synth_transfer(const TriMesh& heart, int n_sensors, double torso_radius_factor, std::uint64_t seed);

/// Row-major CSV, M rows of V values, no header.
TransferModel load_transfer(const std::filesystem::path& path);
TransferModel parse_transfer(const std::string& text);
void save_transfer(const TransferModel& tm, const std::filesystem::path& path);

/// y = R u + N(0, sigma^2) per entry. sigma = 0 gives R u exactly.
Observation observe(const TransferModel& tm, const SpatioTemporalField& u, double noise_std, std::uint64_t seed);

/// Same layout as field CSVs with a "sensor" label column.
void save_observation_csv(const Observation& obs, const std::filesystem::path& path);
Eigen::MatrixXd load_observation_csv(const std::filesystem::path& path);

}  // namespace heartinv
