#include "heartinv/forward.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "heartinv/csv.hpp"

namespace heartinv {

void TransferModel::validate() const {
    if (R.rows() == 0 || R.cols() == 0) throw Error("transfer matrix is empty");
    if (R.rows() >= R.cols()) {
        throw Error("transfer matrix must be underdetermined (M < V), got " + std::to_string(R.rows()) + " x " +
                    std::to_string(R.cols()));
    }
    if (!R.allFinite()) throw Error("transfer matrix has non-finite entries");
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
        if ((R.row(i).array() == 0.0).all()) throw Error("transfer matrix row " + std::to_string(i) + " is all zero");
    }
}

std::vector<Eigen::Vector3d> fibonacci_sphere(int n, double radius, const Eigen::Vector3d& center) {
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = golden * i;
        pts.push_back(center + radius * Eigen::Vector3d(rho * std::cos(theta), rho * std::sin(theta), z));
    }
    return pts;
}

TransferModel synth_transfer(const TriMesh& heart, int n_sensors, double torso_radius_factor, std::uint64_t seed) {
    const auto nv = static_cast<int>(heart.num_vertices());
    if (n_sensors < 1 || n_sensors >= nv) {
        throw Error("sensor count must be in [1, " + std::to_string(nv) + "), got " + std::to_string(n_sensors));
    }
    if (!(torso_radius_factor > 1.0)) throw Error("torso radius factor must exceed 1");

    const Eigen::Vector3d center = heart.centroid();
    auto sensors = fibonacci_sphere(n_sensors, torso_radius_factor * heart.bounding_radius(), Eigen::Vector3d::Zero());

    // A seeded random rotation so different seeds give different layouts.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    for (auto& s : sensors) s = center + q * s;

    TransferModel tm;
    tm.R.resize(n_sensors, nv);
    for (int i = 0; i < n_sensors; ++i) {
        for (int j = 0; j < nv; ++j) {
            const double d2 = (sensors[i] - heart.vertices[j]).squaredNorm();
            if (d2 < 1e-18) {
                throw Error("sensor " + std::to_string(i) + " coincides with heart vertex " + std::to_string(j));
            }
            tm.R(i, j) = 1.0 / d2;
        }
    }
    tm.R /= tm.R.rowwise().sum().maxCoeff();
    tm.sensors = std::move(sensors);
    return tm;
}

TransferModel parse_transfer(const std::string& text) {
    TransferModel tm;
    tm.R = parse_plain_matrix(text);
    return tm;
}

TransferModel load_transfer(const std::filesystem::path& path) { return parse_transfer(read_text(path)); }

void save_transfer(const TransferModel& tm, const std::filesystem::path& path) {
    write_text(path, format_plain_matrix(tm.R, 17));
}

Observation observe(const TransferModel& tm, const SpatioTemporalField& u, double noise_std, std::uint64_t seed) {
    if (tm.num_nodes() != u.nodes()) {
        throw Error("transfer matrix has " + std::to_string(tm.num_nodes()) + " columns but the field has " +
                    std::to_string(u.nodes()) + " nodes");
    }
    if (!(noise_std >= 0.0)) throw Error("noise standard deviation must be >= 0");

    Observation obs;
    obs.y = tm.R * u.values;
    obs.noise_std = noise_std;
    obs.seed = seed;
    if (noise_std > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_std);
        // Column-major traversal fixes the draw order.
        for (Eigen::Index t = 0; t < obs.y.cols(); ++t) {
            for (Eigen::Index i = 0; i < obs.y.rows(); ++i) obs.y(i, t) += noise(rng);
        }
    }
    return obs;
}

void save_observation_csv(const Observation& obs, const std::filesystem::path& path) {
    write_text(path, format_labeled_matrix(obs.y, "sensor", 9));
}

Eigen::MatrixXd load_observation_csv(const std::filesystem::path& path) { return parse_labeled_matrix(read_text(path)); }

}  // namespace heartinv
