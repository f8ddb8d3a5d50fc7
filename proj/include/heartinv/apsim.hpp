#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "heartinv/mesh.hpp"
#include "heartinv/ops.hpp"

namespace heartinv {

/// Aliev-Panfilov constants (dimensionless).
struct APParams {
    double a = 0.1;     // excitability threshold
    double D = 10.0;    // diffusion coefficient
    double k = 8.0;     // repolarization constant
    double e0 = 0.002;
    double mu1 = 0.3;
    double mu2 = 0.3;

    void validate() const;
};

/// Node x time matrix sampled on a uniform temporal grid.
struct SpatioTemporalField {
    Eigen::MatrixXd values;
    TemporalGrid grid;

    SpatioTemporalField() = default;
    SpatioTemporalField(Eigen::MatrixXd values_, TemporalGrid grid_);

    Eigen::Index nodes() const { return values.rows(); }
    Eigen::Index samples() const { return values.cols(); }
};

struct StimulusSpec {
    int vertex = 0;
    double amplitude = 1.0;
    int duration_steps = 100;
};

struct ReactionRates {
    double du = 0.0;  // reaction part of du/dt (diffusion excluded)
    double dv = 0.0;
};

/// xi(u, v) = e0 + mu1 v / (u + mu2).
double recovery_coupling(double u, double v, const APParams& p);

/// du = k u (u - a)(1 - u) - u v;  dv = xi(u, v) (-v - k u (u - a - 1)).
ReactionRates reaction_terms(double u, double v, const APParams& p);

struct SimulationResult {
    SpatioTemporalField u;
    SpatioTemporalField v;
};

/// Explicit Euler integration of du/dt = D Lap(u) + reaction, dv/dt = recovery,
/// from u = v = 0 with an additive stimulus (u clamped to <= 1 at the seed)
/// applied during the first `stim.duration_steps` steps. `grid.step` is the
/// integration step and `grid.samples` the number of stored states, the
/// initial state included.
SimulationResult simulate(const TriMesh& mesh, const Adjacency& adj, const LaplacianOperator& lap,
                          const APParams& params, const StimulusSpec& stim, const TemporalGrid& grid);

/// Keeps every `stride`-th column; the new step is stride times the old one.
SpatioTemporalField downsample(const SpatioTemporalField& field, int stride);

/// CSV: header "node,t0,t1,...", one row per vertex, 9 significant digits.
std::string format_field_csv(const SpatioTemporalField& field);
void save_field_csv(const SpatioTemporalField& field, const std::filesystem::path& path);
/// The step is not stored in the CSV and must be supplied.
SpatioTemporalField load_field_csv(const std::filesystem::path& path, double step);

}  // namespace heartinv
