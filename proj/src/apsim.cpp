#include "heartinv/apsim.hpp"

#include <algorithm>
#include <cmath>

#include "heartinv/csv.hpp"

namespace heartinv {

void APParams::validate() const {
    if (!(a > 0 && D > 0 && k > 0 && e0 > 0 && mu1 > 0 && mu2 > 0)) {
        throw Error("Aliev-Panfilov parameters must all be strictly positive");
    }
}

SpatioTemporalField::SpatioTemporalField(Eigen::MatrixXd values_, TemporalGrid grid_)
    : values(std::move(values_)), grid(grid_) {
    if (values.cols() != grid.samples) {
        throw Error("field has " + std::to_string(values.cols()) + " columns but the grid has " +
                    std::to_string(grid.samples) + " samples");
    }
    if (!values.allFinite()) throw Error("field contains non-finite values");
}

double recovery_coupling(double u, double v, const APParams& p) {
    if (!(u > -p.mu2)) {
        throw Error("recovery coupling undefined for u = " + std::to_string(u) + " <= -mu2");
    }
    return p.e0 + p.mu1 * v / (u + p.mu2);
}

ReactionRates reaction_terms(double u, double v, const APParams& p) {
    ReactionRates r;
    r.du = p.k * u * (u - p.a) * (1.0 - u) - u * v;
    r.dv = recovery_coupling(u, v, p) * (-v - p.k * u * (u - p.a - 1.0));
    return r;
}

SimulationResult simulate(const TriMesh& mesh, const Adjacency& adj, const LaplacianOperator& lap,
                          const APParams& params, const StimulusSpec& stim, const TemporalGrid& grid) {
    params.validate();
    const auto nv = static_cast<Eigen::Index>(mesh.num_vertices());
    if (adj.size() != mesh.num_vertices() || static_cast<Eigen::Index>(lap.size()) != nv) {
        throw Error("mesh, adjacency and Laplacian sizes disagree");
    }
    if (stim.vertex < 0 || stim.vertex >= nv) {
        throw Error("stimulus vertex " + std::to_string(stim.vertex) + " out of range");
    }
    if (stim.duration_steps < 1) throw Error("stimulus duration must be at least one step");

    const double dt = grid.step;
    const double stability = dt * params.D * lap.max_abs_diagonal();
    if (!(stability < 1.0)) {
        throw Error("explicit Euler unstable: dt * D * max|diag| = " + std::to_string(stability) + " >= 1");
    }

    Eigen::MatrixXd u_hist(nv, grid.samples);
    Eigen::MatrixXd v_hist(nv, grid.samples);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(nv);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(nv);
    u_hist.col(0) = u;
    v_hist.col(0) = v;

    Eigen::VectorXd lap_u(nv);
    for (int step = 0; step + 1 < grid.samples; ++step) {
        if (step < stim.duration_steps && stim.amplitude != 0.0) {
            auto& seed = u[stim.vertex];
            seed = std::min(1.0, seed + stim.amplitude);
        }
        lap_u.noalias() = lap.matrix() * u;
        for (Eigen::Index i = 0; i < nv; ++i) {
            const auto r = reaction_terms(u[i], v[i], params);
            u[i] += dt * (params.D * lap_u[i] + r.du);
            v[i] += dt * r.dv;
            if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
                throw Error("simulation blew up at step " + std::to_string(step + 1) + ", vertex " + std::to_string(i) +
                            " (u = " + std::to_string(u[i]) + ", v = " + std::to_string(v[i]) + ")");
            }
        }
        u_hist.col(step + 1) = u;
        v_hist.col(step + 1) = v;
    }
    return {SpatioTemporalField(std::move(u_hist), grid), SpatioTemporalField(std::move(v_hist), grid)};
}

SpatioTemporalField downsample(const SpatioTemporalField& field, int stride) {
    if (stride < 1) throw Error("downsample stride must be >= 1");
    const int kept = static_cast<int>((field.samples() - 1) / stride + 1);
    if (kept < 5) {
        throw Error("downsampling leaves " + std::to_string(kept) + " samples; temporal stencils need 5");
    }
    Eigen::MatrixXd out(field.nodes(), kept);
    for (int c = 0; c < kept; ++c) out.col(c) = field.values.col(static_cast<Eigen::Index>(c) * stride);
    return SpatioTemporalField(std::move(out), TemporalGrid(field.grid.step * stride, kept));
}

std::string format_field_csv(const SpatioTemporalField& field) {
    return format_labeled_matrix(field.values, "node", 9);
}

void save_field_csv(const SpatioTemporalField& field, const std::filesystem::path& path) {
    write_text(path, format_field_csv(field));
}

SpatioTemporalField load_field_csv(const std::filesystem::path& path, double step) {
    Eigen::MatrixXd m = parse_labeled_matrix(read_text(path));
    const int samples = static_cast<int>(m.cols());
    return SpatioTemporalField(std::move(m), TemporalGrid(step, samples));
}

}  // namespace heartinv
