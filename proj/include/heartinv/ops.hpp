#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "heartinv/mesh.hpp"

namespace heartinv {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Neighbor-averaged mesh Laplacian. Row i applied to a nodal field gives
///
///   (4 / (r_i n_i)) * sum_j (u_j - u_i) / d_ij
///
/// which is the regular-grid formula 4/d^2 (mean - u0) with each neighbor
/// value replaced by its linear interpolant at distance r_i from node i.
class LaplacianOperator {
public:
    explicit LaplacianOperator(const Adjacency& adj);

    const SparseMatrix& matrix() const { return matrix_; }
    std::size_t size() const { return static_cast<std::size_t>(matrix_.rows()); }

    Eigen::VectorXd apply(const Eigen::VectorXd& field) const { return matrix_ * field; }
    /// Applies to every column of a node x time matrix.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& fields) const { return matrix_ * fields; }

    double max_abs_diagonal() const;

private:
    SparseMatrix matrix_;
};

LaplacianOperator laplacian_matrix(const Adjacency& adj);

/// Uniform time sampling: `samples` values spaced `step` apart.
struct TemporalGrid {
    double step = 1.0;
    int samples = 0;

    TemporalGrid() = default;
    TemporalGrid(double step_, int samples_);

    /// T in the usual notation: index of the last sample.
    int last_index() const { return samples - 1; }
    double time(int index) const { return step * index; }
    double duration() const { return step * last_index(); }
};

/// Five-point first-derivative stencil for one sample: derivative at index
/// `center` is sum_k weights[k] * u[first + k] / (12 * step).
struct TemporalStencil {
    int first = 0;
    std::array<double, 5> weights{};
};

/// Central stencil for interior indices, one-sided five-point stencils for
/// the two samples at each end. Requires samples >= 5.
TemporalStencil temporal_stencil(int index, int samples);

/// Fourth-order first derivative of a uniformly sampled series.
Eigen::VectorXd temporal_derivative(std::span<const double> series, const TemporalGrid& grid);
Eigen::VectorXd temporal_derivative(const Eigen::VectorXd& series, const TemporalGrid& grid);

/// Same stencils applied along the columns (time axis) of a node x time matrix.
Eigen::MatrixXd temporal_derivative_rows(const Eigen::MatrixXd& fields, const TemporalGrid& grid);

/// 4/d^2 (mean(neighbors) - u0) on a square grid with spacing d.
double regular_grid_laplacian(double spacing, double center, const std::array<double, 4>& neighbors);

}  // namespace heartinv
