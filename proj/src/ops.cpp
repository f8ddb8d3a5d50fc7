#include "heartinv/ops.hpp"

#include <cmath>
#include <string>

namespace heartinv {

LaplacianOperator::LaplacianOperator(const Adjacency& adj) {
    const auto n = static_cast<Eigen::Index>(adj.size());
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t i = 0; i < adj.size(); ++i) {
        const auto& nbrs = adj.neighbors[i];
        const double scale = 4.0 / (adj.ring_radius[i] * static_cast<double>(nbrs.size()));
        double diag = 0.0;
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
            const double w = scale / adj.edge_lengths[i][k];
            entries.emplace_back(static_cast<int>(i), nbrs[k], w);
            diag -= w;
        }
        entries.emplace_back(static_cast<int>(i), static_cast<int>(i), diag);
    }
    matrix_.resize(n, n);
    matrix_.setFromTriplets(entries.begin(), entries.end());
    matrix_.makeCompressed();
}

double LaplacianOperator::max_abs_diagonal() const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < matrix_.rows(); ++i) m = std::max(m, std::abs(matrix_.coeff(i, i)));
    return m;
}

LaplacianOperator laplacian_matrix(const Adjacency& adj) { return LaplacianOperator(adj); }

TemporalGrid::TemporalGrid(double step_, int samples_) : step(step_), samples(samples_) {
    if (!(step > 0.0)) throw Error("time step must be positive");
    if (samples < 5) {
        throw Error("temporal grid needs at least 5 samples for the five-point stencils, got " +
                    std::to_string(samples));
    }
}

TemporalStencil temporal_stencil(int index, int samples) {
    if (samples < 5) throw Error("five-point stencils need at least 5 samples");
    if (index < 0 || index >= samples) throw Error("stencil index out of range");
    const int last = samples - 1;
    if (index == 0) return {0, {-25, 48, -36, 16, -3}};
    if (index == 1) return {0, {-3, -10, 18, -6, 1}};
    if (index == last - 1) return {last - 4, {-1, 6, -18, 10, 3}};
    if (index == last) return {last - 4, {3, -16, 36, -48, 25}};
    return {index - 2, {1, -8, 0, 8, -1}};
}

Eigen::VectorXd temporal_derivative(std::span<const double> series, const TemporalGrid& grid) {
    const int n = static_cast<int>(series.size());
    if (n < 5) throw Error("temporal derivative needs at least 5 samples, got " + std::to_string(n));
    if (n != grid.samples) throw Error("series length does not match the temporal grid");
    Eigen::VectorXd out(n);
    const double denom = 12.0 * grid.step;
    for (int t = 0; t < n; ++t) {
        const auto st = temporal_stencil(t, n);
        double acc = 0.0;
        for (int k = 0; k < 5; ++k) acc += st.weights[k] * series[st.first + k];
        out[t] = acc / denom;
    }
    return out;
}

Eigen::VectorXd temporal_derivative(const Eigen::VectorXd& series, const TemporalGrid& grid) {
    return temporal_derivative(std::span<const double>(series.data(), static_cast<std::size_t>(series.size())), grid);
}

Eigen::MatrixXd temporal_derivative_rows(const Eigen::MatrixXd& fields, const TemporalGrid& grid) {
    const int n = static_cast<int>(fields.cols());
    if (n < 5) throw Error("temporal derivative needs at least 5 samples");
    if (n != grid.samples) throw Error("field column count does not match the temporal grid");
    Eigen::MatrixXd out(fields.rows(), n);
    const double denom = 12.0 * grid.step;
    for (int t = 0; t < n; ++t) {
        const auto st = temporal_stencil(t, n);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(fields.rows());
        for (int k = 0; k < 5; ++k) {
            if (st.weights[k] != 0.0) acc += st.weights[k] * fields.col(st.first + k);
        }
        out.col(t) = acc / denom;
    }
    return out;
}

double regular_grid_laplacian(double spacing, double center, const std::array<double, 4>& neighbors) {
    if (!(spacing > 0.0)) throw Error("grid spacing must be positive");
    const double mean = (neighbors[0] + neighbors[1] + neighbors[2] + neighbors[3]) / 4.0;
    return 4.0 / (spacing * spacing) * (mean - center);
}

}  // namespace heartinv
