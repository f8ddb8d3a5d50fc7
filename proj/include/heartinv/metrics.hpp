#pragma once

#include <string>

#include <Eigen/Core>

#include "heartinv/apsim.hpp"

namespace heartinv {

struct MetricsReport {
    double re = 0.0;
    double cc = 0.0;
    double mse = 0.0;
    long n = 0;              // spatiotemporal instances
    long skipped_nodes = 0;  // constant reference rows left out of CC

    /// "re,cc,mse,n"
    static std::string csv_header();
    std::string csv_row() const;
};

/// Relative error, pooled correlation coefficient (per-node temporal means,
/// sums over nodes inside one quotient) and mean squared error.
MetricsReport evaluate(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& estimate);
MetricsReport evaluate(const SpatioTemporalField& reference, const SpatioTemporalField& estimate);

}  // namespace heartinv
