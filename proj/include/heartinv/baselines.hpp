#pragma once

#include <Eigen/Core>

#include "heartinv/apsim.hpp"
#include "heartinv/forward.hpp"
#include "heartinv/mesh.hpp"
#include "heartinv/ops.hpp"

namespace heartinv {

struct TikhonovConfig {
    double lambda = 1e-2;
    int order = 2;  // 0: identity, 1: edge gradient, 2: mesh Laplacian
};

struct StreConfig {
    double lambda_space = 1e-2;
    double lambda_time = 1e-2;
};

/// Regularization operator Gamma for the requested order. Order 1 has one row
/// per undirected edge, (u_j - u_i) / d_ij.
SparseMatrix tikhonov_operator(int order, const Adjacency& adj, const LaplacianOperator& lap);

/// Per time column: argmin ||y - R u||^2 + lambda^2 ||Gamma u||^2, via a dense
/// Cholesky factorization of R^T R + lambda^2 Gamma^T Gamma.
Eigen::MatrixXd tikhonov(const TransferModel& tm, const Eigen::MatrixXd& y, const TikhonovConfig& cfg,
                         const SparseMatrix& gamma);
SpatioTemporalField tikhonov(const TransferModel& tm, const Observation& obs, const TikhonovConfig& cfg,
                             const Adjacency& adj, const LaplacianOperator& lap, const TemporalGrid& grid);

/// Frobenius norm of 2 R^T (R U - Y) + 2 lambda^2 Gamma^T Gamma U.
double tikhonov_gradient_norm(const TransferModel& tm, const Eigen::MatrixXd& y, const Eigen::MatrixXd& u,
                              double lambda, const SparseMatrix& gamma);

/// Spatiotemporal quadratic regularizer:
///   ||Y - R U||_F^2 + ls^2 ||L U||_F^2 + lt^2 ||U Dt^T||_F^2
/// with Dt the first difference along time. Solved with preconditioned
/// conjugate gradients on the normal equations.
struct StreResult {
    Eigen::MatrixXd u;
    int iterations = 0;
    double relative_residual = 0.0;
};

StreResult stre_solve(const TransferModel& tm, const Eigen::MatrixXd& y, const StreConfig& cfg,
                      const LaplacianOperator& lap, double tolerance = 1e-8, int max_iterations = 20000);
SpatioTemporalField stre(const TransferModel& tm, const Observation& obs, const StreConfig& cfg,
                         const LaplacianOperator& lap, const TemporalGrid& grid);

/// Normal-equations operator of the spatiotemporal objective (half its gradient
/// without the data term): R^T R U + ls^2 L^T L U + lt^2 U Dt^T Dt.
Eigen::MatrixXd stre_normal_apply(const Eigen::MatrixXd& rtr, const Eigen::MatrixXd& ltl, double lt2,
                                  const Eigen::MatrixXd& u);

/// Frobenius norm of the objective gradient at U.
double stre_gradient_norm(const TransferModel& tm, const Eigen::MatrixXd& y, const Eigen::MatrixXd& u,
                          const StreConfig& cfg, const LaplacianOperator& lap);

}  // namespace heartinv
