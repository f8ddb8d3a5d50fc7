#include "heartinv/baselines.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace heartinv {

namespace {

void check_dims(const TransferModel& tm, const Eigen::MatrixXd& y) {
    if (y.rows() != tm.num_sensors()) {
        throw Error("observation has " + std::to_string(y.rows()) + " rows but R has " +
                    std::to_string(tm.num_sensors()) + " sensors");
    }
}

// Dt^T Dt applied from the right: second difference along time with
// reflecting ends.
Eigen::MatrixXd apply_time_penalty(const Eigen::MatrixXd& u) {
    const Eigen::Index n = u.cols();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(u.rows(), n);
    for (Eigen::Index t = 0; t + 1 < n; ++t) {
        const Eigen::VectorXd diff = u.col(t + 1) - u.col(t);
        out.col(t) -= diff;
        out.col(t + 1) += diff;
    }
    return out;
}

}  // namespace

SparseMatrix tikhonov_operator(int order, const Adjacency& adj, const LaplacianOperator& lap) {
    const auto n = static_cast<Eigen::Index>(adj.size());
    switch (order) {
        case 0: {
            SparseMatrix id(n, n);
            id.setIdentity();
            return id;
        }
        case 1: {
            std::vector<Eigen::Triplet<double>> entries;
            int row = 0;
            for (std::size_t i = 0; i < adj.size(); ++i) {
                for (std::size_t k = 0; k < adj.neighbors[i].size(); ++k) {
                    const int j = adj.neighbors[i][k];
                    if (j <= static_cast<int>(i)) continue;
                    const double w = 1.0 / adj.edge_lengths[i][k];
                    entries.emplace_back(row, static_cast<int>(i), -w);
                    entries.emplace_back(row, j, w);
                    ++row;
                }
            }
            SparseMatrix g(row, n);
            g.setFromTriplets(entries.begin(), entries.end());
            return g;
        }
        case 2:
            return lap.matrix();
        default:
            throw Error("Tikhonov order must be 0, 1 or 2, got " + std::to_string(order));
    }
}

Eigen::MatrixXd tikhonov(const TransferModel& tm, const Eigen::MatrixXd& y, const TikhonovConfig& cfg,
                         const SparseMatrix& gamma) {
    check_dims(tm, y);
    if (!(cfg.lambda > 0.0)) throw Error("Tikhonov lambda must be positive");
    if (gamma.cols() != tm.num_nodes()) throw Error("regularization operator does not match R");

    const Eigen::MatrixXd gtg = Eigen::MatrixXd(gamma.transpose() * gamma);
    Eigen::MatrixXd system = tm.R.transpose() * tm.R;
    system += cfg.lambda * cfg.lambda * gtg;

    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) {
        throw Error("Tikhonov system is singular for lambda = " + std::to_string(cfg.lambda) + ", order " +
                    std::to_string(cfg.order));
    }
    const Eigen::VectorXd diag = Eigen::MatrixXd(llt.matrixL()).diagonal();
    if (diag.minCoeff() <= 1e-14 * diag.maxCoeff()) {
        throw Error("Tikhonov system is numerically singular for lambda = " + std::to_string(cfg.lambda));
    }
    return llt.solve(tm.R.transpose() * y);
}

SpatioTemporalField tikhonov(const TransferModel& tm, const Observation& obs, const TikhonovConfig& cfg,
                             const Adjacency& adj, const LaplacianOperator& lap, const TemporalGrid& grid) {
    return SpatioTemporalField(tikhonov(tm, obs.y, cfg, tikhonov_operator(cfg.order, adj, lap)), grid);
}

double tikhonov_gradient_norm(const TransferModel& tm, const Eigen::MatrixXd& y, const Eigen::MatrixXd& u,
                              double lambda, const SparseMatrix& gamma) {
    const Eigen::MatrixXd g = 2.0 * tm.R.transpose() * (tm.R * u - y) +
                              2.0 * lambda * lambda * (gamma.transpose() * (gamma * u));
    return g.norm();
}

Eigen::MatrixXd stre_normal_apply(const Eigen::MatrixXd& rtr, const Eigen::MatrixXd& ltl, double lt2,
                                  const Eigen::MatrixXd& u) {
    Eigen::MatrixXd out = (rtr + ltl) * u;
    if (lt2 != 0.0) out += lt2 * apply_time_penalty(u);
    return out;
}

StreResult stre_solve(const TransferModel& tm, const Eigen::MatrixXd& y, const StreConfig& cfg,
                      const LaplacianOperator& lap, double tolerance, int max_iterations) {
    check_dims(tm, y);
    if (!(cfg.lambda_space > 0.0) || !(cfg.lambda_time >= 0.0)) {
        throw Error("spatiotemporal weights must satisfy lambda_space > 0, lambda_time >= 0");
    }
    if (y.cols() < 1) throw Error("observation has no time samples");

    const Eigen::MatrixXd rtr = tm.R.transpose() * tm.R;
    const Eigen::MatrixXd lmat = Eigen::MatrixXd(lap.matrix());
    const Eigen::MatrixXd ltl = cfg.lambda_space * cfg.lambda_space * (lmat.transpose() * lmat);
    const double lt2 = cfg.lambda_time * cfg.lambda_time;
    const Eigen::MatrixXd rhs = tm.R.transpose() * y;

    // Block-diagonal preconditioner: exact per-column system with the time
    // penalty's diagonal (1 at the ends, 2 inside).
    const Eigen::Index n = tm.num_nodes();
    const Eigen::Index cols = y.cols();
    const Eigen::MatrixXd base = rtr + ltl;
    Eigen::LLT<Eigen::MatrixXd> pre_end(base + lt2 * Eigen::MatrixXd::Identity(n, n));
    Eigen::LLT<Eigen::MatrixXd> pre_mid(base + 2.0 * lt2 * Eigen::MatrixXd::Identity(n, n));
    if (pre_end.info() != Eigen::Success || pre_mid.info() != Eigen::Success) {
        throw Error("spatiotemporal preconditioner is singular");
    }
    auto precondition = [&](const Eigen::MatrixXd& r) {
        Eigen::MatrixXd z(r.rows(), r.cols());
        for (Eigen::Index t = 0; t < cols; ++t) {
            const bool end = (t == 0 || t == cols - 1);
            z.col(t) = (end ? pre_end : pre_mid).solve(r.col(t));
        }
        return z;
    };

    StreResult result;
    const double rhs_norm = rhs.norm();
    result.u = Eigen::MatrixXd::Zero(n, cols);
    if (rhs_norm == 0.0) return result;

    Eigen::MatrixXd r = rhs;
    Eigen::MatrixXd z = precondition(r);
    Eigen::MatrixXd p = z;
    double rz = (r.array() * z.array()).sum();
    for (int it = 1; it <= max_iterations; ++it) {
        const Eigen::MatrixXd ap = stre_normal_apply(rtr, ltl, lt2, p);
        const double alpha = rz / (p.array() * ap.array()).sum();
        result.u += alpha * p;
        r -= alpha * ap;
        result.iterations = it;
        result.relative_residual = r.norm() / rhs_norm;
        if (result.relative_residual <= tolerance) return result;
        z = precondition(r);
        const double rz_next = (r.array() * z.array()).sum();
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    // Recompute the true residual before giving up.
    result.relative_residual = (rhs - stre_normal_apply(rtr, ltl, lt2, result.u)).norm() / rhs_norm;
    if (result.relative_residual > tolerance) {
        throw Error("conjugate gradients did not converge in " + std::to_string(max_iterations) +
                    " iterations, relative residual " + std::to_string(result.relative_residual));
    }
    return result;
}

SpatioTemporalField stre(const TransferModel& tm, const Observation& obs, const StreConfig& cfg,
                         const LaplacianOperator& lap, const TemporalGrid& grid) {
    return SpatioTemporalField(stre_solve(tm, obs.y, cfg, lap).u, grid);
}

double stre_gradient_norm(const TransferModel& tm, const Eigen::MatrixXd& y, const Eigen::MatrixXd& u,
                          const StreConfig& cfg, const LaplacianOperator& lap) {
    const Eigen::MatrixXd lmat = Eigen::MatrixXd(lap.matrix());
    const Eigen::MatrixXd ltl = cfg.lambda_space * cfg.lambda_space * (lmat.transpose() * lmat);
    const Eigen::MatrixXd rtr = tm.R.transpose() * tm.R;
    const Eigen::MatrixXd g =
        2.0 * (stre_normal_apply(rtr, ltl, cfg.lambda_time * cfg.lambda_time, u) - tm.R.transpose() * y);
    return g.norm();
}

}  // namespace heartinv
