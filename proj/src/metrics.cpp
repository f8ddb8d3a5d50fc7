#include "heartinv/metrics.hpp"

#include <cmath>

#include "heartinv/csv.hpp"

namespace heartinv {

std::string MetricsReport::csv_header() { return "re,cc,mse,n"; }

std::string MetricsReport::csv_row() const {
    return format_real(re, 17) + "," + format_real(cc, 17) + "," + format_real(mse, 17) + "," + std::to_string(n);
}

MetricsReport evaluate(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& estimate) {
    if (reference.rows() != estimate.rows() || reference.cols() != estimate.cols()) {
        throw Error("metric inputs differ in shape");
    }
    const double ref_sq = reference.squaredNorm();
    if (!(ref_sq > 0.0)) throw Error("relative error undefined for an all-zero reference");

    MetricsReport rep;
    rep.n = static_cast<long>(reference.size());
    const double err_sq = (estimate - reference).squaredNorm();
    rep.re = std::sqrt(err_sq) / std::sqrt(ref_sq);
    rep.mse = err_sq / static_cast<double>(rep.n);

    double cross = 0.0, est_var = 0.0, ref_var = 0.0;
    for (Eigen::Index s = 0; s < reference.rows(); ++s) {
        const Eigen::RowVectorXd r = reference.row(s).array() - reference.row(s).mean();
        if (r.squaredNorm() == 0.0) {
            ++rep.skipped_nodes;
            continue;
        }
        const Eigen::RowVectorXd e = estimate.row(s).array() - estimate.row(s).mean();
        cross += e.dot(r);
        est_var += e.squaredNorm();
        ref_var += r.squaredNorm();
    }
    const double denom = std::sqrt(est_var * ref_var);
    rep.cc = denom > 0.0 ? cross / denom : 0.0;
    return rep;
}

MetricsReport evaluate(const SpatioTemporalField& reference, const SpatioTemporalField& estimate) {
    return evaluate(reference.values, estimate.values);
}

}  // namespace heartinv
