#include <doctest.h>

#include <cmath>
#include <random>

#include "heartinv/metrics.hpp"

using namespace heartinv;

namespace {

Eigen::MatrixXd random_field(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

// Pooled correlation written out with explicit loops.
double pooled_cc(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& est) {
    double num = 0.0, se = 0.0, sr = 0.0;
    for (Eigen::Index s = 0; s < ref.rows(); ++s) {
        double mr = 0.0, me = 0.0;
        for (Eigen::Index t = 0; t < ref.cols(); ++t) {
            mr += ref(s, t);
            me += est(s, t);
        }
        mr /= static_cast<double>(ref.cols());
        me /= static_cast<double>(ref.cols());
        for (Eigen::Index t = 0; t < ref.cols(); ++t) {
            num += (est(s, t) - me) * (ref(s, t) - mr);
            se += (est(s, t) - me) * (est(s, t) - me);
            sr += (ref(s, t) - mr) * (ref(s, t) - mr);
        }
    }
    return num / std::sqrt(se * sr);
}

}  // namespace

TEST_CASE("metric examples") {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd u = random_field(rng, 6, 9);
    const MetricsReport same = evaluate(u, u);
    CHECK(same.re == 0.0);
    CHECK(std::abs(same.cc - 1.0) < 1e-15);
    CHECK(same.mse == 0.0);
    CHECK(same.n == 54);

    const MetricsReport twice = evaluate(u, Eigen::MatrixXd(2.0 * u));
    CHECK(std::abs(twice.re - 1.0) < 1e-15);
    CHECK(std::abs(twice.cc - 1.0) < 1e-15);

    const MetricsReport shifted = evaluate(u, Eigen::MatrixXd(u.array() + 0.3));
    CHECK(std::abs(shifted.cc - 1.0) < 1e-14);
    CHECK(std::abs(shifted.mse - 0.09) < 1e-15);

    CHECK(MetricsReport::csv_header() == "re,cc,mse,n");
    CHECK(same.csv_row() == "0,1,0,54");
}

TEST_CASE("metric errors and constant rows") {
    CHECK_THROWS(evaluate(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(3, 2)));
    CHECK_THROWS(evaluate(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Ones(2, 3)));
    Eigen::MatrixXd ref(2, 3);
    ref << 1, 2, 3, 5, 5, 5;
    Eigen::MatrixXd est(2, 3);
    est << 2, 4, 6, 0, 1, 0;
    const MetricsReport r = evaluate(ref, est);
    CHECK(r.skipped_nodes == 1);
    CHECK(std::isfinite(r.cc));
    CHECK(std::abs(r.cc - 1.0) < 1e-15);
}

TEST_CASE("metric identities on random fields") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uni(0.1, 5.0);
    std::uniform_int_distribution<int> dim(2, 12);
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::Index rows = dim(rng), cols = dim(rng);
        const Eigen::MatrixXd u = random_field(rng, rows, cols);
        const Eigen::MatrixXd est = u + random_field(rng, rows, cols) * uni(rng);
        const MetricsReport m = evaluate(u, est);

        CHECK(m.cc >= -1.0);
        CHECK(m.cc <= 1.0);
        CHECK(std::abs(m.cc - pooled_cc(u, est)) < 1e-12);
        CHECK(std::abs(m.re * m.re * u.squaredNorm() - static_cast<double>(m.n) * m.mse) <
              1e-10 * std::max(1.0, static_cast<double>(m.n) * m.mse));

        const double a = uni(rng), b = uni(rng) - 2.5;
        const MetricsReport affine = evaluate(u, Eigen::MatrixXd((a * est).array() + b));
        CHECK(std::abs(affine.cc - m.cc) < 1e-10);
        Eigen::MatrixXd per_node = a * est;
        per_node.colwise() += random_field(rng, rows, 1).col(0);
        CHECK(std::abs(evaluate(u, per_node).cc - m.cc) < 1e-10);
    }
}

TEST_CASE("field overload uses the values") {
    std::mt19937_64 rng(3);
    const SpatioTemporalField a(random_field(rng, 4, 5), TemporalGrid(0.1, 5));
    const SpatioTemporalField b(random_field(rng, 4, 5), TemporalGrid(0.1, 5));
    CHECK(evaluate(a, b).re == evaluate(a.values, b.values).re);
}
