#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "heartinv/apsim.hpp"
#include "heartinv/autodiff.hpp"
#include "heartinv/forward.hpp"
#include "heartinv/mesh.hpp"
#include "heartinv/network.hpp"
#include "heartinv/ops.hpp"

namespace heartinv {

class TrainingError : public Error {
public:
    using Error::Error;
};

/// How the EP residual derivatives are computed.
enum class DerivativeBackend {
    ND,             // mesh Laplacian + five-point temporal stencils
    AD,             // network input derivatives for both
    NDSpatialOnly,  // mesh Laplacian, network time derivative
};

const char* backend_name(DerivativeBackend b);
DerivativeBackend parse_backend(const std::string& name);

struct TrainConfig {
    double lambda = 0.1;
    int collocation_count = 5000;
    /// Points drawn from the fixed collocation set for each step.
    int collocation_batch = 256;
    bool resample_collocation = false;
    int iterations = 20000;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    int time_batch = 32;
    DerivativeBackend backend = DerivativeBackend::ND;
    /// Defaults to false for ND backends and true for AD.
    std::optional<bool> include_rb;
    int log_every = 100;
    /// Every iteration below this index is logged (bad-initialization window).
    int early_window = 300;
    APParams ap;

    bool use_rb() const { return include_rb.value_or(backend == DerivativeBackend::AD); }
    void validate() const;
};

/// Everything the losses need about the geometry, time axis and data.
struct Problem {
    TriMesh mesh;
    Adjacency adj;
    LaplacianOperator lap;
    std::vector<Eigen::Vector3d> normals;
    TemporalGrid grid;
    TransferModel tm;
    Eigen::MatrixXd y;  // sensors x samples

    Problem(TriMesh mesh, TemporalGrid grid, TransferModel tm, Eigen::MatrixXd y);

    Eigen::Index nodes() const { return static_cast<Eigen::Index>(mesh.num_vertices()); }
    int samples() const { return grid.samples; }
    Normalization normalization() const;
};

/// A node at a time index of the stored lattice.
struct LatticePoint {
    int node = 0;
    int time = 0;
    bool operator==(const LatticePoint&) const = default;
};

/// Ordered, de-duplicated list of lattice points the network is evaluated at.
class EvaluationSet {
public:
    int add(LatticePoint p);
    const std::vector<LatticePoint>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }

    /// 4 x P normalized inputs.
    Eigen::MatrixXd inputs(const Problem& problem, const Normalization& norm) const;

private:
    std::vector<LatticePoint> points_;
    std::unordered_map<long long, int> index_;
};

/// Sparse maps from evaluation-set columns to per-collocation quantities.
struct NdPlan {
    std::shared_ptr<const ad::SparseMap> center;     // picks the collocation point itself
    std::shared_ptr<const ad::SparseMap> laplacian;  // mesh Laplacian at the same time
    std::shared_ptr<const ad::SparseMap> time_derivative;  // five-point stencil in time
};

/// Adds the stencil closure of each collocation point to `eval` and returns
/// the maps. The closure stays on the node x time lattice.
NdPlan plan_nd(const Problem& problem, std::span<const LatticePoint> collocation, EvaluationSet& eval,
               bool with_time_derivative = true);

struct ResidualSet {
    ad::Var r_u;  // 1 x Nc
    ad::Var r_v;
    std::optional<ad::Var> r_b;

    Eigen::Index size() const { return r_u.cols(); }
};

/// r_u = u_t - D lap - k u (1 - u)(u - a) + u v;  r_v = v_t - xi(u, v)(-v - k u (u - a - 1)).
ResidualSet ep_residual_terms(ad::Var u, ad::Var v, ad::Var u_t, ad::Var v_t, ad::Var lap_u, const APParams& p);

/// ND residuals from values on the evaluation set (1 x P rows for u and v).
ResidualSet nd_residuals_from_values(ad::Var u_values, ad::Var v_values, const NdPlan& plan, const APParams& p);

/// (1/Nc) sum (r_u^2 + r_v^2 [+ r_b^2]).
ad::Var ep_loss(const ResidualSet& r);

/// Mean over sensors and sampled times of (y - R u)^2, for u given as a
/// nodes x batch matrix of values.
ad::Var data_loss_from_values(ad::Var u_nodes_by_time, const Eigen::MatrixXd& R, const Eigen::MatrixXd& y_batch);

/// Evaluates u at every node for the sampled times.
ad::Var data_loss(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars, const Problem& problem,
                  std::span<const int> time_batch);

/// Network-driven ND residuals at lattice collocation points.
ResidualSet ep_residuals_nd(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars,
                            const Problem& problem, std::span<const LatticePoint> collocation, const APParams& p);

/// Any tape-expressed model from 4 x P normalized inputs to 2 x P (u, v).
using ModelFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// AD residuals at raw points (rows x, y, z, t). Time and space derivatives
/// are taken with respect to the raw coordinates. r_b = n . grad u needs
/// per-point unit normals (3 x N).
ResidualSet ep_residuals_ad(ad::Tape& tape, const ModelFn& model, const Eigen::MatrixXd& raw_points,
                            const Normalization& norm, const APParams& p,
                            const std::optional<Eigen::MatrixXd>& normals = std::nullopt);

/// ND Laplacian with the network's own time derivative.
ResidualSet ep_residuals_nd_spatial(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars,
                                    const Problem& problem, std::span<const LatticePoint> collocation,
                                    const APParams& p);

/// Raw (x, y, z, t) rows for lattice points.
Eigen::MatrixXd lattice_coordinates(const Problem& problem, std::span<const LatticePoint> pts);

struct HistoryEntry {
    int iteration = 0;
    double total = 0.0;
    double data = 0.0;
    double ep = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<HistoryEntry> entries;
    int iterations_run = 0;
    bool bad_init = false;

    /// "iter,total,data,ep,seconds"
    std::string csv() const;
};

/// True iff any logged total loss at an iteration below `window` exceeds
/// `threshold`. Needs a history covering the whole window.
bool detect_bad_init(const TrainHistory& history, double threshold = 1.5, int window = 300);

struct TrainResult {
    NetworkParams params;
    TrainHistory history;
};

/// Uniform draw of distinct lattice points; count must fit in the lattice.
std::vector<LatticePoint> sample_collocation(const Problem& problem, int count, std::uint64_t seed);

struct LossTerms {
    ad::Var total;  // data + lambda * ep
    ad::Var data;
    std::optional<ad::Var> ep;
};

/// One step's loss on the given time batch and collocation batch. An empty
/// collocation batch leaves out the EP term.
LossTerms assemble_loss(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars, const Problem& problem,
                        const TrainConfig& config, std::span<const int> times, std::span<const LatticePoint> batch);

/// Adam on L_D + lambda L_EP. Deterministic for a fixed seed.
TrainResult train(const TrainConfig& config, const NetworkConfig& net_config, const Problem& problem);

/// Network u over the whole lattice (nodes x samples).
Eigen::MatrixXd reconstruct_field(const NetworkParams& params, const Problem& problem);

}  // namespace heartinv
