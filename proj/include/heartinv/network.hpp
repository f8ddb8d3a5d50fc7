#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heartinv/autodiff.hpp"
#include "heartinv/mesh.hpp"

namespace heartinv {

/// Layer layout: a tanh lift from (x, y, z, t) to `width`, then the gated
/// residual blocks with one plain separator layer between consecutive
/// blocks, then any remaining plain hidden layers, then a linear head to
/// (u, v). Every block holds two layers; the lift and the head count as
/// plain layers.
struct NetworkConfig {
    int width = 15;
    int n_blocks = 3;
    int n_plain_layers = 4;
    std::uint64_t seed = 0;
    double gate_logit_init = 2.0;

    /// Depth-based constructor matching the usual "L layers, B blocks" naming.
    static NetworkConfig with_depth(int total_layers, int n_blocks, int width);

    int total_layers() const { return n_plain_layers + 2 * n_blocks; }
    void validate() const;
};

/// Maps raw coordinates to network inputs: space to [-1, 1] per axis over
/// the mesh bounding box, time to [0, 1] over the sampled window.
struct Normalization {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.0);
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.0);
    double t_end = 1.0;

    static Normalization from_mesh(const TriMesh& mesh, double t_end);

    /// d(normalized)/d(raw) per input coordinate (x, y, z, t).
    Eigen::Vector4d scales() const;
    Eigen::Vector4d apply(const Eigen::Vector3d& pos, double t) const;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

enum class StageKind { Plain, Block };

struct Stage {
    StageKind kind = StageKind::Plain;
    int layer = 0;  // first layer index; blocks use layer and layer + 1
    int gate = -1;  // block index
};

struct NetworkParams {
    NetworkConfig config;
    Normalization norm;
    std::vector<DenseLayer> layers;  // lift, hidden..., head
    std::vector<double> gate_logits;  // alpha_T per block

    /// Hidden stages between the lift and the head.
    std::vector<Stage> stages() const;
    double gate(int block) const;  // sigmoid(alpha_T)
    std::size_t parameter_count() const;

    /// Flat views in a fixed order (layers' W then b, then gate logits).
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const NetworkConfig& config);

/// Glorot-uniform weights, zero biases, gate logits at the configured value.
NetworkParams init_network(const NetworkConfig& config, const Normalization& norm);

/// Parameters bound to a tape.
struct ParamVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
    std::vector<ad::Var> gate_logits;
    /// Test hook: replaces every sigmoid gate with this constant.
    std::optional<double> gate_override;

    /// All trainable vars in NetworkParams::flatten() order.
    std::vector<ad::Var> all() const;
};

ParamVars bind_params(ad::Tape& tape, const NetworkParams& params, bool trainable = true);

/// Network on a 4 x P block of normalized inputs; returns the 2 x P output
/// (row 0 is u, row 1 is v).
ad::Var network_forward(ad::Tape& tape, const NetworkParams& params, const ParamVars& vars, ad::Var inputs);

/// Plain Eigen evaluation for inference (no tape).
Eigen::MatrixXd network_predict(const NetworkParams& params, const Eigen::MatrixXd& inputs);

/// Flattened gradient of `loss` in flatten() order.
std::vector<double> flatten_gradients(const ad::Gradients& grads, const ParamVars& vars);

/// JSON checkpoint; doubles are written with round-trip precision.
std::string checkpoint_json(const NetworkParams& params);
NetworkParams parse_checkpoint(const std::string& text);
void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace heartinv
