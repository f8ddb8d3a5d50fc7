#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "heartinv/mesh.hpp"

namespace heartinv::ad {

using Matrix = Eigen::MatrixXd;
using SparseMap = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class ShapeError : public Error {
public:
    using Error::Error;
};

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,        // elementwise
    Div,        // elementwise
    Scale,      // constant * x
    Shift,      // x + constant
    MatMul,
    Affine,     // W x + b (b broadcast over columns)
    Tanh,
    Sigmoid,
    Square,
    Sum,
    Mean,
    ScalarMul,  // 1x1 var times matrix
    Reshape,    // column-major
    Block,
    LinearMap,  // x S^T for a constant sparse S
};

const char* op_name(Op op);

struct Node {
    Op op = Op::Leaf;
    std::array<int, 3> args{-1, -1, -1};
    Matrix value;
    Matrix partial;  // cached elementwise local derivative for unary ops
    double constant = 0.0;
    std::array<Eigen::Index, 4> block{};  // Block: r0, c0, rows, cols
    std::shared_ptr<const SparseMap> map;
    bool requires_grad = false;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    Tape* tape() const { return tape_; }
    int index() const { return index_; }
    bool valid() const { return tape_ != nullptr; }

    const Matrix& value() const;
    double scalar() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }

private:
    friend class Tape;
    Var(Tape* tape, int index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    int index_ = -1;
};

class Gradients;

/// Append-only expression record. Values are computed eagerly; operands
/// always precede their results, so insertion order is a topological order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Trainable input; receives a gradient from backward().
    Var leaf(Matrix value);
    /// Input that never receives a gradient.
    Var constant(Matrix value);
    Var constant(double value);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int index) const { return nodes_[static_cast<std::size_t>(index)]; }
    /// Handle to an existing node.
    Var var(int index) { return Var(this, index); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    /// Reverse sweep from a 1x1 loss.
    Gradients backward(Var loss) const;

    // Recording, used by the free functions below.
    Var record(Op op, std::array<int, 3> args, Matrix value, Matrix partial = {}, double constant = 0.0);
    Var record_block(int arg, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols);
    Var record_map(int arg, std::shared_ptr<const SparseMap> map);

private:
    std::vector<Node> nodes_;
};

class Gradients {
public:
    /// Gradient with respect to `v`; zeros when `v` is unreachable from the loss.
    Matrix operator[](Var v) const;
    bool reached(Var v) const;

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<Matrix> grads_;
};

/// Elementwise tanh through the vectorized exponential. Shared by the tape
/// and plain inference so both give identical values.
Matrix tanh_values(const Matrix& x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var shift(Var a, double c);
Var neg(Var a);
Var matmul(Var a, Var b);
Var affine(Var w, Var x, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var scalar_mul(Var s, Var x);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var block(Var a, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols);
Var row(Var a, Eigen::Index r);
/// x S^T: each output column is a fixed sparse combination of input columns.
Var linear_map(Var x, std::shared_ptr<const SparseMap> map);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }

/// Forward-mode derivative of `output` with respect to `input` along
/// `direction`, built from ordinary tape operations so that backward() can
/// differentiate the result and the function can be applied again for
/// higher derivatives. `direction` is either a column with input.rows()
/// entries (used for every input column) or a matrix of the input's shape.
Var directional_derivative(Var output, Var input, const Matrix& direction);

}  // namespace heartinv::ad
