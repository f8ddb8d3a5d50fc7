#include "heartinv/autodiff.hpp"

#include <optional>
#include <string>

namespace heartinv::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Scale: return "scale";
        case Op::Shift: return "shift";
        case Op::MatMul: return "matmul";
        case Op::Affine: return "affine";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Square: return "square";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::ScalarMul: return "scalar_mul";
        case Op::Reshape: return "reshape";
        case Op::Block: return "block";
        case Op::LinearMap: return "linear_map";
    }
    return "?";
}

const Matrix& Var::value() const { return tape_->node(index_).value; }

double Var::scalar() const {
    const auto& v = value();
    if (v.size() != 1) throw ShapeError("scalar() on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " var");
    return v(0, 0);
}

// ---------------------------------------------------------------------------

Var Tape::leaf(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(Op op, std::array<int, 3> args, Matrix value, Matrix partial, double constant) {
    Node n;
    n.op = op;
    n.args = args;
    n.value = std::move(value);
    n.partial = std::move(partial);
    n.constant = constant;
    for (int a : args) {
        if (a >= 0 && nodes_[static_cast<std::size_t>(a)].requires_grad) n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record_block(int arg, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols) {
    Matrix value = nodes_[static_cast<std::size_t>(arg)].value.block(r0, c0, rows, cols);
    Var v = record(Op::Block, {arg, -1, -1}, std::move(value));
    nodes_.back().block = {r0, c0, rows, cols};
    return v;
}

Var Tape::record_map(int arg, std::shared_ptr<const SparseMap> map) {
    Matrix value = nodes_[static_cast<std::size_t>(arg)].value * map->transpose();
    Var v = record(Op::LinearMap, {arg, -1, -1}, std::move(value));
    nodes_.back().map = std::move(map);
    return v;
}

// ---------------------------------------------------------------------------

namespace {

void accumulate(Matrix& slot, const Matrix& g) {
    if (slot.size() == 0) {
        slot = g;
    } else {
        slot += g;
    }
}

Tape& same_tape(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) throw Error("operands live on different tapes");
    return *a.tape();
}

Tape& tape_of(Var a) {
    if (!a.valid()) throw Error("operation on an unbound var");
    return *a.tape();
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const char* what, Var a, Var b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape(a.value()) + " vs " + shape(b.value()));
    }
}

}  // namespace

Gradients Tape::backward(Var loss) const {
    if (loss.tape() != this) throw Error("loss belongs to another tape");
    if (loss.value().size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape(loss.value()));

    Gradients out;
    out.tape_ = this;
    out.grads_.resize(nodes_.size());
    out.grads_[static_cast<std::size_t>(loss.index())] = Matrix::Ones(1, 1);

    for (int i = loss.index(); i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        Matrix& g = out.grads_[static_cast<std::size_t>(i)];
        if (g.size() == 0 || !n.requires_grad || n.op == Op::Leaf) continue;

        auto slot = [&](int k) -> Matrix* {
            const int a = n.args[static_cast<std::size_t>(k)];
            if (a < 0 || !nodes_[static_cast<std::size_t>(a)].requires_grad) return nullptr;
            return &out.grads_[static_cast<std::size_t>(a)];
        };
        auto val = [&](int k) -> const Matrix& { return nodes_[static_cast<std::size_t>(n.args[static_cast<std::size_t>(k)])].value; };

        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
                if (auto* s = slot(0)) accumulate(*s, g);
                if (auto* s = slot(1)) accumulate(*s, g);
                break;
            case Op::Sub:
                if (auto* s = slot(0)) accumulate(*s, g);
                if (auto* s = slot(1)) accumulate(*s, -g);
                break;
            case Op::Mul:
                if (auto* s = slot(0)) accumulate(*s, (g.array() * val(1).array()).matrix());
                if (auto* s = slot(1)) accumulate(*s, (g.array() * val(0).array()).matrix());
                break;
            case Op::Div:
                if (auto* s = slot(0)) accumulate(*s, (g.array() / val(1).array()).matrix());
                if (auto* s = slot(1)) accumulate(*s, (-g.array() * n.value.array() / val(1).array()).matrix());
                break;
            case Op::Scale:
                if (auto* s = slot(0)) accumulate(*s, n.constant * g);
                break;
            case Op::Shift:
                if (auto* s = slot(0)) accumulate(*s, g);
                break;
            case Op::MatMul:
                if (auto* s = slot(0)) accumulate(*s, g * val(1).transpose());
                if (auto* s = slot(1)) accumulate(*s, val(0).transpose() * g);
                break;
            case Op::Affine:
                if (auto* s = slot(0)) accumulate(*s, g * val(1).transpose());
                if (auto* s = slot(1)) accumulate(*s, val(0).transpose() * g);
                if (auto* s = slot(2)) accumulate(*s, g.rowwise().sum());
                break;
            case Op::Tanh:
            case Op::Sigmoid:
            case Op::Square:
                if (auto* s = slot(0)) accumulate(*s, (g.array() * n.partial.array()).matrix());
                break;
            case Op::Sum:
                if (auto* s = slot(0)) accumulate(*s, Matrix::Constant(val(0).rows(), val(0).cols(), g(0, 0)));
                break;
            case Op::Mean: {
                const double c = g(0, 0) / static_cast<double>(val(0).size());
                if (auto* s = slot(0)) accumulate(*s, Matrix::Constant(val(0).rows(), val(0).cols(), c));
                break;
            }
            case Op::ScalarMul:
                if (auto* s = slot(0)) accumulate(*s, Matrix::Constant(1, 1, (g.array() * val(1).array()).sum()));
                if (auto* s = slot(1)) accumulate(*s, val(0)(0, 0) * g);
                break;
            case Op::Reshape:
                if (auto* s = slot(0)) accumulate(*s, g.reshaped(val(0).rows(), val(0).cols()));
                break;
            case Op::Block:
                if (auto* s = slot(0)) {
                    if (s->size() == 0) *s = Matrix::Zero(val(0).rows(), val(0).cols());
                    s->block(n.block[0], n.block[1], n.block[2], n.block[3]) += g;
                }
                break;
            case Op::LinearMap:
                if (auto* s = slot(0)) accumulate(*s, g * (*n.map));
                break;
        }
    }
    return out;
}

Matrix Gradients::operator[](Var v) const {
    const auto& g = grads_.at(static_cast<std::size_t>(v.index()));
    if (g.size() == 0) return Matrix::Zero(v.rows(), v.cols());
    return g;
}

bool Gradients::reached(Var v) const { return grads_.at(static_cast<std::size_t>(v.index())).size() != 0; }

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
    auto& t = same_tape(a, b);
    require_same_shape("add", a, b);
    return t.record(Op::Add, {a.index(), b.index(), -1}, a.value() + b.value());
}

Var sub(Var a, Var b) {
    auto& t = same_tape(a, b);
    require_same_shape("sub", a, b);
    return t.record(Op::Sub, {a.index(), b.index(), -1}, a.value() - b.value());
}

Var mul(Var a, Var b) {
    auto& t = same_tape(a, b);
    require_same_shape("mul", a, b);
    return t.record(Op::Mul, {a.index(), b.index(), -1}, (a.value().array() * b.value().array()).matrix());
}

Var div(Var a, Var b) {
    auto& t = same_tape(a, b);
    require_same_shape("div", a, b);
    return t.record(Op::Div, {a.index(), b.index(), -1}, (a.value().array() / b.value().array()).matrix());
}

Var scale(Var a, double c) {
    return tape_of(a).record(Op::Scale, {a.index(), -1, -1}, c * a.value(), {}, c);
}

Var shift(Var a, double c) {
    return tape_of(a).record(Op::Shift, {a.index(), -1, -1}, (a.value().array() + c).matrix(), {}, c);
}

Var neg(Var a) { return scale(a, -1.0); }

Var matmul(Var a, Var b) {
    auto& t = same_tape(a, b);
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions " + shape(a.value()) + " * " + shape(b.value()));
    return t.record(Op::MatMul, {a.index(), b.index(), -1}, a.value() * b.value());
}

Var affine(Var w, Var x, Var b) {
    auto& t = same_tape(w, x);
    same_tape(w, b);
    if (w.cols() != x.rows()) throw ShapeError("affine: inner dimensions " + shape(w.value()) + " * " + shape(x.value()));
    if (b.rows() != w.rows() || b.cols() != 1) throw ShapeError("affine: bias must be " + std::to_string(w.rows()) + "x1");
    Matrix value = w.value() * x.value();
    value.colwise() += b.value().col(0);
    return t.record(Op::Affine, {w.index(), x.index(), b.index()}, std::move(value));
}

Matrix tanh_values(const Matrix& x) {
    // tanh|x| = (1 - e) / (1 + e) with e = exp(-2|x|), which never overflows.
    const Eigen::ArrayXXd e = (-2.0 * x.array().abs()).exp();
    return (x.array().sign() * (1.0 - e) / (1.0 + e)).matrix();
}

Var tanh(Var a) {
    Matrix y = tanh_values(a.value());
    Matrix d = (1.0 - y.array().square()).matrix();
    return tape_of(a).record(Op::Tanh, {a.index(), -1, -1}, std::move(y), std::move(d));
}

Var sigmoid(Var a) {
    Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    Matrix d = (y.array() * (1.0 - y.array())).matrix();
    return tape_of(a).record(Op::Sigmoid, {a.index(), -1, -1}, std::move(y), std::move(d));
}

Var square(Var a) {
    return tape_of(a).record(Op::Square, {a.index(), -1, -1}, a.value().array().square().matrix(), 2.0 * a.value());
}

Var sum(Var a) { return tape_of(a).record(Op::Sum, {a.index(), -1, -1}, Matrix::Constant(1, 1, a.value().sum())); }

Var mean(Var a) {
    if (a.value().size() == 0) throw ShapeError("mean of an empty var");
    return tape_of(a).record(Op::Mean, {a.index(), -1, -1}, Matrix::Constant(1, 1, a.value().mean()));
}

Var scalar_mul(Var s, Var x) {
    auto& t = same_tape(s, x);
    if (s.value().size() != 1) throw ShapeError("scalar_mul: first operand must be 1x1");
    return t.record(Op::ScalarMul, {s.index(), x.index(), -1}, s.value()(0, 0) * x.value());
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
    return tape_of(a).record(Op::Reshape, {a.index(), -1, -1}, a.value().reshaped(rows, cols));
}

Var block(Var a, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols) {
    if (r0 < 0 || c0 < 0 || rows < 0 || cols < 0 || r0 + rows > a.rows() || c0 + cols > a.cols()) {
        throw ShapeError("block out of range for " + shape(a.value()));
    }
    return tape_of(a).record_block(a.index(), r0, c0, rows, cols);
}

Var row(Var a, Eigen::Index r) { return block(a, r, 0, 1, a.cols()); }

Var linear_map(Var x, std::shared_ptr<const SparseMap> map) {
    if (!map || map->cols() != x.cols()) throw ShapeError("linear_map: map columns must equal input columns");
    return tape_of(x).record_map(x.index(), std::move(map));
}

// ---------------------------------------------------------------------------

Var directional_derivative(Var output, Var input, const Matrix& direction) {
    auto& t = same_tape(output, input);
    if (input.index() > output.index()) throw Error("directional_derivative: output precedes input");

    Matrix seed;
    if (direction.rows() == input.rows() && direction.cols() == input.cols()) {
        seed = direction;
    } else if (direction.rows() == input.rows() && direction.cols() == 1) {
        seed = direction.replicate(1, input.cols());
    } else {
        throw ShapeError("directional_derivative: direction is " + shape(direction) + ", input is " + shape(input.value()));
    }

    const int first = input.index();
    const int last = output.index();
    // Tangent node per primal node in [first, last]; -1 means identically zero.
    std::vector<int> tangent(static_cast<std::size_t>(last - first + 1), -1);
    auto tan_of = [&](int idx) {
        return (idx < first || idx > last) ? -1 : tangent[static_cast<std::size_t>(idx - first)];
    };
    tangent[0] = t.constant(std::move(seed)).index();

    for (int i = first + 1; i <= last; ++i) {
        // Copy what is needed: recording new nodes may reallocate the tape.
        const Node& ref = t.node(i);
        const Op op = ref.op;
        const auto args = ref.args;
        const double c = ref.constant;
        const auto blk = ref.block;
        const auto map = ref.map;
        if (op == Op::Leaf) continue;

        std::array<int, 3> ta{-1, -1, -1};
        bool any = false;
        for (std::size_t k = 0; k < 3; ++k) {
            if (args[k] >= 0) ta[k] = tan_of(args[k]);
            any = any || ta[k] >= 0;
        }
        if (!any) continue;

        auto P = [&](std::size_t k) { return t.var(args[k]); };
        auto T = [&](std::size_t k) { return t.var(ta[k]); };
        auto has = [&](std::size_t k) { return ta[k] >= 0; };
        const Var self = t.var(i);

        // Sum of optional terms.
        auto combine = [](std::optional<Var> x, std::optional<Var> y) -> Var {
            if (x && y) return add(*x, *y);
            return x ? *x : *y;
        };

        Var d;
        switch (op) {
            case Op::Leaf:
                continue;
            case Op::Add:
                d = combine(has(0) ? std::optional<Var>(T(0)) : std::nullopt,
                            has(1) ? std::optional<Var>(T(1)) : std::nullopt);
                break;
            case Op::Sub:
                d = combine(has(0) ? std::optional<Var>(T(0)) : std::nullopt,
                            has(1) ? std::optional<Var>(neg(T(1))) : std::nullopt);
                break;
            case Op::Mul:
                d = combine(has(0) ? std::optional<Var>(mul(T(0), P(1))) : std::nullopt,
                            has(1) ? std::optional<Var>(mul(P(0), T(1))) : std::nullopt);
                break;
            case Op::Div: {
                // d(a/b) = (da - (a/b) db) / b
                std::optional<Var> num = has(0) ? std::optional<Var>(T(0)) : std::nullopt;
                if (has(1)) {
                    const Var term = mul(self, T(1));
                    num = num ? sub(*num, term) : neg(term);
                }
                d = div(*num, P(1));
                break;
            }
            case Op::Scale:
                d = scale(T(0), c);
                break;
            case Op::Shift:
                d = T(0);
                break;
            case Op::MatMul:
                d = combine(has(0) ? std::optional<Var>(matmul(T(0), P(1))) : std::nullopt,
                            has(1) ? std::optional<Var>(matmul(P(0), T(1))) : std::nullopt);
                break;
            case Op::Affine: {
                std::optional<Var> acc;
                if (has(1)) acc = matmul(P(0), T(1));
                if (has(0)) {
                    const Var term = matmul(T(0), P(1));
                    acc = acc ? add(*acc, term) : term;
                }
                if (has(2)) {
                    const Var zero_w = t.constant(Matrix::Zero(P(0).rows(), P(1).rows()));
                    const Var term = affine(zero_w, P(1), T(2));
                    acc = acc ? add(*acc, term) : term;
                }
                d = *acc;
                break;
            }
            case Op::Tanh:
                // (1 - y^2) da
                d = mul(shift(neg(square(self)), 1.0), T(0));
                break;
            case Op::Sigmoid:
                // y (1 - y) da
                d = mul(mul(self, shift(neg(self), 1.0)), T(0));
                break;
            case Op::Square:
                d = mul(scale(P(0), 2.0), T(0));
                break;
            case Op::Sum:
                d = sum(T(0));
                break;
            case Op::Mean:
                d = mean(T(0));
                break;
            case Op::ScalarMul:
                d = combine(has(0) ? std::optional<Var>(scalar_mul(T(0), P(1))) : std::nullopt,
                            has(1) ? std::optional<Var>(scalar_mul(P(0), T(1))) : std::nullopt);
                break;
            case Op::Reshape:
                d = reshape(T(0), self.rows(), self.cols());
                break;
            case Op::Block:
                d = block(T(0), blk[0], blk[1], blk[2], blk[3]);
                break;
            case Op::LinearMap:
                d = linear_map(T(0), map);
                break;
        }
        tangent[static_cast<std::size_t>(i - first)] = d.index();
    }

    const int out = tan_of(last);
    if (out < 0) return t.constant(Matrix::Zero(output.rows(), output.cols()));
    return t.var(out);
}

}  // namespace heartinv::ad
