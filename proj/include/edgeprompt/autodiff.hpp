#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "edgeprompt/tensor.hpp"

namespace edgeprompt {

using NodeId = std::uint32_t;

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; only valid while the
// owning tape is alive and has not been reset.
class Var {
public:
    Var() = default;

    Tape* tape() const noexcept { return tape_; }
    NodeId id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

// Accumulates `grad_out` into each non-null input gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

class Gradients {
public:
    Gradients() = default;

    // Gradient of the loss with respect to `v`; zeros when `v` is unreachable.
    Tensor of(Var v) const;
    bool reached(Var v) const;

private:
    friend class Tape;
    std::vector<Tensor> grads_;
};

// Define-by-run reverse-mode tape. Nodes are appended in creation order, so
// inputs always precede their consumers.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    // Records an op result. When no input requires a gradient the node is
    // stored as a constant and `backward` is dropped.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                      std::move(backward));
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Single use per recording: a second call without reset() throws a State
    // error instead of accumulating into stale buffers.
    Gradients backward(Var loss);

    void reset();

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool is_parameter = false;
    };

    Var push(Node node);

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

// Constant sparse matrix in CSR layout, consumed by spmm().
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> offsets;  // rows + 1
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    Tensor to_dense() const;
};

// ---- differentiable ops ----------------------------------------------------

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// [N x D] + [1 x D] broadcast over rows.
Var add_bias(Var a, Var bias);
Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var softmax_rows(Var x);
// Mean over rows of -log softmax(logits)[label].
Var cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels);
// Mean binary cross-entropy of sigmoid(logits) against {0,1} targets; logits is N x 1.
Var bce_with_logits(Var logits, std::span<const double> targets);
Var sum(Var x);
Var mean(Var x);
// Per-row sum, N x D -> N x 1.
Var sum_cols(Var x);
Var gather_rows(Var x, std::span<const std::uint32_t> indices);
Var scatter_add_rows(Var messages, std::span<const std::uint32_t> targets, std::size_t num_rows);
// Multiplies row r by the constant coeffs[r].
Var scale_rows(Var x, std::span<const double> coeffs);
Var spmm(const SparseMatrix& matrix, Var x);
// For each entry e with receiver rows[e] and sender cols[e], the score row
// s_e = softmax(leaky_relu(row_logits[rows[e]] + col_logits[cols[e]])); output
// row i sums coeffs[e] * s_e over the entries received by i. Equivalent to
// gather/add/leaky_relu/softmax_rows/scale_rows/scatter_add_rows without the
// per-entry intermediates. The index and coefficient arrays are referenced,
// not copied, and must outlive backward().
Var edge_softmax_aggregate(Var row_logits, Var col_logits, std::span<const std::uint32_t> rows,
                           std::span<const std::uint32_t> cols, std::span<const double> coeffs,
                           std::size_t num_rows, double slope);
// Rows [begin, end) of x.
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var l2_normalize_rows(Var x, double min_norm = 1e-12);

}  // namespace edgeprompt
