#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

/**
 * @file autodiff.hpp
 *
 * @brief Minimal reverse-mode tape over row-major double matrices.
 *
 * Operations are coarse (matmul, layer norm, fused attention, ...) and each
 * carries a hand-derived backward. The tape records values in creation order
 * and `backward()` walks it in reverse, so a node's gradient is complete
 * before its closure runs.
 */

namespace cellokit::ad {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Trainable tensor. `grad` has the same shape as `value` and is accumulated by `Tape::backward`.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool decay = true;

    Parameter() = default;
    Parameter(std::string n, std::size_t rows, std::size_t cols, bool wd = true)
        : name(std::move(n)), value(rows, cols), grad(rows, cols), decay(wd) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

struct Var {
    std::size_t id = 0;
};

class Tape {
public:
    /// Receives the tape and the id of the node whose gradient is ready.
    using Backward = std::function<void(Tape&, std::size_t)>;

    explicit Tape(bool record = true) : record_(record) {}

    bool recording() const { return record_; }

    Var constant(Matrix value);
    Var param(Parameter& p);

    /// Appends a computed node. `fn` is dropped when no input needs a gradient.
    Var push(Matrix value, std::span<const Var> inputs, Backward fn);
    Var push(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
        return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
    }

    const Matrix& value(Var v) const;
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

    /// Gradient buffer of a node, allocated on first access during `backward()`.
    Matrix& grad(Var v);

    /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and propagates to every parameter leaf.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Parameter* param = nullptr;
        bool needs_grad = false;
        Backward backward;
    };

    bool record_;
    std::vector<Node> nodes_;
};

// Differentiable operations. Shapes are checked and mismatches throw Error(SizeMismatch).

/// out[i] = table[ids[i]]
Var gather_rows(Tape& tape, Var table, std::span<const std::size_t> ids);
Var add(Tape& tape, Var a, Var b);
/// x + bias broadcast over rows; bias is 1 x cols.
Var add_bias(Tape& tape, Var x, Var bias);
Var scale(Tape& tape, Var x, double factor);
/// x * w^T, with x: n x in and w: out x in.
Var matmul_nt(Tape& tape, Var x, Var w);
/// x * w^T + bias
Var linear(Tape& tape, Var x, Var w, Var bias);
Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps = 1e-5);
/// Exact (erf-based) GELU.
Var gelu(Tape& tape, Var x);
/// Inverted dropout; identity when rate == 0.
Var dropout(Tape& tape, Var x, double rate, std::mt19937_64& rng);
Var l2_normalize_rows(Tape& tape, Var x, double eps = 1e-12);

/**
 * Multi-head scaled dot-product attention over a stacked batch.
 *
 * q, k, v are (n_seq * seq_len) x dim, sequence s occupying rows
 * [s * seq_len, (s + 1) * seq_len). Keys at positions >= valid_lengths[s]
 * are invisible to every query of that sequence.
 */
Var attention(Tape& tape, Var q, Var k, Var v, std::size_t seq_len, std::span<const std::size_t> valid_lengths, std::size_t n_heads);

/// Sum of 1x1 nodes, each multiplied by its weight.
Var weighted_sum(Tape& tape, std::span<const Var> terms, std::span<const double> weights);

/// Mean softmax cross-entropy of each logit row against its label; 1x1, zero for zero rows.
Var cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels);

} // namespace cellokit::ad
