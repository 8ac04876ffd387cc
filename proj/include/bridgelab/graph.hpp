#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgelab/param.hpp"
#include "bridgelab/tensor.hpp"

namespace bridgelab {

using ValueId = int32_t;

enum class OpKind {
    input,        // constant leaf
    param,        // leaf bound to a named Parameter
    matmul,
    add,          // equal shapes, or broadcast of a [1,n] row over rows
    multiply,     // same broadcast rule as add
    scale_by,     // multiply by a compile-time constant
    concat,       // along axis 0 or 1
    slice_rows,
    slice_cols,
    transpose,
    gather_rows,  // rows selected by attrs.ids; grad scatter-adds
    pick,         // per-row column select, out[r] = in[r, ids[r]]
    softmax,      // row-wise
    log_softmax,  // row-wise
    layer_norm,   // row-wise, no affine (compose with multiply/add)
    nonlinearity, // attrs.kind in {relu, tanh, gelu}
    masked_fill,  // attrs.mask nonzero -> attrs.fill
    mean_pool,    // mean over rows -> [1,n]
    mean_all,     // mean over everything -> [1,1]
};

const char* op_name(OpKind k);
OpKind op_kind_from_string(const std::string& name); // throws on unknown id

struct OpAttrs {
    int axis = 0;
    int start = 0;
    int len = 0;
    float scale = 1.0f;
    float eps = 1e-5f;
    float fill = 0.0f;
    std::string kind;            // nonlinearity selector
    std::vector<int> ids;        // gather_rows / pick
    std::vector<uint8_t> mask;   // masked_fill, row-major, same numel as input
};

// Reverse-mode tape. Values are appended in execution order, so reverse
// iteration is already a topological order for backward. A graph is single
// use: after backward() it refuses further work.
class Graph {
  public:
    ValueId input(Tensor t);
    // Binds (and caches) a leaf per parameter name, so a weight used twice
    // accumulates both contributions into one gradient entry.
    ValueId param(const Parameter& p);

    ValueId apply(OpKind op, const std::vector<ValueId>& inputs, OpAttrs attrs = {});
    // String-keyed entry point; throws "unknown primitive id" for bad names.
    ValueId apply_primitive(const std::string& op, const std::vector<ValueId>& inputs,
                            OpAttrs attrs = {});

    const Tensor& value(ValueId id) const;
    double scalar(ValueId id) const; // value of a [1,1] tensor

    // Replays the recorded tape in double precision and returns the value of
    // a scalar node. Training never uses this; grad_check does, so finite
    // differences are not drowned in float32 rounding noise.
    double replay_scalar_f64(ValueId id) const;

    // Grad of loss w.r.t. every trainable parameter leaf reachable from it.
    // Non-finite loss raises an error naming the first offending node.
    GradMap backward(ValueId loss);

    // Gradient w.r.t. an arbitrary value (for probes/tests). Only valid
    // after backward(); empty tensor if the value needed no gradient.
    const Tensor& grad_of(ValueId id) const;

    size_t size() const { return nodes_.size(); }

    // Convenience builders used all over the model code.
    ValueId matmul(ValueId a, ValueId b) { return apply(OpKind::matmul, {a, b}); }
    ValueId add(ValueId a, ValueId b) { return apply(OpKind::add, {a, b}); }
    ValueId mul(ValueId a, ValueId b) { return apply(OpKind::multiply, {a, b}); }
    ValueId scale(ValueId a, float c) {
        OpAttrs at; at.scale = c;
        return apply(OpKind::scale_by, {a}, at);
    }
    ValueId relu(ValueId a) {
        OpAttrs at; at.kind = "relu";
        return apply(OpKind::nonlinearity, {a}, at);
    }
    ValueId concat_rows(const std::vector<ValueId>& parts) {
        OpAttrs at; at.axis = 0;
        return apply(OpKind::concat, parts, at);
    }
    ValueId rows(ValueId a, int start, int len) {
        OpAttrs at; at.start = start; at.len = len;
        return apply(OpKind::slice_rows, {a}, at);
    }
    ValueId cols(ValueId a, int start, int len) {
        OpAttrs at; at.start = start; at.len = len;
        return apply(OpKind::slice_cols, {a}, at);
    }
    ValueId gather(ValueId table, std::vector<int> ids) {
        OpAttrs at; at.ids = std::move(ids);
        return apply(OpKind::gather_rows, {table}, at);
    }
    ValueId layer_norm(ValueId a) { return apply(OpKind::layer_norm, {a}); }

  private:
    struct Node {
        OpKind op;
        std::vector<ValueId> inputs;
        OpAttrs attrs;
        Tensor out;
        Tensor grad_buf;          // same shape as out once needed
        bool needs_grad = false;  // depends on some trainable leaf
        std::string param_name;   // for param leaves
    };

    std::vector<Node> nodes_;
    std::map<std::string, ValueId> param_leaves_;
    bool consumed_ = false;

    Node& node(ValueId id);
    const Tensor& out_of(ValueId id) const;
    void forward_op(Node& n);
    void backward_op(int idx);
    void accumulate(ValueId id, const float* src, int64_t n);
    [[noreturn]] void raise_nonfinite() const;
};

// Row-major matmul helpers shared by forward and backward. C += A * B with
// A [m,k], B [k,n]; the k-major loop keeps per-element accumulation order
// fixed and lets the compiler vectorize across n.
void matmul_acc(const float* a, const float* b, float* c, int m, int k, int n);

} // namespace bridgelab
