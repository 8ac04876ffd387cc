#include "bridgelab/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

[[noreturn]] void shape_error(OpKind op, const std::string& detail) {
    throw std::runtime_error(std::string("shape mismatch in ") + op_name(op) + ": " + detail);
}
} // namespace

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::input: return "input";
        case OpKind::param: return "param";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::multiply: return "multiply";
        case OpKind::scale_by: return "scale";
        case OpKind::concat: return "concat";
        case OpKind::slice_rows: return "slice-rows";
        case OpKind::slice_cols: return "slice-cols";
        case OpKind::transpose: return "transpose";
        case OpKind::gather_rows: return "gather-rows";
        case OpKind::pick: return "pick";
        case OpKind::softmax: return "softmax";
        case OpKind::log_softmax: return "log-softmax";
        case OpKind::layer_norm: return "layer-normalize";
        case OpKind::nonlinearity: return "nonlinearity";
        case OpKind::masked_fill: return "masked-fill";
        case OpKind::mean_pool: return "mean-pool";
        case OpKind::mean_all: return "mean-all";
    }
    return "?";
}

OpKind op_kind_from_string(const std::string& name) {
    static const std::map<std::string, OpKind> table = {
        {"matmul", OpKind::matmul},
        {"add", OpKind::add},
        {"multiply", OpKind::multiply},
        {"scale", OpKind::scale_by},
        {"concat", OpKind::concat},
        {"slice-rows", OpKind::slice_rows},
        {"slice-cols", OpKind::slice_cols},
        {"transpose", OpKind::transpose},
        {"gather-rows", OpKind::gather_rows},
        {"pick", OpKind::pick},
        {"softmax", OpKind::softmax},
        {"log-softmax", OpKind::log_softmax},
        {"layer-normalize", OpKind::layer_norm},
        {"nonlinearity", OpKind::nonlinearity},
        {"masked-fill", OpKind::masked_fill},
        {"mean-pool", OpKind::mean_pool},
        {"mean-all", OpKind::mean_all},
    };
    auto it = table.find(name);
    if (it == table.end()) throw std::runtime_error("unknown primitive id: " + name);
    return it->second;
}

void matmul_acc(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

ValueId Graph::input(Tensor t) {
    if (consumed_) throw std::runtime_error("graph already consumed by backward()");
    Node n;
    n.op = OpKind::input;
    n.out = std::move(t);
    n.needs_grad = false;
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Graph::param(const Parameter& p) {
    if (consumed_) throw std::runtime_error("graph already consumed by backward()");
    auto it = param_leaves_.find(p.name);
    if (it != param_leaves_.end()) return it->second;
    Node n;
    n.op = OpKind::param;
    n.out = p.value;
    n.needs_grad = p.trainable;
    n.param_name = p.name;
    nodes_.push_back(std::move(n));
    ValueId id = static_cast<ValueId>(nodes_.size() - 1);
    param_leaves_[p.name] = id;
    return id;
}

ValueId Graph::apply_primitive(const std::string& op, const std::vector<ValueId>& inputs,
                               OpAttrs attrs) {
    return apply(op_kind_from_string(op), inputs, std::move(attrs));
}

ValueId Graph::apply(OpKind op, const std::vector<ValueId>& inputs, OpAttrs attrs) {
    if (consumed_) throw std::runtime_error("graph already consumed by backward()");
    if (op == OpKind::input || op == OpKind::param)
        throw std::runtime_error("leaf kinds cannot be applied as primitives");
    Node n;
    n.op = op;
    n.inputs = inputs;
    n.attrs = std::move(attrs);
    for (ValueId id : inputs) {
        if (id < 0 || id >= static_cast<ValueId>(nodes_.size()))
            throw std::runtime_error("invalid value id passed to apply_primitive");
        n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
    }
    forward_op(n);
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
}

const Tensor& Graph::value(ValueId id) const { return out_of(id); }

double Graph::scalar(ValueId id) const {
    const Tensor& t = out_of(id);
    if (t.numel() != 1) throw std::runtime_error("scalar() on tensor " + t.shape_str());
    return t.data[0];
}

Graph::Node& Graph::node(ValueId id) { return nodes_.at(id); }

const Tensor& Graph::out_of(ValueId id) const { return nodes_.at(id).out; }

const Tensor& Graph::grad_of(ValueId id) const { return nodes_.at(id).grad_buf; }

void Graph::forward_op(Node& n) {
    const auto in = [&](size_t i) -> const Tensor& { return nodes_[n.inputs[i]].out; };
    switch (n.op) {
        case OpKind::matmul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (a.cols() != b.rows())
                shape_error(n.op, a.shape_str() + " x " + b.shape_str());
            n.out = Tensor::zeros(a.rows(), b.cols());
            matmul_acc(a.data.data(), b.data.data(), n.out.data.data(), a.rows(), a.cols(),
                       b.cols());
            break;
        }
        case OpKind::add:
        case OpKind::multiply: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            const bool bcast = b.rows() == 1 && a.rows() != 1;
            if (!(a.same_shape(b) || (bcast && a.cols() == b.cols())))
                shape_error(n.op, a.shape_str() + " vs " + b.shape_str());
            n.out = a;
            const int rows = a.rows(), cols = a.cols();
            for (int r = 0; r < rows; ++r) {
                const float* bp = b.data.data() + (bcast ? 0 : static_cast<size_t>(r) * cols);
                float* op = n.out.data.data() + static_cast<size_t>(r) * cols;
                if (n.op == OpKind::add)
                    for (int c = 0; c < cols; ++c) op[c] += bp[c];
                else
                    for (int c = 0; c < cols; ++c) op[c] *= bp[c];
            }
            break;
        }
        case OpKind::scale_by: {
            n.out = in(0);
            for (float& v : n.out.data) v *= n.attrs.scale;
            break;
        }
        case OpKind::concat: {
            if (n.inputs.empty()) shape_error(n.op, "no inputs");
            const int axis = n.attrs.axis;
            if (axis != 0 && axis != 1) shape_error(n.op, "axis must be 0 or 1");
            int rows = in(0).rows(), cols = in(0).cols();
            int total = 0;
            for (size_t i = 0; i < n.inputs.size(); ++i) {
                const Tensor& t = in(i);
                if (axis == 0 && t.cols() != cols)
                    shape_error(n.op, "column mismatch " + t.shape_str());
                if (axis == 1 && t.rows() != rows)
                    shape_error(n.op, "row mismatch " + t.shape_str());
                total += (axis == 0) ? t.rows() : t.cols();
            }
            if (axis == 0) {
                n.out = Tensor::zeros(total, cols);
                int at = 0;
                for (size_t i = 0; i < n.inputs.size(); ++i) {
                    const Tensor& t = in(i);
                    std::copy(t.data.begin(), t.data.end(),
                              n.out.data.begin() + static_cast<size_t>(at) * cols);
                    at += t.rows();
                }
            } else {
                n.out = Tensor::zeros(rows, total);
                int at = 0;
                for (size_t i = 0; i < n.inputs.size(); ++i) {
                    const Tensor& t = in(i);
                    for (int r = 0; r < rows; ++r)
                        std::copy(t.data.begin() + static_cast<size_t>(r) * t.cols(),
                                  t.data.begin() + static_cast<size_t>(r + 1) * t.cols(),
                                  n.out.data.begin() + static_cast<size_t>(r) * total + at);
                    at += t.cols();
                }
            }
            break;
        }
        case OpKind::slice_rows: {
            const Tensor& a = in(0);
            if (n.attrs.start < 0 || n.attrs.len <= 0 || n.attrs.start + n.attrs.len > a.rows())
                shape_error(n.op, "rows " + std::to_string(n.attrs.start) + "+" +
                                      std::to_string(n.attrs.len) + " of " + a.shape_str());
            n.out = Tensor::zeros(n.attrs.len, a.cols());
            std::copy(a.data.begin() + static_cast<size_t>(n.attrs.start) * a.cols(),
                      a.data.begin() + static_cast<size_t>(n.attrs.start + n.attrs.len) * a.cols(),
                      n.out.data.begin());
            break;
        }
        case OpKind::slice_cols: {
            const Tensor& a = in(0);
            if (n.attrs.start < 0 || n.attrs.len <= 0 || n.attrs.start + n.attrs.len > a.cols())
                shape_error(n.op, "cols " + std::to_string(n.attrs.start) + "+" +
                                      std::to_string(n.attrs.len) + " of " + a.shape_str());
            n.out = Tensor::zeros(a.rows(), n.attrs.len);
            for (int r = 0; r < a.rows(); ++r)
                std::copy(a.data.begin() + static_cast<size_t>(r) * a.cols() + n.attrs.start,
                          a.data.begin() + static_cast<size_t>(r) * a.cols() + n.attrs.start +
                              n.attrs.len,
                          n.out.data.begin() + static_cast<size_t>(r) * n.attrs.len);
            break;
        }
        case OpKind::transpose: {
            const Tensor& a = in(0);
            n.out = Tensor::zeros(a.cols(), a.rows());
            for (int r = 0; r < a.rows(); ++r)
                for (int c = 0; c < a.cols(); ++c) n.out.at(c, r) = a.at(r, c);
            break;
        }
        case OpKind::gather_rows: {
            const Tensor& a = in(0);
            if (n.attrs.ids.empty()) shape_error(n.op, "empty id list");
            n.out = Tensor::zeros(static_cast<int>(n.attrs.ids.size()), a.cols());
            for (size_t i = 0; i < n.attrs.ids.size(); ++i) {
                int id = n.attrs.ids[i];
                if (id < 0 || id >= a.rows())
                    throw std::runtime_error("gather-rows: id " + std::to_string(id) +
                                             " out of range for " + a.shape_str());
                std::copy(a.data.begin() + static_cast<size_t>(id) * a.cols(),
                          a.data.begin() + static_cast<size_t>(id + 1) * a.cols(),
                          n.out.data.begin() + i * a.cols());
            }
            break;
        }
        case OpKind::pick: {
            const Tensor& a = in(0);
            if (static_cast<int>(n.attrs.ids.size()) != a.rows())
                shape_error(n.op, "need one column id per row");
            n.out = Tensor::zeros(a.rows(), 1);
            for (int r = 0; r < a.rows(); ++r) {
                int c = n.attrs.ids[r];
                if (c < 0 || c >= a.cols())
                    throw std::runtime_error("pick: column " + std::to_string(c) +
                                             " out of range for " + a.shape_str());
                n.out.data[r] = a.at(r, c);
            }
            break;
        }
        case OpKind::softmax:
        case OpKind::log_softmax: {
            const Tensor& a = in(0);
            n.out = Tensor::zeros(a.rows(), a.cols());
            for (int r = 0; r < a.rows(); ++r) {
                const float* x = a.data.data() + static_cast<size_t>(r) * a.cols();
                float* y = n.out.data.data() + static_cast<size_t>(r) * a.cols();
                double mx = x[0];
                for (int c = 1; c < a.cols(); ++c) mx = std::max(mx, double(x[c]));
                double sum = 0.0;
                for (int c = 0; c < a.cols(); ++c) sum += std::exp(double(x[c]) - mx);
                if (n.op == OpKind::softmax) {
                    for (int c = 0; c < a.cols(); ++c)
                        y[c] = static_cast<float>(std::exp(double(x[c]) - mx) / sum);
                } else {
                    const double lse = mx + std::log(sum);
                    for (int c = 0; c < a.cols(); ++c)
                        y[c] = static_cast<float>(double(x[c]) - lse);
                }
            }
            break;
        }
        case OpKind::layer_norm: {
            const Tensor& a = in(0);
            n.out = Tensor::zeros(a.rows(), a.cols());
            const int cols = a.cols();
            for (int r = 0; r < a.rows(); ++r) {
                const float* x = a.data.data() + static_cast<size_t>(r) * cols;
                float* y = n.out.data.data() + static_cast<size_t>(r) * cols;
                double mean = 0.0;
                for (int c = 0; c < cols; ++c) mean += x[c];
                mean /= cols;
                double var = 0.0;
                for (int c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
                var /= cols;
                const double inv = 1.0 / std::sqrt(var + double(n.attrs.eps));
                for (int c = 0; c < cols; ++c)
                    y[c] = static_cast<float>((x[c] - mean) * inv);
            }
            break;
        }
        case OpKind::nonlinearity: {
            const Tensor& a = in(0);
            n.out = a;
            if (n.attrs.kind == "relu") {
                for (float& v : n.out.data) v = v > 0.0f ? v : 0.0f;
            } else if (n.attrs.kind == "tanh") {
                for (float& v : n.out.data) v = std::tanh(v);
            } else if (n.attrs.kind == "gelu") {
                for (float& v : n.out.data)
                    v = static_cast<float>(double(v) * 0.5 *
                                           (1.0 + std::erf(double(v) * kInvSqrt2)));
            } else {
                throw std::runtime_error("unknown nonlinearity kind: " + n.attrs.kind);
            }
            break;
        }
        case OpKind::masked_fill: {
            const Tensor& a = in(0);
            if (n.attrs.mask.size() != a.data.size())
                shape_error(n.op, "mask size " + std::to_string(n.attrs.mask.size()) +
                                      " vs tensor " + a.shape_str());
            n.out = a;
            for (size_t i = 0; i < n.out.data.size(); ++i)
                if (n.attrs.mask[i]) n.out.data[i] = n.attrs.fill;
            break;
        }
        case OpKind::mean_pool: {
            const Tensor& a = in(0);
            n.out = Tensor::zeros(1, a.cols());
            for (int c = 0; c < a.cols(); ++c) {
                double acc = 0.0;
                for (int r = 0; r < a.rows(); ++r) acc += a.at(r, c);
                n.out.data[c] = static_cast<float>(acc / a.rows());
            }
            break;
        }
        case OpKind::mean_all: {
            const Tensor& a = in(0);
            double acc = 0.0;
            for (float v : a.data) acc += v;
            n.out = Tensor::scalar(static_cast<float>(acc / a.numel()));
            break;
        }
        default:
            throw std::runtime_error("forward not implemented for op");
    }
}

void Graph::accumulate(ValueId id, const float* src, int64_t count) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad_buf.data.empty()) {
        n.grad_buf = Tensor(n.out.shape, std::vector<float>(n.out.data.size(), 0.0f));
    }
    if (count != n.grad_buf.numel())
        throw std::runtime_error("gradient size mismatch while accumulating");
    float* dst = n.grad_buf.data.data();
    for (int64_t i = 0; i < count; ++i) dst[i] += src[i];
}

void Graph::backward_op(int idx) {
    Node& n = nodes_[idx];
    const Tensor& g = n.grad_buf;
    const auto in = [&](size_t i) -> const Tensor& { return nodes_[n.inputs[i]].out; };
    const auto wants = [&](size_t i) { return nodes_[n.inputs[i]].needs_grad; };

    switch (n.op) {
        case OpKind::matmul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            const int m = a.rows(), k = a.cols(), nn = b.cols();
            if (wants(0)) {
                // dA = dC * B^T
                Tensor bt = Tensor::zeros(nn, k);
                for (int r = 0; r < k; ++r)
                    for (int c = 0; c < nn; ++c) bt.at(c, r) = b.at(r, c);
                Tensor da = Tensor::zeros(m, k);
                matmul_acc(g.data.data(), bt.data.data(), da.data.data(), m, nn, k);
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            if (wants(1)) {
                // dB = A^T * dC
                Tensor at = Tensor::zeros(k, m);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < k; ++c) at.at(c, r) = a.at(r, c);
                Tensor db = Tensor::zeros(k, nn);
                matmul_acc(at.data.data(), g.data.data(), db.data.data(), k, m, nn);
                accumulate(n.inputs[1], db.data.data(), db.numel());
            }
            break;
        }
        case OpKind::add: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (wants(0)) accumulate(n.inputs[0], g.data.data(), g.numel());
            if (wants(1)) {
                if (b.same_shape(a)) {
                    accumulate(n.inputs[1], g.data.data(), g.numel());
                } else {
                    Tensor db = Tensor::zeros(1, b.cols());
                    for (int c = 0; c < b.cols(); ++c) {
                        double acc = 0.0;
                        for (int r = 0; r < a.rows(); ++r) acc += g.at(r, c);
                        db.data[c] = static_cast<float>(acc);
                    }
                    accumulate(n.inputs[1], db.data.data(), db.numel());
                }
            }
            break;
        }
        case OpKind::multiply: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            const bool bcast = !b.same_shape(a);
            if (wants(0)) {
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                for (int r = 0; r < a.rows(); ++r) {
                    const float* bp =
                        b.data.data() + (bcast ? 0 : static_cast<size_t>(r) * a.cols());
                    for (int c = 0; c < a.cols(); ++c) da.at(r, c) = g.at(r, c) * bp[c];
                }
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            if (wants(1)) {
                if (!bcast) {
                    Tensor db = Tensor::zeros(a.rows(), a.cols());
                    for (int64_t i = 0; i < a.numel(); ++i)
                        db.data[i] = g.data[i] * a.data[i];
                    accumulate(n.inputs[1], db.data.data(), db.numel());
                } else {
                    Tensor db = Tensor::zeros(1, b.cols());
                    for (int c = 0; c < b.cols(); ++c) {
                        double acc = 0.0;
                        for (int r = 0; r < a.rows(); ++r) acc += double(g.at(r, c)) * a.at(r, c);
                        db.data[c] = static_cast<float>(acc);
                    }
                    accumulate(n.inputs[1], db.data.data(), db.numel());
                }
            }
            break;
        }
        case OpKind::scale_by: {
            if (wants(0)) {
                Tensor da = g;
                for (float& v : da.data) v *= n.attrs.scale;
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::concat: {
            const int axis = n.attrs.axis;
            int at = 0;
            for (size_t i = 0; i < n.inputs.size(); ++i) {
                const Tensor& t = in(i);
                if (wants(i)) {
                    Tensor dt = Tensor::zeros(t.rows(), t.cols());
                    if (axis == 0) {
                        std::copy(g.data.begin() + static_cast<size_t>(at) * t.cols(),
                                  g.data.begin() + static_cast<size_t>(at + t.rows()) * t.cols(),
                                  dt.data.begin());
                    } else {
                        for (int r = 0; r < t.rows(); ++r)
                            for (int c = 0; c < t.cols(); ++c) dt.at(r, c) = g.at(r, at + c);
                    }
                    accumulate(n.inputs[i], dt.data.data(), dt.numel());
                }
                at += (axis == 0) ? t.rows() : t.cols();
            }
            break;
        }
        case OpKind::slice_rows: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                std::copy(g.data.begin(), g.data.end(),
                          da.data.begin() + static_cast<size_t>(n.attrs.start) * a.cols());
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::slice_cols: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                for (int r = 0; r < a.rows(); ++r)
                    for (int c = 0; c < n.attrs.len; ++c)
                        da.at(r, n.attrs.start + c) = g.at(r, c);
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::transpose: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                for (int r = 0; r < a.rows(); ++r)
                    for (int c = 0; c < a.cols(); ++c) da.at(r, c) = g.at(c, r);
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::gather_rows: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                // Scatter-add in id order keeps repeated rows deterministic.
                for (size_t i = 0; i < n.attrs.ids.size(); ++i) {
                    const int id = n.attrs.ids[i];
                    for (int c = 0; c < a.cols(); ++c) da.at(id, c) += g.at(static_cast<int>(i), c);
                }
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::pick: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                for (int r = 0; r < a.rows(); ++r) da.at(r, n.attrs.ids[r]) += g.data[r];
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::softmax: {
            if (wants(0)) {
                const Tensor& y = n.out;
                Tensor da = Tensor::zeros(y.rows(), y.cols());
                for (int r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (int c = 0; c < y.cols(); ++c) dot += double(g.at(r, c)) * y.at(r, c);
                    for (int c = 0; c < y.cols(); ++c)
                        da.at(r, c) = static_cast<float>(y.at(r, c) * (double(g.at(r, c)) - dot));
                }
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::log_softmax: {
            if (wants(0)) {
                const Tensor& y = n.out;
                Tensor da = Tensor::zeros(y.rows(), y.cols());
                for (int r = 0; r < y.rows(); ++r) {
                    double s = 0.0;
                    for (int c = 0; c < y.cols(); ++c) s += g.at(r, c);
                    for (int c = 0; c < y.cols(); ++c)
                        da.at(r, c) =
                            static_cast<float>(double(g.at(r, c)) - std::exp(double(y.at(r, c))) * s);
                }
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::layer_norm: {
            if (wants(0)) {
                const Tensor& x = in(0);
                const Tensor& y = n.out;
                const int cols = x.cols();
                Tensor da = Tensor::zeros(x.rows(), cols);
                for (int r = 0; r < x.rows(); ++r) {
                    double mean = 0.0;
                    for (int c = 0; c < cols; ++c) mean += x.at(r, c);
                    mean /= cols;
                    double var = 0.0;
                    for (int c = 0; c < cols; ++c)
                        var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
                    var /= cols;
                    const double inv = 1.0 / std::sqrt(var + double(n.attrs.eps));
                    double m1 = 0.0, m2 = 0.0;
                    for (int c = 0; c < cols; ++c) {
                        m1 += g.at(r, c);
                        m2 += double(g.at(r, c)) * y.at(r, c);
                    }
                    m1 /= cols;
                    m2 /= cols;
                    for (int c = 0; c < cols; ++c)
                        da.at(r, c) =
                            static_cast<float>(inv * (double(g.at(r, c)) - m1 - y.at(r, c) * m2));
                }
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::nonlinearity: {
            if (wants(0)) {
                const Tensor& x = in(0);
                const Tensor& y = n.out;
                Tensor da = Tensor::zeros(x.rows(), x.cols());
                if (n.attrs.kind == "relu") {
                    for (int64_t i = 0; i < x.numel(); ++i)
                        da.data[i] = x.data[i] > 0.0f ? g.data[i] : 0.0f;
                } else if (n.attrs.kind == "tanh") {
                    for (int64_t i = 0; i < x.numel(); ++i)
                        da.data[i] = g.data[i] * (1.0f - y.data[i] * y.data[i]);
                } else { // gelu
                    for (int64_t i = 0; i < x.numel(); ++i) {
                        const double v = x.data[i];
                        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                        da.data[i] = static_cast<float>(double(g.data[i]) * (cdf + v * pdf));
                    }
                }
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::masked_fill: {
            if (wants(0)) {
                Tensor da = g;
                for (size_t i = 0; i < da.data.size(); ++i)
                    if (n.attrs.mask[i]) da.data[i] = 0.0f;
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::mean_pool: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                const float inv = 1.0f / a.rows();
                for (int r = 0; r < a.rows(); ++r)
                    for (int c = 0; c < a.cols(); ++c) da.at(r, c) = g.data[c] * inv;
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        case OpKind::mean_all: {
            if (wants(0)) {
                const Tensor& a = in(0);
                Tensor da = Tensor::zeros(a.rows(), a.cols());
                const float gv = g.data[0] / static_cast<float>(a.numel());
                for (float& v : da.data) v = gv;
                accumulate(n.inputs[0], da.data.data(), da.numel());
            }
            break;
        }
        default:
            break; // leaves have nothing to do
    }
}

double Graph::replay_scalar_f64(ValueId id) const {
    if (id < 0 || id >= static_cast<ValueId>(nodes_.size()))
        throw std::runtime_error("replay_scalar_f64: bad value id");
    std::vector<std::vector<double>> vals(id + 1);
    std::vector<std::pair<int, int>> dims(id + 1);

    for (ValueId i = 0; i <= id; ++i) {
        const Node& n = nodes_[i];
        const auto in = [&](size_t k) -> const std::vector<double>& {
            return vals[n.inputs[k]];
        };
        const auto din = [&](size_t k) { return dims[n.inputs[k]]; };
        auto& out = vals[i];
        auto& dim = dims[i];

        switch (n.op) {
            case OpKind::input:
            case OpKind::param: {
                out.assign(n.out.data.begin(), n.out.data.end());
                dim = {n.out.rows(), n.out.cols()};
                break;
            }
            case OpKind::matmul: {
                auto [m, k] = din(0);
                int nn = din(1).second;
                dim = {m, nn};
                out.assign(static_cast<size_t>(m) * nn, 0.0);
                const auto& a = in(0);
                const auto& b = in(1);
                for (int r = 0; r < m; ++r)
                    for (int p = 0; p < k; ++p) {
                        const double av = a[static_cast<size_t>(r) * k + p];
                        for (int c = 0; c < nn; ++c)
                            out[static_cast<size_t>(r) * nn + c] +=
                                av * b[static_cast<size_t>(p) * nn + c];
                    }
                break;
            }
            case OpKind::add:
            case OpKind::multiply: {
                dim = din(0);
                out = in(0);
                const auto& b = in(1);
                const bool bcast = din(1).first == 1 && dim.first != 1;
                for (int r = 0; r < dim.first; ++r)
                    for (int c = 0; c < dim.second; ++c) {
                        const double bv = b[(bcast ? 0 : static_cast<size_t>(r) * dim.second) + c];
                        auto& o = out[static_cast<size_t>(r) * dim.second + c];
                        o = (n.op == OpKind::add) ? o + bv : o * bv;
                    }
                break;
            }
            case OpKind::scale_by: {
                dim = din(0);
                out = in(0);
                for (double& v : out) v *= double(n.attrs.scale);
                break;
            }
            case OpKind::concat: {
                const int axis = n.attrs.axis;
                int rows = din(0).first, cols = din(0).second, total = 0;
                for (size_t k = 0; k < n.inputs.size(); ++k)
                    total += (axis == 0) ? din(k).first : din(k).second;
                dim = (axis == 0) ? std::make_pair(total, cols) : std::make_pair(rows, total);
                out.assign(static_cast<size_t>(dim.first) * dim.second, 0.0);
                int at = 0;
                for (size_t k = 0; k < n.inputs.size(); ++k) {
                    auto [tr, tc] = din(k);
                    const auto& t = in(k);
                    if (axis == 0) {
                        std::copy(t.begin(), t.end(), out.begin() + static_cast<size_t>(at) * cols);
                        at += tr;
                    } else {
                        for (int r = 0; r < rows; ++r)
                            std::copy(t.begin() + static_cast<size_t>(r) * tc,
                                      t.begin() + static_cast<size_t>(r + 1) * tc,
                                      out.begin() + static_cast<size_t>(r) * total + at);
                        at += tc;
                    }
                }
                break;
            }
            case OpKind::slice_rows: {
                int cols = din(0).second;
                dim = {n.attrs.len, cols};
                out.assign(in(0).begin() + static_cast<size_t>(n.attrs.start) * cols,
                           in(0).begin() + static_cast<size_t>(n.attrs.start + n.attrs.len) * cols);
                break;
            }
            case OpKind::slice_cols: {
                auto [rows, cols] = din(0);
                dim = {rows, n.attrs.len};
                out.resize(static_cast<size_t>(rows) * n.attrs.len);
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < n.attrs.len; ++c)
                        out[static_cast<size_t>(r) * n.attrs.len + c] =
                            in(0)[static_cast<size_t>(r) * cols + n.attrs.start + c];
                break;
            }
            case OpKind::transpose: {
                auto [rows, cols] = din(0);
                dim = {cols, rows};
                out.resize(in(0).size());
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        out[static_cast<size_t>(c) * rows + r] =
                            in(0)[static_cast<size_t>(r) * cols + c];
                break;
            }
            case OpKind::gather_rows: {
                int cols = din(0).second;
                dim = {static_cast<int>(n.attrs.ids.size()), cols};
                out.resize(n.attrs.ids.size() * cols);
                for (size_t k = 0; k < n.attrs.ids.size(); ++k)
                    std::copy(in(0).begin() + static_cast<size_t>(n.attrs.ids[k]) * cols,
                              in(0).begin() + static_cast<size_t>(n.attrs.ids[k] + 1) * cols,
                              out.begin() + k * cols);
                break;
            }
            case OpKind::pick: {
                auto [rows, cols] = din(0);
                dim = {rows, 1};
                out.resize(rows);
                for (int r = 0; r < rows; ++r)
                    out[r] = in(0)[static_cast<size_t>(r) * cols + n.attrs.ids[r]];
                break;
            }
            case OpKind::softmax:
            case OpKind::log_softmax: {
                dim = din(0);
                out.resize(in(0).size());
                const int cols = dim.second;
                for (int r = 0; r < dim.first; ++r) {
                    const double* x = in(0).data() + static_cast<size_t>(r) * cols;
                    double* y = out.data() + static_cast<size_t>(r) * cols;
                    double mx = x[0];
                    for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
                    double sum = 0.0;
                    for (int c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
                    if (n.op == OpKind::softmax)
                        for (int c = 0; c < cols; ++c) y[c] = std::exp(x[c] - mx) / sum;
                    else {
                        const double lse = mx + std::log(sum);
                        for (int c = 0; c < cols; ++c) y[c] = x[c] - lse;
                    }
                }
                break;
            }
            case OpKind::layer_norm: {
                dim = din(0);
                out.resize(in(0).size());
                const int cols = dim.second;
                for (int r = 0; r < dim.first; ++r) {
                    const double* x = in(0).data() + static_cast<size_t>(r) * cols;
                    double* y = out.data() + static_cast<size_t>(r) * cols;
                    double mean = 0.0;
                    for (int c = 0; c < cols; ++c) mean += x[c];
                    mean /= cols;
                    double var = 0.0;
                    for (int c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
                    var /= cols;
                    const double inv = 1.0 / std::sqrt(var + double(n.attrs.eps));
                    for (int c = 0; c < cols; ++c) y[c] = (x[c] - mean) * inv;
                }
                break;
            }
            case OpKind::nonlinearity: {
                dim = din(0);
                out = in(0);
                if (n.attrs.kind == "relu")
                    for (double& v : out) v = v > 0.0 ? v : 0.0;
                else if (n.attrs.kind == "tanh")
                    for (double& v : out) v = std::tanh(v);
                else
                    for (double& v : out) v = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                break;
            }
            case OpKind::masked_fill: {
                dim = din(0);
                out = in(0);
                for (size_t k = 0; k < out.size(); ++k)
                    if (n.attrs.mask[k]) out[k] = double(n.attrs.fill);
                break;
            }
            case OpKind::mean_pool: {
                auto [rows, cols] = din(0);
                dim = {1, cols};
                out.assign(cols, 0.0);
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                        out[c] += in(0)[static_cast<size_t>(r) * cols + c];
                for (double& v : out) v /= rows;
                break;
            }
            case OpKind::mean_all: {
                dim = {1, 1};
                double acc = 0.0;
                for (double v : in(0)) acc += v;
                out.assign(1, acc / in(0).size());
                break;
            }
        }
    }
    if (vals[id].size() != 1)
        throw std::runtime_error("replay_scalar_f64: node is not scalar");
    return vals[id][0];
}

void Graph::raise_nonfinite() const {
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!all_finite(nodes_[i].out)) {
            std::string who = op_name(nodes_[i].op);
            if (!nodes_[i].param_name.empty()) who += " '" + nodes_[i].param_name + "'";
            throw std::runtime_error("non-finite loss; first bad node is " + who + " (node " +
                                     std::to_string(i) + ")");
        }
    }
    throw std::runtime_error("non-finite loss of unknown origin");
}

GradMap Graph::backward(ValueId loss) {
    if (consumed_) throw std::runtime_error("graph already consumed by backward()");
    consumed_ = true;
    Node& ln = node(loss);
    if (ln.out.numel() != 1)
        throw std::runtime_error("backward() needs a scalar loss, got " + ln.out.shape_str());
    if (!std::isfinite(ln.out.data[0])) raise_nonfinite();

    GradMap grads;
    if (!ln.needs_grad) return grads;

    ln.grad_buf = Tensor::scalar(1.0f);
    for (int i = loss; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad_buf.data.empty()) continue;
        backward_op(i);
    }
    for (const auto& [name, id] : param_leaves_) {
        Node& n = nodes_[id];
        if (n.needs_grad && !n.grad_buf.data.empty()) grads[name] = std::move(n.grad_buf);
    }
    return grads;
}

} // namespace bridgelab
