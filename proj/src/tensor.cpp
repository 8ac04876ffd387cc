#include "bridgelab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bridgelab {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::runtime_error("tensor shape has non-positive dim");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::runtime_error("tensor data size does not match shape " + shape_str());
}

Tensor Tensor::zeros(int rows, int cols) {
    Tensor t;
    t.shape = {rows, cols};
    t.data.assign(static_cast<size_t>(shape_numel(t.shape)), 0.0f);
    return t;
}

Tensor Tensor::scalar(float v) {
    Tensor t;
    t.shape = {1, 1};
    t.data = {v};
    return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int Tensor::rows() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw std::runtime_error("rows() on tensor of rank " + std::to_string(shape.size()));
}

int Tensor::cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw std::runtime_error("cols() on tensor of rank " + std::to_string(shape.size()));
}

float& Tensor::at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
float Tensor::at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
}

bool Tensor::same_shape(const Tensor& o) const { return shape == o.shape; }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

bool all_finite(const Tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!all_finite(t))
        throw std::runtime_error("non-finite value in " + what);
}

} // namespace bridgelab
