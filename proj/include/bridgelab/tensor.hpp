#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bridgelab {

// Dense row-major float32 tensor. Rank is 1 or 2 in practice; scalars are
// stored as {1,1}. The grad buffer is optional: empty means "no gradient".
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<float> data_);

    static Tensor zeros(int rows, int cols);
    static Tensor scalar(float v);

    int64_t numel() const;
    int rows() const;
    int cols() const;
    float& at(int r, int c);
    float at(int r, int c) const;

    void ensure_grad();          // allocate zeroed grad buffer if absent
    bool same_shape(const Tensor& o) const;
    std::string shape_str() const;
};

// Hard error unless every element of data is finite.
void check_finite(const Tensor& t, const std::string& what);
bool all_finite(const Tensor& t);

int64_t shape_numel(const std::vector<int>& shape);

} // namespace bridgelab
