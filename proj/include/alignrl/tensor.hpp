#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace alignrl {

// Dense row-major matrix with an optional gradient accumulator of the same
// shape. The gradient is absent until ensure_grad() allocates it.
struct Tensor2D {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // empty when absent

    Tensor2D() = default;
    Tensor2D(int r, int c, double fill = 0.0);

    static Tensor2D from_rows(int r, int c, std::initializer_list<double> values);

    int size() const { return rows * cols; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    bool has_grad() const { return !grad.empty(); }
    void ensure_grad();
    void zero_grad();
    double& grad_at(int r, int c) { return grad[static_cast<std::size_t>(r) * cols + c]; }

    // throws NumericalError naming `label` if any entry is NaN/Inf
    void check_finite(const std::string& label) const;
};

bool same_shape(const Tensor2D& a, const Tensor2D& b);

// C (+)= A * B with A: (m,k), B: (k,n), C: (m,n)
void gemm_nn(const Tensor2D& a, const Tensor2D& b, Tensor2D& c, bool accumulate);

// C (+)= A^T * B with A: (k,m), B: (k,n), C: (m,n) — the dW = X^T dZ product
void gemm_tn(const Tensor2D& a, const Tensor2D& b, Tensor2D& c, bool accumulate);

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
Tensor2D transpose(const Tensor2D& m);

// 64-bit FNV-1a over the raw bytes of data (grad excluded)
std::uint64_t hash_tensor(const Tensor2D& t);
std::uint64_t hash_combine(std::uint64_t h, std::uint64_t x);

}  // namespace alignrl
