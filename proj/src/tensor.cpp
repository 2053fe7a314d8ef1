#include "alignrl/tensor.hpp"

#include <cmath>
#include <cstring>

#include "alignrl/errors.hpp"

namespace alignrl {

Tensor2D::Tensor2D(int r, int c, double fill) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw ShapeError("Tensor2D: negative dimension");
    data.assign(static_cast<std::size_t>(r) * c, fill);
}

Tensor2D Tensor2D::from_rows(int r, int c, std::initializer_list<double> values) {
    Tensor2D t(r, c);
    if (static_cast<int>(values.size()) != r * c)
        throw ShapeError("from_rows: expected " + std::to_string(r * c) + " values, got " +
                         std::to_string(values.size()));
    std::copy(values.begin(), values.end(), t.data.begin());
    return t;
}

void Tensor2D::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor2D::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor2D::check_finite(const std::string& label) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw NumericalError(label + ": non-finite value at flat index " + std::to_string(i));
    }
}

bool same_shape(const Tensor2D& a, const Tensor2D& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

void gemm_nn(const Tensor2D& a, const Tensor2D& b, Tensor2D& c, bool accumulate) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw ShapeError("gemm_nn: (" + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         ") * (" + std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                         ") -> (" + std::to_string(c.rows) + "x" + std::to_string(c.cols) + ")");
    const int m = a.rows, k = a.cols, n = b.cols;
    if (!accumulate) std::fill(c.data.begin(), c.data.end(), 0.0);
    const double* ap = a.data.data();
    const double* bp = b.data.data();
    double* cp = c.data.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = ap + static_cast<std::size_t>(i) * k;
        double* crow = cp + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = bp + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_tn(const Tensor2D& a, const Tensor2D& b, Tensor2D& c, bool accumulate) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("gemm_tn: (" + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         ")^T * (" + std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                         ") -> (" + std::to_string(c.rows) + "x" + std::to_string(c.cols) + ")");
    const int k = a.rows, m = a.cols, n = b.cols;
    if (!accumulate) std::fill(c.data.begin(), c.data.end(), 0.0);
    const double* ap = a.data.data();
    const double* bp = b.data.data();
    double* cp = c.data.data();
    for (int p = 0; p < k; ++p) {
        const double* arow = ap + static_cast<std::size_t>(p) * m;
        const double* brow = bp + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double api = arow[i];
            if (api == 0.0) continue;
            double* crow = cp + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    Tensor2D c(a.rows, b.cols);
    gemm_nn(a, b, c, false);
    return c;
}

Tensor2D transpose(const Tensor2D& m) {
    Tensor2D t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
        h ^= (x >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t hash_tensor(const Tensor2D& t) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = hash_combine(h, static_cast<std::uint64_t>(t.rows));
    h = hash_combine(h, static_cast<std::uint64_t>(t.cols));
    for (double v : t.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = hash_combine(h, bits);
    }
    return h;
}

}  // namespace alignrl
