#include "alignrl/mlp.hpp"

#include <cmath>
#include <cstdint>

#include "alignrl/errors.hpp"

namespace alignrl {

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }

double elu_derivative(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

int Mlp::input_width() const {
    if (layers.empty()) throw StateError("Mlp has no layers");
    return layers.front().weight.rows;
}

int Mlp::output_width() const {
    if (layers.empty()) throw StateError("Mlp has no layers");
    return layers.back().weight.cols;
}

void Mlp::validate() const {
    if (layers.empty()) throw StateError("Mlp has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        if (layer.bias.rows != 1 || layer.bias.cols != layer.weight.cols)
            throw ShapeError("layer bias shape does not match weight columns");
        if (l + 1 < layers.size() &&
            layers[l + 1].weight.rows != layer.weight.cols)
            throw ShapeError("layer widths do not chain");
    }
    if (layers.back().activation != Activation::Identity)
        throw StateError("final Mlp layer must be Identity");
}

std::vector<Tensor2D*> Mlp::parameters() {
    std::vector<Tensor2D*> out;
    out.reserve(layers.size() * 2);
    for (DenseLayer& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

std::vector<const Tensor2D*> Mlp::parameters() const {
    std::vector<const Tensor2D*> out;
    out.reserve(layers.size() * 2);
    for (const DenseLayer& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

void Mlp::zero_grad() {
    for (Tensor2D* p : parameters()) p->zero_grad();
}

std::uint64_t Mlp::parameter_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Tensor2D* p : parameters()) h = hash_combine(h, hash_tensor(*p));
    return h;
}

void init_orthogonal(Tensor2D& weight, double gain, Rng& rng) {
    const int rows = weight.rows;
    const int cols = weight.cols;
    // QR of a square Gaussian matrix of the larger dimension, then crop.
    const int n = rows > cols ? rows : cols;
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    for (double& v : a) v = rng.normal();

    // modified Gram-Schmidt on columns of a; q overwrites a in place. MGS
    // yields the positive-diagonal R factorization, so q is Haar-uniform.
    for (int k = 0; k < n; ++k) {
        double norm = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = a[static_cast<std::size_t>(i) * n + k];
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12)
            throw NumericalError("orthogonal init: degenerate column");
        for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i) * n + k] /= norm;
        for (int j = k + 1; j < n; ++j) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i)
                dot += a[static_cast<std::size_t>(i) * n + k] *
                       a[static_cast<std::size_t>(i) * n + j];
            for (int i = 0; i < n; ++i)
                a[static_cast<std::size_t>(i) * n + j] -=
                    dot * a[static_cast<std::size_t>(i) * n + k];
        }
    }
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            weight.at(i, j) = gain * a[static_cast<std::size_t>(i) * n + j];
}

Mlp make_mlp(const std::vector<int>& widths) {
    if (widths.size() < 2) throw ArgumentError("make_mlp needs at least two widths");
    Mlp net;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (widths[l] <= 0 || widths[l + 1] <= 0)
            throw ArgumentError("make_mlp widths must be positive");
        DenseLayer layer{Tensor2D(widths[l], widths[l + 1]), Tensor2D(1, widths[l + 1]),
                         l + 2 < widths.size() ? Activation::Elu : Activation::Identity};
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Tensor2D mlp_forward(const Mlp& net, const Tensor2D& input, MlpCache* cache) {
    if (net.layers.empty()) throw StateError("Mlp has no layers");
    if (input.cols != net.layers.front().weight.rows)
        throw ShapeError("mlp_forward: input width mismatch");
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
        cache->inputs.reserve(net.layers.size());
        cache->preacts.reserve(net.layers.size());
    }
    Tensor2D x = input;
    for (const DenseLayer& layer : net.layers) {
        if (cache) cache->inputs.push_back(x);
        Tensor2D z(x.rows, layer.weight.cols);
        gemm_nn(x, layer.weight, z, false);
        for (int i = 0; i < z.rows; ++i)
            for (int j = 0; j < z.cols; ++j) z.at(i, j) += layer.bias.at(0, j);
        if (cache) cache->preacts.push_back(z);
        if (layer.activation == Activation::Elu) {
            for (double& v : z.data) v = elu(v);
        }
        x = std::move(z);
    }
    return x;
}

Tensor2D mlp_backward(Mlp& net, const MlpCache& cache, const Tensor2D& upstream,
                      bool accumulate_params) {
    if (!cache.valid()) throw StateError("mlp_backward: cache is empty");
    if (cache.inputs.size() != net.layers.size())
        throw StateError("mlp_backward: cache does not match network depth");
    if (upstream.rows != cache.inputs.front().rows ||
        upstream.cols != net.layers.back().weight.cols)
        throw ShapeError("mlp_backward: upstream shape mismatch");

    Tensor2D delta = upstream;  // d loss / d activation output of current layer
    for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
        DenseLayer& layer = net.layers[static_cast<std::size_t>(l)];
        const Tensor2D& z = cache.preacts[static_cast<std::size_t>(l)];
        const Tensor2D& x = cache.inputs[static_cast<std::size_t>(l)];
        if (delta.rows != z.rows || delta.cols != z.cols)
            throw ShapeError("mlp_backward: delta shape mismatch");

        if (layer.activation == Activation::Elu) {
            for (std::size_t i = 0; i < delta.data.size(); ++i)
                delta.data[i] *= elu_derivative(z.data[i]);
        }
        if (accumulate_params) {
            layer.weight.ensure_grad();
            layer.bias.ensure_grad();
            // dW += X^T * dZ
            Tensor2D dw(layer.weight.rows, layer.weight.cols);
            gemm_tn(x, delta, dw, false);
            for (std::size_t i = 0; i < dw.data.size(); ++i)
                layer.weight.grad[i] += dw.data[i];
            for (int i = 0; i < delta.rows; ++i)
                for (int j = 0; j < delta.cols; ++j)
                    layer.bias.grad[static_cast<std::size_t>(j)] += delta.at(i, j);
        }
        // dX = dZ * W^T
        Tensor2D wt = transpose(layer.weight);
        Tensor2D dx(delta.rows, layer.weight.rows);
        gemm_nn(delta, wt, dx, false);
        delta = std::move(dx);
    }
    return delta;
}

}  // namespace alignrl
