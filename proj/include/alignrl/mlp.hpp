#pragma once

#include <vector>

#include "alignrl/rng.hpp"
#include "alignrl/tensor.hpp"

namespace alignrl {

enum class Activation { Elu, Identity };

struct DenseLayer {
    Tensor2D weight;  // (in, out)
    Tensor2D bias;    // (1, out)
    Activation activation = Activation::Identity;
};

// Sequential dense network. Consecutive layer widths must chain and the final
// layer is Identity (raw features or logits).
struct Mlp {
    std::vector<DenseLayer> layers;

    int input_width() const;
    int output_width() const;
    void validate() const;

    // iterate parameter tensors in a fixed order (weight, bias per layer)
    std::vector<Tensor2D*> parameters();
    std::vector<const Tensor2D*> parameters() const;

    void zero_grad();
    std::uint64_t parameter_hash() const;
};

// Activations captured by a forward pass; required by mlp_backward. A cache
// is valid for exactly the network and batch that produced it.
struct MlpCache {
    std::vector<Tensor2D> inputs;    // per layer: the batch fed into it
    std::vector<Tensor2D> preacts;   // per layer: X*W + b before activation
    bool valid() const { return !inputs.empty(); }
};

// Builds layer widths [in, h1, ..., out]; all layers ELU except the last.
Mlp make_mlp(const std::vector<int>& widths);

// output = act(...act(x W1 + b1)... Wn + bn); pass a cache to enable backward
Tensor2D mlp_forward(const Mlp& net, const Tensor2D& input, MlpCache* cache = nullptr);

// Accumulates (adds) parameter gradients from `upstream` (d loss / d output)
// and returns d loss / d input. With accumulate_params = false the parameters
// are treated as frozen and only the input gradient is produced.
Tensor2D mlp_backward(Mlp& net, const MlpCache& cache, const Tensor2D& upstream,
                      bool accumulate_params = true);

// Orthogonal init scaled by gain, biases zero. Weight draws come from `rng`.
void init_orthogonal(Tensor2D& weight, double gain, Rng& rng);

double elu(double z);
double elu_derivative(double z);

}  // namespace alignrl
