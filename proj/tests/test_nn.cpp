#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "alignrl/adam.hpp"
#include "alignrl/errors.hpp"
#include "alignrl/mlp.hpp"
#include "alignrl/rng.hpp"
#include "alignrl/tensor.hpp"

using namespace alignrl;

namespace {

// reference matmul with plain loops, kept deliberately separate from gemm_nn
Tensor2D naive_matmul(const Tensor2D& a, const Tensor2D& b) {
    Tensor2D c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

Tensor2D random_tensor(int rows, int cols, Rng& rng) {
    Tensor2D t(rows, cols);
    for (double& v : t.data) v = rng.normal();
    return t;
}

// scalar loss with nontrivial curvature in the network output
double loss_of(const Tensor2D& out, const Tensor2D& coef) {
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        loss += coef.data[i] * out.data[i] + 0.25 * out.data[i] * out.data[i];
    return loss;
}

Tensor2D loss_upstream(const Tensor2D& out, const Tensor2D& coef) {
    Tensor2D up(out.rows, out.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        up.data[i] = coef.data[i] + 0.5 * out.data[i];
    return up;
}

double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / denom;
}

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

void check_param_gradients_fd(Mlp& net, const Tensor2D& input, const Tensor2D& coef) {
    MlpCache cache;
    Tensor2D out = mlp_forward(net, input, &cache);
    net.zero_grad();
    for (Tensor2D* p : net.parameters()) p->ensure_grad();
    mlp_backward(net, cache, loss_upstream(out, coef), true);

    for (Tensor2D* p : net.parameters()) {
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + kFdStep;
            const double lp = loss_of(mlp_forward(net, input), coef);
            p->data[i] = saved - kFdStep;
            const double lm = loss_of(mlp_forward(net, input), coef);
            p->data[i] = saved;
            const double fd = (lp - lm) / (2.0 * kFdStep);
            CHECK(rel_err(fd, p->grad[i]) < kFdTol);
        }
    }
}

}  // namespace

TEST_CASE("rng uniform stays in [0,1) and has sane mean") {
    Rng rng(123);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::fabs(sum / 20000.0 - 0.5) < 0.02);
}

TEST_CASE("rng normal moments") {
    Rng rng(7);
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("rng uniform_int covers the whole inclusive range") {
    Rng rng(99);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const int v = rng.uniform_int(2, 6);
        REQUIRE(v >= 2);
        REQUIRE(v <= 6);
        ++hits[static_cast<std::size_t>(v - 2)];
    }
    for (int h : hits) CHECK(h > 0);
    CHECK_THROWS_AS(rng.uniform_int(3, 2), ArgumentError);
}

TEST_CASE("rng categorical frequencies match probabilities") {
    Rng rng(2024);
    const std::vector<double> probs{0.2, 0.3, 0.5};
    const int n = 100000;
    std::vector<int> hits(3, 0);
    for (int i = 0; i < n; ++i) ++hits[static_cast<std::size_t>(rng.categorical(probs))];
    for (std::size_t k = 0; k < probs.size(); ++k) {
        const double se = std::sqrt(probs[k] * (1.0 - probs[k]) / n);
        CHECK(std::fabs(hits[k] / static_cast<double>(n) - probs[k]) < 4.0 * se);
    }
}

TEST_CASE("rng serialize round-trip reproduces the stream") {
    Rng a(555);
    for (int i = 0; i < 17; ++i) a.next_u64();
    const std::string state = a.serialize();
    Rng b(1);
    b.deserialize(state);
    CHECK(a == b);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("derive_seed separates streams by name and index") {
    const std::uint64_t root = 42;
    CHECK(derive_seed(root, "rollout") != derive_seed(root, "init"));
    CHECK(derive_seed(root, "rollout", 0) != derive_seed(root, "rollout", 1));
    CHECK(derive_seed(root, "rollout", 3) == derive_seed(root, "rollout", 3));
    CHECK(derive_seed(root, "rollout") != derive_seed(root + 1, "rollout"));
}

TEST_CASE("gemm_nn matches naive reference and accumulates") {
    Rng rng(11);
    Tensor2D a = random_tensor(7, 3, rng);
    Tensor2D b = random_tensor(3, 5, rng);
    Tensor2D c(7, 5);
    gemm_nn(a, b, c, false);
    Tensor2D ref = naive_matmul(a, b);
    for (std::size_t i = 0; i < c.data.size(); ++i)
        CHECK(c.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));

    gemm_nn(a, b, c, true);  // second pass doubles everything
    for (std::size_t i = 0; i < c.data.size(); ++i)
        CHECK(c.data[i] == doctest::Approx(2.0 * ref.data[i]).epsilon(1e-12));

    Tensor2D bad(4, 5);
    CHECK_THROWS_AS(gemm_nn(a, bad, c, false), ShapeError);
}

TEST_CASE("gemm_tn computes A^T B") {
    Rng rng(12);
    Tensor2D a = random_tensor(6, 4, rng);
    Tensor2D b = random_tensor(6, 3, rng);
    Tensor2D c(4, 3);
    gemm_tn(a, b, c, false);
    Tensor2D ref = naive_matmul(transpose(a), b);
    for (std::size_t i = 0; i < c.data.size(); ++i)
        CHECK(c.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
}

TEST_CASE("transpose is an involution") {
    Rng rng(13);
    Tensor2D a = random_tensor(5, 8, rng);
    Tensor2D tt = transpose(transpose(a));
    REQUIRE(same_shape(a, tt));
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == tt.data[i]);
}

TEST_CASE("hash_tensor reacts to single-element and shape changes") {
    Tensor2D a(2, 3, 1.0);
    Tensor2D b(2, 3, 1.0);
    CHECK(hash_tensor(a) == hash_tensor(b));
    b.at(1, 2) = 1.0 + 1e-15;
    CHECK(hash_tensor(a) != hash_tensor(b));
    Tensor2D c(3, 2, 1.0);
    CHECK(hash_tensor(a) != hash_tensor(c));
}

TEST_CASE("check_finite throws on NaN and infinity") {
    Tensor2D a(1, 2, 0.0);
    CHECK_NOTHROW(a.check_finite("a"));
    a.at(0, 0) = std::nan("");
    CHECK_THROWS_AS(a.check_finite("a"), NumericalError);
    a.at(0, 0) = 0.0;
    a.at(0, 1) = INFINITY;
    CHECK_THROWS_AS(a.check_finite("a"), NumericalError);
}

TEST_CASE("elu matches closed form on both branches") {
    CHECK(elu(1.5) == 1.5);
    CHECK(elu(0.0) == 0.0);
    CHECK(elu(-20.0) == doctest::Approx(std::exp(-20.0) - 1.0).epsilon(1e-8));
    CHECK(elu_derivative(2.0) == 1.0);
    CHECK(elu_derivative(-1.0) == doctest::Approx(std::exp(-1.0)));
    // derivative is continuous at zero
    CHECK(elu_derivative(-1e-12) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("forward pass of a hand-set two-layer net matches inline arithmetic") {
    Mlp net = make_mlp({2, 3, 2});
    REQUIRE(net.layers.size() == 2);
    REQUIRE(net.layers[0].activation == Activation::Elu);
    REQUIRE(net.layers[1].activation == Activation::Identity);
    // fill with small deterministic values
    double v = 0.05;
    for (Tensor2D* p : net.parameters())
        for (double& x : p->data) {
            x = v;
            v = -v + 0.013;
        }
    Tensor2D input = Tensor2D::from_rows(2, 2, {0.4, -0.7, -1.2, 0.9});
    Tensor2D out = mlp_forward(net, input);
    REQUIRE(out.rows == 2);
    REQUIRE(out.cols == 2);

    const auto& w1 = net.layers[0].weight;
    const auto& b1 = net.layers[0].bias;
    const auto& w2 = net.layers[1].weight;
    const auto& b2 = net.layers[1].bias;
    for (int r = 0; r < 2; ++r) {
        double h[3];
        for (int j = 0; j < 3; ++j) {
            double z = b1.at(0, j);
            for (int k = 0; k < 2; ++k) z += input.at(r, k) * w1.at(k, j);
            h[j] = z > 0.0 ? z : std::expm1(z);
        }
        for (int j = 0; j < 2; ++j) {
            double z = b2.at(0, j);
            for (int k = 0; k < 3; ++k) z += h[k] * w2.at(k, j);
            CHECK(out.at(r, j) == doctest::Approx(z).epsilon(1e-14));
        }
    }
}

TEST_CASE("parameter gradients match central finite differences") {
    Rng rng(31);
    Mlp net = make_mlp({4, 8, 8, 3});
    for (DenseLayer& layer : net.layers) init_orthogonal(layer.weight, 1.0, rng);
    // nonzero biases so their gradients are exercised off the zero point
    for (DenseLayer& layer : net.layers)
        for (double& b : layer.bias.data) b = 0.1 * rng.normal();
    Tensor2D input = random_tensor(5, 4, rng);
    Tensor2D coef = random_tensor(5, 3, rng);
    check_param_gradients_fd(net, input, coef);
}

TEST_CASE("input gradient matches central finite differences") {
    Rng rng(32);
    Mlp net = make_mlp({3, 6, 2});
    for (DenseLayer& layer : net.layers) init_orthogonal(layer.weight, 1.2, rng);
    Tensor2D input = random_tensor(4, 3, rng);
    Tensor2D coef = random_tensor(4, 2, rng);

    MlpCache cache;
    Tensor2D out = mlp_forward(net, input, &cache);
    Tensor2D dinput = mlp_backward(net, cache, loss_upstream(out, coef), false);
    REQUIRE(same_shape(dinput, input));

    for (std::size_t i = 0; i < input.data.size(); ++i) {
        Tensor2D perturbed = input;
        perturbed.data[i] += kFdStep;
        const double lp = loss_of(mlp_forward(net, perturbed), coef);
        perturbed.data[i] = input.data[i] - kFdStep;
        const double lm = loss_of(mlp_forward(net, perturbed), coef);
        const double fd = (lp - lm) / (2.0 * kFdStep);
        CHECK(rel_err(fd, dinput.data[i]) < kFdTol);
    }
}

TEST_CASE("backward with frozen parameters leaves them untouched") {
    Rng rng(33);
    Mlp net = make_mlp({3, 5, 2});
    for (DenseLayer& layer : net.layers) init_orthogonal(layer.weight, 1.0, rng);
    const std::uint64_t before = net.parameter_hash();

    Tensor2D input = random_tensor(4, 3, rng);
    Tensor2D coef = random_tensor(4, 2, rng);
    MlpCache cache;
    Tensor2D out = mlp_forward(net, input, &cache);

    Tensor2D d_frozen = mlp_backward(net, cache, loss_upstream(out, coef), false);
    CHECK(net.parameter_hash() == before);
    for (Tensor2D* p : net.parameters()) CHECK_FALSE(p->has_grad());

    net.zero_grad();
    for (Tensor2D* p : net.parameters()) p->ensure_grad();
    Tensor2D d_full = mlp_backward(net, cache, loss_upstream(out, coef), true);
    for (std::size_t i = 0; i < d_full.data.size(); ++i)
        CHECK(d_full.data[i] == d_frozen.data[i]);
}

TEST_CASE("backward accumulates additively across calls") {
    Rng rng(34);
    Mlp net = make_mlp({3, 4, 2});
    for (DenseLayer& layer : net.layers) init_orthogonal(layer.weight, 1.0, rng);
    Tensor2D input = random_tensor(2, 3, rng);
    Tensor2D coef = random_tensor(2, 2, rng);

    MlpCache cache;
    Tensor2D out = mlp_forward(net, input, &cache);
    Tensor2D up = loss_upstream(out, coef);

    net.zero_grad();
    for (Tensor2D* p : net.parameters()) p->ensure_grad();
    mlp_backward(net, cache, up, true);
    std::vector<std::vector<double>> once;
    for (Tensor2D* p : net.parameters()) once.push_back(p->grad);

    mlp_backward(net, cache, up, true);
    std::size_t idx = 0;
    for (Tensor2D* p : net.parameters()) {
        for (std::size_t i = 0; i < p->grad.size(); ++i)
            CHECK(p->grad[i] == doctest::Approx(2.0 * once[idx][i]).epsilon(1e-12));
        ++idx;
    }
}

TEST_CASE("orthogonal init produces orthonormal columns and rows") {
    Rng rng(41);
    Tensor2D square(8, 8);
    init_orthogonal(square, 2.0, rng);
    Tensor2D g = naive_matmul(transpose(square), square);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(g.at(i, j) == doctest::Approx(i == j ? 4.0 : 0.0).epsilon(1e-9));

    Tensor2D tall(16, 4);
    init_orthogonal(tall, 1.0, rng);
    Tensor2D gt = naive_matmul(transpose(tall), tall);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(gt.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));

    Tensor2D wide(4, 16);
    init_orthogonal(wide, 1.0, rng);
    Tensor2D gw = naive_matmul(wide, transpose(wide));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(gw.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
}

TEST_CASE("orthogonal init is deterministic per seed") {
    Rng a(77), b(77), c(78);
    Tensor2D wa(6, 6), wb(6, 6), wc(6, 6);
    init_orthogonal(wa, 1.0, a);
    init_orthogonal(wb, 1.0, b);
    init_orthogonal(wc, 1.0, c);
    CHECK(hash_tensor(wa) == hash_tensor(wb));
    CHECK(hash_tensor(wa) != hash_tensor(wc));
}

TEST_CASE("adam trajectory matches an independent scalar recurrence") {
    // one-parameter net optimized by the class vs. the textbook recurrence
    // written out longhand with separate state
    Tensor2D param(1, 1, 0.8);
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamOptimizer opt(cfg);
    opt.register_parameter("theta", &param);

    double theta = 0.8, m = 0.0, v = 0.0;
    for (int t = 1; t <= 200; ++t) {
        // gradient of f(x) = (x - 0.3)^2 + 0.1 sin(5x)
        const double g_ref = 2.0 * (theta - 0.3) + 0.5 * std::cos(5.0 * theta);
        m = 0.9 * m + 0.1 * g_ref;
        v = 0.999 * v + 0.001 * g_ref * g_ref;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        theta -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);

        param.ensure_grad();
        param.zero_grad();
        param.grad[0] =
            2.0 * (param.data[0] - 0.3) + 0.5 * std::cos(5.0 * param.data[0]);
        opt.step();
        REQUIRE(std::fabs(param.data[0] - theta) < 1e-12);
    }
    CHECK(opt.step_count() == 200);
}

TEST_CASE("adam rejects non-finite gradients and double registration") {
    Tensor2D p(1, 2, 0.0);
    AdamOptimizer opt;
    opt.register_parameter("p", &p);
    CHECK_THROWS_AS(opt.register_parameter("p2", &p), StateError);
    p.ensure_grad();
    p.grad[0] = std::nan("");
    CHECK_THROWS_AS(opt.step(), NumericalError);
}

TEST_CASE("adam converges on a convex quadratic") {
    Tensor2D p(1, 3, 0.0);
    p.data = {2.0, -1.5, 0.7};
    AdamConfig cfg;
    cfg.lr = 0.05;
    AdamOptimizer opt(cfg);
    opt.register_parameter("p", &p);
    const std::vector<double> target{-0.4, 0.9, 0.1};
    for (int t = 0; t < 2000; ++t) {
        p.ensure_grad();
        p.zero_grad();
        for (int i = 0; i < 3; ++i)
            p.grad[static_cast<std::size_t>(i)] = 2.0 * (p.data[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]);
        opt.step();
    }
    for (int i = 0; i < 3; ++i)
        CHECK(p.data[static_cast<std::size_t>(i)] == doctest::Approx(target[static_cast<std::size_t>(i)]).epsilon(1e-4));
}

TEST_CASE("make_mlp validates widths and wiring") {
    CHECK_THROWS_AS(make_mlp({4}), ArgumentError);
    CHECK_THROWS_AS(make_mlp({4, 0}), ArgumentError);
    Mlp net = make_mlp({20, 64, 64, 64});
    CHECK_NOTHROW(net.validate());
    CHECK(net.input_width() == 20);
    CHECK(net.output_width() == 64);
    CHECK(net.layers[0].activation == Activation::Elu);
    CHECK(net.layers[1].activation == Activation::Elu);
    CHECK(net.layers[2].activation == Activation::Identity);

    Tensor2D narrow(1, 7);
    CHECK_THROWS_AS(mlp_forward(net, narrow), ShapeError);
}
