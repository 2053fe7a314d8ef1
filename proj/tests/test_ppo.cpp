#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "alignrl/distributions.hpp"
#include "alignrl/errors.hpp"
#include "alignrl/ppo.hpp"
#include "alignrl/rng.hpp"

using namespace alignrl;

namespace {

Tensor2D random_tensor(int rows, int cols, Rng& rng, double scale = 1.0) {
    Tensor2D t(rows, cols);
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

struct Nets {
    Mlp encoder, decoder, critic, proxy;

    Nets(int obs_dim, int feat, int out, std::uint64_t seed) {
        encoder = make_mlp({obs_dim, 16, feat});
        decoder = make_mlp({feat, out});
        critic = make_mlp({obs_dim, 16, 1});
        proxy = make_mlp({obs_dim, 16, feat});
        Rng rng(seed);
        for (Mlp* net : {&encoder, &decoder, &critic, &proxy})
            for (DenseLayer& layer : net->layers) init(layer, rng);
    }

    static void init(DenseLayer& layer, Rng& rng) {
        init_orthogonal(layer.weight, 1.0, rng);
        for (double& b : layer.bias.data) b = 0.05 * rng.normal();
    }

    TeacherUpdateNets view() {
        return TeacherUpdateNets{&encoder, &decoder, &critic, &proxy, nullptr};
    }

    AdamOptimizer make_optimizer(double lr) {
        AdamConfig cfg;
        cfg.lr = lr;
        AdamOptimizer opt(cfg);
        int k = 0;
        for (Mlp* net : {&encoder, &decoder, &critic})
            for (Tensor2D* p : net->parameters())
                opt.register_parameter("p" + std::to_string(k++), p);
        return opt;
    }

    std::vector<std::vector<double>> grads() const {
        std::vector<std::vector<double>> out;
        for (const Mlp* net : {&encoder, &decoder, &critic})
            for (const Tensor2D* p : net->parameters()) out.push_back(p->grad);
        return out;
    }
};

// builds a finalized buffer whose old log-probs match the current policy
RolloutBuffer make_buffer(Nets& nets, int steps, int envs, int obs_dim, Rng& rng) {
    RolloutBuffer buf;
    buf.reset(steps, envs, obs_dim, 0);
    buf.obs = random_tensor(steps * envs, obs_dim, rng);
    Tensor2D feat = mlp_forward(nets.encoder, buf.obs);
    Tensor2D logits = mlp_forward(nets.decoder, feat);
    for (int r = 0; r < buf.size(); ++r)
        buf.actions[static_cast<std::size_t>(r)] =
            sample_categorical_logits(rng, logits, r);
    buf.log_probs = categorical_log_prob(logits, buf.actions);
    Tensor2D value = mlp_forward(nets.critic, buf.obs);
    for (int t = 0; t < steps; ++t)
        for (int e = 0; e < envs; ++e) {
            buf.rewards.at(t, e) = rng.normal();
            buf.values.at(t, e) = value.at(t * envs + e, 0);
            buf.dones.at(t, e) = rng.uniform() < 0.1 ? 1.0 : 0.0;
        }
    std::vector<double> bootstrap(static_cast<std::size_t>(envs), 0.0);
    buf.finalize(bootstrap, 0.99, 0.95);
    return buf;
}

}  // namespace

TEST_CASE("single-step gae is the one-step advantage") {
    Tensor2D r(1, 2), v(1, 2), d(1, 2);
    r.at(0, 0) = 1.5;
    r.at(0, 1) = -0.3;
    v.at(0, 0) = 0.4;
    v.at(0, 1) = 0.9;
    d.at(0, 0) = 0.0;
    d.at(0, 1) = 1.0;
    Tensor2D adv, ret;
    compute_gae(r, v, d, {2.0, 3.0}, 0.9, 0.95, adv, ret);
    CHECK(adv.at(0, 0) == doctest::Approx(1.5 + 0.9 * 2.0 - 0.4).epsilon(1e-12));
    CHECK(adv.at(0, 1) == doctest::Approx(-0.3 - 0.9).epsilon(1e-12));  // done masks
    CHECK(ret.at(0, 0) == doctest::Approx(adv.at(0, 0) + 0.4).epsilon(1e-12));
}

TEST_CASE("gae with lambda one equals discounted monte carlo minus value") {
    Rng rng(20);
    const int T = 12, E = 3;
    Tensor2D r = random_tensor(T, E, rng);
    Tensor2D v = random_tensor(T, E, rng);
    Tensor2D d(T, E, 0.0);
    std::vector<double> bootstrap{0.7, -0.2, 1.1};
    const double gamma = 0.95;
    Tensor2D adv, ret;
    compute_gae(r, v, d, bootstrap, gamma, 1.0, adv, ret);
    for (int e = 0; e < E; ++e)
        for (int t = 0; t < T; ++t) {
            double mc = 0.0, g = 1.0;
            for (int k = t; k < T; ++k) {
                mc += g * r.at(k, e);
                g *= gamma;
            }
            mc += g * bootstrap[static_cast<std::size_t>(e)];
            CHECK(adv.at(t, e) == doctest::Approx(mc - v.at(t, e)).epsilon(1e-10));
        }
}

TEST_CASE("gae with lambda zero is the one-step td error everywhere") {
    Rng rng(21);
    const int T = 10, E = 2;
    Tensor2D r = random_tensor(T, E, rng);
    Tensor2D v = random_tensor(T, E, rng);
    Tensor2D d(T, E, 0.0);
    d.at(4, 0) = 1.0;
    d.at(7, 1) = 1.0;
    std::vector<double> bootstrap{0.3, -0.4};
    const double gamma = 0.97;
    Tensor2D adv, ret;
    compute_gae(r, v, d, bootstrap, gamma, 0.0, adv, ret);
    for (int e = 0; e < E; ++e)
        for (int t = 0; t < T; ++t) {
            const double nv =
                t == T - 1 ? bootstrap[static_cast<std::size_t>(e)] : v.at(t + 1, e);
            const double td =
                r.at(t, e) + gamma * nv * (1.0 - d.at(t, e)) - v.at(t, e);
            CHECK(adv.at(t, e) == doctest::Approx(td).epsilon(1e-12));
        }
}

TEST_CASE("gae recursion matches the quadratic-time reference with dones") {
    Rng rng(22);
    const int T = 16, E = 4;
    Tensor2D r = random_tensor(T, E, rng);
    Tensor2D v = random_tensor(T, E, rng);
    Tensor2D d(T, E, 0.0);
    for (int t = 0; t < T; ++t)
        for (int e = 0; e < E; ++e) d.at(t, e) = rng.uniform() < 0.2 ? 1.0 : 0.0;
    std::vector<double> bootstrap{0.5, 0.1, -0.8, 0.0};
    const double gamma = 0.99, lam = 0.95;
    Tensor2D adv, ret;
    compute_gae(r, v, d, bootstrap, gamma, lam, adv, ret);
    // direct double sum: A_t = sum_k (gamma lam)^(k-t) delta_k, cut at dones
    for (int e = 0; e < E; ++e)
        for (int t = 0; t < T; ++t) {
            double a = 0.0, w = 1.0;
            for (int k = t; k < T; ++k) {
                const double nv =
                    k == T - 1 ? bootstrap[static_cast<std::size_t>(e)] : v.at(k + 1, e);
                const double delta =
                    r.at(k, e) + gamma * nv * (1.0 - d.at(k, e)) - v.at(k, e);
                a += w * delta;
                if (d.at(k, e) != 0.0) break;
                w *= gamma * lam;
            }
            CHECK(adv.at(t, e) == doctest::Approx(a).epsilon(1e-10));
        }
}

TEST_CASE("reward shaping arithmetic") {
    CHECK(shape_reward(0.5, 0.2, 0.0) == 0.5);
    CHECK(shape_reward(0.5, 0.2, 1.9) == doctest::Approx(0.12).epsilon(1e-12));
    CHECK(shape_reward(-0.1, 1.3, 1.9) == doctest::Approx(-0.1 - 1.9 * 1.3));
    CHECK_THROWS_AS(shape_reward(0.5, -0.001, 1.0), ArgumentError);
}

TEST_CASE("advantage normalization is centered, scaled, and idempotent") {
    Rng rng(23);
    Nets nets(6, 8, 3, 31);
    RolloutBuffer buf = make_buffer(nets, 20, 5, 6, rng);
    buf.normalize_advantages();
    double mean = 0.0;
    for (double v : buf.advantages.data) mean += v;
    mean /= static_cast<double>(buf.advantages.data.size());
    double var = 0.0;
    for (double v : buf.advantages.data) var += (v - mean) * (v - mean);
    const double std = std::sqrt(var / static_cast<double>(buf.advantages.data.size()));
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(std - 1.0) < 1e-6);

    Tensor2D once = buf.advantages;
    buf.normalize_advantages();
    for (std::size_t i = 0; i < once.data.size(); ++i)
        CHECK(std::fabs(buf.advantages.data[i] - once.data[i]) < 1e-6);
}

TEST_CASE("saturated clipping produces exactly zero policy gradient") {
    Nets nets(4, 6, 2, 77);
    Rng rng(24);
    RolloutBuffer buf;
    buf.reset(1, 2, 4, 0);
    buf.obs = random_tensor(2, 4, rng);
    Tensor2D logits = mlp_forward(nets.decoder, mlp_forward(nets.encoder, buf.obs));
    buf.actions = {0, 1};
    std::vector<double> lp = categorical_log_prob(logits, buf.actions);
    // ratios e^10 with positive advantage and e^-10 with negative advantage:
    // both sit on the flat side of the clamp
    buf.log_probs = {lp[0] - 10.0, lp[1] + 10.0};
    buf.rewards.at(0, 0) = 1.0;
    buf.rewards.at(0, 1) = 1.0;
    buf.values.at(0, 0) = 0.0;
    buf.values.at(0, 1) = 2.0;  // value 2 > return 1 makes the advantage negative
    buf.dones.at(0, 0) = 1.0;
    buf.dones.at(0, 1) = 1.0;
    buf.finalize({0.0, 0.0}, 0.99, 0.95);
    REQUIRE(buf.advantages.at(0, 0) > 0.0);
    REQUIRE(buf.advantages.at(0, 1) < 0.0);

    PpoConfig cfg;
    cfg.entropy_coef = 0.0;
    cfg.normalize_advantages = false;  // keep the constructed signs
    AdamOptimizer opt = nets.make_optimizer(1e-3);
    Rng shuffle(1);
    PpoStats stats = ppo_teacher_update(nets.view(), opt, buf, cfg, shuffle);
    CHECK(stats.clip_fraction == 1.0);
    for (Tensor2D* p : nets.encoder.parameters())
        for (double g : p->grad) CHECK(g == 0.0);
    for (Tensor2D* p : nets.decoder.parameters())
        for (double g : p->grad) CHECK(g == 0.0);
}

TEST_CASE("lambda2 zero leaves the plain ppo update untouched") {
    Rng rng(25);
    Nets a(5, 8, 3, 90);
    Nets b(5, 8, 3, 90);  // identical initialization
    RolloutBuffer buf_a = make_buffer(a, 16, 4, 5, rng);
    RolloutBuffer buf_b = buf_a;

    PpoConfig cfg;
    cfg.entropy_coef = 0.1;
    AdamOptimizer opt_a = a.make_optimizer(3e-4);
    AdamOptimizer opt_b = b.make_optimizer(3e-4);
    Rng sh_a(3), sh_b(3);
    TeacherUpdateNets va = a.view();
    va.proxy_encoder = nullptr;  // plain path has no proxy at all
    ppo_teacher_update(va, opt_a, buf_a, cfg, sh_a);
    ppo_teacher_update(b.view(), opt_b, buf_b, cfg, sh_b);

    CHECK(a.encoder.parameter_hash() == b.encoder.parameter_hash());
    CHECK(a.decoder.parameter_hash() == b.decoder.parameter_hash());
    CHECK(a.critic.parameter_hash() == b.critic.parameter_hash());
}

TEST_CASE("identical proxy and teacher parameters zero the kl term") {
    Rng rng(26);
    Nets nets(5, 8, 3, 91);
    nets.proxy = nets.encoder;  // same features, same decoder: KL must vanish
    RolloutBuffer buf = make_buffer(nets, 8, 4, 5, rng);
    PpoConfig cfg;
    cfg.lambda2 = 0.5;
    AdamOptimizer opt = nets.make_optimizer(3e-4);
    Rng shuffle(4);
    PpoStats stats = ppo_teacher_update(nets.view(), opt, buf, cfg, shuffle);
    CHECK(std::fabs(stats.kl_term) < 1e-12);
}

TEST_CASE("the kl-term gradient is linear in lambda2 and matches finite differences") {
    Rng rng(27);
    const int obs_dim = 5, feat = 6, n_actions = 3;
    RolloutBuffer proto;

    auto run_once = [&](double lambda2, bool through_decoder,
                        std::vector<std::vector<double>>& grads_out) {
        Nets nets(obs_dim, feat, n_actions, 92);
        Rng brng(28);
        RolloutBuffer buf = make_buffer(nets, 5, 1, obs_dim, brng);
        proto = buf;
        PpoConfig cfg;
        cfg.lambda2 = lambda2;
        cfg.entropy_coef = 0.05;
        cfg.kl_grad_through_decoder = through_decoder;
        AdamOptimizer opt = nets.make_optimizer(3e-4);
        Rng shuffle(5);
        ppo_teacher_update(nets.view(), opt, buf, cfg, shuffle);
        grads_out = nets.grads();
    };

    std::vector<std::vector<double>> g0, g1, g2;
    run_once(0.0, false, g0);
    run_once(0.7, false, g1);
    run_once(1.4, false, g2);

    // delta(g) per 0.7 of lambda2 is constant
    for (std::size_t p = 0; p < g0.size(); ++p)
        for (std::size_t i = 0; i < g0[p].size(); ++i) {
            const double d1 = g1[p][i] - g0[p][i];
            const double d2 = g2[p][i] - g1[p][i];
            CHECK(std::fabs(d1 - d2) < 1e-9);
        }

    // with the default routing, only the encoder feels the kl term
    // (parameter order: encoder w/b x2, decoder w/b, critic w/b x2)
    const std::size_t enc_params = 4;
    for (std::size_t p = enc_params; p < g0.size(); ++p)
        for (std::size_t i = 0; i < g0[p].size(); ++i)
            CHECK(g1[p][i] == g0[p][i]);

    // finite differences of f = lambda2 * mean KL(teacher || proxy) over the
    // encoder parameters, evaluated with forward passes only
    Nets nets(obs_dim, feat, n_actions, 92);
    const double lambda2 = 0.7;
    auto kl_value = [&]() {
        Tensor2D t_logits =
            mlp_forward(nets.decoder, mlp_forward(nets.encoder, proto.obs));
        Tensor2D p_logits =
            mlp_forward(nets.decoder, mlp_forward(nets.proxy, proto.obs));
        std::vector<double> kls =
            categorical_kl(softmax_rows(t_logits), softmax_rows(p_logits));
        double m = 0.0;
        for (double k : kls) m += k;
        return lambda2 * m / static_cast<double>(kls.size());
    };
    const double h = 1e-5;
    std::vector<Tensor2D*> enc = nets.encoder.parameters();
    for (std::size_t p = 0; p < enc.size(); ++p)
        for (std::size_t i = 0; i < enc[p]->data.size(); ++i) {
            const double saved = enc[p]->data[i];
            enc[p]->data[i] = saved + h;
            const double fp = kl_value();
            enc[p]->data[i] = saved - h;
            const double fm = kl_value();
            enc[p]->data[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double analytic = g1[p][i] - g0[p][i];
            const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-8});
            CHECK(std::fabs(fd - analytic) / denom < 1e-4);
        }

    // with decoder routing enabled the decoder component matches fd as well
    std::vector<std::vector<double>> g0d, g1d;
    run_once(0.0, true, g0d);
    run_once(0.7, true, g1d);
    std::vector<Tensor2D*> dec = nets.decoder.parameters();
    for (std::size_t p = 0; p < dec.size(); ++p)
        for (std::size_t i = 0; i < dec[p]->data.size(); ++i) {
            const double saved = dec[p]->data[i];
            dec[p]->data[i] = saved + h;
            const double fp = kl_value();
            dec[p]->data[i] = saved - h;
            const double fm = kl_value();
            dec[p]->data[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double analytic = g1d[enc.size() + p][i] - g0d[enc.size() + p][i];
            const double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-8});
            CHECK(std::fabs(fd - analytic) / denom < 1e-4);
        }
}

TEST_CASE("minibatched epochs shuffle deterministically per seed") {
    Rng rng(29);
    auto run = [&](std::uint64_t shuffle_seed) {
        Nets nets(5, 8, 3, 93);
        Rng brng(30);
        RolloutBuffer buf = make_buffer(nets, 8, 4, 5, brng);
        PpoConfig cfg;
        cfg.minibatch_size = 8;
        cfg.epochs = 3;
        AdamOptimizer opt = nets.make_optimizer(3e-4);
        Rng shuffle(shuffle_seed);
        ppo_teacher_update(nets.view(), opt, buf, cfg, shuffle);
        return hash_combine(nets.encoder.parameter_hash(),
                            nets.decoder.parameter_hash());
    };
    CHECK(run(11) == run(11));
    CHECK(run(11) != run(12));
}

TEST_CASE("non-finite inputs abort the update with a numerics error") {
    Nets nets(4, 6, 2, 94);
    Rng rng(31);
    RolloutBuffer buf = make_buffer(nets, 4, 2, 4, rng);
    buf.log_probs[3] = std::nan("");
    PpoConfig cfg;
    AdamOptimizer opt = nets.make_optimizer(3e-4);
    Rng shuffle(6);
    CHECK_THROWS_AS(ppo_teacher_update(nets.view(), opt, buf, cfg, shuffle),
                    NumericalError);
}

TEST_CASE("continuous kl gradient widens log std and spares the proxy") {
    const int obs_dim = 3, feat = 5, act_dim = 2;

    struct Cont {
        Mlp encoder, decoder, critic, proxy;
        Tensor2D log_std;
        RolloutBuffer buf;

        Cont(int obs_dim, int feat, int act_dim)
            : encoder(make_mlp({obs_dim, 8, feat})),
              decoder(make_mlp({feat, act_dim})),
              critic(make_mlp({obs_dim, 8, 1})),
              proxy(make_mlp({obs_dim, 8, feat})),
              log_std(1, act_dim, 0.0) {
            Rng rng(95);
            for (Mlp* net : {&encoder, &decoder, &critic, &proxy})
                for (DenseLayer& layer : net->layers)
                    init_orthogonal(layer.weight, 1.0, rng);
            const int T = 6, E = 4;
            buf.reset(T, E, obs_dim, act_dim);
            buf.obs = random_tensor(T * E, obs_dim, rng);
            Tensor2D mean = mlp_forward(decoder, mlp_forward(encoder, buf.obs));
            for (int r = 0; r < buf.size(); ++r) {
                std::vector<double> a = sample_gaussian_row(rng, mean, log_std, r);
                for (int c = 0; c < act_dim; ++c)
                    buf.cont_actions.at(r, c) = a[static_cast<std::size_t>(c)];
            }
            buf.log_probs = gaussian_log_prob(mean, log_std, buf.cont_actions);
            for (int t = 0; t < T; ++t)
                for (int e = 0; e < E; ++e) {
                    buf.rewards.at(t, e) = rng.normal();
                    buf.values.at(t, e) = 0.0;
                    buf.dones.at(t, e) = 0.0;
                }
            buf.finalize(std::vector<double>(E, 0.0), 0.99, 0.95);
        }

        PpoStats update(double lambda2) {
            TeacherUpdateNets nets{&encoder, &decoder, &critic, &proxy, &log_std};
            PpoConfig cfg;
            cfg.lambda2 = lambda2;
            cfg.entropy_coef = 0.0;
            AdamOptimizer opt{AdamConfig{}};
            int k = 0;
            for (Mlp* net : {&encoder, &decoder, &critic})
                for (Tensor2D* p : net->parameters())
                    opt.register_parameter("p" + std::to_string(k++), p);
            opt.register_parameter("log_std", &log_std);
            Rng shuffle(7);
            return ppo_teacher_update(nets, opt, buf, cfg, shuffle);
        }
    };

    Cont with_kl(obs_dim, feat, act_dim);
    Cont without(obs_dim, feat, act_dim);
    const std::uint64_t proxy_before = with_kl.proxy.parameter_hash();
    PpoStats stats = with_kl.update(2.0);
    without.update(0.0);
    CHECK(stats.kl_term > 0.0);
    CHECK(with_kl.proxy.parameter_hash() == proxy_before);

    // the kl component of the log-std gradient is -mean(z^2) per dimension,
    // strictly negative whenever the teacher and proxy means differ: descent
    // widens the covariance
    for (int c = 0; c < act_dim; ++c) {
        const std::size_t i = static_cast<std::size_t>(c);
        const double kl_component = with_kl.log_std.grad[i] - without.log_std.grad[i];
        CHECK(kl_component < 0.0);
    }
}
