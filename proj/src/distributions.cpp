#include "alignrl/distributions.hpp"

#include <algorithm>
#include <cmath>

#include "alignrl/errors.hpp"

namespace alignrl {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

void require_same_shape(const Tensor2D& a, const Tensor2D& b, const char* what) {
    if (!same_shape(a, b)) throw ShapeError(std::string(what) + ": shape mismatch");
}

void require_action_rows(const Tensor2D& logits, const std::vector<int>& actions) {
    if (static_cast<int>(actions.size()) != logits.rows)
        throw ShapeError("actions count does not match logits rows");
    for (int a : actions)
        if (a < 0 || a >= logits.cols)
            throw ArgumentError("action index out of range");
}

void require_log_std(const Tensor2D& mean, const Tensor2D& log_std) {
    if (log_std.rows != 1 || log_std.cols != mean.cols)
        throw ShapeError("log_std must be (1, d) matching mean columns");
}

}  // namespace

Tensor2D softmax_rows(const Tensor2D& logits) {
    Tensor2D p(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) {
        double mx = logits.at(r, 0);
        for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < logits.cols; ++c) {
            const double e = std::exp(logits.at(r, c) - mx);
            p.at(r, c) = e;
            sum += e;
        }
        for (int c = 0; c < logits.cols; ++c) p.at(r, c) /= sum;
    }
    return p;
}

Tensor2D log_softmax_rows(const Tensor2D& logits) {
    Tensor2D lp(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) {
        double mx = logits.at(r, 0);
        for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < logits.cols; ++c) sum += std::exp(logits.at(r, c) - mx);
        const double lse = mx + std::log(sum);
        for (int c = 0; c < logits.cols; ++c) lp.at(r, c) = logits.at(r, c) - lse;
    }
    return lp;
}

std::vector<double> categorical_log_prob(const Tensor2D& logits,
                                         const std::vector<int>& actions) {
    require_action_rows(logits, actions);
    Tensor2D lp = log_softmax_rows(logits);
    std::vector<double> out(actions.size());
    for (int r = 0; r < logits.rows; ++r)
        out[static_cast<std::size_t>(r)] = lp.at(r, actions[static_cast<std::size_t>(r)]);
    return out;
}

Tensor2D categorical_log_prob_grad(const Tensor2D& logits,
                                   const std::vector<int>& actions) {
    require_action_rows(logits, actions);
    Tensor2D g = softmax_rows(logits);
    for (double& v : g.data) v = -v;
    for (int r = 0; r < logits.rows; ++r)
        g.at(r, actions[static_cast<std::size_t>(r)]) += 1.0;
    return g;
}

std::vector<double> categorical_entropy(const Tensor2D& probs) {
    std::vector<double> out(static_cast<std::size_t>(probs.rows));
    for (int r = 0; r < probs.rows; ++r) {
        double h = 0.0;
        for (int c = 0; c < probs.cols; ++c) {
            const double p = probs.at(r, c);
            h -= p * std::log(std::max(p, kProbFloor));
        }
        out[static_cast<std::size_t>(r)] = h;
    }
    return out;
}

std::vector<double> categorical_entropy_from_logits(const Tensor2D& logits) {
    Tensor2D p = softmax_rows(logits);
    Tensor2D lp = log_softmax_rows(logits);
    std::vector<double> out(static_cast<std::size_t>(logits.rows));
    for (int r = 0; r < logits.rows; ++r) {
        double h = 0.0;
        for (int c = 0; c < logits.cols; ++c) h -= p.at(r, c) * lp.at(r, c);
        out[static_cast<std::size_t>(r)] = h;
    }
    return out;
}

Tensor2D categorical_entropy_grad(const Tensor2D& logits) {
    Tensor2D p = softmax_rows(logits);
    Tensor2D lp = log_softmax_rows(logits);
    std::vector<double> h = categorical_entropy_from_logits(logits);
    Tensor2D g(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r)
        for (int c = 0; c < logits.cols; ++c)
            g.at(r, c) = p.at(r, c) * (-lp.at(r, c) - h[static_cast<std::size_t>(r)]);
    return g;
}

std::vector<double> categorical_kl(const Tensor2D& p, const Tensor2D& q) {
    require_same_shape(p, q, "categorical_kl");
    std::vector<double> out(static_cast<std::size_t>(p.rows));
    for (int r = 0; r < p.rows; ++r) {
        double kl = 0.0;
        for (int c = 0; c < p.cols; ++c) {
            const double pv = p.at(r, c);
            kl += pv * (std::log(std::max(pv, kProbFloor)) -
                        std::log(std::max(q.at(r, c), kProbFloor)));
        }
        out[static_cast<std::size_t>(r)] = kl;
    }
    return out;
}

Tensor2D categorical_kl_grad_p_logits(const Tensor2D& logits_p,
                                      const Tensor2D& logits_q) {
    require_same_shape(logits_p, logits_q, "categorical_kl_grad_p_logits");
    Tensor2D p = softmax_rows(logits_p);
    Tensor2D lp = log_softmax_rows(logits_p);
    Tensor2D lq = log_softmax_rows(logits_q);
    Tensor2D g(logits_p.rows, logits_p.cols);
    for (int r = 0; r < p.rows; ++r) {
        double kl = 0.0;
        for (int c = 0; c < p.cols; ++c) kl += p.at(r, c) * (lp.at(r, c) - lq.at(r, c));
        for (int c = 0; c < p.cols; ++c)
            g.at(r, c) = p.at(r, c) * (lp.at(r, c) - lq.at(r, c) - kl);
    }
    return g;
}

Tensor2D categorical_kl_grad_q_logits(const Tensor2D& logits_p,
                                      const Tensor2D& logits_q) {
    require_same_shape(logits_p, logits_q, "categorical_kl_grad_q_logits");
    Tensor2D p = softmax_rows(logits_p);
    Tensor2D q = softmax_rows(logits_q);
    Tensor2D g(logits_p.rows, logits_p.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = q.data[i] - p.data[i];
    return g;
}

int sample_categorical_logits(Rng& rng, const Tensor2D& logits, int row) {
    if (row < 0 || row >= logits.rows) throw ArgumentError("sample row out of range");
    Tensor2D p = softmax_rows(logits);
    std::vector<double> probs(static_cast<std::size_t>(p.cols));
    for (int c = 0; c < p.cols; ++c) probs[static_cast<std::size_t>(c)] = p.at(row, c);
    return rng.categorical(probs);
}

std::vector<double> gaussian_log_prob(const Tensor2D& mean, const Tensor2D& log_std,
                                      const Tensor2D& actions) {
    require_log_std(mean, log_std);
    require_same_shape(mean, actions, "gaussian_log_prob");
    std::vector<double> out(static_cast<std::size_t>(mean.rows));
    for (int r = 0; r < mean.rows; ++r) {
        double lp = 0.0;
        for (int c = 0; c < mean.cols; ++c) {
            const double ls = log_std.at(0, c);
            const double z = (actions.at(r, c) - mean.at(r, c)) / std::exp(ls);
            lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
        }
        out[static_cast<std::size_t>(r)] = lp;
    }
    return out;
}

Tensor2D gaussian_log_prob_grad_mean(const Tensor2D& mean, const Tensor2D& log_std,
                                     const Tensor2D& actions) {
    require_log_std(mean, log_std);
    require_same_shape(mean, actions, "gaussian_log_prob_grad_mean");
    Tensor2D g(mean.rows, mean.cols);
    for (int r = 0; r < mean.rows; ++r)
        for (int c = 0; c < mean.cols; ++c) {
            const double s = std::exp(log_std.at(0, c));
            g.at(r, c) = (actions.at(r, c) - mean.at(r, c)) / (s * s);
        }
    return g;
}

Tensor2D gaussian_log_prob_grad_log_std(const Tensor2D& mean, const Tensor2D& log_std,
                                        const Tensor2D& actions) {
    require_log_std(mean, log_std);
    require_same_shape(mean, actions, "gaussian_log_prob_grad_log_std");
    Tensor2D g(mean.rows, mean.cols);
    for (int r = 0; r < mean.rows; ++r)
        for (int c = 0; c < mean.cols; ++c) {
            const double z =
                (actions.at(r, c) - mean.at(r, c)) / std::exp(log_std.at(0, c));
            g.at(r, c) = z * z - 1.0;
        }
    return g;
}

double gaussian_entropy(const Tensor2D& log_std) {
    if (log_std.rows != 1) throw ShapeError("log_std must be a single row");
    double h = 0.5 * log_std.cols * (1.0 + kLog2Pi);
    for (int c = 0; c < log_std.cols; ++c) h += log_std.at(0, c);
    return h;
}

std::vector<double> gaussian_kl(const Tensor2D& mean1, const Tensor2D& log_std1,
                                const Tensor2D& mean2, const Tensor2D& log_std2) {
    require_log_std(mean1, log_std1);
    require_log_std(mean2, log_std2);
    require_same_shape(mean1, mean2, "gaussian_kl");
    std::vector<double> out(static_cast<std::size_t>(mean1.rows));
    for (int r = 0; r < mean1.rows; ++r) {
        double kl = 0.0;
        for (int c = 0; c < mean1.cols; ++c) {
            const double ls1 = log_std1.at(0, c);
            const double ls2 = log_std2.at(0, c);
            const double v1 = std::exp(2.0 * ls1);
            const double v2 = std::exp(2.0 * ls2);
            const double d = mean1.at(r, c) - mean2.at(r, c);
            kl += (ls2 - ls1) + (v1 + d * d) / (2.0 * v2) - 0.5;
        }
        out[static_cast<std::size_t>(r)] = kl;
    }
    return out;
}

std::vector<double> gaussian_kl_shared_cov(const Tensor2D& mean1,
                                           const Tensor2D& mean2,
                                           const Tensor2D& log_std) {
    require_log_std(mean1, log_std);
    require_same_shape(mean1, mean2, "gaussian_kl_shared_cov");
    std::vector<double> out(static_cast<std::size_t>(mean1.rows));
    for (int r = 0; r < mean1.rows; ++r) {
        double kl = 0.0;
        for (int c = 0; c < mean1.cols; ++c) {
            const double z =
                (mean1.at(r, c) - mean2.at(r, c)) / std::exp(log_std.at(0, c));
            kl += 0.5 * z * z;
        }
        out[static_cast<std::size_t>(r)] = kl;
    }
    return out;
}

Tensor2D gaussian_kl_shared_grad_mean1(const Tensor2D& mean1, const Tensor2D& mean2,
                                       const Tensor2D& log_std) {
    require_log_std(mean1, log_std);
    require_same_shape(mean1, mean2, "gaussian_kl_shared_grad_mean1");
    Tensor2D g(mean1.rows, mean1.cols);
    for (int r = 0; r < mean1.rows; ++r)
        for (int c = 0; c < mean1.cols; ++c) {
            const double s = std::exp(log_std.at(0, c));
            g.at(r, c) = (mean1.at(r, c) - mean2.at(r, c)) / (s * s);
        }
    return g;
}

Tensor2D gaussian_kl_shared_grad_log_std(const Tensor2D& mean1, const Tensor2D& mean2,
                                         const Tensor2D& log_std) {
    require_log_std(mean1, log_std);
    require_same_shape(mean1, mean2, "gaussian_kl_shared_grad_log_std");
    Tensor2D g(mean1.rows, mean1.cols);
    for (int r = 0; r < mean1.rows; ++r)
        for (int c = 0; c < mean1.cols; ++c) {
            const double z =
                (mean1.at(r, c) - mean2.at(r, c)) / std::exp(log_std.at(0, c));
            g.at(r, c) = -z * z;
        }
    return g;
}

std::vector<double> sample_gaussian_row(Rng& rng, const Tensor2D& mean,
                                        const Tensor2D& log_std, int row) {
    require_log_std(mean, log_std);
    if (row < 0 || row >= mean.rows) throw ArgumentError("sample row out of range");
    std::vector<double> out(static_cast<std::size_t>(mean.cols));
    for (int c = 0; c < mean.cols; ++c)
        out[static_cast<std::size_t>(c)] =
            mean.at(row, c) + std::exp(log_std.at(0, c)) * rng.normal();
    return out;
}

}  // namespace alignrl
