#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dcs/common.hpp"

namespace dcs {

// Multilayer perceptron with ReLU hidden layers. Batches are stored as
// columns. The output is linear (critic) or tanh (actor, squashed to [-1,1]
// per component; the caller scales to physical action bounds).
struct Mlp {
    enum class Output { Linear, Tanh };

    std::vector<Eigen::MatrixXd> w; // [layer] out x in
    std::vector<Eigen::VectorXd> b;
    Output output = Output::Linear;

    static Mlp make(const std::vector<int>& sizes, Output out, std::mt19937_64& rng,
                    double final_scale = 1.0) {
        Mlp net;
        net.output = out;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const double bound = 1.0 / std::sqrt(double(sizes[l]));
            std::uniform_real_distribution<double> u(-bound, bound);
            Eigen::MatrixXd wl(sizes[l + 1], sizes[l]);
            Eigen::VectorXd bl(sizes[l + 1]);
            for (int r = 0; r < wl.rows(); ++r) {
                for (int c = 0; c < wl.cols(); ++c) wl(r, c) = u(rng);
                bl(r) = u(rng);
            }
            if (l + 2 == sizes.size() && final_scale != 1.0) {
                wl *= final_scale;
                bl *= final_scale;
            }
            net.w.push_back(std::move(wl));
            net.b.push_back(std::move(bl));
        }
        return net;
    }

    int in_dim() const { return int(w.front().cols()); }
    int out_dim() const { return int(w.back().rows()); }
    std::size_t n_layers() const { return w.size(); }

    struct Cache {
        std::vector<Eigen::MatrixXd> act; // act[0] = input, act[l] post-activation
    };

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const {
        Eigen::MatrixXd a = x;
        if (cache) cache->act.assign(1, a);
        for (std::size_t l = 0; l < w.size(); ++l) {
            Eigen::MatrixXd z = (w[l] * a).colwise() + b[l];
            if (l + 1 < w.size()) {
                a = z.cwiseMax(0.0);
            } else if (output == Output::Tanh) {
                a = z.array().tanh().matrix();
            } else {
                a = std::move(z);
            }
            if (cache) cache->act.push_back(a);
        }
        return a;
    }

    struct Grads {
        std::vector<Eigen::MatrixXd> w;
        std::vector<Eigen::VectorXd> b;

        static Grads zeros_like(const Mlp& net) {
            Grads g;
            for (std::size_t l = 0; l < net.w.size(); ++l) {
                g.w.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
                g.b.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
            }
            return g;
        }

        // Rescales so the global l2 norm is at most max_norm; no-op otherwise.
        void clip_global_norm(double max_norm) {
            double s = 0.0;
            for (const auto& gw : w) s += gw.squaredNorm();
            for (const auto& gb : b) s += gb.squaredNorm();
            const double n = std::sqrt(s);
            if (n > max_norm) {
                const double f = max_norm / n;
                for (auto& gw : w) gw *= f;
                for (auto& gb : b) gb *= f;
            }
        }
    };

    // Backpropagates dL/dY through the cached forward pass. Returns dL/dX and
    // accumulates parameter gradients into `g`.
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy, Grads& g) const {
        Eigen::MatrixXd delta = dy;
        for (std::size_t l = w.size(); l-- > 0;) {
            const Eigen::MatrixXd& a_out = cache.act[l + 1];
            if (l + 1 == w.size()) {
                if (output == Output::Tanh)
                    delta = delta.cwiseProduct((1.0 - a_out.array().square()).matrix());
            } else {
                delta = delta.cwiseProduct((a_out.array() > 0.0).cast<double>().matrix());
            }
            g.w[l] += delta * cache.act[l].transpose();
            g.b[l] += delta.rowwise().sum();
            delta = w[l].transpose() * delta;
        }
        return delta; // dL/dX
    }

    void soft_update_from(const Mlp& main, double tau) {
        if (main.w.size() != w.size()) throw ConfigError("soft_update: shape mismatch");
        for (std::size_t l = 0; l < w.size(); ++l) {
            if (main.w[l].rows() != w[l].rows() || main.w[l].cols() != w[l].cols())
                throw ConfigError("soft_update: shape mismatch");
            w[l] = tau * main.w[l] + (1.0 - tau) * w[l];
            b[l] = tau * main.b[l] + (1.0 - tau) * b[l];
        }
    }

    bool finite() const {
        for (std::size_t l = 0; l < w.size(); ++l)
            if (!w[l].allFinite() || !b[l].allFinite()) return false;
        return true;
    }
};

// Adaptive-moment stochastic gradient ascent/descent on one Mlp.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    Mlp::Grads m, v;

    explicit Adam(const Mlp& net, double lr_) : lr(lr_) {
        m = Mlp::Grads::zeros_like(net);
        v = Mlp::Grads::zeros_like(net);
    }

    // direction = -1 descends the gradient, +1 ascends it.
    void apply(Mlp& net, const Mlp::Grads& g, double direction = -1.0) {
        ++step_count;
        const double c1 = 1.0 - std::pow(beta1, double(step_count));
        const double c2 = 1.0 - std::pow(beta2, double(step_count));
        for (std::size_t l = 0; l < net.w.size(); ++l) {
            m.w[l] = beta1 * m.w[l] + (1.0 - beta1) * g.w[l];
            v.w[l] = beta2 * v.w[l] + (1.0 - beta2) * g.w[l].cwiseProduct(g.w[l]);
            m.b[l] = beta1 * m.b[l] + (1.0 - beta1) * g.b[l];
            v.b[l] = beta2 * v.b[l] + (1.0 - beta2) * g.b[l].cwiseProduct(g.b[l]);
            net.w[l] += direction * lr *
                ((m.w[l] / c1).array() / ((v.w[l] / c2).array().sqrt() + eps)).matrix();
            net.b[l] += direction * lr *
                ((m.b[l] / c1).array() / ((v.b[l] / c2).array().sqrt() + eps)).matrix();
        }
    }
};

} // namespace dcs
