#include <doctest.h>

#include <cmath>
#include <random>

#include "dcs/nn.hpp"

using namespace dcs;

namespace {

double loss_of(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& target) {
    const Eigen::MatrixXd y = net.forward(x);
    return 0.5 * (y - target).squaredNorm();
}

} // namespace

TEST_CASE("construction and shapes") {
    std::mt19937_64 rng(1);
    Mlp net = Mlp::make({5, 16, 16, 2}, Mlp::Output::Tanh, rng);
    CHECK(net.in_dim() == 5);
    CHECK(net.out_dim() == 2);
    CHECK(net.n_layers() == 3);
    CHECK(net.finite());

    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 7);
    Eigen::MatrixXd y = net.forward(x);
    CHECK(y.rows() == 2);
    CHECK(y.cols() == 7);
    CHECK((y.array().abs() <= 1.0).all()); // tanh bound
}

TEST_CASE("forward is deterministic and batch-consistent") {
    std::mt19937_64 rng(2);
    Mlp net = Mlp::make({3, 8, 1}, Mlp::Output::Linear, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 10);
    Eigen::MatrixXd y1 = net.forward(x);
    Eigen::MatrixXd y2 = net.forward(x);
    CHECK((y1 - y2).norm() == 0.0);
    for (int c = 0; c < 10; ++c) {
        Eigen::MatrixXd yc = net.forward(x.col(c));
        CHECK(yc(0, 0) == doctest::Approx(y1(0, c)).epsilon(1e-14));
    }
}

TEST_CASE("seeded init is reproducible") {
    std::mt19937_64 a(42), b(42), c(43);
    Mlp na = Mlp::make({4, 8, 2}, Mlp::Output::Linear, a);
    Mlp nb = Mlp::make({4, 8, 2}, Mlp::Output::Linear, b);
    Mlp nc = Mlp::make({4, 8, 2}, Mlp::Output::Linear, c);
    CHECK((na.w[0] - nb.w[0]).norm() == 0.0);
    CHECK((na.w[1] - nb.w[1]).norm() == 0.0);
    CHECK((na.w[0] - nc.w[0]).norm() > 0.0);
}

TEST_CASE("parameter gradients match finite differences") {
    std::mt19937_64 rng(3);
    for (auto out : {Mlp::Output::Linear, Mlp::Output::Tanh}) {
        Mlp net = Mlp::make({4, 6, 5, 2}, out, rng);
        Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
        Eigen::MatrixXd target = Eigen::MatrixXd::Random(2, 3);

        Mlp::Cache cache;
        Eigen::MatrixXd y = net.forward(x, &cache);
        Mlp::Grads g = Mlp::Grads::zeros_like(net);
        net.backward(cache, y - target, g);

        const double h = 1e-6;
        std::mt19937_64 pick(7);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t l = pick() % net.w.size();
            const int r = int(pick() % net.w[l].rows());
            const int c = int(pick() % net.w[l].cols());
            const double orig = net.w[l](r, c);
            net.w[l](r, c) = orig + h;
            const double lp = loss_of(net, x, target);
            net.w[l](r, c) = orig - h;
            const double lm = loss_of(net, x, target);
            net.w[l](r, c) = orig;
            CHECK(g.w[l](r, c) == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-4));
        }
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t l = pick() % net.b.size();
            const int r = int(pick() % net.b[l].size());
            const double orig = net.b[l](r);
            net.b[l](r) = orig + h;
            const double lp = loss_of(net, x, target);
            net.b[l](r) = orig - h;
            const double lm = loss_of(net, x, target);
            net.b[l](r) = orig;
            CHECK(g.b[l](r) == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-4));
        }
    }
}

TEST_CASE("input gradients match finite differences") {
    std::mt19937_64 rng(4);
    Mlp net = Mlp::make({5, 8, 3}, Mlp::Output::Linear, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2);
    Eigen::MatrixXd target = Eigen::MatrixXd::Random(3, 2);

    Mlp::Cache cache;
    Eigen::MatrixXd y = net.forward(x, &cache);
    Mlp::Grads g = Mlp::Grads::zeros_like(net);
    Eigen::MatrixXd dx = net.backward(cache, y - target, g);

    const double h = 1e-6;
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 2; ++c) {
            Eigen::MatrixXd xp = x, xm = x;
            xp(r, c) += h;
            xm(r, c) -= h;
            const double num = (loss_of(net, xp, target) - loss_of(net, xm, target)) / (2 * h);
            CHECK(dx(r, c) == doctest::Approx(num).epsilon(1e-4));
        }
    }
}

TEST_CASE("adam descends a quadratic and overfits a tiny regression") {
    std::mt19937_64 rng(5);
    Mlp net = Mlp::make({2, 16, 1}, Mlp::Output::Linear, rng);
    Adam opt(net, 1e-2);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 16);
    Eigen::MatrixXd target = (x.row(0).array() * x.row(1).array()).matrix();
    double first = -1.0;
    for (int it = 0; it < 2000; ++it) {
        Mlp::Cache cache;
        Eigen::MatrixXd y = net.forward(x, &cache);
        if (it == 0) first = 0.5 * (y - target).squaredNorm();
        Mlp::Grads g = Mlp::Grads::zeros_like(net);
        net.backward(cache, (y - target) / x.cols(), g);
        opt.apply(net, g, -1.0);
    }
    const double last = loss_of(net, x, target);
    CHECK(last < 1e-3 * std::max(first, 1.0));
    CHECK(net.finite());
}

TEST_CASE("ascent direction increases the objective") {
    std::mt19937_64 rng(6);
    Mlp net = Mlp::make({3, 8, 1}, Mlp::Output::Linear, rng);
    Adam opt(net, 1e-3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
    const double before = net.forward(x).sum();
    for (int it = 0; it < 200; ++it) {
        Mlp::Cache cache;
        net.forward(x, &cache);
        Mlp::Grads g = Mlp::Grads::zeros_like(net);
        net.backward(cache, Eigen::MatrixXd::Ones(1, 4), g);
        opt.apply(net, g, +1.0);
    }
    CHECK(net.forward(x).sum() > before);
}

TEST_CASE("soft update blends toward the main network") {
    std::mt19937_64 rng(7);
    Mlp main = Mlp::make({3, 4, 1}, Mlp::Output::Linear, rng);
    Mlp target = Mlp::make({3, 4, 1}, Mlp::Output::Linear, rng);
    Mlp before = target;
    const double tau = 0.005;
    target.soft_update_from(main, tau);
    for (std::size_t l = 0; l < main.w.size(); ++l) {
        Eigen::MatrixXd expect = tau * main.w[l] + (1 - tau) * before.w[l];
        CHECK((target.w[l] - expect).norm() == doctest::Approx(0.0));
    }
    // tau=1 copies
    target.soft_update_from(main, 1.0);
    CHECK((target.w[0] - main.w[0]).norm() == 0.0);

    Mlp other = Mlp::make({3, 5, 1}, Mlp::Output::Linear, rng);
    CHECK_THROWS_AS(target.soft_update_from(other, 0.5), ConfigError);
}
