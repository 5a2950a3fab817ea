#include <doctest.h>

#include <sstream>

#include "sage/nn.hpp"

using namespace sage;
using nn::Mat;

namespace {

// loss = 0.5*||net(x)||^2; analytic gradients vs central differences
void check_gradients(nn::Sequential<double>& net, Mat<double> x, double tol = 1e-5) {
    auto loss_of = [&](const Mat<double>& input) {
        Mat<double> y = net.forward(input, false);
        return 0.5 * y.squaredNorm();
    };

    net.zero_grad();
    Mat<double> y = net.forward(x, true);
    Mat<double> dx = net.backward(y);

    const double h = 1e-5;
    // input gradient
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Mat<double> xp = x, xm = x;
            xp(i, j) += h;
            xm(i, j) -= h;
            const double num = (loss_of(xp) - loss_of(xm)) / (2 * h);
            const double denom = std::max({std::abs(num), std::abs(dx(i, j)), 1e-8});
            CHECK(std::abs(num - dx(i, j)) / denom < tol);
        }
    // parameter gradients
    for (auto* p : net.params()) {
        for (Eigen::Index j = 0; j < p->value.cols(); ++j)
            for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
                const double orig = p->value(i, j);
                p->value(i, j) = orig + h;
                const double lp = loss_of(x);
                p->value(i, j) = orig - h;
                const double lm = loss_of(x);
                p->value(i, j) = orig;
                const double num = (lp - lm) / (2 * h);
                const double denom = std::max({std::abs(num), std::abs(p->grad(i, j)), 1e-8});
                CHECK(std::abs(num - p->grad(i, j)) / denom < tol);
            }
    }
}

}  // namespace

TEST_CASE("nn: dense layer gradients") {
    RngHandle rng(11, "dense");
    nn::Sequential<double> net({5, 1, 1});
    net.emplace<nn::Dense<double>>(5, 4, rng);
    net.emplace<nn::ReLU<double>>();
    net.emplace<nn::Dense<double>>(4, 3, rng);
    Mat<double> x = Mat<double>::Random(5, 3);
    check_gradients(net, x);
}

TEST_CASE("nn: conv layer gradients (stride 1 and 2)") {
    RngHandle rng(12, "conv");
    nn::Sequential<double> net({2, 6, 6});
    net.emplace<nn::Conv2d<double>>(net.shape(), 3, 3, 1, 1, rng);
    net.emplace<nn::LeakyReLU<double>>();
    net.emplace<nn::Conv2d<double>>(net.shape(), 2, 3, 2, 1, rng);
    net.emplace<nn::Sigmoid<double>>();
    Mat<double> x = Mat<double>::Random(2 * 6 * 6, 2);
    check_gradients(net, x);
}

TEST_CASE("nn: pooling gradients") {
    RngHandle rng(13, "pool");
    nn::Sequential<double> net({2, 8, 8});
    net.emplace<nn::Conv2d<double>>(net.shape(), 2, 3, 1, 1, rng);
    net.emplace<nn::ReLU<double>>();
    net.emplace<nn::AvgPool2<double>>(net.shape());
    net.emplace<nn::GlobalAvgPool<double>>(net.shape());
    Mat<double> x = Mat<double>::Random(2 * 8 * 8, 2);
    check_gradients(net, x);
}

TEST_CASE("nn: residual block gradients") {
    RngHandle rng(14, "res");
    nn::Sequential<double> net({2, 8, 8});
    net.emplace<nn::ResidualBlock<double>>(net.shape(), 4, 2, rng);  // projected skip
    net.emplace<nn::ResidualBlock<double>>(net.shape(), 4, 1, rng);  // identity skip
    Mat<double> x = Mat<double>::Random(2 * 8 * 8, 2);
    check_gradients(net, x);
}

TEST_CASE("nn: softmax cross-entropy gradient") {
    Mat<double> logits = Mat<double>::Random(3, 4);
    std::vector<int> labels = {0, 2, 1, 2};
    Mat<double> dlogits;
    nn::softmax_cross_entropy(logits, labels, &dlogits);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Mat<double> lp = logits, lm = logits;
            lp(i, j) += h;
            lm(i, j) -= h;
            const double num = (nn::softmax_cross_entropy(lp, labels) -
                                nn::softmax_cross_entropy(lm, labels)) /
                               (2 * h);
            CHECK(dlogits(i, j) == doctest::Approx(num).epsilon(1e-4));
        }
}

TEST_CASE("nn: bce-with-logits gradient and values") {
    Mat<double> logits = Mat<double>::Random(1, 5) * 2.0;
    for (double target : {0.0, 1.0}) {
        Mat<double> dl;
        nn::bce_with_logits(logits, target, &dl);
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < logits.cols(); ++i) {
            Mat<double> lp = logits, lm = logits;
            lp(0, i) += h;
            lm(0, i) -= h;
            const double num =
                (nn::bce_with_logits(lp, target) - nn::bce_with_logits(lm, target)) / (2 * h);
            CHECK(dl(0, i) == doctest::Approx(num).epsilon(1e-4));
        }
    }
    // -log(sigmoid(l)) at l=0 is log 2
    Mat<double> zero = Mat<double>::Zero(1, 1);
    CHECK(nn::bce_with_logits(zero, 1.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("nn: adam drives a quadratic to its minimum") {
    nn::Param<double> p;
    p.init_zero(3, 1);
    p.value << 5.0, -3.0, 2.0;
    nn::Adam<double> adam({&p}, 0.1);
    for (int i = 0; i < 500; ++i) {
        p.grad = p.value;  // d/dx of 0.5*||x||^2
        adam.step();
    }
    CHECK(p.value.norm() < 1e-3);
}

TEST_CASE("nn: parameter serialization is float-exact") {
    RngHandle rng(15, "ser");
    nn::Sequential<float> a({4, 1, 1}), b({4, 1, 1});
    a.emplace<nn::Dense<float>>(4, 6, rng);
    a.emplace<nn::Dense<float>>(6, 2, rng);
    b.emplace<nn::Dense<float>>(4, 6, rng);
    b.emplace<nn::Dense<float>>(6, 2, rng);

    std::stringstream buf;
    nn::write_params(buf, a.params());
    nn::read_params(buf, b.params());
    auto pa = a.params(), pb = b.params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

    Mat<float> x = Mat<float>::Random(4, 3);
    CHECK(a.forward(x, false) == b.forward(x, false));
}
