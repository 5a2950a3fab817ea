#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sage/rng.hpp"

// Minimal batch-first neural network core. Activations travel as matrices
// whose columns are flattened samples (channel-major c*H*W + r*W + c for
// feature maps). Templated on the scalar so training runs in float while
// gradient-check tests instantiate double.
namespace sage::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Shape3 {
    int c = 1, h = 1, w = 1;
    int size() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
    std::string str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

template <class T>
struct Param {
    Mat<T> value;
    Mat<T> grad;

    void init_zero(int rows, int cols) {
        value = Mat<T>::Zero(rows, cols);
        grad = Mat<T>::Zero(rows, cols);
    }
    void zero_grad() { grad.setZero(); }
};

enum class InitKind { he, xavier };

template <class T>
void random_init(Mat<T>& m, int fan_in, InitKind kind, RngHandle& rng) {
    const double scale = kind == InitKind::he ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = static_cast<T>(rng.normal(0.0, scale));
}

template <class T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Mat<T> forward(const Mat<T>& x, bool train) = 0;
    virtual Mat<T> backward(const Mat<T>& dy) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }
    virtual Shape3 out_shape(Shape3 in) const = 0;
};

template <class T>
class Dense : public Layer<T> {
public:
    Dense(int in, int out, RngHandle& rng, InitKind kind = InitKind::he, bool trainable = true)
        : in_(in), out_(out), trainable_(trainable) {
        w_.init_zero(out, in);
        b_.init_zero(out, 1);
        random_init(w_.value, in, kind, rng);
    }

    Mat<T> forward(const Mat<T>& x, bool train) override {
        if (x.rows() != in_) throw std::invalid_argument("Dense: input size mismatch");
        if (train) x_ = x;
        Mat<T> y = w_.value * x;
        y.colwise() += b_.value.col(0);
        return y;
    }

    Mat<T> backward(const Mat<T>& dy) override {
        if (trainable_) {
            w_.grad.noalias() += dy * x_.transpose();
            b_.grad.col(0).noalias() += dy.rowwise().sum();
        }
        return w_.value.transpose() * dy;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    Shape3 out_shape(Shape3) const override { return {out_, 1, 1}; }

    Param<T>& weight() { return w_; }
    Param<T>& bias() { return b_; }

private:
    int in_, out_;
    bool trainable_;
    Param<T> w_, b_;
    Mat<T> x_;
};

template <class T>
class Conv2d : public Layer<T> {
public:
    Conv2d(Shape3 in, int out_c, int ksize, int stride, int pad, RngHandle& rng,
           InitKind kind = InitKind::he, bool trainable = true)
        : in_(in), out_c_(out_c), k_(ksize), stride_(stride), pad_(pad), trainable_(trainable) {
        oh_ = (in.h + 2 * pad - ksize) / stride + 1;
        ow_ = (in.w + 2 * pad - ksize) / stride + 1;
        if (oh_ <= 0 || ow_ <= 0) throw std::invalid_argument("Conv2d: output collapses to zero");
        w_.init_zero(out_c, in.c * ksize * ksize);
        b_.init_zero(out_c, 1);
        random_init(w_.value, in.c * ksize * ksize, kind, rng);
    }

    Mat<T> forward(const Mat<T>& x, bool train) override {
        const int B = static_cast<int>(x.cols());
        if (x.rows() != in_.size()) throw std::invalid_argument("Conv2d: input size mismatch");
        const int npos = oh_ * ow_;
        Mat<T> col(in_.c * k_ * k_, static_cast<Eigen::Index>(npos) * B);
        for (int b = 0; b < B; ++b) im2col(x.col(b).data(), col, b * npos);
        Mat<T> y = w_.value * col;  // out_c x (npos*B)
        Mat<T> out(static_cast<Eigen::Index>(out_c_) * npos, B);
        for (int b = 0; b < B; ++b) {
            for (int oc = 0; oc < out_c_; ++oc) {
                const T bias = b_.value(oc, 0);
                T* dst = out.col(b).data() + static_cast<size_t>(oc) * npos;
                for (int p = 0; p < npos; ++p)
                    dst[p] = y(oc, static_cast<Eigen::Index>(b) * npos + p) + bias;
            }
        }
        if (train && trainable_) col_ = std::move(col);  // only needed for dW
        return out;
    }

    Mat<T> backward(const Mat<T>& dy) override {
        const int B = static_cast<int>(dy.cols());
        const int npos = oh_ * ow_;
        Mat<T> dY(out_c_, static_cast<Eigen::Index>(npos) * B);
        for (int b = 0; b < B; ++b)
            for (int oc = 0; oc < out_c_; ++oc) {
                const T* src = dy.col(b).data() + static_cast<size_t>(oc) * npos;
                for (int p = 0; p < npos; ++p) dY(oc, static_cast<Eigen::Index>(b) * npos + p) = src[p];
            }
        if (trainable_) {
            w_.grad.noalias() += dY * col_.transpose();
            b_.grad.col(0).noalias() += dY.rowwise().sum();
        }
        Mat<T> dcol = w_.value.transpose() * dY;
        Mat<T> dx = Mat<T>::Zero(in_.size(), B);
        for (int b = 0; b < B; ++b) col2im(dcol, b * npos, dx.col(b).data());
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    Shape3 out_shape(Shape3) const override { return {out_c_, oh_, ow_}; }

private:
    void im2col(const T* x, Mat<T>& col, int col_offset) const {
        const int hw = in_.h * in_.w;
        for (int oy = 0; oy < oh_; ++oy) {
            for (int ox = 0; ox < ow_; ++ox) {
                const int p = col_offset + oy * ow_ + ox;
                int row = 0;
                for (int ci = 0; ci < in_.c; ++ci) {
                    const T* xc = x + static_cast<size_t>(ci) * hw;
                    for (int ki = 0; ki < k_; ++ki) {
                        const int iy = oy * stride_ - pad_ + ki;
                        for (int kj = 0; kj < k_; ++kj, ++row) {
                            const int ix = ox * stride_ - pad_ + kj;
                            col(row, p) = (iy >= 0 && iy < in_.h && ix >= 0 && ix < in_.w)
                                              ? xc[iy * in_.w + ix]
                                              : T(0);
                        }
                    }
                }
            }
        }
    }

    void col2im(const Mat<T>& dcol, int col_offset, T* dx) const {
        const int hw = in_.h * in_.w;
        for (int oy = 0; oy < oh_; ++oy) {
            for (int ox = 0; ox < ow_; ++ox) {
                const int p = col_offset + oy * ow_ + ox;
                int row = 0;
                for (int ci = 0; ci < in_.c; ++ci) {
                    T* xc = dx + static_cast<size_t>(ci) * hw;
                    for (int ki = 0; ki < k_; ++ki) {
                        const int iy = oy * stride_ - pad_ + ki;
                        for (int kj = 0; kj < k_; ++kj, ++row) {
                            const int ix = ox * stride_ - pad_ + kj;
                            if (iy >= 0 && iy < in_.h && ix >= 0 && ix < in_.w)
                                xc[iy * in_.w + ix] += dcol(row, p);
                        }
                    }
                }
            }
        }
    }

    Shape3 in_;
    int out_c_, k_, stride_, pad_;
    int oh_, ow_;
    bool trainable_;
    Param<T> w_, b_;
    Mat<T> col_;
};

template <class T>
class AvgPool2 : public Layer<T> {
public:
    explicit AvgPool2(Shape3 in) : in_(in), oh_(in.h / 2), ow_(in.w / 2) {
        if (oh_ <= 0 || ow_ <= 0) throw std::invalid_argument("AvgPool2: input too small");
    }

    Mat<T> forward(const Mat<T>& x, bool) override {
        const int B = static_cast<int>(x.cols());
        Mat<T> out(static_cast<Eigen::Index>(in_.c) * oh_ * ow_, B);
        for (int b = 0; b < B; ++b) {
            const T* src = x.col(b).data();
            T* dst = out.col(b).data();
            for (int c = 0; c < in_.c; ++c) {
                const T* sc = src + static_cast<size_t>(c) * in_.h * in_.w;
                T* dc = dst + static_cast<size_t>(c) * oh_ * ow_;
                for (int r = 0; r < oh_; ++r)
                    for (int q = 0; q < ow_; ++q)
                        dc[r * ow_ + q] =
                            (sc[(2 * r) * in_.w + 2 * q] + sc[(2 * r) * in_.w + 2 * q + 1] +
                             sc[(2 * r + 1) * in_.w + 2 * q] + sc[(2 * r + 1) * in_.w + 2 * q + 1]) /
                            T(4);
            }
        }
        return out;
    }

    Mat<T> backward(const Mat<T>& dy) override {
        const int B = static_cast<int>(dy.cols());
        Mat<T> dx = Mat<T>::Zero(in_.size(), B);
        for (int b = 0; b < B; ++b) {
            const T* src = dy.col(b).data();
            T* dst = dx.col(b).data();
            for (int c = 0; c < in_.c; ++c) {
                const T* sc = src + static_cast<size_t>(c) * oh_ * ow_;
                T* dc = dst + static_cast<size_t>(c) * in_.h * in_.w;
                for (int r = 0; r < oh_; ++r)
                    for (int q = 0; q < ow_; ++q) {
                        const T g = sc[r * ow_ + q] / T(4);
                        dc[(2 * r) * in_.w + 2 * q] += g;
                        dc[(2 * r) * in_.w + 2 * q + 1] += g;
                        dc[(2 * r + 1) * in_.w + 2 * q] += g;
                        dc[(2 * r + 1) * in_.w + 2 * q + 1] += g;
                    }
            }
        }
        return dx;
    }

    Shape3 out_shape(Shape3 in) const override { return {in.c, oh_, ow_}; }

private:
    Shape3 in_;
    int oh_, ow_;
};

template <class T>
class GlobalAvgPool : public Layer<T> {
public:
    explicit GlobalAvgPool(Shape3 in) : in_(in) {}

    Mat<T> forward(const Mat<T>& x, bool) override {
        const int B = static_cast<int>(x.cols());
        const int hw = in_.h * in_.w;
        Mat<T> out(in_.c, B);
        for (int b = 0; b < B; ++b) {
            const T* src = x.col(b).data();
            for (int c = 0; c < in_.c; ++c) {
                T acc = 0;
                const T* sc = src + static_cast<size_t>(c) * hw;
                for (int i = 0; i < hw; ++i) acc += sc[i];
                out(c, b) = acc / static_cast<T>(hw);
            }
        }
        return out;
    }

    Mat<T> backward(const Mat<T>& dy) override {
        const int B = static_cast<int>(dy.cols());
        const int hw = in_.h * in_.w;
        Mat<T> dx(in_.size(), B);
        for (int b = 0; b < B; ++b) {
            T* dst = dx.col(b).data();
            for (int c = 0; c < in_.c; ++c) {
                const T g = dy(c, b) / static_cast<T>(hw);
                T* dc = dst + static_cast<size_t>(c) * hw;
                for (int i = 0; i < hw; ++i) dc[i] = g;
            }
        }
        return dx;
    }

    Shape3 out_shape(Shape3 in) const override { return {in.c, 1, 1}; }

private:
    Shape3 in_;
};

template <class T>
class ReLU : public Layer<T> {
public:
    Mat<T> forward(const Mat<T>& x, bool train) override {
        Mat<T> y = x.cwiseMax(T(0));
        if (train) y_ = y;
        return y;
    }
    Mat<T> backward(const Mat<T>& dy) override {
        return (y_.array() > T(0)).template cast<T>() * dy.array();
    }
    Shape3 out_shape(Shape3 in) const override { return in; }

private:
    Mat<T> y_;
};

template <class T>
class LeakyReLU : public Layer<T> {
public:
    explicit LeakyReLU(T alpha = T(0.2)) : alpha_(alpha) {}
    Mat<T> forward(const Mat<T>& x, bool train) override {
        if (train) x_ = x;
        return x.array().max(x.array() * alpha_);
    }
    Mat<T> backward(const Mat<T>& dy) override {
        Mat<T> dx = dy;
        for (Eigen::Index j = 0; j < dx.cols(); ++j)
            for (Eigen::Index i = 0; i < dx.rows(); ++i)
                if (x_(i, j) <= T(0)) dx(i, j) *= alpha_;
        return dx;
    }
    Shape3 out_shape(Shape3 in) const override { return in; }

private:
    T alpha_;
    Mat<T> x_;
};

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
class Sigmoid : public Layer<T> {
public:
    Mat<T> forward(const Mat<T>& x, bool train) override {
        Mat<T> y = x.unaryExpr([](T v) { return stable_sigmoid(v); });
        if (train) y_ = y;
        return y;
    }
    Mat<T> backward(const Mat<T>& dy) override {
        return dy.array() * y_.array() * (T(1) - y_.array());
    }
    Shape3 out_shape(Shape3 in) const override { return in; }

private:
    Mat<T> y_;
};

// conv-relu-conv plus identity (or strided 1x1 projection) skip, relu on the sum
template <class T>
class ResidualBlock : public Layer<T> {
public:
    ResidualBlock(Shape3 in, int out_c, int stride, RngHandle& rng)
        : conv1_(in, out_c, 3, stride, 1, rng),
          relu1_(),
          conv2_(conv1_.out_shape(in), out_c, 3, 1, 1, rng) {
        mid_ = conv1_.out_shape(in);
        if (stride != 1 || in.c != out_c)
            proj_ = std::make_unique<Conv2d<T>>(in, out_c, 1, stride, 0, rng);
    }

    Mat<T> forward(const Mat<T>& x, bool train) override {
        Mat<T> h = conv2_.forward(relu1_.forward(conv1_.forward(x, train), train), train);
        Mat<T> s = proj_ ? proj_->forward(x, train) : x;
        Mat<T> y = (h + s).cwiseMax(T(0));
        if (train) y_ = y;
        return y;
    }

    Mat<T> backward(const Mat<T>& dy) override {
        Mat<T> d = (y_.array() > T(0)).template cast<T>() * dy.array();
        Mat<T> dx = conv1_.backward(relu1_.backward(conv2_.backward(d)));
        if (proj_)
            dx += proj_->backward(d);
        else
            dx += d;
        return dx;
    }

    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> ps;
        for (auto* p : conv1_.params()) ps.push_back(p);
        for (auto* p : conv2_.params()) ps.push_back(p);
        if (proj_)
            for (auto* p : proj_->params()) ps.push_back(p);
        return ps;
    }

    Shape3 out_shape(Shape3) const override { return conv2_.out_shape(mid_); }

private:
    Conv2d<T> conv1_;
    ReLU<T> relu1_;
    Conv2d<T> conv2_;
    std::unique_ptr<Conv2d<T>> proj_;
    Shape3 mid_;
    Mat<T> y_;
};

template <class T>
class Sequential {
public:
    Sequential() = default;
    explicit Sequential(Shape3 in) : in_(in), cur_(in) {}

    template <class L, class... Args>
    L& emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        cur_ = layer->out_shape(cur_);
        layers_.push_back(std::move(layer));
        return ref;
    }

    Mat<T> forward(const Mat<T>& x, bool train) {
        Mat<T> h = x;
        for (auto& l : layers_) h = l->forward(h, train);
        return h;
    }

    Mat<T> backward(const Mat<T>& dy) {
        Mat<T> d = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
        return d;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps;
        for (auto& l : layers_)
            for (auto* p : l->params()) ps.push_back(p);
        return ps;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    Shape3 in_shape() const { return in_; }
    Shape3 shape() const { return cur_; }
    size_t layer_count() const { return layers_.size(); }
    Layer<T>& layer(size_t i) { return *layers_[i]; }

private:
    Shape3 in_{}, cur_{};
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <class T>
class Adam {
public:
    explicit Adam(std::vector<Param<T>*> params, double lr = 1e-3, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step() {
        ++t_;
        const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
        const T corr1 = static_cast<T>(1.0 - std::pow(beta1_, t_));
        const T corr2 = static_cast<T>(1.0 - std::pow(beta2_, t_));
        const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& g = params_[i]->grad;
            m_[i] = b1 * m_[i] + (T(1) - b1) * g;
            v_[i] = (b2 * v_[i].array() + (T(1) - b2) * g.array().square()).matrix();
            params_[i]->value.array() -=
                lr * (m_[i].array() / corr1) / ((v_[i].array() / corr2).sqrt() + eps);
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

private:
    std::vector<Param<T>*> params_;
    std::vector<Mat<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// --- losses -----------------------------------------------------------------

template <class T>
T softplus(T x) {
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// column-wise softmax
template <class T>
Mat<T> softmax(const Mat<T>& logits) {
    Mat<T> p = logits;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        T mx = p.col(j).maxCoeff();
        p.col(j) = (p.col(j).array() - mx).exp();
        p.col(j) /= p.col(j).sum();
    }
    return p;
}

// mean cross-entropy over the batch; optionally emits d(loss)/d(logits)
template <class T>
double softmax_cross_entropy(const Mat<T>& logits, const std::vector<int>& labels,
                             Mat<T>* dlogits = nullptr) {
    const int B = static_cast<int>(logits.cols());
    if (static_cast<int>(labels.size()) != B)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    Mat<T> p = softmax(logits);
    double loss = 0;
    for (int j = 0; j < B; ++j)
        loss -= std::log(std::max(static_cast<double>(p(labels[j], j)), 1e-12));
    loss /= B;
    if (dlogits) {
        *dlogits = p / T(B);
        for (int j = 0; j < B; ++j) (*dlogits)(labels[j], j) -= T(1) / T(B);
    }
    return loss;
}

// mean binary cross-entropy on logits; target is 0 or 1 for the whole batch
template <class T>
double bce_with_logits(const Mat<T>& logits, double target, Mat<T>* dlogits = nullptr) {
    const double B = static_cast<double>(logits.size());
    double loss = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
        for (Eigen::Index i = 0; i < logits.rows(); ++i)
            loss += static_cast<double>(softplus(logits(i, j))) -
                    target * static_cast<double>(logits(i, j));
    loss /= B;
    if (dlogits) {
        *dlogits = logits.unaryExpr([](T v) { return stable_sigmoid(v); });
        dlogits->array() -= static_cast<T>(target);
        *dlogits /= static_cast<T>(B);
    }
    return loss;
}

// --- parameter serialization (float32 blobs, little-endian host) ------------

template <class T>
void write_params(std::ostream& out, std::vector<Param<T>*> params) {
    const uint32_t count = static_cast<uint32_t>(params.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (auto* p : params) {
        const uint32_t rows = static_cast<uint32_t>(p->value.rows());
        const uint32_t cols = static_cast<uint32_t>(p->value.cols());
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        for (Eigen::Index j = 0; j < p->value.cols(); ++j)
            for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
                const float v = static_cast<float>(p->value(i, j));
                out.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
    }
}

template <class T>
void read_params(std::istream& in, std::vector<Param<T>*> params) {
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (count != params.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
    for (auto* p : params) {
        uint32_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        if (rows != static_cast<uint32_t>(p->value.rows()) ||
            cols != static_cast<uint32_t>(p->value.cols()))
            throw std::runtime_error("checkpoint: parameter shape mismatch");
        for (Eigen::Index j = 0; j < p->value.cols(); ++j)
            for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
                float v = 0;
                in.read(reinterpret_cast<char*>(&v), sizeof(v));
                p->value(i, j) = static_cast<T>(v);
            }
        if (!in) throw std::runtime_error("checkpoint: truncated parameter blob");
    }
}

}  // namespace sage::nn
