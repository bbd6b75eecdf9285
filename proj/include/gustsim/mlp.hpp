#pragma once

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "gustsim/errors.hpp"
#include "gustsim/rng.hpp"

namespace gustsim {

enum class Activation : std::uint32_t { linear = 0, relu = 1, tanh = 2 };

// Fully connected network with manual reverse-mode differentiation.
// Batches are stored column-wise (one sample per column) so layer
// evaluation is a single GEMM.
template <typename Scalar>
class Mlp {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Layer {
        Mat w;  // out x in
        Vec b;  // out
        Activation act = Activation::linear;
    };

    struct Workspace {
        Mat input;
        std::vector<Mat> post;  // activation output per layer
    };

    struct Grads {
        std::vector<Mat> dw;
        std::vector<Vec> db;

        void zero() {
            for (auto& m : dw) m.setZero();
            for (auto& v : db) v.setZero();
        }
    };

    Mlp() = default;

    /// dims = {in, h1, ..., out}; hidden layers use `hidden`, the last layer
    /// `output` activation.
    Mlp(const std::vector<int>& dims, Activation hidden, Activation output) {
        if (dims.size() < 2) throw ConfigError("mlp: need at least input and output dims");
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            Layer l;
            l.w = Mat::Zero(dims[i + 1], dims[i]);
            l.b = Vec::Zero(dims[i + 1]);
            l.act = (i + 2 == dims.size()) ? output : hidden;
            layers_.push_back(std::move(l));
        }
    }

    int input_dim() const { return static_cast<int>(layers_.front().w.cols()); }
    int output_dim() const { return static_cast<int>(layers_.back().w.rows()); }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    std::vector<int> dims() const {
        std::vector<int> d{input_dim()};
        for (const auto& l : layers_) d.push_back(static_cast<int>(l.w.rows()));
        return d;
    }

    /// Glorot-uniform weights, zero biases. `final_scale` shrinks the last
    /// layer (useful for policy heads that should start near zero).
    void init_random(Rng& rng, double final_scale = 1.0) {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& l = layers_[i];
            double fan_in = static_cast<double>(l.w.cols());
            double fan_out = static_cast<double>(l.w.rows());
            double limit = std::sqrt(6.0 / (fan_in + fan_out));
            if (i + 1 == layers_.size()) limit *= final_scale;
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                    l.w(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
            l.b.setZero();
        }
    }

    Mat forward(const Mat& x) const {
        Mat h = x;
        for (const auto& l : layers_) {
            Mat z = (l.w * h).colwise() + l.b;
            apply_activation(l.act, z);
            h = std::move(z);
        }
        return h;
    }

    const Mat& forward(const Mat& x, Workspace& ws) const {
        ws.input = x;
        ws.post.resize(layers_.size());
        const Mat* h = &ws.input;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            ws.post[i] = (layers_[i].w * (*h)).colwise() + layers_[i].b;
            apply_activation(layers_[i].act, ws.post[i]);
            h = &ws.post[i];
        }
        return ws.post.back();
    }

    Grads make_grads() const {
        Grads g;
        for (const auto& l : layers_) {
            g.dw.emplace_back(Mat::Zero(l.w.rows(), l.w.cols()));
            g.db.emplace_back(Vec::Zero(l.b.size()));
        }
        return g;
    }

    /// Accumulates parameter gradients into `grads` (when non-null) and
    /// returns dL/dinput. `dy` is dL/doutput with samples as columns.
    Mat backward(const Workspace& ws, const Mat& dy, Grads* grads) const {
        Mat delta = dy;
        for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
            const auto& post = ws.post[static_cast<std::size_t>(i)];
            switch (layers_[static_cast<std::size_t>(i)].act) {
                case Activation::linear:
                    break;
                case Activation::relu:
                    delta = delta.cwiseProduct(
                        (post.array() > Scalar(0)).template cast<Scalar>().matrix());
                    break;
                case Activation::tanh:
                    delta = delta.cwiseProduct(
                        (Scalar(1) - post.array().square()).matrix());
                    break;
            }
            const Mat& prev =
                (i == 0) ? ws.input : ws.post[static_cast<std::size_t>(i - 1)];
            if (grads) {
                grads->dw[static_cast<std::size_t>(i)].noalias() += delta * prev.transpose();
                grads->db[static_cast<std::size_t>(i)] += delta.rowwise().sum();
            }
            delta = (layers_[static_cast<std::size_t>(i)].w.transpose() * delta).eval();
        }
        return delta;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
        return n;
    }

    std::vector<double> get_params() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& l : layers_) {
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                    out.push_back(static_cast<double>(l.w(r, c)));
            for (Eigen::Index r = 0; r < l.b.size(); ++r)
                out.push_back(static_cast<double>(l.b(r)));
        }
        return out;
    }

    void set_params(const std::vector<double>& p) {
        if (p.size() != param_count()) throw ConfigError("mlp: parameter vector size mismatch");
        std::size_t k = 0;
        for (auto& l : layers_) {
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                    l.w(r, c) = static_cast<Scalar>(p[k++]);
            for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = static_cast<Scalar>(p[k++]);
        }
    }

    static std::vector<double> flatten(const Grads& g) {
        std::vector<double> out;
        for (std::size_t i = 0; i < g.dw.size(); ++i) {
            for (Eigen::Index r = 0; r < g.dw[i].rows(); ++r)
                for (Eigen::Index c = 0; c < g.dw[i].cols(); ++c)
                    out.push_back(static_cast<double>(g.dw[i](r, c)));
            for (Eigen::Index r = 0; r < g.db[i].size(); ++r)
                out.push_back(static_cast<double>(g.db[i](r)));
        }
        return out;
    }

    // Flat network container, version 1: all integers uint32 LE, all
    // weights float64 LE. Layout:
    //   magic 'G''S''N''T', version, n_layers,
    //   per layer: in, out, activation,
    //   per layer: weights row-major (out x in), then bias (out).
    void save(const std::string& path) const {
        static_assert(std::endian::native == std::endian::little);
        std::FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw ConfigError("cannot open for write: " + path);
        auto put_u32 = [f](std::uint32_t v) { std::fwrite(&v, 4, 1, f); };
        std::fwrite("GSNT", 1, 4, f);
        put_u32(1);
        put_u32(static_cast<std::uint32_t>(layers_.size()));
        for (const auto& l : layers_) {
            put_u32(static_cast<std::uint32_t>(l.w.cols()));
            put_u32(static_cast<std::uint32_t>(l.w.rows()));
            put_u32(static_cast<std::uint32_t>(l.act));
        }
        for (const auto& l : layers_) {
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
                    double v = static_cast<double>(l.w(r, c));
                    std::fwrite(&v, 8, 1, f);
                }
            for (Eigen::Index r = 0; r < l.b.size(); ++r) {
                double v = static_cast<double>(l.b(r));
                std::fwrite(&v, 8, 1, f);
            }
        }
        std::fclose(f);
    }

    static Mlp load(const std::string& path) {
        static_assert(std::endian::native == std::endian::little);
        std::FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw ConfigError("cannot open: " + path);
        auto fail = [&](const std::string& msg) {
            std::fclose(f);
            throw ConfigError(path + ": " + msg);
        };
        char magic[4];
        if (std::fread(magic, 1, 4, f) != 4 || std::string_view(magic, 4) != "GSNT")
            fail("not a GSNT network file");
        auto get_u32 = [&]() {
            std::uint32_t v = 0;
            if (std::fread(&v, 4, 1, f) != 1) fail("truncated header");
            return v;
        };
        std::uint32_t version = get_u32();
        if (version != 1) fail("unsupported version " + std::to_string(version));
        std::uint32_t n_layers = get_u32();
        if (n_layers == 0 || n_layers > 64) fail("implausible layer count");
        Mlp net;
        for (std::uint32_t i = 0; i < n_layers; ++i) {
            Layer l;
            std::uint32_t in = get_u32(), out = get_u32(), act = get_u32();
            if (act > 2) fail("unknown activation tag");
            l.w = Mat::Zero(out, in);
            l.b = Vec::Zero(out);
            l.act = static_cast<Activation>(act);
            net.layers_.push_back(std::move(l));
        }
        for (auto& l : net.layers_) {
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
                    double v;
                    if (std::fread(&v, 8, 1, f) != 1) fail("truncated weights");
                    l.w(r, c) = static_cast<Scalar>(v);
                }
            for (Eigen::Index r = 0; r < l.b.size(); ++r) {
                double v;
                if (std::fread(&v, 8, 1, f) != 1) fail("truncated bias");
                l.b(r) = static_cast<Scalar>(v);
            }
        }
        std::fclose(f);
        return net;
    }

private:
    static void apply_activation(Activation act, Mat& z) {
        switch (act) {
            case Activation::linear:
                break;
            case Activation::relu:
                z = z.cwiseMax(Scalar(0));
                break;
            case Activation::tanh:
                z = z.array().tanh().matrix();
                break;
        }
    }

    std::vector<Layer> layers_;
};

/// Adam with per-layer moment buffers.
template <typename Scalar>
class Adam {
public:
    using Mat = typename Mlp<Scalar>::Mat;
    using Vec = typename Mlp<Scalar>::Vec;

    Adam() = default;
    explicit Adam(const Mlp<Scalar>& net, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& l : net.layers()) {
            mw_.emplace_back(Mat::Zero(l.w.rows(), l.w.cols()));
            vw_.emplace_back(Mat::Zero(l.w.rows(), l.w.cols()));
            mb_.emplace_back(Vec::Zero(l.b.size()));
            vb_.emplace_back(Vec::Zero(l.b.size()));
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(Mlp<Scalar>& net, const typename Mlp<Scalar>::Grads& g) {
        ++t_;
        const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
        const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(beta1_, t_));
        const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(beta2_, t_));
        const Scalar alpha = static_cast<Scalar>(lr_) * std::sqrt(corr2) / corr1;
        const Scalar eps = static_cast<Scalar>(eps_);
        for (std::size_t i = 0; i < net.layers().size(); ++i) {
            auto& l = net.layers()[i];
            mw_[i] = b1 * mw_[i] + (Scalar(1) - b1) * g.dw[i];
            vw_[i] = (b2 * vw_[i].array() + (Scalar(1) - b2) * g.dw[i].array().square()).matrix();
            l.w.array() -= alpha * mw_[i].array() / (vw_[i].array().sqrt() + eps);
            mb_[i] = b1 * mb_[i] + (Scalar(1) - b1) * g.db[i];
            vb_[i] = (b2 * vb_[i].array() + (Scalar(1) - b2) * g.db[i].array().square()).matrix();
            l.b.array() -= alpha * mb_[i].array() / (vb_[i].array().sqrt() + eps);
        }
    }

private:
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<Mat> mw_, vw_;
    std::vector<Vec> mb_, vb_;
};

}  // namespace gustsim
