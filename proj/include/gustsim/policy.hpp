#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "gustsim/control.hpp"
#include "gustsim/dynamics.hpp"
#include "gustsim/mlp.hpp"
#include "gustsim/rng.hpp"

namespace gustsim {

inline constexpr int kObsDim = 17;
inline constexpr int kActionDim = 4;
inline const std::vector<int> kActorHidden{512, 256, 128, 128};
inline const std::vector<int> kCriticHidden{256, 256};

/// Fixed affine observation scaling, identical at train and inference time.
struct ObsNormalization {
    double pos = 1.0;   // m
    double ang = kPi;   // rad
    double vel = 5.0;   // m/s
    double rate = 2.0;  // rad/s
    double wind = 6.0;  // m/s
};

/// Observation layout: r(3), euler(3), v(3), w(3), wind history(5).
/// In wind-unaware mode the wind slots are zeroed; the dimension stays 17.
std::array<double, kObsDim> build_observation(const DroneState& state,
                                              const std::array<double, 5>& wind_taps,
                                              ControllerMode mode, const ObsNormalization& n);

/// Tanh-squashed diagonal-Gaussian policy head over an MLP trunk.
/// The network's final layer has 2 * action_dim outputs: means then
/// log standard deviations (clamped to [-20, 2]).
template <typename Scalar>
struct GaussianPolicy {
    using Mat = typename Mlp<Scalar>::Mat;
    using Vec = typename Mlp<Scalar>::Vec;

    Mlp<Scalar> net;
    Vec action_scale;

    static constexpr double kLogStdMin = -20.0;
    static constexpr double kLogStdMax = 2.0;

    GaussianPolicy() = default;

    GaussianPolicy(int obs_dim, int action_dim, const std::vector<int>& hidden, Rng& rng,
                   std::span<const double> scale) {
        std::vector<int> dims{obs_dim};
        for (int h : hidden) dims.push_back(h);
        dims.push_back(2 * action_dim);
        net = Mlp<Scalar>(dims, Activation::relu, Activation::linear);
        net.init_random(rng, 0.01);
        action_scale = Vec(action_dim);
        for (int i = 0; i < action_dim; ++i) action_scale(i) = static_cast<Scalar>(scale[i]);
    }

    int obs_dim() const { return net.input_dim(); }
    int action_dim() const { return static_cast<int>(action_scale.size()); }

    struct Sample {
        Mat action;    // scaled, action_dim x B
        Mat tanh_u;    // pre-scale squashed values
        Mat mean;      // head means
        Mat log_std;   // clamped
        Mat clamp_on;  // 1 where log_std was inside the clamp
        Mat eps;       // the noise that generated the sample
        Vec log_prob;  // per sample
        typename Mlp<Scalar>::Workspace ws;
    };

    /// Reparameterized sample a = scale * tanh(mean + std * eps).
    Sample sample(const Mat& obs, const Mat& eps) const {
        Sample s;
        const Mat& head = net.forward(obs, s.ws);
        const int d = action_dim();
        const Eigen::Index b = obs.cols();
        s.mean = head.topRows(d);
        Mat raw_log_std = head.bottomRows(d);
        s.clamp_on = ((raw_log_std.array() > Scalar(kLogStdMin)) &&
                      (raw_log_std.array() < Scalar(kLogStdMax)))
                         .template cast<Scalar>()
                         .matrix();
        s.log_std = raw_log_std.array()
                        .min(Scalar(kLogStdMax))
                        .max(Scalar(kLogStdMin))
                        .matrix();
        s.eps = eps;
        Mat u = s.mean + (s.log_std.array().exp() * eps.array()).matrix();
        s.tanh_u = u.array().tanh().matrix();
        s.action = s.tanh_u.array().colwise() * action_scale.array();

        // log N(u; mean, std) reduces to -eps^2/2 - log_std - log(2 pi)/2.
        s.log_prob = Vec::Zero(b);
        for (Eigen::Index col = 0; col < b; ++col) {
            Scalar lp = 0;
            for (int i = 0; i < d; ++i) {
                Scalar e = eps(i, col);
                lp += Scalar(-0.5) * e * e - s.log_std(i, col) -
                      Scalar(0.5 * std::log(2.0 * kPi));
                lp -= log_one_minus_tanh_sq(u(i, col));
                lp -= std::log(action_scale(i));
            }
            s.log_prob(col) = lp;
        }
        return s;
    }

    /// Deterministic (mean) action for a single observation.
    std::array<double, kActionDim> act_mean(std::span<const double> obs) const {
        Mat x(obs_dim(), 1);
        for (int i = 0; i < obs_dim(); ++i) x(i, 0) = static_cast<Scalar>(obs[static_cast<std::size_t>(i)]);
        Mat head = net.forward(x);
        std::array<double, kActionDim> a{};
        for (int i = 0; i < action_dim(); ++i)
            a[static_cast<std::size_t>(i)] =
                static_cast<double>(std::tanh(head(i, 0)) * action_scale(i));
        return a;
    }

    std::array<double, kActionDim> act_stochastic(std::span<const double> obs, Rng& rng) const {
        Mat x(obs_dim(), 1);
        for (int i = 0; i < obs_dim(); ++i) x(i, 0) = static_cast<Scalar>(obs[static_cast<std::size_t>(i)]);
        Mat eps(action_dim(), 1);
        for (int i = 0; i < action_dim(); ++i) eps(i, 0) = static_cast<Scalar>(rng.normal());
        Sample s = sample(x, eps);
        std::array<double, kActionDim> a{};
        for (int i = 0; i < action_dim(); ++i) a[static_cast<std::size_t>(i)] = static_cast<double>(s.action(i, 0));
        return a;
    }

    /// Log-density of a given scaled action (strictly inside the bounds;
    /// boundary values are nudged an epsilon inside before inversion).
    double log_prob(std::span<const double> obs, std::span<const double> action) const {
        Mat x(obs_dim(), 1);
        for (int i = 0; i < obs_dim(); ++i) x(i, 0) = static_cast<Scalar>(obs[static_cast<std::size_t>(i)]);
        Mat head = net.forward(x);
        const int d = action_dim();
        double lp = 0.0;
        for (int i = 0; i < d; ++i) {
            double mean = static_cast<double>(head(i, 0));
            double log_std = std::clamp(static_cast<double>(head(d + i, 0)), kLogStdMin, kLogStdMax);
            double std_dev = std::exp(log_std);
            double scale = static_cast<double>(action_scale(i));
            double raw = action[static_cast<std::size_t>(i)] / scale;
            raw = std::clamp(raw, -1.0 + 1e-12, 1.0 - 1e-12);
            double u = std::atanh(raw);
            double z = (u - mean) / std_dev;
            lp += -0.5 * z * z - log_std - 0.5 * std::log(2.0 * kPi);
            lp -= static_cast<double>(log_one_minus_tanh_sq(static_cast<Scalar>(u)));
            lp -= std::log(scale);
        }
        return lp;
    }

    static Scalar log_one_minus_tanh_sq(Scalar u) {
        // log(1 - tanh^2 u) = 2 (log 2 - u - softplus(-2u)), stable for large |u|.
        Scalar two_u = Scalar(-2) * u;
        Scalar sp = two_u > Scalar(0) ? two_u + std::log1p(std::exp(-two_u))
                                      : std::log1p(std::exp(two_u));
        return Scalar(2) * (Scalar(std::log(2.0)) - u - sp);
    }
};

struct SacHyperparams {
    double discount = 0.99;
    double tau = 0.005;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double lr_alpha = 3e-4;
    int batch_size = 256;
    double target_entropy = -4.0;
    int steps_per_update = 1;
    long warmup_steps = 5000;
    long total_steps = 200000;
    std::size_t buffer_capacity = 1000000;
    long eval_interval = 10000;
    int eval_episodes = 5;
    double init_alpha = 1.0;

    void validate() const;
};

template <typename Scalar>
struct Batch {
    using Mat = typename Mlp<Scalar>::Mat;
    using Vec = typename Mlp<Scalar>::Vec;
    Mat obs;       // obs_dim x B
    Mat act;       // action_dim x B
    Vec rew;       // B
    Mat next_obs;  // obs_dim x B
    Vec done;      // B, 1.0 when terminal
};

/// Uniform-replay ring buffer. Appends may come from several rollout
/// workers; sampling is serialized by the caller's rng anyway.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim);

    void push(std::span<const double> obs, std::span<const double> act, double rew,
              std::span<const double> next_obs, bool done);
    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }

    /// Uniform without replacement within the batch.
    template <typename Scalar>
    Batch<Scalar> sample(int batch_size, Rng& rng) const;

    std::vector<std::size_t> sample_indices(int batch_size, Rng& rng) const;

private:
    std::size_t capacity_;
    int obs_dim_, action_dim_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    std::vector<float> obs_, act_, next_;
    std::vector<float> rew_;
    std::vector<unsigned char> done_;
    mutable std::mutex mu_;
};

struct SacLossReport {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double mean_q = 0.0;
    double mean_log_prob = 0.0;
};

/// Soft actor-critic with twin critics, a temperature parameter tuned
/// toward a target entropy, and Polyak-averaged target critics. All
/// gradients are computed in closed form against the Mlp backward pass.
template <typename Scalar>
class Sac {
public:
    using Mat = typename Mlp<Scalar>::Mat;
    using Vec = typename Mlp<Scalar>::Vec;
    using Grads = typename Mlp<Scalar>::Grads;

    Sac(int obs_dim, int action_dim, const std::vector<int>& actor_hidden,
        const std::vector<int>& critic_hidden, std::span<const double> action_scale,
        const SacHyperparams& hp, std::uint64_t seed);

    GaussianPolicy<Scalar>& actor() { return actor_; }
    const GaussianPolicy<Scalar>& actor() const { return actor_; }
    Mlp<Scalar>& critic1() { return critic1_; }
    Mlp<Scalar>& critic2() { return critic2_; }
    Mlp<Scalar>& target1() { return target1_; }
    Mlp<Scalar>& target2() { return target2_; }
    double log_alpha() const { return log_alpha_; }
    void set_log_alpha(double v) { log_alpha_ = v; }
    const SacHyperparams& hp() const { return hp_; }

    struct CriticEval {
        double loss = 0.0;
        Grads g1, g2;
        double mean_q = 0.0;
    };
    /// Twin-critic TD loss with entropy-regularized bootstrap target.
    /// Pure in the critic parameters given (batch, eps_next).
    CriticEval critic_loss_and_grads(const Batch<Scalar>& batch, const Mat& eps_next) const;

    struct ActorEval {
        double loss = 0.0;
        Grads g;
        double mean_log_prob = 0.0;
    };
    /// Reparameterized actor loss; pure in the actor parameters given
    /// (batch, eps_actor).
    ActorEval actor_loss_and_grads(const Batch<Scalar>& batch, const Mat& eps_actor) const;

    /// J(log alpha) = -exp(log alpha) * (mean_log_prob + target_entropy).
    static double alpha_loss(double log_alpha, double mean_log_prob, double target_entropy);
    static double alpha_grad(double log_alpha, double mean_log_prob, double target_entropy);

    /// One full update (critics, actor, temperature, Polyak averaging).
    SacLossReport update(const ReplayBuffer& buffer, Rng& rng);

    void polyak_update(double tau);

private:
    Mat draw_eps(Eigen::Index cols, Rng& rng) const;

    GaussianPolicy<Scalar> actor_;
    Mlp<Scalar> critic1_, critic2_, target1_, target2_;
    Adam<Scalar> actor_opt_, critic1_opt_, critic2_opt_;
    double log_alpha_ = 0.0;
    double alpha_m_ = 0.0, alpha_v_ = 0.0;
    long alpha_t_ = 0;
    SacHyperparams hp_;
};

extern template class Sac<float>;
extern template class Sac<double>;
extern template struct GaussianPolicy<float>;
extern template struct GaussianPolicy<double>;

}  // namespace gustsim
