#include "gustsim/policy.hpp"

#include <cmath>
#include <unordered_set>

#include "gustsim/errors.hpp"

namespace gustsim {

std::array<double, kObsDim> build_observation(const DroneState& state,
                                              const std::array<double, 5>& wind_taps,
                                              ControllerMode mode, const ObsNormalization& n) {
    std::array<double, kObsDim> obs{};
    EulerAngles e = euler_angles(state.q);
    obs[0] = state.r.x / n.pos;
    obs[1] = state.r.y / n.pos;
    obs[2] = state.r.z / n.pos;
    obs[3] = e.roll / n.ang;
    obs[4] = e.pitch / n.ang;
    obs[5] = e.yaw / n.ang;
    obs[6] = state.v.x / n.vel;
    obs[7] = state.v.y / n.vel;
    obs[8] = state.v.z / n.vel;
    obs[9] = state.w.x / n.rate;
    obs[10] = state.w.y / n.rate;
    obs[11] = state.w.z / n.rate;
    if (mode == ControllerMode::wind_aware) {
        for (int i = 0; i < 5; ++i) obs[static_cast<std::size_t>(12 + i)] = wind_taps[static_cast<std::size_t>(i)] / n.wind;
    }
    return obs;
}

void SacHyperparams::validate() const {
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("sac: discount must be in (0,1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac: tau must be in (0,1]");
    if (batch_size < 1 || total_steps < 1 || steps_per_update < 1)
        throw ConfigError("sac: batch_size, total_steps, steps_per_update must be >= 1");
    if (buffer_capacity < static_cast<std::size_t>(batch_size))
        throw ConfigError("sac: buffer capacity below batch size");
    if (!(lr_actor > 0.0 && lr_critic > 0.0 && lr_alpha >= 0.0))
        throw ConfigError("sac: learning rates must be positive");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
    if (capacity == 0) throw ConfigError("replay buffer: zero capacity");
}

void ReplayBuffer::push(std::span<const double> obs, std::span<const double> act, double rew,
                        std::span<const double> next_obs, bool done) {
    std::scoped_lock lock(mu_);
    if (count_ < capacity_ && obs_.size() < capacity_ * static_cast<std::size_t>(obs_dim_)) {
        obs_.resize((count_ + 1) * static_cast<std::size_t>(obs_dim_));
        next_.resize((count_ + 1) * static_cast<std::size_t>(obs_dim_));
        act_.resize((count_ + 1) * static_cast<std::size_t>(action_dim_));
        rew_.resize(count_ + 1);
        done_.resize(count_ + 1);
    }
    std::size_t slot = head_;
    for (int i = 0; i < obs_dim_; ++i) {
        obs_[slot * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(i)] = static_cast<float>(obs[static_cast<std::size_t>(i)]);
        next_[slot * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(i)] = static_cast<float>(next_obs[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < action_dim_; ++i)
        act_[slot * static_cast<std::size_t>(action_dim_) + static_cast<std::size_t>(i)] = static_cast<float>(act[static_cast<std::size_t>(i)]);
    rew_[slot] = static_cast<float>(rew);
    done_[slot] = done ? 1 : 0;
    head_ = (head_ + 1) % capacity_;
    if (count_ < capacity_) ++count_;
}

std::size_t ReplayBuffer::size() const {
    std::scoped_lock lock(mu_);
    return count_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(int batch_size, Rng& rng) const {
    std::size_t n = size();
    if (static_cast<std::size_t>(batch_size) > n)
        throw ConfigError("replay buffer: batch larger than stored transitions");
    // Floyd's algorithm: uniform without replacement in O(batch) draws.
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    std::unordered_set<std::size_t> seen;
    for (std::size_t i = n - static_cast<std::size_t>(batch_size); i < n; ++i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(i + 1));
        if (seen.contains(j)) j = i;
        seen.insert(j);
        out.push_back(j);
    }
    return out;
}

template <typename Scalar>
Batch<Scalar> ReplayBuffer::sample(int batch_size, Rng& rng) const {
    auto idx = sample_indices(batch_size, rng);
    std::scoped_lock lock(mu_);
    Batch<Scalar> b;
    const Eigen::Index bs = batch_size;
    b.obs.resize(obs_dim_, bs);
    b.next_obs.resize(obs_dim_, bs);
    b.act.resize(action_dim_, bs);
    b.rew.resize(bs);
    b.done.resize(bs);
    for (Eigen::Index c = 0; c < bs; ++c) {
        std::size_t s = idx[static_cast<std::size_t>(c)];
        for (int i = 0; i < obs_dim_; ++i) {
            b.obs(i, c) = static_cast<Scalar>(obs_[s * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(i)]);
            b.next_obs(i, c) = static_cast<Scalar>(next_[s * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < action_dim_; ++i)
            b.act(i, c) = static_cast<Scalar>(act_[s * static_cast<std::size_t>(action_dim_) + static_cast<std::size_t>(i)]);
        b.rew(c) = static_cast<Scalar>(rew_[s]);
        b.done(c) = static_cast<Scalar>(done_[s]);
    }
    return b;
}

template Batch<float> ReplayBuffer::sample<float>(int, Rng&) const;
template Batch<double> ReplayBuffer::sample<double>(int, Rng&) const;

template <typename Scalar>
Sac<Scalar>::Sac(int obs_dim, int action_dim, const std::vector<int>& actor_hidden,
                 const std::vector<int>& critic_hidden, std::span<const double> action_scale,
                 const SacHyperparams& hp, std::uint64_t seed)
    : hp_(hp) {
    hp_.validate();
    Rng rng(derive_seed(seed, "sac-init"));
    actor_ = GaussianPolicy<Scalar>(obs_dim, action_dim, actor_hidden, rng, action_scale);

    std::vector<int> cdims{obs_dim + action_dim};
    for (int h : critic_hidden) cdims.push_back(h);
    cdims.push_back(1);
    critic1_ = Mlp<Scalar>(cdims, Activation::relu, Activation::linear);
    critic2_ = Mlp<Scalar>(cdims, Activation::relu, Activation::linear);
    critic1_.init_random(rng);
    critic2_.init_random(rng);
    target1_ = critic1_;
    target2_ = critic2_;

    actor_opt_ = Adam<Scalar>(actor_.net, hp_.lr_actor);
    critic1_opt_ = Adam<Scalar>(critic1_, hp_.lr_critic);
    critic2_opt_ = Adam<Scalar>(critic2_, hp_.lr_critic);
    log_alpha_ = std::log(hp_.init_alpha);
}

template <typename Scalar>
typename Sac<Scalar>::Mat Sac<Scalar>::draw_eps(Eigen::Index cols, Rng& rng) const {
    Mat eps(actor_.action_dim(), cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (int i = 0; i < actor_.action_dim(); ++i)
            eps(i, c) = static_cast<Scalar>(rng.normal());
    return eps;
}

namespace {

template <typename Mat, typename Vec>
Mat stack_obs_action(const Mat& obs, const Mat& act) {
    Mat x(obs.rows() + act.rows(), obs.cols());
    x.topRows(obs.rows()) = obs;
    x.bottomRows(act.rows()) = act;
    return x;
}

}  // namespace

template <typename Scalar>
typename Sac<Scalar>::CriticEval Sac<Scalar>::critic_loss_and_grads(const Batch<Scalar>& batch,
                                                                    const Mat& eps_next) const {
    const Eigen::Index b = batch.obs.cols();
    const Scalar alpha = static_cast<Scalar>(std::exp(log_alpha_));
    const Scalar gamma = static_cast<Scalar>(hp_.discount);

    auto next_sample = actor_.sample(batch.next_obs, eps_next);
    Mat next_in = stack_obs_action<Mat, Vec>(batch.next_obs, next_sample.action);
    Mat q1n = target1_.forward(next_in);
    Mat q2n = target2_.forward(next_in);

    Vec y(b);
    for (Eigen::Index c = 0; c < b; ++c) {
        Scalar qmin = std::min(q1n(0, c), q2n(0, c));
        y(c) = batch.rew(c) +
               gamma * (Scalar(1) - batch.done(c)) * (qmin - alpha * next_sample.log_prob(c));
    }

    Mat in = stack_obs_action<Mat, Vec>(batch.obs, batch.act);
    typename Mlp<Scalar>::Workspace ws1, ws2;
    Mat q1 = critic1_.forward(in, ws1);
    Mat q2 = critic2_.forward(in, ws2);

    CriticEval ev;
    ev.g1 = critic1_.make_grads();
    ev.g2 = critic2_.make_grads();
    Mat d1(1, b), d2(1, b);
    double loss = 0.0, qsum = 0.0;
    for (Eigen::Index c = 0; c < b; ++c) {
        Scalar e1 = q1(0, c) - y(c);
        Scalar e2 = q2(0, c) - y(c);
        loss += 0.5 * (static_cast<double>(e1) * static_cast<double>(e1) +
                       static_cast<double>(e2) * static_cast<double>(e2));
        d1(0, c) = e1 / static_cast<Scalar>(b);
        d2(0, c) = e2 / static_cast<Scalar>(b);
        qsum += static_cast<double>(q1(0, c));
    }
    ev.loss = loss / static_cast<double>(b);
    ev.mean_q = qsum / static_cast<double>(b);
    critic1_.backward(ws1, d1, &ev.g1);
    critic2_.backward(ws2, d2, &ev.g2);
    return ev;
}

template <typename Scalar>
typename Sac<Scalar>::ActorEval Sac<Scalar>::actor_loss_and_grads(const Batch<Scalar>& batch,
                                                                  const Mat& eps_actor) const {
    const Eigen::Index b = batch.obs.cols();
    const int d = actor_.action_dim();
    const Scalar alpha = static_cast<Scalar>(std::exp(log_alpha_));
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);

    auto s = actor_.sample(batch.obs, eps_actor);
    Mat in = stack_obs_action<Mat, Vec>(batch.obs, s.action);
    typename Mlp<Scalar>::Workspace ws1, ws2;
    Mat q1 = critic1_.forward(in, ws1);
    Mat q2 = critic2_.forward(in, ws2);

    double loss = 0.0;
    Mat pick1(1, b), pick2(1, b);
    for (Eigen::Index c = 0; c < b; ++c) {
        bool first = q1(0, c) <= q2(0, c);
        Scalar qmin = first ? q1(0, c) : q2(0, c);
        pick1(0, c) = first ? -inv_b : Scalar(0);
        pick2(0, c) = first ? Scalar(0) : -inv_b;
        loss += static_cast<double>(alpha * s.log_prob(c) - qmin);
    }
    loss /= static_cast<double>(b);

    // dJ/da through the selected critic, action rows of the input gradient.
    Mat din1 = critic1_.backward(ws1, pick1, nullptr);
    Mat din2 = critic2_.backward(ws2, pick2, nullptr);
    Mat g_a = din1.bottomRows(d) + din2.bottomRows(d);

    // Head gradient: means on top, log-stds below.
    Mat head_grad(2 * d, b);
    for (Eigen::Index c = 0; c < b; ++c) {
        for (int i = 0; i < d; ++i) {
            Scalar t = s.tanh_u(i, c);
            Scalar one_m_t2 = Scalar(1) - t * t;
            Scalar scale = actor_.action_scale(i);
            Scalar sig_eps = std::exp(s.log_std(i, c)) * s.eps(i, c);
            Scalar dlogp_dmu = Scalar(2) * t;
            Scalar dlogp_dls = Scalar(-1) + Scalar(2) * t * sig_eps;
            Scalar da_dmu = scale * one_m_t2;
            Scalar da_dls = scale * one_m_t2 * sig_eps;
            head_grad(i, c) = alpha * inv_b * dlogp_dmu + g_a(i, c) * da_dmu;
            head_grad(d + i, c) =
                (alpha * inv_b * dlogp_dls + g_a(i, c) * da_dls) * s.clamp_on(i, c);
        }
    }

    ActorEval ev;
    ev.loss = loss;
    ev.mean_log_prob = static_cast<double>(s.log_prob.sum()) / static_cast<double>(b);
    ev.g = actor_.net.make_grads();
    actor_.net.backward(s.ws, head_grad, &ev.g);
    return ev;
}

template <typename Scalar>
double Sac<Scalar>::alpha_loss(double log_alpha, double mean_log_prob, double target_entropy) {
    return -std::exp(log_alpha) * (mean_log_prob + target_entropy);
}

template <typename Scalar>
double Sac<Scalar>::alpha_grad(double log_alpha, double mean_log_prob, double target_entropy) {
    return -std::exp(log_alpha) * (mean_log_prob + target_entropy);
}

template <typename Scalar>
void Sac<Scalar>::polyak_update(double tau) {
    auto blend = [tau](Mlp<Scalar>& target, const Mlp<Scalar>& online) {
        for (std::size_t i = 0; i < target.layers().size(); ++i) {
            target.layers()[i].w =
                (1.0 - tau) * target.layers()[i].w + tau * online.layers()[i].w;
            target.layers()[i].b =
                (1.0 - tau) * target.layers()[i].b + tau * online.layers()[i].b;
        }
    };
    blend(target1_, critic1_);
    blend(target2_, critic2_);
}

template <typename Scalar>
SacLossReport Sac<Scalar>::update(const ReplayBuffer& buffer, Rng& rng) {
    Batch<Scalar> batch = buffer.sample<Scalar>(hp_.batch_size, rng);
    Mat eps_next = draw_eps(batch.obs.cols(), rng);
    Mat eps_actor = draw_eps(batch.obs.cols(), rng);

    CriticEval ce = critic_loss_and_grads(batch, eps_next);
    critic1_opt_.step(critic1_, ce.g1);
    critic2_opt_.step(critic2_, ce.g2);

    ActorEval ae = actor_loss_and_grads(batch, eps_actor);
    actor_opt_.step(actor_.net, ae.g);

    double a_loss = alpha_loss(log_alpha_, ae.mean_log_prob, hp_.target_entropy);
    if (hp_.lr_alpha > 0.0) {
        double g = alpha_grad(log_alpha_, ae.mean_log_prob, hp_.target_entropy);
        ++alpha_t_;
        alpha_m_ = 0.9 * alpha_m_ + 0.1 * g;
        alpha_v_ = 0.999 * alpha_v_ + 0.001 * g * g;
        double mhat = alpha_m_ / (1.0 - std::pow(0.9, alpha_t_));
        double vhat = alpha_v_ / (1.0 - std::pow(0.999, alpha_t_));
        log_alpha_ -= hp_.lr_alpha * mhat / (std::sqrt(vhat) + 1e-8);
    }

    polyak_update(hp_.tau);

    SacLossReport rep;
    rep.critic_loss = ce.loss;
    rep.actor_loss = ae.loss;
    rep.alpha_loss = a_loss;
    rep.alpha = std::exp(log_alpha_);
    rep.mean_q = ce.mean_q;
    rep.mean_log_prob = ae.mean_log_prob;
    if (!std::isfinite(rep.critic_loss) || !std::isfinite(rep.actor_loss) ||
        !std::isfinite(rep.alpha))
        throw TrainingFault("sac update produced a non-finite loss");
    return rep;
}

template class Sac<float>;
template class Sac<double>;
template struct GaussianPolicy<float>;
template struct GaussianPolicy<double>;

}  // namespace gustsim
