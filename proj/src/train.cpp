#include "gustsim/train.hpp"

#include <cmath>
#include <cstdio>

#include "gustsim/errors.hpp"

namespace gustsim {

namespace {

Mlp<double> widen(const Mlp<float>& net) {
    Mlp<double> out(net.dims(), Activation::relu, Activation::linear);
    // Activation tags copy layer by layer; dims ctor only sets the shape.
    for (std::size_t i = 0; i < net.layers().size(); ++i)
        out.layers()[i].act = net.layers()[i].act;
    out.set_params(net.get_params());
    return out;
}

GaussianPolicy<double> widen_policy(const GaussianPolicy<float>& p) {
    GaussianPolicy<double> out;
    out.net = widen(p.net);
    out.action_scale = p.action_scale.cast<double>();
    return out;
}

double run_greedy_episode(RolloutEnv& env, const GaussianPolicy<double>& actor,
                          std::uint64_t seed) {
    std::vector<double> obs = env.reset(seed);
    double ret = 0.0;
    for (int i = 0; i < env.max_episode_steps(); ++i) {
        auto a = actor.act_mean(obs);
        EnvStepResult r = env.step(std::span<const double>(a.data(), static_cast<std::size_t>(env.action_dim())));
        ret += r.reward;
        obs = std::move(r.obs);
        if (r.done) break;
    }
    return ret;
}

}  // namespace

double evaluate_policy(RolloutEnv& env, const GaussianPolicy<double>& actor, int episodes,
                       std::uint64_t seed_base) {
    double total = 0.0;
    for (int e = 0; e < episodes; ++e)
        total += run_greedy_episode(env, actor, derive_seed(seed_base, static_cast<std::uint64_t>(e)));
    return total / episodes;
}

double evaluate_random(RolloutEnv& env, int episodes, std::uint64_t seed_base, Rng& rng) {
    double total = 0.0;
    auto scale = env.action_scale();
    std::vector<double> a(static_cast<std::size_t>(env.action_dim()));
    for (int e = 0; e < episodes; ++e) {
        std::vector<double> obs = env.reset(derive_seed(seed_base, static_cast<std::uint64_t>(e)));
        for (int i = 0; i < env.max_episode_steps(); ++i) {
            for (std::size_t k = 0; k < a.size(); ++k) a[k] = rng.uniform(-scale[k], scale[k]);
            EnvStepResult r = env.step(a);
            total += r.reward;
            obs = std::move(r.obs);
            if (r.done) break;
        }
    }
    return total / episodes;
}

TrainResult train_policy(const EnvFactory& factory, const TrainOptions& opts) {
    opts.hp.validate();
    std::unique_ptr<RolloutEnv> env = factory();
    std::unique_ptr<RolloutEnv> eval_env = factory();
    const int obs_dim = env->obs_dim();
    const int action_dim = env->action_dim();
    auto scale = env->action_scale();

    Sac<float> sac(obs_dim, action_dim, kActorHidden, kCriticHidden, scale, opts.hp, opts.seed);
    ReplayBuffer buffer(opts.hp.buffer_capacity, obs_dim, action_dim);

    Rng explore_rng(derive_seed(opts.seed, "explore"));
    Rng update_rng(derive_seed(opts.seed, "update"));
    Rng random_eval_rng(derive_seed(opts.seed, "random-eval"));
    const std::uint64_t episode_seed_base = derive_seed(opts.seed, "episodes");
    const std::uint64_t eval_seed_base = derive_seed(opts.seed, "eval");

    const double random_return =
        evaluate_random(*eval_env, opts.hp.eval_episodes, eval_seed_base, random_eval_rng);

    TrainResult result;
    result.best_eval_return = -1e300;

    long episode_index = 0;
    std::vector<double> obs = env->reset(derive_seed(episode_seed_base, 0));
    double episode_return = 0.0;
    int episode_len = 0;
    double return_acc = 0.0;
    long return_count = 0;
    SacLossReport last_losses;
    std::vector<double> action(static_cast<std::size_t>(action_dim));

    for (long step = 1; step <= opts.hp.total_steps; ++step) {
        if (step <= opts.hp.warmup_steps) {
            for (std::size_t k = 0; k < action.size(); ++k)
                action[k] = explore_rng.uniform(-scale[k], scale[k]);
        } else {
            auto a = sac.actor().act_stochastic(obs, explore_rng);
            for (std::size_t k = 0; k < action.size(); ++k) action[k] = a[k];
        }

        EnvStepResult r = env->step(action);
        buffer.push(obs, action, r.reward, r.obs, r.terminal);
        episode_return += r.reward;
        ++episode_len;
        obs = std::move(r.obs);

        if (r.done) {
            return_acc += episode_return;
            ++return_count;
            ++episode_index;
            obs = env->reset(derive_seed(episode_seed_base, static_cast<std::uint64_t>(episode_index)));
            episode_return = 0.0;
            episode_len = 0;
        }

        if (step > opts.hp.warmup_steps && step % opts.hp.steps_per_update == 0 &&
            buffer.size() >= static_cast<std::size_t>(opts.hp.batch_size)) {
            last_losses = sac.update(buffer, update_rng);
        }

        if (step % opts.hp.eval_interval == 0 || step == opts.hp.total_steps) {
            GaussianPolicy<double> snapshot = widen_policy(sac.actor());
            double eval_ret =
                evaluate_policy(*eval_env, snapshot, opts.hp.eval_episodes, eval_seed_base);
            TrainCurvePoint pt;
            pt.step = step;
            pt.train_return = return_count > 0 ? return_acc / return_count : 0.0;
            pt.eval_return = eval_ret;
            pt.alpha = last_losses.alpha;
            pt.critic_loss = last_losses.critic_loss;
            result.curve.push_back(pt);
            return_acc = 0.0;
            return_count = 0;
            if (opts.verbose)
                std::fprintf(stderr, "step %ld  eval %.3f  alpha %.4f  critic %.4f\n", step,
                             eval_ret, last_losses.alpha, last_losses.critic_loss);
            if (eval_ret > result.best_eval_return) {
                result.best_eval_return = eval_ret;
                result.best_step = step;
                result.best_actor = snapshot.net;
            }
            result.final_eval_return = eval_ret;
            if (step >= static_cast<long>(opts.divergence_check_fraction *
                                          static_cast<double>(opts.hp.total_steps)) &&
                eval_ret < random_return && result.best_eval_return < random_return) {
                throw TrainingFault(
                    "training diverged: eval return " + std::to_string(eval_ret) +
                    " is below the random-policy reference " + std::to_string(random_return) +
                    " after " + std::to_string(step) + " steps");
            }
        }
    }

    result.episodes = episode_index;
    return result;
}

}  // namespace gustsim
