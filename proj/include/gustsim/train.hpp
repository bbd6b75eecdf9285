#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gustsim/policy.hpp"

namespace gustsim {

struct EnvStepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;      // episode over (termination or time limit)
    bool terminal = false;  // true MDP termination; used for bootstrap masking
};

/// Episodic environment driven by one rollout worker.
class RolloutEnv {
public:
    virtual ~RolloutEnv() = default;
    virtual int obs_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual int max_episode_steps() const = 0;
    virtual std::span<const double> action_scale() const = 0;
    virtual std::vector<double> reset(std::uint64_t episode_seed) = 0;
    virtual EnvStepResult step(std::span<const double> action) = 0;
};

using EnvFactory = std::function<std::unique_ptr<RolloutEnv>()>;

struct TrainCurvePoint {
    long step = 0;
    double train_return = 0.0;  // mean episode return since the last row
    double eval_return = 0.0;
    double alpha = 0.0;
    double critic_loss = 0.0;
};

struct TrainResult {
    Mlp<double> best_actor;
    double best_eval_return = 0.0;
    long best_step = 0;
    double final_eval_return = 0.0;
    long episodes = 0;
    std::vector<TrainCurvePoint> curve;
};

struct TrainOptions {
    SacHyperparams hp;
    std::uint64_t seed = 0;
    /// Abort when evaluation is still worse than a random policy after this
    /// fraction of the budget.
    double divergence_check_fraction = 0.2;
    bool verbose = false;
};

/// Runs SAC on episodic rollouts from the factory; single-threaded and
/// deterministic for a fixed seed. Returns the best-evaluation actor.
/// Network math runs in float32; the returned actor is widened to double.
TrainResult train_policy(const EnvFactory& factory, const TrainOptions& opts);

/// Mean return of `episodes` greedy rollouts on fixed derived seeds.
double evaluate_policy(RolloutEnv& env, const GaussianPolicy<double>& actor, int episodes,
                       std::uint64_t seed_base);

/// Mean return of uniform-random rollouts on the same seeds (the
/// divergence-abort reference).
double evaluate_random(RolloutEnv& env, int episodes, std::uint64_t seed_base, Rng& rng);

}  // namespace gustsim
