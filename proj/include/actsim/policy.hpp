#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/model.hpp"
#include "actsim/rng.hpp"
#include "actsim/uncertainty.hpp"

namespace actsim::policy {

struct EpsilonSchedule {
    double eps0 = 0.6;
    double decay = 5e-4;  // per training step
    double eps_min = 0.01;

    double at(long k) const {
        const double e = eps0 - static_cast<double>(k) * decay;
        return e > eps_min ? e : eps_min;
    }
};

/// Small feed-forward Q-network: two hidden layers of 64 ReLU units, one
/// output per grid action. Inputs are divided by fixed per-dimension scales.
/// Adam state lives inside so training can resume across calls.
class QNetwork {
  public:
    static constexpr int kHidden = 64;

    QNetwork(int state_dim, int n_actions, Vec input_scale = {});

    void init_params(RngStream& rng);  // He-normal weights, zero biases

    int state_dim() const { return state_dim_; }
    int n_actions() const { return n_actions_; }

    Vec q_values(const Vec& state) const;
    int argmax_action(const Vec& state) const;  // lowest-index tie-break

    /// MSE between Q(s_i, a_i) and frozen targets y_i, averaged over the batch.
    struct BatchRef {
        const Vec* s;
        int action_index;
    };
    double batch_loss(const std::vector<BatchRef>& batch, const Vec& targets) const;
    double batch_loss_and_grad(const std::vector<BatchRef>& batch, const Vec& targets,
                               Vec& grad) const;

    /// One Adam step on `grad` plus l2 * params weight decay.
    void adam_step(const Vec& grad, double lr, double l2);

    const Vec& params() const { return w_; }
    void set_params(const Vec& w);
    std::uint64_t param_hash() const;

    /// Flat binary checkpoint (versioned header; includes Adam state).
    void save(const std::string& path) const;
    static QNetwork load(const std::string& path);

  private:
    int state_dim_;
    int n_actions_;
    Vec scale_;
    Vec w_;  // [W1, b1, W2, b2, W3, b3] flat
    Vec adam_m_, adam_v_;
    long adam_t_ = 0;

    friend struct TrainState;
};

struct ReplayItem {
    Vec s;
    int action_index = 0;
    double r = 0.0;
    Vec s_next;
    bool terminal = false;
};

/// Fixed-capacity ring buffer; oldest entries are evicted first.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(size_t capacity = 100000);

    void push(ReplayItem item);
    size_t size() const { return items_.size(); }
    size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    const ReplayItem& operator[](size_t i) const { return items_[i]; }

    /// `k` distinct indices, uniform without replacement (Floyd's method).
    std::vector<size_t> sample_indices(int k, RngStream& rng) const;

  private:
    size_t capacity_;
    size_t head_ = 0;
    std::uint64_t inserted_ = 0;
    std::vector<ReplayItem> items_;
};

/// Exploration step: with probability eps a uniformly random grid action,
/// otherwise the greedy argmax (lowest index on ties).
ActionValue epsilon_greedy_action(const Vec& q_values, double eps,
                                  const std::vector<ActionValue>& grid, RngStream& rng);

struct DqnOptions {
    int batch = 64;
    double gamma = 0.99;
    double lr = 1e-3;
    double l2 = 1e-10;
    int episodes = 200;  // per training call
    int horizon = 12;
    int grad_steps_per_episode = 50;  // cap
    size_t replay_capacity = 100000;
};

/// One TD step: sample a batch, form targets r + gamma * max_a' Q(s', a')
/// (r alone on terminal steps), one Adam step on the MSE. Returns the loss.
double dqn_train_step(QNetwork& net, const ReplayBuffer& buffer, const DqnOptions& opts,
                      RngStream& rng);

/// Mutable training state persisted across Algorithm iterations: network,
/// replay buffer and the global environment-step counter driving epsilon.
struct TrainState {
    QNetwork net;
    ReplayBuffer buffer;
    long env_steps = 0;
    EpsilonSchedule schedule;

    TrainState(int state_dim, int n_actions, Vec input_scale, size_t replay_capacity,
               RngStream& init_rng);

    void save(const std::string& path) const;  // network + step counter
    void load_from(const std::string& path);
};

struct TrainLogRow {
    int iteration = 0;
    int episode = 0;
    double mean_loss = 0.0;
    double epsilon = 0.0;
    double mean_penalized_return = 0.0;
};

/// Episodic DQN training against `env` (normally the penalized twin).
/// Interleaves one buffer insertion and at most one gradient step per
/// environment step; diverged simulated episodes end early.
std::vector<TrainLogRow> train_policy(const Environment& env, TrainState& state,
                                      const DqnOptions& opts, int iteration_tag, RngStream& rng);

class GreedyPolicy : public Policy {
  public:
    GreedyPolicy(const QNetwork* net, std::vector<ActionValue> grid)
        : net_(net), grid_(std::move(grid)) {}
    ActionValue act(const Vec& state, RngStream&) const override {
        return grid_[static_cast<size_t>(net_->argmax_action(state))];
    }

  private:
    const QNetwork* net_;
    std::vector<ActionValue> grid_;
};

/// Digital-twin MDP with the uncertainty-penalized reward
/// r~(s,a,s') = r(s,a,s') - lambda * u(s,a). The penalty uses the plug-in
/// uncertainty under the previous policy and is cached per quantized
/// (state, action) bucket for the lifetime of this object (one iteration).
class PenalizedTwinEnv : public Environment {
  public:
    PenalizedTwinEnv(const TransitionModel* twin, const Environment* base, Mat cov,
                     const Policy* prev_policy, double lambda,
                     uncertainty::UncertaintyOptions uopts, SeedNode useed);

    int state_dim() const override { return base_->state_dim(); }
    int n_actions() const override { return base_->n_actions(); }
    ActionValue action(int index) const override { return base_->action(index); }
    Vec initial_state(RngStream& rng) const override { return base_->initial_state(rng); }
    Vec step_sample(const Vec& s, const ActionValue& a, RngStream& rng) const override {
        return twin_->sample(s, a, rng);
    }
    double reward(const Vec& s, const ActionValue& a, const Vec& s_next) const override;
    double reward_raw(const Vec& s, const ActionValue& a, const Vec& s_next) const override {
        return base_->reward_raw(s, a, s_next);
    }

    double penalty(const Vec& s, const ActionValue& a) const;  // lambda * u(s,a)
    size_t cache_size() const { return cache_.size(); }

  private:
    const TransitionModel* twin_;
    const Environment* base_;
    Mat cov_;
    const Policy* prev_policy_;
    double lambda_;
    uncertainty::UncertaintyOptions uopts_;
    SeedNode useed_;
    Vec bucket_scale_;
    mutable std::map<std::pair<std::vector<int>, int>, double> cache_;
};

}  // namespace actsim::policy
