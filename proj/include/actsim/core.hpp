#pragma once

#include <memory>
#include <string>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/rng.hpp"

namespace actsim {

/// A medium-exchange decision: grid index plus the exchange fraction b it maps to.
struct ActionValue {
    int index = 0;
    double b = 0.0;
};

inline std::vector<ActionValue> make_action_grid(int n_actions) {
    std::vector<ActionValue> grid(n_actions);
    for (int i = 0; i < n_actions; ++i) {
        grid[i].index = i;
        grid[i].b = n_actions > 1 ? static_cast<double>(i) / (n_actions - 1) : 0.0;
    }
    return grid;
}

struct TransitionSample {
    Vec s;
    ActionValue a;
    Vec s_next;
    int episode = 0;
    int step = 0;
};

/// Ordered collection of observed transitions with episode bookkeeping.
struct Dataset {
    std::vector<TransitionSample> samples;

    int size() const { return static_cast<int>(samples.size()); }
    bool empty() const { return samples.empty(); }
    int n_episodes() const;
    void append(Vec s, ActionValue a, Vec s_next, int episode, int step);

    /// CSV schema: episode,step,s_0..s_{d-1},action_index,b,sprime_0..sprime_{d-1}
    void save_csv(const std::string& path) const;
    static Dataset load_csv(const std::string& path);
};

struct Trajectory {
    std::vector<Vec> states;  // horizon + 1 entries
    std::vector<ActionValue> actions;
    Vec rewards;      // shifted rewards, used for returns
    Vec rewards_raw;  // unshifted monetary rewards, reported alongside
};

class Policy {
  public:
    virtual ~Policy() = default;
    virtual ActionValue act(const Vec& state, RngStream& rng) const = 0;
};

class FixedActionPolicy : public Policy {
  public:
    explicit FixedActionPolicy(ActionValue a) : action_(a) {}
    ActionValue act(const Vec&, RngStream&) const override { return action_; }

  private:
    ActionValue action_;
};

class UniformRandomPolicy : public Policy {
  public:
    explicit UniformRandomPolicy(std::vector<ActionValue> grid) : grid_(std::move(grid)) {}
    ActionValue act(const Vec&, RngStream& rng) const override;

  private:
    std::vector<ActionValue> grid_;
};

/// Environment: something a policy can be rolled out against. Both the
/// physical-system emulator and the digital twin implement this.
class Environment {
  public:
    virtual ~Environment() = default;
    virtual int state_dim() const = 0;
    virtual int n_actions() const = 0;
    virtual ActionValue action(int index) const = 0;
    virtual Vec initial_state(RngStream& rng) const = 0;
    virtual Vec step_sample(const Vec& s, const ActionValue& a, RngStream& rng) const = 0;
    virtual double reward(const Vec& s, const ActionValue& a, const Vec& s_next) const = 0;
    virtual double reward_raw(const Vec& s, const ActionValue& a, const Vec& s_next) const = 0;
};

double discounted_return(const Vec& rewards, double gamma);

/// Roll one episode. Throws DivergedError (with the step index) if the
/// environment produces a non-finite state.
Trajectory rollout(const Environment& env, const Policy& policy, int horizon, RngStream& rng);

struct EvalResult {
    double mean_return = 0.0;
    double std_error = 0.0;
    double mean_return_raw = 0.0;
    int episodes = 0;
};

EvalResult evaluate_policy(const Environment& env, const Policy& policy, int episodes, int horizon,
                           double gamma, RngStream& rng);

}  // namespace actsim
