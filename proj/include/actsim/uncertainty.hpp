#pragma once

#include <functional>
#include <string>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/model.hpp"
#include "actsim/rng.hpp"

namespace actsim::uncertainty {

struct UncertaintyOptions {
    double v_max = 10.0;        // clip for estimated values
    int rollouts = 8;           // per value estimate
    int horizon = 12;
    double gamma = 0.99;
    int w_draws = 16;           // next-state draws for the weight
    double reward_scale = 300.0;  // rewards divided by this, clipped to [0,1]
};

using RewardFn = std::function<double(const Vec&, const ActionValue&, const Vec&)>;

/// Dynamics a value rollout can sample from. The digital twin uses the
/// transition model; tabular test oracles can plug in categorical draws.
class RolloutDynamics {
  public:
    virtual ~RolloutDynamics() = default;
    virtual Vec sample_next(const Vec& s, const ActionValue& a, RngStream& rng) const = 0;
};

class ModelDynamics : public RolloutDynamics {
  public:
    explicit ModelDynamics(const TransitionModel* model) : model_(model) {}
    Vec sample_next(const Vec& s, const ActionValue& a, RngStream& rng) const override {
        return model_->sample(s, a, rng);
    }

  private:
    const TransitionModel* model_;
};

/// KL divergence between the transition laws at two parameter points for one
/// (state, action): same diagonal covariance, so 1/2 (f_a - f_b)' Sigma^-1 (f_a - f_b).
double kl_gaussian_transitions(TransitionModel& model, const Vec& s, const ActionValue& a,
                               const Vec& beta_a, const Vec& beta_b);

struct ValueEstimate {
    double value = 0.0;
    int rollouts_used = 0;
    int diverged = 0;
};

/// Monte Carlo mean of truncated discounted returns from `state`, with
/// rewards scaled into [0,1] and returns clipped to [0, v_max]. Diverged
/// rollouts are dropped and counted; throws DivergedError if none survive.
ValueEstimate estimate_value(const RolloutDynamics& dynamics, const Vec& state,
                             const Policy& policy, const RewardFn& reward,
                             const UncertaintyOptions& opts, RngStream& rng);

struct WeightEstimate {
    double w = 0.0;
    int draws_used = 0;
    int diverged = 0;
};

/// w-hat = 2 (1 + logmeanexp(V-hat(s')^2)) over next-state draws s' ~ model(s,a).
WeightEstimate weight_hat(const TransitionModel& model, const Vec& s, const ActionValue& a,
                          const Policy& policy, const RewardFn& reward,
                          const UncertaintyOptions& opts, RngStream& rng);

/// Shared composition sqrt(w * max(0, kl_like)); the plug-in path feeds the
/// trace term, the oracle path feeds the exact KL.
double compose_uncertainty(double w, double kl_like);

/// Trace of the product of two square matrices (sum_ij A_ij B_ji).
double trace_product(const Mat& a, const Mat& b);

struct UncertaintyEstimate {
    double u = 0.0;
    double w = 0.0;
    double trace = 0.0;  // trace term (plug-in) or KL (oracle)
};

/// Plug-in uncertainty u = sqrt(w-hat * max(0, Tr(I(beta;s,a) * cov))).
/// `cov` is used verbatim; callers decide the asymptotic-vs-finite-sample
/// scaling before the call.
UncertaintyEstimate uncertainty_plug_in(const TransitionModel& model, const Vec& s,
                                        const ActionValue& a, const Mat& cov,
                                        const Policy& policy, const RewardFn& reward,
                                        const UncertaintyOptions& opts, RngStream& rng);

/// Testbed-only oracle: sqrt(w-hat) * sqrt(KL(mu(beta_true) || mu(beta_hat))),
/// with the weight computed under beta_hat.
UncertaintyEstimate uncertainty_exact_oracle(TransitionModel& model, const Vec& s,
                                             const ActionValue& a, const Vec& beta_true,
                                             const Vec& beta_hat, const Policy& policy,
                                             const RewardFn& reward,
                                             const UncertaintyOptions& opts, RngStream& rng);

struct ActionUncertainty {
    int action_index = 0;
    double w = 0.0;
    double trace = 0.0;
    double u = 0.0;
    bool ok = false;
};

struct SelectionResult {
    ActionValue action;
    std::vector<ActionUncertainty> audit;  // one row per grid action
};

/// Evaluates the plug-in uncertainty at every grid action and returns the
/// maximizer (ties to the lowest index). Per-action RNG substreams keep the
/// evaluation order irrelevant. Throws SelectionFailedError if every action
/// diverges.
SelectionResult select_calibration_action(const TransitionModel& model, const Vec& state,
                                          const Mat& cov, const Policy& policy,
                                          const RewardFn& reward,
                                          const std::vector<ActionValue>& grid,
                                          const UncertaintyOptions& opts, const SeedNode& rng);

}  // namespace actsim::uncertainty
