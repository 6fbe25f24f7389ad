#pragma once

#include <string>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/rng.hpp"

namespace actsim {

/// A parametric Gaussian transition model s' = f(s,a;beta) + eps,
/// eps ~ N(0, diag(stddev^2)). `beta` is the masked calibration vector;
/// parameters outside the mask are fixed and contribute no Jacobian column.
class TransitionModel {
  public:
    virtual ~TransitionModel() = default;

    virtual int state_dim() const = 0;
    virtual int param_dim() const = 0;
    virtual Vec params() const = 0;
    virtual void set_params(const Vec& beta) = 0;
    virtual void param_bounds(Vec& lo, Vec& hi) const = 0;
    virtual std::vector<std::string> param_names() const = 0;

    /// Diagonal noise standard deviations, all > 0.
    virtual const Vec& noise_stddev() const = 0;

    /// Deterministic mean next state at the current parameters.
    virtual Vec mean(const Vec& s, const ActionValue& a) const = 0;

    /// Mean next state together with its Jacobian w.r.t. the masked
    /// parameters (state_dim x param_dim), by forward-mode differentiation.
    virtual void mean_and_jacobian(const Vec& s, const ActionValue& a, Vec& f, Mat& jac) const = 0;

    /// Post-noise projection onto the valid state set (identity by default).
    virtual Vec clamp_state(Vec s) const { return s; }

    Vec sample(const Vec& s, const ActionValue& a, RngStream& rng) const {
        Vec f = mean(s, a);
        const Vec& sd = noise_stddev();
        for (size_t i = 0; i < f.size(); ++i) f[i] += sd[i] * rng.normal();
        return clamp_state(std::move(f));
    }
};

}  // namespace actsim
