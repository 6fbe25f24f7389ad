#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/model.hpp"
#include "actsim/rng.hpp"

namespace actsim {

/// Verification testbed with per-coordinate linear dynamics
///   f_i(s, a; beta) = beta_i * gain[a] * s_i,    s'_i ~ N(f_i, sigma_i^2).
/// The Jacobian in beta is diagonal, so Fisher information, the MLE and the
/// Gaussian KL all have closed forms to check the estimation stack against.
class LinearGaussianModel : public TransitionModel {
  public:
    LinearGaussianModel(Vec beta, Vec sigma, std::vector<double> gains)
        : beta_(std::move(beta)), sigma_(std::move(sigma)), gains_(std::move(gains)) {
        if (beta_.size() != sigma_.size() || beta_.empty() || gains_.empty()) {
            throw std::invalid_argument("linear model needs matching beta/sigma and >=1 gain");
        }
        for (double s : sigma_) {
            if (!(s > 0.0)) throw std::invalid_argument("noise stddevs must be positive");
        }
    }

    int state_dim() const override { return static_cast<int>(beta_.size()); }
    int param_dim() const override { return static_cast<int>(beta_.size()); }
    Vec params() const override { return beta_; }
    void set_params(const Vec& beta) override {
        if (beta.size() != beta_.size()) {
            throw std::invalid_argument("parameter vector size mismatch");
        }
        beta_ = beta;
    }
    void param_bounds(Vec& lo, Vec& hi) const override {
        lo.assign(beta_.size(), -1e6);
        hi.assign(beta_.size(), 1e6);
    }
    std::vector<std::string> param_names() const override {
        std::vector<std::string> names;
        for (size_t i = 0; i < beta_.size(); ++i) names.push_back("beta_" + std::to_string(i));
        return names;
    }
    const Vec& noise_stddev() const override { return sigma_; }

    int n_gains() const { return static_cast<int>(gains_.size()); }
    double gain(int action_index) const {
        if (action_index < 0 || action_index >= static_cast<int>(gains_.size())) {
            throw std::invalid_argument("action index out of range");
        }
        return gains_[static_cast<size_t>(action_index)];
    }

    Vec mean(const Vec& s, const ActionValue& a) const override {
        if (s.size() != beta_.size()) throw std::invalid_argument("state size mismatch");
        const double g = gain(a.index);
        Vec f(s.size());
        for (size_t i = 0; i < s.size(); ++i) f[i] = beta_[i] * g * s[i];
        return f;
    }

    void mean_and_jacobian(const Vec& s, const ActionValue& a, Vec& f, Mat& jac) const override {
        f = mean(s, a);
        const double g = gain(a.index);
        const int d = state_dim();
        jac = Mat(d, d);
        for (int i = 0; i < d; ++i) jac(i, i) = g * s[static_cast<size_t>(i)];
    }

  private:
    Vec beta_;
    Vec sigma_;
    std::vector<double> gains_;
};

/// Environment wrapper over LinearGaussianModel. Rewards are zero by default
/// (tests that need nontrivial returns supply their own reward shape).
class LinearGaussianEnv : public Environment {
  public:
    LinearGaussianEnv(const LinearGaussianModel* model, double init_lo = 0.5, double init_hi = 1.5)
        : model_(model), init_lo_(init_lo), init_hi_(init_hi) {}

    int state_dim() const override { return model_->state_dim(); }
    int n_actions() const override { return static_cast<int>(model_->n_gains()); }
    ActionValue action(int index) const override {
        const int n = n_actions();
        const double b = n > 1 ? static_cast<double>(index) / (n - 1) : 0.0;
        return ActionValue{index, b};
    }
    Vec initial_state(RngStream& rng) const override {
        Vec s(static_cast<size_t>(state_dim()));
        for (double& x : s) x = rng.uniform(init_lo_, init_hi_);
        return s;
    }
    Vec step_sample(const Vec& s, const ActionValue& a, RngStream& rng) const override {
        return model_->sample(s, a, rng);
    }
    double reward(const Vec&, const ActionValue&, const Vec&) const override { return 0.0; }
    double reward_raw(const Vec&, const ActionValue&, const Vec&) const override { return 0.0; }

  private:
    const LinearGaussianModel* model_;
    double init_lo_;
    double init_hi_;
};

}  // namespace actsim
