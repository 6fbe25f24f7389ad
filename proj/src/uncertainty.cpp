#include "actsim/uncertainty.hpp"

#include <cmath>

#include "actsim/calibration.hpp"

namespace actsim::uncertainty {

double kl_gaussian_transitions(TransitionModel& model, const Vec& s, const ActionValue& a,
                               const Vec& beta_a, const Vec& beta_b) {
    const Vec saved = model.params();
    model.set_params(beta_a);
    const Vec fa = model.mean(s, a);
    model.set_params(beta_b);
    const Vec fb = model.mean(s, a);
    model.set_params(saved);
    const Vec& sd = model.noise_stddev();
    double kl = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) {
        if (!(sd[i] > 0.0)) throw std::invalid_argument("KL requires positive noise stddevs");
        const double d = fa[i] - fb[i];
        kl += d * d / (sd[i] * sd[i]);
    }
    return 0.5 * kl;
}

ValueEstimate estimate_value(const RolloutDynamics& dynamics, const Vec& state,
                             const Policy& policy, const RewardFn& reward,
                             const UncertaintyOptions& opts, RngStream& rng) {
    if (opts.rollouts < 1) throw std::invalid_argument("estimate_value: rollouts must be >= 1");
    ValueEstimate out;
    double acc = 0.0;
    for (int r = 0; r < opts.rollouts; ++r) {
        try {
            Vec s = state;
            double ret = 0.0;
            double disc = 1.0;
            for (int t = 0; t < opts.horizon; ++t) {
                const ActionValue a = policy.act(s, rng);
                Vec s_next = dynamics.sample_next(s, a, rng);
                const double raw = reward(s, a, s_next);
                ret += disc * clamp(raw / opts.reward_scale, 0.0, 1.0);
                disc *= opts.gamma;
                s = std::move(s_next);
            }
            acc += clamp(ret, 0.0, opts.v_max);
            ++out.rollouts_used;
        } catch (const DivergedError&) {
            ++out.diverged;
        }
    }
    if (out.rollouts_used == 0) {
        throw DivergedError("estimate-value: every rollout diverged", opts.horizon);
    }
    out.value = acc / out.rollouts_used;
    return out;
}

WeightEstimate weight_hat(const TransitionModel& model, const Vec& s, const ActionValue& a,
                          const Policy& policy, const RewardFn& reward,
                          const UncertaintyOptions& opts, RngStream& rng) {
    if (opts.w_draws < 1) throw std::invalid_argument("weight_hat: draws must be >= 1");
    const ModelDynamics dynamics(&model);
    Vec v_squared;
    WeightEstimate out;
    for (int j = 0; j < opts.w_draws; ++j) {
        try {
            const Vec s_next = model.sample(s, a, rng);
            const ValueEstimate v = estimate_value(dynamics, s_next, policy, reward, opts, rng);
            v_squared.push_back(v.value * v.value);
            ++out.draws_used;
        } catch (const DivergedError&) {
            ++out.diverged;
        }
    }
    if (out.draws_used == 0) {
        throw DivergedError("weight-hat: every next-state draw diverged", 0);
    }
    out.w = 2.0 * (1.0 + logmeanexp(v_squared));
    return out;
}

double compose_uncertainty(double w, double kl_like) {
    const double t = kl_like > 0.0 ? kl_like : 0.0;
    return std::sqrt(w * t);
}

double trace_product(const Mat& a, const Mat& b) {
    if (a.cols != b.rows || a.rows != b.cols) {
        throw std::invalid_argument("trace_product: incompatible shapes");
    }
    double t = 0.0;
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) t += a(i, j) * b(j, i);
    }
    return t;
}

UncertaintyEstimate uncertainty_plug_in(const TransitionModel& model, const Vec& s,
                                        const ActionValue& a, const Mat& cov,
                                        const Policy& policy, const RewardFn& reward,
                                        const UncertaintyOptions& opts, RngStream& rng) {
    const Mat info = calibration::conditional_fisher_info(model, s, a);
    UncertaintyEstimate out;
    out.trace = trace_product(info, cov);
    const WeightEstimate w = weight_hat(model, s, a, policy, reward, opts, rng);
    out.w = w.w;
    out.u = compose_uncertainty(out.w, out.trace);
    return out;
}

UncertaintyEstimate uncertainty_exact_oracle(TransitionModel& model, const Vec& s,
                                             const ActionValue& a, const Vec& beta_true,
                                             const Vec& beta_hat, const Policy& policy,
                                             const RewardFn& reward,
                                             const UncertaintyOptions& opts, RngStream& rng) {
    const Vec saved = model.params();
    model.set_params(beta_hat);
    UncertaintyEstimate out;
    try {
        const WeightEstimate w = weight_hat(model, s, a, policy, reward, opts, rng);
        out.w = w.w;
    } catch (...) {
        model.set_params(saved);
        throw;
    }
    model.set_params(saved);
    out.trace = kl_gaussian_transitions(model, s, a, beta_true, beta_hat);
    out.u = compose_uncertainty(out.w, out.trace);
    return out;
}

SelectionResult select_calibration_action(const TransitionModel& model, const Vec& state,
                                          const Mat& cov, const Policy& policy,
                                          const RewardFn& reward,
                                          const std::vector<ActionValue>& grid,
                                          const UncertaintyOptions& opts, const SeedNode& rng) {
    if (grid.empty()) throw std::invalid_argument("select_calibration_action: empty action grid");
    SelectionResult res;
    res.audit.resize(grid.size());
    int best = -1;
    double best_u = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        ActionUncertainty& row = res.audit[i];
        row.action_index = grid[i].index;
        RngStream stream = rng.child("action").child(static_cast<uint64_t>(i)).stream();
        try {
            const UncertaintyEstimate est =
                uncertainty_plug_in(model, state, grid[i], cov, policy, reward, opts, stream);
            row.w = est.w;
            row.trace = est.trace;
            row.u = est.u;
            row.ok = true;
            if (best < 0 || est.u > best_u) {
                best = static_cast<int>(i);
                best_u = est.u;
            }
        } catch (const DivergedError&) {
            row.ok = false;
        }
    }
    if (best < 0) {
        throw SelectionFailedError("selection-failed: every candidate action diverged");
    }
    res.action = grid[static_cast<size_t>(best)];
    return res;
}

}  // namespace actsim::uncertainty
