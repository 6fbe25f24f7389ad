#pragma once

#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/rng.hpp"

namespace actsim::baselines {

/// Uniformly random grid action.
ActionValue random_action(const std::vector<ActionValue>& grid, RngStream& rng);

struct GPHyper {
    double signal_var = 1.0;
    Vec length_scales;      // per input dimension, after standardization
    double noise_var = 1e-6;  // observation jitter added to the diagonal
};

/// Exact Gaussian-process regressor with a squared-exponential kernel over
/// per-dimension standardized inputs. Targets are centered internally.
class GPSurrogate {
  public:
    struct Prediction {
        double mean = 0.0;
        double var = 0.0;  // latent (noise-free) posterior variance
    };

    /// Fit with fixed hyperparameters. Escalates the diagonal jitter a few
    /// decades if the Cholesky fails; throws FitFailedError when even that
    /// cannot make the kernel matrix positive definite.
    static GPSurrogate fit(const std::vector<Vec>& inputs, const Vec& targets,
                           const GPHyper& hyper);

    /// Grid-search hyperparameters on held-out predictive log density
    /// (every 5th sample held out), then refit on everything.
    static GPSurrogate fit_auto(const std::vector<Vec>& inputs, const Vec& targets);

    Prediction predict(const Vec& query) const;
    double best_observed() const { return best_observed_; }
    int n_samples() const { return static_cast<int>(x_.size()); }
    const GPHyper& hyper() const { return hyper_; }
    double jitter_used() const { return jitter_used_; }

  private:
    std::vector<Vec> x_;  // standardized training inputs
    Vec mean_in_, sd_in_;
    double mean_out_ = 0.0;
    double best_observed_ = 0.0;
    GPHyper hyper_;
    double jitter_used_ = 0.0;
    std::vector<double> chol_;  // lower-triangular factor, row-major n x n
    Vec alpha_;                 // K^-1 (y - mean)

    Vec standardize(const Vec& query) const;
    double kernel(const Vec& a, const Vec& b) const;
};

/// EI for improvement-as-increase: (m - best) Phi(z) + sigma phi(z) with
/// z = (m - best)/sigma; the sigma = 0 limit is max(0, m - best).
double expected_improvement(const GPSurrogate& surrogate, const Vec& query, double best_observed);

/// Argmax of expected improvement over grid actions at `state` (query is the
/// state with the action's b appended). Lowest index wins ties; a null or
/// under-sampled surrogate (< 2 points) falls back to random_action.
ActionValue gp_select_action(const GPSurrogate* surrogate, const Vec& state,
                             const std::vector<ActionValue>& grid, RngStream& rng);

}  // namespace actsim::baselines
