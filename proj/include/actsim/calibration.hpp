#pragma once

#include <string>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/model.hpp"

namespace actsim::calibration {

struct MleOptions {
    double lr = 1e-3;
    int max_epochs = 2000;
    int patience = 50;         // epochs without validation improvement
    double grad_tol = 1e-6;    // on the mean-log-likelihood gradient norm
    double val_fraction = 0.2; // 0 disables the validation split / early stopping
    double min_delta = 1e-9;
    std::string diagnostics_path;  // optional per-epoch CSV
};

struct FitResult {
    Vec beta;
    int epochs = 0;
    double train_ll = 0.0;
    double val_ll = 0.0;
    double grad_norm = 0.0;
    int diverged_samples = 0;  // samples skipped at the returned point
    std::string stopped_reason;
};

/// Gaussian transition log-density of one observed sample under the model's
/// current parameters: -1/2 (s'-f)' Sigma^-1 (s'-f) - 1/2 log det(2 pi Sigma).
double log_likelihood(const TransitionModel& model, const TransitionSample& sample);
double log_likelihood(TransitionModel& model, const TransitionSample& sample, const Vec& beta);

/// Gradient of the same log-density in the masked parameters: J' Sigma^-1 (s'-f).
Vec log_likelihood_gradient(const TransitionModel& model, const TransitionSample& sample);

/// Maximum-likelihood fit by full-batch Adam ascent on the mean log-likelihood,
/// with box-projection onto the parameter bounds after every step. Episodes are
/// split deterministically into train/validation (every k-th episode held out,
/// k = round(1/val_fraction)); early stopping restores the best-validation
/// point. The returned point never scores below the (projected) init on the
/// full dataset. Simulation-diverged samples are skipped; if every sample
/// diverges the fit fails with best-so-far parameters attached.
FitResult mle_fit(TransitionModel& model, const Dataset& data, const Vec& init,
                  const MleOptions& opts = {});

enum class HessianMode { GaussNewton, FdHessian };

struct CovOptions {
    HessianMode mode = HessianMode::GaussNewton;
    double ridge_scale = 1e-6;  // delta = ridge_scale * trace(info) / d
    double fd_step = 1e-6;      // relative step for FdHessian
};

struct CovarianceEstimate {
    Mat sigma;  // asymptotic (per-sample) parameter covariance
    Mat info;   // ridge-regularized average negative Hessian that was inverted
    int n = 0;  // samples that entered the average
    std::string mode;
    double ridge = 0.0;
    double condition_number = 0.0;

    /// Covariance of the estimate from these n samples: sigma / n.
    Mat finite_sample() const;
};

/// Inverse of the ridge-regularized average negative log-likelihood Hessian at
/// `beta`. GaussNewton averages J' Sigma^-1 J per sample; FdHessian central-
/// differences the analytic gradient. Throws IllConditionedError (with the
/// condition number) if the regularized matrix is still numerically singular.
CovarianceEstimate estimate_covariance(TransitionModel& model, const Dataset& data,
                                       const Vec& beta, const CovOptions& opts = {});

/// Fisher information of one (state, action) experiment at the model's current
/// parameters: J' Sigma^-1 J.
Mat conditional_fisher_info(const TransitionModel& model, const Vec& s, const ActionValue& a);

/// Jacobian of the mean transition in the masked parameters.
Mat jacobian_mean(const TransitionModel& model, const Vec& s, const ActionValue& a);

/// Central finite-difference Jacobian (step relative to parameter magnitude);
/// cross-check for the analytic path.
Mat fd_jacobian_mean(TransitionModel& model, const Vec& s, const ActionValue& a,
                     double h_rel = 1e-6);

}  // namespace actsim::calibration
