#include "actsim/calibration.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace actsim::calibration {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Vec inverse_variances(const TransitionModel& model) {
    const Vec& sd = model.noise_stddev();
    Vec inv(sd.size());
    for (size_t i = 0; i < sd.size(); ++i) {
        if (!(sd[i] > 0.0)) {
            throw std::invalid_argument("noise stddevs must be positive for the likelihood");
        }
        inv[i] = 1.0 / (sd[i] * sd[i]);
    }
    return inv;
}

double log_det_term(const TransitionModel& model) {
    const Vec& sd = model.noise_stddev();
    double acc = 0.0;
    for (double s : sd) acc += kLog2Pi + 2.0 * std::log(s);
    return -0.5 * acc;
}

double loglik_from_mean(const Vec& f, const Vec& s_next, const Vec& inv_var, double ld_term) {
    double q = 0.0;
    for (size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) throw DivergedError("diverged-model: non-finite mean transition", 0);
        const double r = s_next[i] - f[i];
        q += r * r * inv_var[i];
    }
    return -0.5 * q + ld_term;
}

struct EpochEval {
    double mean_ll = 0.0;
    Vec grad;  // of the mean log-likelihood
    int used = 0;
    int diverged = 0;
};

// Mean log-likelihood and its gradient over `idx`, skipping diverged samples.
EpochEval eval_with_grad(TransitionModel& model, const Dataset& data,
                         const std::vector<size_t>& idx, const Vec& inv_var, double ld_term) {
    const int d = model.param_dim();
    EpochEval out;
    out.grad.assign(static_cast<size_t>(d), 0.0);
    Vec f;
    Mat jac;
    for (size_t si : idx) {
        const TransitionSample& smp = data.samples[si];
        try {
            model.mean_and_jacobian(smp.s, smp.a, f, jac);
            out.mean_ll += loglik_from_mean(f, smp.s_next, inv_var, ld_term);
            for (size_t i = 0; i < f.size(); ++i) {
                const double w = (smp.s_next[i] - f[i]) * inv_var[i];
                for (int k = 0; k < d; ++k) {
                    out.grad[static_cast<size_t>(k)] += w * jac(static_cast<int>(i), k);
                }
            }
            ++out.used;
        } catch (const DivergedError&) {
            ++out.diverged;
        }
    }
    if (out.used > 0) {
        out.mean_ll /= out.used;
        for (double& g : out.grad) g /= out.used;
    }
    return out;
}

// Mean log-likelihood only (no jacobian), skipping diverged samples.
EpochEval eval_mean_only(TransitionModel& model, const Dataset& data,
                         const std::vector<size_t>& idx, const Vec& inv_var, double ld_term) {
    EpochEval out;
    for (size_t si : idx) {
        const TransitionSample& smp = data.samples[si];
        try {
            const Vec f = model.mean(smp.s, smp.a);
            out.mean_ll += loglik_from_mean(f, smp.s_next, inv_var, ld_term);
            ++out.used;
        } catch (const DivergedError&) {
            ++out.diverged;
        }
    }
    if (out.used > 0) out.mean_ll /= out.used;
    return out;
}

Vec clip_to_bounds(Vec beta, const Vec& lo, const Vec& hi) {
    for (size_t i = 0; i < beta.size(); ++i) beta[i] = std::min(std::max(beta[i], lo[i]), hi[i]);
    return beta;
}

using EigenMat = Eigen::MatrixXd;

EigenMat to_eigen(const Mat& m) {
    EigenMat e(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) e(i, j) = m(i, j);
    }
    return e;
}

Mat from_eigen(const EigenMat& e) {
    Mat m(static_cast<int>(e.rows()), static_cast<int>(e.cols()));
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) m(i, j) = e(i, j);
    }
    return m;
}

}  // namespace

double log_likelihood(const TransitionModel& model, const TransitionSample& sample) {
    if (sample.s_next.size() != static_cast<size_t>(model.state_dim())) {
        throw std::invalid_argument("sample dimension does not match the model");
    }
    const Vec inv_var = inverse_variances(model);
    const double ld = log_det_term(model);
    const Vec f = model.mean(sample.s, sample.a);
    return loglik_from_mean(f, sample.s_next, inv_var, ld);
}

double log_likelihood(TransitionModel& model, const TransitionSample& sample, const Vec& beta) {
    model.set_params(beta);
    return log_likelihood(static_cast<const TransitionModel&>(model), sample);
}

Vec log_likelihood_gradient(const TransitionModel& model, const TransitionSample& sample) {
    const Vec inv_var = inverse_variances(model);
    Vec f;
    Mat jac;
    model.mean_and_jacobian(sample.s, sample.a, f, jac);
    const int d = model.param_dim();
    Vec g(static_cast<size_t>(d), 0.0);
    for (size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) throw DivergedError("diverged-model: non-finite mean transition", 0);
        const double w = (sample.s_next[i] - f[i]) * inv_var[i];
        for (int k = 0; k < d; ++k) g[static_cast<size_t>(k)] += w * jac(static_cast<int>(i), k);
    }
    return g;
}

FitResult mle_fit(TransitionModel& model, const Dataset& data, const Vec& init,
                  const MleOptions& opts) {
    if (data.samples.empty()) throw std::invalid_argument("mle_fit: empty dataset");
    if (init.size() != static_cast<size_t>(model.param_dim())) {
        throw std::invalid_argument("mle_fit: init size does not match the model");
    }
    const Vec inv_var = inverse_variances(model);
    const double ld = log_det_term(model);

    Vec lo, hi;
    model.param_bounds(lo, hi);

    // Deterministic episode-level split: every k-th episode validates.
    std::vector<size_t> train_idx, val_idx;
    const int period = opts.val_fraction > 0.0
                           ? std::max(2, static_cast<int>(std::lround(1.0 / opts.val_fraction)))
                           : 0;
    for (size_t i = 0; i < data.samples.size(); ++i) {
        if (period > 0 && data.samples[i].episode % period == period - 1) {
            val_idx.push_back(i);
        } else {
            train_idx.push_back(i);
        }
    }
    const bool has_val = !val_idx.empty() && !train_idx.empty();
    if (!has_val) {
        train_idx.resize(data.samples.size());
        for (size_t i = 0; i < data.samples.size(); ++i) train_idx[i] = i;
        val_idx.clear();
    }

    std::ofstream diag;
    if (!opts.diagnostics_path.empty()) {
        diag.open(opts.diagnostics_path);
        if (!diag) throw ConfigError("cannot open fit diagnostics file: " + opts.diagnostics_path);
        diag << "epoch,train_loglik,val_loglik,grad_norm\n";
    }

    const Vec init_clipped = clip_to_bounds(init, lo, hi);
    Vec beta = init_clipped;

    const int d = model.param_dim();
    Vec m(static_cast<size_t>(d), 0.0), v(static_cast<size_t>(d), 0.0);
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    int t = 0;

    FitResult res;
    res.beta = beta;
    double best_val = -std::numeric_limits<double>::infinity();
    Vec best_beta = beta;
    int since_improve = 0;
    res.stopped_reason = "max_epochs";

    for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
        model.set_params(beta);
        const EpochEval tr = eval_with_grad(model, data, train_idx, inv_var, ld);
        if (tr.used == 0) {
            FitResult best;
            best.beta = has_val ? best_beta : beta;
            throw FitFailedError("fit-failed: every training sample diverged", best.beta);
        }
        double gn = 0.0;
        for (double g : tr.grad) gn += g * g;
        gn = std::sqrt(gn);

        double val_ll = 0.0;
        if (has_val) {
            const EpochEval va = eval_mean_only(model, data, val_idx, inv_var, ld);
            val_ll = va.used > 0 ? va.mean_ll : -std::numeric_limits<double>::infinity();
        }
        if (diag.is_open()) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", epoch, tr.mean_ll,
                          has_val ? val_ll : std::numeric_limits<double>::quiet_NaN(), gn);
            diag << buf;
        }

        res.epochs = epoch;
        res.train_ll = tr.mean_ll;
        res.val_ll = val_ll;
        res.grad_norm = gn;
        res.diverged_samples = tr.diverged;

        if (has_val) {
            if (val_ll > best_val + opts.min_delta) {
                best_val = val_ll;
                best_beta = beta;
                since_improve = 0;
            } else if (++since_improve >= opts.patience) {
                res.stopped_reason = "patience";
                break;
            }
        }
        if (gn < opts.grad_tol) {
            res.stopped_reason = "grad_tol";
            if (has_val && res.train_ll >= best_val) best_beta = beta;
            break;
        }

        ++t;
        for (int k = 0; k < d; ++k) {
            const size_t ks = static_cast<size_t>(k);
            m[ks] = b1 * m[ks] + (1.0 - b1) * tr.grad[ks];
            v[ks] = b2 * v[ks] + (1.0 - b2) * tr.grad[ks] * tr.grad[ks];
            const double mhat = m[ks] / (1.0 - std::pow(b1, t));
            const double vhat = v[ks] / (1.0 - std::pow(b2, t));
            beta[ks] += opts.lr * mhat / (std::sqrt(vhat) + adam_eps);
        }
        beta = clip_to_bounds(beta, lo, hi);
    }

    Vec final_beta = has_val ? best_beta : beta;

    // Never return a point that scores below the projected init on all data.
    std::vector<size_t> all_idx(data.samples.size());
    for (size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = i;
    model.set_params(final_beta);
    const EpochEval at_final = eval_mean_only(model, data, all_idx, inv_var, ld);
    model.set_params(init_clipped);
    const EpochEval at_init = eval_mean_only(model, data, all_idx, inv_var, ld);
    const double final_score =
        at_final.used > 0 ? at_final.mean_ll : -std::numeric_limits<double>::infinity();
    const double init_score =
        at_init.used > 0 ? at_init.mean_ll : -std::numeric_limits<double>::infinity();
    if (init_score > final_score) {
        final_beta = init_clipped;
        res.stopped_reason = "init-guard";
    }

    model.set_params(final_beta);
    res.beta = final_beta;
    res.diverged_samples = (init_score > final_score ? at_init : at_final).diverged;
    return res;
}

Mat CovarianceEstimate::finite_sample() const {
    Mat out = sigma;
    const double scale = n > 0 ? 1.0 / n : 1.0;
    for (double& x : out.a) x *= scale;
    return out;
}

CovarianceEstimate estimate_covariance(TransitionModel& model, const Dataset& data,
                                       const Vec& beta, const CovOptions& opts) {
    if (data.samples.empty()) throw std::invalid_argument("estimate_covariance: empty dataset");
    const int d = model.param_dim();
    if (beta.size() != static_cast<size_t>(d)) {
        throw std::invalid_argument("estimate_covariance: beta size does not match the model");
    }
    const Vec inv_var = inverse_variances(model);
    model.set_params(beta);

    EigenMat H = EigenMat::Zero(d, d);
    int used = 0;

    if (opts.mode == HessianMode::GaussNewton) {
        Vec f;
        Mat jac;
        for (const TransitionSample& smp : data.samples) {
            try {
                model.mean_and_jacobian(smp.s, smp.a, f, jac);
                for (size_t i = 0; i < f.size(); ++i) {
                    if (!std::isfinite(f[i])) throw DivergedError("diverged-model", 0);
                }
                const EigenMat J = to_eigen(jac);
                const Eigen::VectorXd w =
                    Eigen::Map<const Eigen::VectorXd>(inv_var.data(),
                                                      static_cast<long>(inv_var.size()));
                H += J.transpose() * w.asDiagonal() * J;
                ++used;
            } catch (const DivergedError&) {
            }
        }
    } else {
        // Central finite differences of the analytic mean-gradient; the column
        // average of -dg/dbeta_k is the observed information.
        std::vector<size_t> usable;
        const double ld = log_det_term(model);
        for (size_t i = 0; i < data.samples.size(); ++i) {
            try {
                const Vec f = model.mean(data.samples[i].s, data.samples[i].a);
                loglik_from_mean(f, data.samples[i].s_next, inv_var, ld);
                usable.push_back(i);
            } catch (const DivergedError&) {
            }
        }
        used = static_cast<int>(usable.size());
        if (used > 0) {
            auto grad_sum = [&](const Vec& at) {
                model.set_params(at);
                Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
                for (size_t i : usable) {
                    const Vec gi = log_likelihood_gradient(model, data.samples[i]);
                    for (int k = 0; k < d; ++k) g(k) += gi[static_cast<size_t>(k)];
                }
                return g;
            };
            for (int k = 0; k < d; ++k) {
                const double h = opts.fd_step * std::max(1.0, std::abs(beta[static_cast<size_t>(k)]));
                Vec bp = beta, bm = beta;
                bp[static_cast<size_t>(k)] += h;
                bm[static_cast<size_t>(k)] -= h;
                const Eigen::VectorXd col = (grad_sum(bp) - grad_sum(bm)) / (2.0 * h);
                H.col(k) = -col;
            }
            H = 0.5 * (H + H.transpose().eval());  // symmetrize FD noise
            model.set_params(beta);
        }
    }

    if (used == 0) throw std::invalid_argument("estimate_covariance: every sample diverged");
    H /= used;

    const double ridge = opts.ridge_scale * H.trace() / d;
    EigenMat Hr = H + ridge * EigenMat::Identity(d, d);

    Eigen::SelfAdjointEigenSolver<EigenMat> es(Hr);
    if (es.info() != Eigen::Success) {
        throw IllConditionedError("ill-conditioned: eigendecomposition failed",
                                  std::numeric_limits<double>::infinity());
    }
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(lmin > 0.0) || cond > 1e14) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "ill-conditioned: regularized information matrix (condition %.3g)", cond);
        throw IllConditionedError(buf, cond);
    }
    const EigenMat sigma =
        es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();

    CovarianceEstimate out;
    out.sigma = from_eigen(sigma);
    out.info = from_eigen(Hr);
    out.n = used;
    out.mode = opts.mode == HessianMode::GaussNewton ? "gauss-newton" : "fd-hessian";
    out.ridge = ridge;
    out.condition_number = cond;
    return out;
}

Mat conditional_fisher_info(const TransitionModel& model, const Vec& s, const ActionValue& a) {
    const Vec inv_var = inverse_variances(model);
    Vec f;
    Mat jac;
    model.mean_and_jacobian(s, a, f, jac);
    const int d = model.param_dim();
    Mat info(d, d);
    for (int p = 0; p < d; ++p) {
        for (int q = p; q < d; ++q) {
            double acc = 0.0;
            for (int i = 0; i < model.state_dim(); ++i) {
                acc += jac(i, p) * jac(i, q) * inv_var[static_cast<size_t>(i)];
            }
            info(p, q) = acc;
            info(q, p) = acc;
        }
    }
    return info;
}

Mat jacobian_mean(const TransitionModel& model, const Vec& s, const ActionValue& a) {
    Vec f;
    Mat jac;
    model.mean_and_jacobian(s, a, f, jac);
    return jac;
}

Mat fd_jacobian_mean(TransitionModel& model, const Vec& s, const ActionValue& a, double h_rel) {
    const Vec beta = model.params();
    const int d = model.param_dim();
    Mat jac(model.state_dim(), d);
    for (int k = 0; k < d; ++k) {
        const double h = h_rel * std::max(1.0, std::abs(beta[static_cast<size_t>(k)]));
        Vec bp = beta, bm = beta;
        bp[static_cast<size_t>(k)] += h;
        bm[static_cast<size_t>(k)] -= h;
        model.set_params(bp);
        const Vec fp = model.mean(s, a);
        model.set_params(bm);
        const Vec fm = model.mean(s, a);
        for (int i = 0; i < model.state_dim(); ++i) {
            jac(i, k) = (fp[static_cast<size_t>(i)] - fm[static_cast<size_t>(i)]) / (2.0 * h);
        }
    }
    model.set_params(beta);
    return jac;
}

}  // namespace actsim::calibration
