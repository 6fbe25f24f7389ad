#include "actsim/baselines.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace actsim::baselines {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace

ActionValue random_action(const std::vector<ActionValue>& grid, RngStream& rng) {
    if (grid.empty()) throw std::invalid_argument("random_action: empty action grid");
    return grid[static_cast<size_t>(rng.uniform_int(static_cast<int>(grid.size())))];
}

Vec GPSurrogate::standardize(const Vec& query) const {
    if (query.size() != mean_in_.size()) {
        throw std::invalid_argument("GP query dimension does not match training inputs");
    }
    Vec z(query.size());
    for (size_t i = 0; i < query.size(); ++i) z[i] = (query[i] - mean_in_[i]) / sd_in_[i];
    return z;
}

double GPSurrogate::kernel(const Vec& a, const Vec& b) const {
    double q = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) / hyper_.length_scales[i];
        q += d * d;
    }
    return hyper_.signal_var * std::exp(-0.5 * q);
}

GPSurrogate GPSurrogate::fit(const std::vector<Vec>& inputs, const Vec& targets,
                             const GPHyper& hyper) {
    const int n = static_cast<int>(inputs.size());
    if (n < 2 || targets.size() != inputs.size()) {
        throw std::invalid_argument("GP fit needs >= 2 samples with matching targets");
    }
    const size_t dim = inputs[0].size();
    for (const Vec& x : inputs) {
        if (x.size() != dim) throw std::invalid_argument("GP inputs must share one dimension");
    }
    if (!hyper.length_scales.empty() && hyper.length_scales.size() != dim) {
        throw std::invalid_argument("length-scale count does not match the input dimension");
    }
    if (!(hyper.signal_var > 0.0) || !(hyper.noise_var >= 0.0)) {
        throw std::invalid_argument("GP hyperparameters must be positive");
    }

    GPSurrogate gp;
    gp.hyper_ = hyper;
    if (gp.hyper_.length_scales.empty()) gp.hyper_.length_scales.assign(dim, 1.0);

    gp.mean_in_.assign(dim, 0.0);
    gp.sd_in_.assign(dim, 0.0);
    for (const Vec& x : inputs) {
        for (size_t i = 0; i < dim; ++i) gp.mean_in_[i] += x[i];
    }
    for (size_t i = 0; i < dim; ++i) gp.mean_in_[i] /= n;
    for (const Vec& x : inputs) {
        for (size_t i = 0; i < dim; ++i) {
            const double d = x[i] - gp.mean_in_[i];
            gp.sd_in_[i] += d * d;
        }
    }
    for (size_t i = 0; i < dim; ++i) {
        gp.sd_in_[i] = std::sqrt(gp.sd_in_[i] / n);
        if (!(gp.sd_in_[i] > 1e-12)) gp.sd_in_[i] = 1.0;  // constant dimension
    }

    gp.x_.reserve(static_cast<size_t>(n));
    for (const Vec& x : inputs) gp.x_.push_back(gp.standardize(x));

    gp.mean_out_ = 0.0;
    for (double y : targets) gp.mean_out_ += y;
    gp.mean_out_ /= n;
    gp.best_observed_ = *std::max_element(targets.begin(), targets.end());

    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const double k = gp.kernel(gp.x_[static_cast<size_t>(i)], gp.x_[static_cast<size_t>(j)]);
            K(i, j) = k;
            K(j, i) = k;
        }
    }
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = targets[static_cast<size_t>(i)] - gp.mean_out_;

    double jitter = hyper.noise_var > 0.0 ? hyper.noise_var : 1e-10 * hyper.signal_var;
    const double jitter_cap = 1e-1 * hyper.signal_var + hyper.noise_var;
    Eigen::LLT<Eigen::MatrixXd> llt;
    while (true) {
        Eigen::MatrixXd Kj = K + jitter * Eigen::MatrixXd::Identity(n, n);
        llt.compute(Kj);
        if (llt.info() == Eigen::Success) break;
        jitter *= 10.0;
        if (jitter > jitter_cap) {
            throw FitFailedError("fit-failed: GP kernel matrix not positive definite", Vec{});
        }
    }
    gp.jitter_used_ = jitter;

    const Eigen::MatrixXd L = llt.matrixL();
    gp.chol_.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) gp.chol_[static_cast<size_t>(i) * n + j] = L(i, j);
    }
    const Eigen::VectorXd alpha = llt.solve(y);
    gp.alpha_.assign(alpha.data(), alpha.data() + n);
    return gp;
}

GPSurrogate::Prediction GPSurrogate::predict(const Vec& query) const {
    const int n = static_cast<int>(x_.size());
    if (n == 0) throw std::logic_error("GP predict before fit");
    const Vec q = standardize(query);
    Vec ks(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ks[static_cast<size_t>(i)] = kernel(q, x_[static_cast<size_t>(i)]);

    Prediction out;
    out.mean = mean_out_ + dot(ks, alpha_);

    // var = k(q,q) - ks' K^-1 ks via one forward substitution: L v = ks.
    Vec v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double acc = ks[static_cast<size_t>(i)];
        const size_t row = static_cast<size_t>(i) * n;
        for (int j = 0; j < i; ++j) acc -= chol_[row + static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
        v[static_cast<size_t>(i)] = acc / chol_[row + static_cast<size_t>(i)];
    }
    double var = hyper_.signal_var - dot(v, v);
    out.var = var > 0.0 ? var : 0.0;
    return out;
}

GPSurrogate GPSurrogate::fit_auto(const std::vector<Vec>& inputs, const Vec& targets) {
    const int n = static_cast<int>(inputs.size());
    if (n < 2) throw std::invalid_argument("GP fit needs >= 2 samples");

    double var_y = 0.0, mean_y = 0.0;
    for (double y : targets) mean_y += y;
    mean_y /= n;
    for (double y : targets) var_y += (y - mean_y) * (y - mean_y);
    var_y = var_y / n;
    if (!(var_y > 1e-300)) var_y = 1.0;  // constant targets: scale-free grid

    const double ls_grid[] = {0.5, 1.0, 2.0, 4.0};
    const double sv_grid[] = {0.25, 1.0, 4.0};
    const double nv_grid[] = {1e-4, 1e-2, 1e-1};

    // Deterministic hold-out: every 5th sample scores the candidate.
    std::vector<Vec> train_in;
    Vec train_y;
    std::vector<Vec> hold_in;
    Vec hold_y;
    for (int i = 0; i < n; ++i) {
        if (i % 5 == 4) {
            hold_in.push_back(inputs[static_cast<size_t>(i)]);
            hold_y.push_back(targets[static_cast<size_t>(i)]);
        } else {
            train_in.push_back(inputs[static_cast<size_t>(i)]);
            train_y.push_back(targets[static_cast<size_t>(i)]);
        }
    }
    const bool can_validate = train_in.size() >= 2 && !hold_in.empty();

    GPHyper best_hyper;
    best_hyper.signal_var = var_y;
    best_hyper.noise_var = 1e-2 * var_y;
    double best_score = -std::numeric_limits<double>::infinity();

    if (can_validate) {
        for (double ls : ls_grid) {
            for (double sv : sv_grid) {
                for (double nv : nv_grid) {
                    GPHyper h;
                    h.signal_var = sv * var_y;
                    h.noise_var = nv * var_y;
                    h.length_scales.assign(inputs[0].size(), ls);
                    double score = 0.0;
                    try {
                        const GPSurrogate gp = fit(train_in, train_y, h);
                        for (size_t i = 0; i < hold_in.size(); ++i) {
                            const Prediction p = gp.predict(hold_in[i]);
                            const double pv = p.var + h.noise_var;
                            const double r = hold_y[i] - p.mean;
                            score += -0.5 * (r * r / pv + std::log(pv) + kLog2Pi);
                        }
                    } catch (const FitFailedError&) {
                        continue;
                    }
                    if (score > best_score) {
                        best_score = score;
                        best_hyper = h;
                    }
                }
            }
        }
    }
    if (best_hyper.length_scales.empty()) best_hyper.length_scales.assign(inputs[0].size(), 1.0);
    return fit(inputs, targets, best_hyper);
}

double expected_improvement(const GPSurrogate& surrogate, const Vec& query,
                            double best_observed) {
    const GPSurrogate::Prediction p = surrogate.predict(query);
    const double sigma = std::sqrt(p.var);
    const double gap = p.mean - best_observed;
    if (sigma <= 0.0) return gap > 0.0 ? gap : 0.0;
    const double z = gap / sigma;
    const double ei = gap * normal_cdf(z) + sigma * normal_pdf(z);
    return ei > 0.0 ? ei : 0.0;
}

ActionValue gp_select_action(const GPSurrogate* surrogate, const Vec& state,
                             const std::vector<ActionValue>& grid, RngStream& rng) {
    if (grid.empty()) throw std::invalid_argument("gp_select_action: empty action grid");
    if (surrogate == nullptr || surrogate->n_samples() < 2) {
        return random_action(grid, rng);
    }
    size_t best = 0;
    double best_ei = -1.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        Vec query = state;
        query.push_back(grid[i].b);
        const double ei = expected_improvement(*surrogate, query, surrogate->best_observed());
        if (ei > best_ei) {
            best_ei = ei;
            best = i;
        }
    }
    return grid[best];
}

}  // namespace actsim::baselines
