#include "doctest.h"

#include <Eigen/Dense>

#include <cmath>
#include <set>
#include <stdexcept>

#include "actsim/baselines.hpp"
#include "actsim/rng.hpp"

using namespace actsim;
using namespace actsim::baselines;

namespace {

// Reference posterior computed with a dense solve, replicating the
// standardization the surrogate applies (per-dimension mean/sd with a floor
// of one for constant dimensions, centered targets).
struct DenseGP {
    std::vector<Vec> zx;
    Vec mean_in, sd_in;
    double mean_out = 0.0;
    GPHyper hyper;
    Eigen::MatrixXd kinv;
    Eigen::VectorXd alpha;

    DenseGP(const std::vector<Vec>& inputs, const Vec& targets, const GPHyper& h) : hyper(h) {
        const int n = static_cast<int>(inputs.size());
        const size_t dim = inputs[0].size();
        mean_in.assign(dim, 0.0);
        sd_in.assign(dim, 0.0);
        for (const Vec& x : inputs)
            for (size_t i = 0; i < dim; ++i) mean_in[i] += x[i];
        for (size_t i = 0; i < dim; ++i) mean_in[i] /= n;
        for (const Vec& x : inputs)
            for (size_t i = 0; i < dim; ++i)
                sd_in[i] += (x[i] - mean_in[i]) * (x[i] - mean_in[i]);
        for (size_t i = 0; i < dim; ++i) {
            sd_in[i] = std::sqrt(sd_in[i] / n);
            if (!(sd_in[i] > 1e-12)) sd_in[i] = 1.0;
        }
        for (const Vec& x : inputs) zx.push_back(standardize(x));
        for (double y : targets) mean_out += y;
        mean_out /= n;

        Eigen::MatrixXd K(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) K(i, j) = kernel(zx[i], zx[j]);
        K += hyper.noise_var * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = targets[i] - mean_out;
        kinv = K.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
        alpha = kinv * y;
    }

    Vec standardize(const Vec& q) const {
        Vec z(q.size());
        for (size_t i = 0; i < q.size(); ++i) z[i] = (q[i] - mean_in[i]) / sd_in[i];
        return z;
    }
    double kernel(const Vec& a, const Vec& b) const {
        double q = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            const double d = (a[i] - b[i]) / hyper.length_scales[i];
            q += d * d;
        }
        return hyper.signal_var * std::exp(-0.5 * q);
    }
    GPSurrogate::Prediction predict(const Vec& query) const {
        const Vec zq = standardize(query);
        const int n = static_cast<int>(zx.size());
        Eigen::VectorXd ks(n);
        for (int i = 0; i < n; ++i) ks(i) = kernel(zq, zx[i]);
        GPSurrogate::Prediction p;
        p.mean = mean_out + ks.dot(alpha);
        const double var = hyper.signal_var - ks.dot(kinv * ks);
        p.var = var > 0.0 ? var : 0.0;
        return p;
    }
};

}  // namespace

TEST_CASE("random baseline action is uniform over the grid") {
    auto grid = make_action_grid(11);
    RngStream rng(271828);
    std::vector<int> counts(11, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[random_action(grid, rng).index];
    for (int i = 0; i < 11; ++i) {
        CHECK(std::abs(counts[i] / static_cast<double>(n) - 1.0 / 11) <= 0.02);
    }

    auto solo = make_action_grid(1);
    CHECK(random_action(solo, rng).index == 0);
    std::vector<ActionValue> empty;
    CHECK_THROWS_AS(random_action(empty, rng), std::invalid_argument);
}

TEST_CASE("gp with tiny noise interpolates its training data") {
    std::vector<Vec> inputs;
    Vec targets;
    for (int i = 0; i < 7; ++i) {
        const double x = 0.4 * i;
        inputs.push_back({x});
        targets.push_back(std::sin(x));
    }
    GPHyper hyper;
    hyper.noise_var = 1e-8;
    GPSurrogate gp = GPSurrogate::fit(inputs, targets, hyper);
    CHECK(gp.n_samples() == 7);
    CHECK(gp.best_observed() == doctest::Approx(std::sin(1.6)).epsilon(1e-12));
    for (int i = 0; i < 7; ++i) {
        auto p = gp.predict(inputs[i]);
        CHECK(p.mean == doctest::Approx(targets[i]).epsilon(1e-4));
        CHECK(p.var < 1e-4);
    }
    // posterior variance contracts near data and recovers far away
    CHECK(gp.predict({1.0}).var < gp.predict({25.0}).var);
    CHECK(gp.predict({25.0}).var == doctest::Approx(hyper.signal_var).epsilon(1e-6));
}

TEST_CASE("gp posterior matches a dense linear-algebra reference") {
    RngStream rng(5);
    std::vector<Vec> inputs;
    Vec targets;
    for (int i = 0; i < 12; ++i) {
        inputs.push_back({rng.uniform(-2.0, 2.0), rng.uniform(0.0, 1.0)});
        targets.push_back(std::cos(inputs.back()[0]) + 0.5 * inputs.back()[1]);
    }
    GPHyper hyper;
    hyper.signal_var = 1.7;
    hyper.length_scales = {0.8, 1.3};
    hyper.noise_var = 1e-4;

    GPSurrogate gp = GPSurrogate::fit(inputs, targets, hyper);
    DenseGP ref(inputs, targets, hyper);
    for (int t = 0; t < 5; ++t) {
        Vec q = {rng.uniform(-2.0, 2.0), rng.uniform(0.0, 1.0)};
        auto a = gp.predict(q);
        auto b = ref.predict(q);
        CHECK(std::abs(a.mean - b.mean) <= 1e-8);
        CHECK(std::abs(a.var - b.var) <= 1e-8);
    }
}

TEST_CASE("gp fit validates inputs and reports unsalvageable kernels") {
    std::vector<Vec> one = {{0.0}};
    CHECK_THROWS_AS(GPSurrogate::fit(one, {1.0}, GPHyper{}), std::invalid_argument);

    std::vector<Vec> ragged = {{0.0}, {1.0, 2.0}};
    CHECK_THROWS_AS(GPSurrogate::fit(ragged, {1.0, 2.0}, GPHyper{}), std::invalid_argument);

    GPHyper bad;
    bad.signal_var = 0.0;
    std::vector<Vec> xs = {{0.0}, {1.0}};
    CHECK_THROWS_AS(GPSurrogate::fit(xs, {1.0, 2.0}, bad), std::invalid_argument);

    GPHyper wrong_ls;
    wrong_ls.length_scales = {1.0, 1.0};
    CHECK_THROWS_AS(GPSurrogate::fit(xs, {1.0, 2.0}, wrong_ls), std::invalid_argument);

    // duplicated rows are rescued by escalated jitter
    std::vector<Vec> dup = {{1.0}, {1.0}, {1.0}};
    GPHyper zero_noise;
    zero_noise.noise_var = 0.0;
    GPSurrogate gp = GPSurrogate::fit(dup, {2.0, 2.0, 2.0}, zero_noise);
    CHECK(gp.jitter_used() > 0.0);
}

TEST_CASE("expected improvement closed form against monte carlo and limits") {
    std::vector<Vec> inputs = {{0.0}, {0.5}, {1.0}, {1.5}};
    Vec targets = {0.0, 0.4, 0.1, -0.3};
    GPHyper hyper;
    hyper.noise_var = 1e-2;
    GPSurrogate gp = GPSurrogate::fit(inputs, targets, hyper);

    Vec query = {0.75};
    auto p = gp.predict(query);
    REQUIRE(p.var > 1e-6);
    const double best = p.mean - 0.3 * std::sqrt(p.var);
    const double analytic = expected_improvement(gp, query, best);

    RngStream rng(2718);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double y = rng.normal(p.mean, std::sqrt(p.var));
        const double imp = y > best ? y - best : 0.0;
        sum += imp;
        sum_sq += imp * imp;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq - sum * sum / n) / (n - 1.0) / n);
    CHECK(std::abs(mean - analytic) <= 3 * se);

    // deeper incumbents can only shrink the improvement
    CHECK(expected_improvement(gp, query, best - 0.5) > analytic);
    CHECK(expected_improvement(gp, query, best + 0.5) < analytic);
}

TEST_CASE("expected improvement degenerates to the positive gap at zero variance") {
    GPHyper hyper;
    hyper.noise_var = 1e-10;
    std::vector<Vec> inputs = {{0.0}, {1.0}};
    Vec targets = {0.2, 0.8};
    GPSurrogate gp = GPSurrogate::fit(inputs, targets, hyper);

    auto p = gp.predict({1.0});  // essentially noiseless training point
    CHECK(expected_improvement(gp, {1.0}, p.mean + 1.0) <= 1e-8);
    CHECK(expected_improvement(gp, {1.0}, p.mean - 1.0) ==
          doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("auto-fitted hyperparameters come from the advertised grid") {
    RngStream rng(7);
    std::vector<Vec> inputs;
    Vec targets;
    for (int i = 0; i < 25; ++i) {
        inputs.push_back({0.1 * i});
        targets.push_back(std::sin(0.5 * inputs.back()[0]) + rng.normal(0.0, 0.01));
    }
    GPSurrogate gp = GPSurrogate::fit_auto(inputs, targets);
    CHECK(gp.n_samples() == 25);

    double var_y = 0.0, mean_y = 0.0;
    for (double y : targets) mean_y += y;
    mean_y /= 25;
    for (double y : targets) var_y += (y - mean_y) * (y - mean_y);
    var_y /= 25;
    bool sv_on_grid = false;
    for (double f : {0.25, 1.0, 4.0}) {
        if (std::abs(gp.hyper().signal_var - f * var_y) < 1e-12) sv_on_grid = true;
    }
    CHECK(sv_on_grid);
    bool nv_on_grid = false;
    for (double f : {1e-4, 1e-2, 1e-1}) {
        if (std::abs(gp.hyper().noise_var - f * var_y) < 1e-12) nv_on_grid = true;
    }
    CHECK(nv_on_grid);

    // the refit interpolates the smooth signal well
    for (int i = 2; i < 23; i += 5) {
        CHECK(std::abs(gp.predict(inputs[i]).mean - targets[i]) < 0.1);
    }

    // constant targets take the scale-free fallback without throwing
    Vec flat(25, 3.0);
    GPSurrogate fgp = GPSurrogate::fit_auto(inputs, flat);
    CHECK(fgp.predict({1.2}).mean == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("gp action selection maximizes expected improvement over the grid") {
    auto grid = make_action_grid(11);
    Vec state = {0.3, 0.9};

    std::vector<Vec> inputs;
    Vec targets;
    RngStream data_rng(11);
    for (int i = 0; i < 20; ++i) {
        const double b = data_rng.uniform();
        inputs.push_back({state[0], state[1], b});
        targets.push_back(-(b - 0.7) * (b - 0.7));  // peak at b = 0.7
    }
    GPSurrogate gp = GPSurrogate::fit_auto(inputs, targets);

    RngStream rng(13);
    ActionValue chosen = gp_select_action(&gp, state, grid, rng);
    size_t manual = 0;
    double best_ei = -1.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        Vec q = state;
        q.push_back(grid[i].b);
        const double ei = expected_improvement(gp, q, gp.best_observed());
        if (ei > best_ei) {
            best_ei = ei;
            manual = i;
        }
    }
    CHECK(chosen.index == static_cast<int>(manual));
}

TEST_CASE("gp action selection breaks exact ties toward the lowest index") {
    // Two identical training rows make the posterior depend only on the
    // distance from b = 0.5, so b = 0 and b = 1 tie exactly.
    std::vector<Vec> inputs = {{0.5}, {0.5}};
    Vec targets = {1.0, 1.0};
    GPSurrogate gp = GPSurrogate::fit(inputs, targets, GPHyper{});
    auto grid = make_action_grid(11);
    RngStream rng(17);
    ActionValue chosen = gp_select_action(&gp, {}, grid, rng);
    CHECK(chosen.index == 0);

    Vec q0 = {0.0}, q1 = {1.0};
    CHECK(expected_improvement(gp, q0, gp.best_observed()) ==
          expected_improvement(gp, q1, gp.best_observed()));
}

TEST_CASE("gp action selection falls back to random without a usable surrogate") {
    auto grid = make_action_grid(11);
    RngStream rng(19);
    std::set<int> seen;
    for (int i = 0; i < 500; ++i) seen.insert(gp_select_action(nullptr, {}, grid, rng).index);
    CHECK(seen.size() == 11);

    std::vector<ActionValue> empty;
    CHECK_THROWS_AS(gp_select_action(nullptr, {}, empty, rng), std::invalid_argument);
}
