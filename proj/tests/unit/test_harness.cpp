#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "actsim/harness.hpp"

using namespace actsim;
using namespace actsim::harness;

namespace {

ExperimentConfig light_config() {
    KVConfig cfg;
    cfg.set_str("run.arms", "actor-simulator,random");
    cfg.set_num("run.iterations", 3);
    cfg.set_num("run.init_episodes", 2);
    cfg.set_num("run.horizon", 4);
    cfg.set_num("run.replications", 2);
    cfg.set_num("run.eval_every", 2);
    cfg.set_num("run.eval_episodes", 3);
    cfg.set_num("run.final_eval_episodes", 4);
    cfg.set_num("run.n_actions", 5);
    cfg.set_num("run.seed", 424242);
    cfg.set_num("mle.max_epochs", 25);
    cfg.set_num("mle.patience", 5);
    cfg.set_num("uncertainty.rollouts", 2);
    cfg.set_num("uncertainty.w_draws", 2);
    cfg.set_num("uncertainty.horizon", 3);
    cfg.set_num("dqn.episodes", 3);
    cfg.set_num("dqn.batch", 16);
    cfg.set_num("dqn.replay_capacity", 1000);
    cfg.set_num("dqn.grad_steps_per_episode", 5);
    return ExperimentConfig::from_config(cfg);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const std::string& text) {
    return text.substr(0, text.find('\n'));
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("initial parameter guess is uniform on its box and respects bounds") {
    Vec beta_true = {2.0, 0.5, 3.0};
    Vec lo(3, 0.0), hi(3, 1e9);
    RngStream rng(1001);
    Vec mean(3, 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        Vec b = init_beta(beta_true, lo, hi, rng);
        for (int j = 0; j < 3; ++j) {
            CHECK(b[j] >= 1e-6 * beta_true[j]);
            CHECK(b[j] <= 4.0 * beta_true[j]);
            mean[j] += b[j];
        }
    }
    for (int j = 0; j < 3; ++j) {
        mean[j] /= n;
        // expectation is 2 beta*; the uniform spread gives 3 SE well under 2%
        CHECK(std::abs(mean[j] - 2.0 * beta_true[j]) <= 0.02 * 2.0 * beta_true[j]);
    }

    // tight upper bounds clip the draw
    Vec hi_tight = {2.5, 0.6, 3.5};
    for (int i = 0; i < 200; ++i) {
        Vec b = init_beta(beta_true, lo, hi_tight, rng);
        for (int j = 0; j < 3; ++j) CHECK(b[j] <= hi_tight[j]);
    }

    RngStream ra(7), rb(7);
    CHECK(init_beta(beta_true, lo, hi, ra) == init_beta(beta_true, lo, hi, rb));
    Vec short_lo(2, 0.0);
    CHECK_THROWS_AS(init_beta(beta_true, short_lo, hi, rng), std::invalid_argument);
}

TEST_CASE("student-t critical values match the reference table") {
    CHECK(t_critical_975(1) == doctest::Approx(12.706).epsilon(1e-12));
    CHECK(t_critical_975(10) == doctest::Approx(2.228).epsilon(1e-12));
    CHECK(t_critical_975(29) == doctest::Approx(2.045).epsilon(1e-12));
    CHECK(t_critical_975(35) == doctest::Approx(2.021).epsilon(1e-12));
    CHECK(t_critical_975(90) == doctest::Approx(1.980).epsilon(1e-12));
    CHECK(t_critical_975(100000) == doctest::Approx(1.960).epsilon(1e-12));
    CHECK_THROWS_AS(t_critical_975(0), std::invalid_argument);
}

TEST_CASE("experiment config defaults are valid and nested options inherit") {
    KVConfig empty;
    ExperimentConfig c = ExperimentConfig::from_config(empty);
    CHECK(c.arm == "actor-simulator");
    CHECK(c.arms.size() == 3);
    CHECK(c.iterations == 100);
    CHECK(c.horizon == 12);
    CHECK(c.gamma == 0.99);
    CHECK(c.penalty_c == 1.0);
    CHECK(c.substeps == 16);
    // the rollout horizon and discounts default to the run-level settings
    CHECK(c.uopts.horizon == 12);
    CHECK(c.uopts.gamma == 0.99);
    CHECK(c.dqn.gamma == 0.99);
    CHECK(c.dqn.horizon == 12);

    KVConfig cfg;
    cfg.set_num("run.horizon", 6);
    cfg.set_num("run.gamma", 0.9);
    ExperimentConfig d = ExperimentConfig::from_config(cfg);
    CHECK(d.uopts.horizon == 6);
    CHECK(d.dqn.horizon == 6);
    CHECK(d.dqn.gamma == 0.9);
    CHECK(d.uopts.gamma == 0.9);
    cfg.set_num("dqn.gamma", 0.5);
    CHECK(ExperimentConfig::from_config(cfg).dqn.gamma == 0.5);
}

TEST_CASE("experiment config rejects out-of-range settings") {
    auto expect_bad = [](const char* key, double value) {
        KVConfig cfg;
        cfg.set_num(key, value);
        CHECK_THROWS_AS(ExperimentConfig::from_config(cfg), ConfigError);
    };
    expect_bad("run.case_size", 25);
    expect_bad("run.iterations", 0);
    expect_bad("run.gamma", 1.0);
    expect_bad("run.penalty_c", -0.5);
    expect_bad("run.n_actions", 1);
    expect_bad("kinetics.substeps", 0);
    expect_bad("kinetics.noise_floor", 0.0);
    expect_bad("mle.val_fraction", 1.0);
    expect_bad("uncertainty.reward_scale", 0.0);
    expect_bad("dqn.batch", 0);

    KVConfig cfg;
    cfg.set_str("run.arm", "bandit");
    CHECK_THROWS_AS(ExperimentConfig::from_config(cfg), ConfigError);
    KVConfig cfg2;
    cfg2.set_str("run.arms", "actor-simulator,bandit");
    CHECK_THROWS_AS(ExperimentConfig::from_config(cfg2), ConfigError);
    KVConfig cfg3;
    cfg3.set_num("dqn.replay_capacity", 8);
    cfg3.set_num("dqn.batch", 16);
    CHECK_THROWS_AS(ExperimentConfig::from_config(cfg3), ConfigError);
}

TEST_CASE("one guided replication produces a full set of artifacts") {
    ExperimentConfig c = light_config();
    RunArtifacts art = run_arm(c, "actor-simulator", 0);

    REQUIRE(art.metrics.size() == 3);
    for (int n = 1; n <= 3; ++n) {
        const MetricsRecord& m = art.metrics[static_cast<size_t>(n - 1)];
        CHECK(m.iteration == n);
        CHECK(m.replication == 0);
        CHECK(m.arm == "actor-simulator");
        // one physical transition per iteration on top of the warm-up batch
        CHECK(m.physical_transitions == 2 * 4 + n);
        CHECK(std::isfinite(m.rel_param_error));
        CHECK(m.rel_param_error >= 0.0);
        CHECK(std::isfinite(m.calibration_loss));
        CHECK(m.wall_time_s >= 0.0);
    }
    // eval_every = 2 with 3 iterations: n = 2 evaluates, n = 3 is the final
    CHECK(std::isnan(art.metrics[0].j_hat));
    CHECK(std::isfinite(art.metrics[1].j_hat));
    CHECK(std::isfinite(art.metrics[2].j_hat));
    CHECK(art.final_eval.episodes == 4);

    CHECK(art.data.size() == 2 * 4 + 3);
    CHECK(art.beta_true.size() == 20);
    CHECK(art.beta_final.size() == 20);
    REQUIRE(art.net_final != nullptr);
    CHECK(art.degraded_iterations == 0);
    // every non-degraded iteration audits the whole action grid
    CHECK(art.audit.size() == 3 * 5);
    for (const auto& row : art.audit) {
        CHECK(row.entry.ok);
        CHECK(row.entry.u >= 0.0);
    }

    CHECK_THROWS_AS(run_arm(c, "bandit", 0), ConfigError);
    CHECK_THROWS_AS(run_arm(c, "random", -1), ConfigError);
}

TEST_CASE("replications are deterministic given the seed") {
    ExperimentConfig c = light_config();
    RunArtifacts a = run_arm(c, "actor-simulator", 1);
    RunArtifacts b = run_arm(c, "actor-simulator", 1);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (size_t i = 0; i < a.metrics.size(); ++i) {
        CHECK(a.metrics[i].rel_param_error == b.metrics[i].rel_param_error);
        CHECK(a.metrics[i].calibration_loss == b.metrics[i].calibration_loss);
        const bool both_nan =
            std::isnan(a.metrics[i].j_hat) && std::isnan(b.metrics[i].j_hat);
        CHECK((both_nan || a.metrics[i].j_hat == b.metrics[i].j_hat));
        CHECK(a.metrics[i].degraded == b.metrics[i].degraded);
    }
    CHECK(a.beta_final == b.beta_final);
    CHECK(a.net_final->param_hash() == b.net_final->param_hash());
}

TEST_CASE("every arm consumes the identical physical budget") {
    ExperimentConfig c = light_config();
    RunArtifacts actor = run_arm(c, "actor-simulator", 0);
    RunArtifacts random = run_arm(c, "random", 0);
    RunArtifacts gp = run_arm(c, "gp", 0);
    CHECK(actor.data.size() == random.data.size());
    CHECK(actor.data.size() == gp.data.size());
    for (size_t i = 0; i < actor.metrics.size(); ++i) {
        CHECK(actor.metrics[i].physical_transitions == random.metrics[i].physical_transitions);
        CHECK(actor.metrics[i].physical_transitions == gp.metrics[i].physical_transitions);
    }
    // the non-guided arms never emit selection audit rows
    CHECK(random.audit.empty());
    CHECK(gp.audit.empty());
    // paired warm-up: all arms share the same initial dataset
    for (int i = 0; i < 8; ++i) {
        CHECK(actor.data.samples[i].s_next == random.data.samples[i].s_next);
        CHECK(actor.data.samples[i].a.index == gp.data.samples[i].a.index);
    }
}

TEST_CASE("flux error vanishes for a perfect estimate and not for the real one") {
    ExperimentConfig c = light_config();
    RunArtifacts art = run_arm(c, "random", 0);

    Vec real_mape = per_flux_mape(c, art, 0);
    RunArtifacts perfect = std::move(art);
    perfect.beta_final = perfect.beta_true;
    Vec zero_mape = per_flux_mape(c, perfect, 0);

    REQUIRE(real_mape.size() == zero_mape.size());
    int finite = 0;
    bool any_positive = false;
    for (size_t j = 0; j < real_mape.size(); ++j) {
        if (std::isfinite(zero_mape[j])) {
            ++finite;
            CHECK(zero_mape[j] == 0.0);
        }
        if (std::isfinite(real_mape[j]) && real_mape[j] > 0.0) any_positive = true;
    }
    CHECK(finite > 10);
    CHECK(any_positive);
}

TEST_CASE("campaigns write the full artifact set with deterministic metrics") {
    namespace fs = std::filesystem;
    ExperimentConfig c = light_config();
    const std::string dir_a = "test_campaign_a";
    const std::string dir_b = "test_campaign_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    c.out_dir = dir_a;
    CampaignResult res = run_campaign(c);
    CHECK(res.completed_runs == 4);  // 2 arms x 2 replications
    CHECK(res.failed_runs == 0);

    const std::string metrics = slurp(res.metrics_path);
    CHECK(first_line(metrics) ==
          "replication,iteration,arm,rel_param_error,j_hat,calibration_loss,"
          "physical_transitions,degraded");
    CHECK(count_lines(metrics) == 1 + 2 * 2 * 3);

    const std::string summary = slurp(res.summary_path);
    CHECK(first_line(summary) ==
          "arm,iteration,n,rel_param_error_mean,rel_param_error_lo,rel_param_error_hi,"
          "n_eval,j_hat_mean,j_hat_lo,j_hat_hi");
    CHECK(count_lines(summary) == 1 + 2 * 3);  // per arm x iteration

    const std::string mape = slurp(res.mape_path);
    CHECK(first_line(mape) == "arm,reaction,mape_percent");
    CHECK(count_lines(mape) == 1 + 2 * kinetics::kNumReactions);

    const std::string status = slurp(res.status_path);
    CHECK(first_line(status) == "arm,replication,status,message");
    CHECK(count_lines(status) == 1 + 4);
    CHECK(status.find(",ok,") != std::string::npos);
    CHECK(status.find(",failed,") == std::string::npos);

    CHECK(fs::exists(dir_a + "/timings.csv"));
    CHECK(fs::exists(dir_a + "/audit.csv"));
    CHECK(fs::exists(dir_a + "/visited_actor-simulator.csv"));
    CHECK(fs::exists(dir_a + "/visited_random.csv"));
    const std::string timings = slurp(dir_a + "/timings.csv");
    CHECK(first_line(timings) == "replication,iteration,arm,wall_time_s");

    // the deterministic artifacts are byte-identical across a rerun
    c.out_dir = dir_b;
    CampaignResult res2 = run_campaign(c);
    CHECK(slurp(res2.metrics_path) == metrics);
    CHECK(slurp(res2.summary_path) == summary);
    CHECK(slurp(res2.mape_path) == mape);
    CHECK(slurp(dir_b + "/audit.csv") == slurp(dir_a + "/audit.csv"));

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}
