#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "actsim/harness.hpp"

namespace {

using actsim::harness::ExperimentConfig;

struct CommonFlags {
    std::string config_path;
    long seed = -1;
    int case_size = 0;
    std::string arm;
    std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_arm) {
    cmd->add_option("--config", f.config_path, "key=value config file");
    cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
    cmd->add_option("--case", f.case_size, "calibration case size")
        ->check(CLI::IsMember({20, 30, 40}));
    if (with_arm)
        cmd->add_option("--arm", f.arm, "actor-simulator | random | gp");
    cmd->add_option("--out", f.out, "output path");
}

ExperimentConfig make_config(const CommonFlags& f) {
    ExperimentConfig cfg = f.config_path.empty() ? ExperimentConfig{}
                                                 : ExperimentConfig::from_file(f.config_path);
    if (f.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(f.seed);
    if (f.case_size != 0) cfg.case_size = f.case_size;
    if (!f.arm.empty()) cfg.arm = f.arm;
    if (!f.out.empty()) cfg.out_dir = f.out;
    cfg.validate();
    return cfg;
}

int cmd_simulate(const CommonFlags& f, int episodes, int action_index) {
    ExperimentConfig cfg = make_config(f);
    const auto spec = cfg.make_kinetics_spec();
    actsim::kinetics::KineticsModel truth(spec);
    actsim::kinetics::KineticsEnv env(&truth, cfg.n_actions);
    if (action_index >= cfg.n_actions)
        throw actsim::ConfigError("--action must be below the grid size");

    actsim::RngStream rng = actsim::SeedNode(cfg.master_seed).stream("simulate");
    actsim::Dataset ds;
    for (int ep = 0; ep < episodes; ++ep) {
        actsim::Vec s = env.initial_state(rng);
        for (int step = 0; step < cfg.horizon; ++step) {
            const actsim::ActionValue a = action_index >= 0
                                              ? env.action(action_index)
                                              : actsim::baselines::random_action(env.grid(), rng);
            actsim::Vec sn = env.step_sample(s, a, rng);
            ds.append(s, a, sn, ep, step);
            s = std::move(sn);
        }
    }
    const std::string path = f.out.empty() ? "dataset.csv" : f.out;
    ds.save_csv(path);
    std::printf("simulated %d episodes (%d transitions) -> %s\n", episodes, ds.size(),
                path.c_str());
    return 0;
}

int cmd_calibrate(const CommonFlags& f, const std::string& data_path) {
    ExperimentConfig cfg = make_config(f);
    const auto spec = cfg.make_kinetics_spec();
    actsim::kinetics::KineticsModel twin(spec);
    const actsim::Dataset data = actsim::Dataset::load_csv(data_path);
    if (data.empty()) throw actsim::ConfigError("dataset is empty: " + data_path);

    actsim::Vec lo, hi;
    twin.param_bounds(lo, hi);
    const actsim::Vec reference = twin.params();
    actsim::RngStream brng = actsim::SeedNode(cfg.master_seed).stream("beta-init");
    const actsim::Vec beta0 = actsim::harness::init_beta(reference, lo, hi, brng);

    const auto fit = actsim::calibration::mle_fit(twin, data, beta0, cfg.mle);
    const auto cov = actsim::calibration::estimate_covariance(twin, data, fit.beta, {});

    std::printf("fit: %d epochs, train loglik %.6f, val loglik %.6f, stop=%s\n", fit.epochs,
                fit.train_ll, fit.val_ll, fit.stopped_reason.c_str());
    std::printf("covariance: n=%d, mode=%s, condition=%.3g\n", cov.n, cov.mode.c_str(),
                cov.condition_number);
    double err = 0.0;
    for (size_t i = 0; i < reference.size(); ++i) {
        const double r = (fit.beta[i] - reference[i]) / std::max(std::abs(reference[i]), 1e-12);
        err += r * r;
    }
    std::printf("relative distance to reference parameters: %.6f\n", std::sqrt(err));

    if (!f.out.empty()) {
        auto fitted = spec.params;
        fitted.set_masked_values(fit.beta);
        actsim::kinetics::save_params(fitted, f.out);
        std::printf("fitted parameters -> %s\n", f.out.c_str());
    }
    return 0;
}

int cmd_train(const CommonFlags& f, const std::string& log_path) {
    ExperimentConfig cfg = make_config(f);
    const auto spec = cfg.make_kinetics_spec();
    actsim::kinetics::KineticsModel twin(spec);
    actsim::kinetics::KineticsEnv env(&twin, cfg.n_actions);

    actsim::Vec input_scale(actsim::kinetics::kStateDim);
    for (int i = 0; i < actsim::kinetics::kStateDim; ++i)
        input_scale[static_cast<size_t>(i)] =
            std::max(spec.base_state[static_cast<size_t>(i)], 0.1);

    actsim::SeedNode root(cfg.master_seed);
    actsim::RngStream init_rng = root.stream("net-init");
    actsim::policy::TrainState st(env.state_dim(), cfg.n_actions, input_scale,
                                  cfg.dqn.replay_capacity, init_rng);
    actsim::RngStream train_rng = root.stream("train");
    const auto rows = actsim::policy::train_policy(env, st, cfg.dqn, 0, train_rng);

    const std::string path = f.out.empty() ? "policy.bin" : f.out;
    st.save(path);
    std::printf("trained %d episodes (%ld env steps) -> %s\n", cfg.dqn.episodes, st.env_steps,
                path.c_str());
    if (!log_path.empty()) {
        actsim::harness::write_train_log_csv(log_path, rows);
        std::printf("training log -> %s\n", log_path.c_str());
    }
    return 0;
}

int cmd_run(const CommonFlags& f, int replication) {
    ExperimentConfig cfg = make_config(f);
    std::filesystem::create_directories(cfg.out_dir);
    const auto art = actsim::harness::run_arm(cfg, cfg.arm, replication);

    actsim::harness::write_metrics_csv(cfg.out_dir + "/metrics.csv", art.metrics);
    actsim::harness::write_timings_csv(cfg.out_dir + "/timings.csv", art.metrics);
    actsim::harness::write_train_log_csv(cfg.out_dir + "/train_log.csv", art.train_log);
    if (!art.audit.empty())
        actsim::harness::write_audit_csv(cfg.out_dir + "/audit.csv", cfg.arm, replication,
                                         art.audit, false);
    art.data.save_csv(cfg.out_dir + "/dataset.csv");
    art.net_final->save(cfg.out_dir + "/policy.bin");
    auto fitted = cfg.make_kinetics_spec().params;
    fitted.set_masked_values(art.beta_final);
    actsim::kinetics::save_params(fitted, cfg.out_dir + "/params_fitted.cfg");

    double err = 0.0;
    for (size_t i = 0; i < art.beta_true.size(); ++i) {
        const double r =
            (art.beta_final[i] - art.beta_true[i]) / std::max(std::abs(art.beta_true[i]), 1e-12);
        err += r * r;
    }
    std::printf("arm %s, replication %d: %d iterations, %d degraded\n", cfg.arm.c_str(),
                replication, cfg.iterations, art.degraded_iterations);
    std::printf("relative parameter error: %.6f\n", std::sqrt(err));
    std::printf("final policy value: %.4f +- %.4f (raw %.4f) over %d episodes\n",
                art.final_eval.mean_return, art.final_eval.std_error,
                art.final_eval.mean_return_raw, art.final_eval.episodes);
    std::printf("outputs -> %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_campaign(const CommonFlags& f, int reps_override, int iters_override) {
    ExperimentConfig cfg = make_config(f);
    if (reps_override > 0) cfg.replications = reps_override;
    if (iters_override > 0) cfg.iterations = iters_override;
    cfg.validate();
    const auto res = actsim::harness::run_campaign(cfg);
    std::printf("campaign: %d runs completed, %d failed\n", res.completed_runs, res.failed_runs);
    std::printf("metrics -> %s\n", res.metrics_path.c_str());
    std::printf("summary -> %s\n", res.summary_path.c_str());
    std::printf("flux MAPE -> %s\n", res.mape_path.c_str());
    std::printf("status  -> %s\n", res.status_path.c_str());
    return 0;
}

int cmd_evaluate(const CommonFlags& f, const std::string& checkpoint, int episodes) {
    ExperimentConfig cfg = make_config(f);
    const auto spec = cfg.make_kinetics_spec();
    actsim::kinetics::KineticsModel truth(spec);
    actsim::kinetics::KineticsEnv env(&truth, cfg.n_actions);
    const actsim::policy::QNetwork net = actsim::policy::QNetwork::load(checkpoint);
    if (net.n_actions() != cfg.n_actions || net.state_dim() != env.state_dim())
        throw actsim::ConfigError("checkpoint shape does not match the configured environment");
    actsim::policy::GreedyPolicy pol(&net, env.grid());
    actsim::RngStream rng = actsim::SeedNode(cfg.master_seed).stream("evaluate");
    const auto ev = actsim::evaluate_policy(env, pol, episodes, cfg.horizon, cfg.gamma, rng);
    std::printf("estimated value: %.4f +- %.4f (raw %.4f) over %d episodes\n", ev.mean_return,
                ev.std_error, ev.mean_return_raw, ev.episodes);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibration-aware bioprocess control experiments"};
    app.require_subcommand(1);

    CommonFlags sim_f, cal_f, train_f, run_f, camp_f, eval_f;
    int sim_episodes = 5, sim_action = -1;
    std::string cal_data, train_log, eval_checkpoint;
    int run_rep = 0, camp_reps = 0, camp_iters = 0, eval_episodes = 1000;

    CLI::App* sim = app.add_subcommand("simulate", "roll the physical-system emulator");
    add_common(sim, sim_f, false);
    sim->add_option("--episodes", sim_episodes, "episodes to simulate")->check(CLI::PositiveNumber);
    sim->add_option("--action", sim_action, "fixed grid action (-1: uniform random)");

    CLI::App* cal = app.add_subcommand("calibrate", "fit twin parameters to a dataset");
    add_common(cal, cal_f, false);
    cal->add_option("--data", cal_data, "transitions CSV")->required();

    CLI::App* trn = app.add_subcommand("train", "train a policy on the digital twin");
    add_common(trn, train_f, false);
    trn->add_option("--log", train_log, "training-log CSV path");

    CLI::App* run = app.add_subcommand("run", "one replication of the calibration loop");
    add_common(run, run_f, true);
    run->add_option("--replication", run_rep, "replication index");

    CLI::App* camp = app.add_subcommand("campaign", "all arms x replications");
    add_common(camp, camp_f, false);
    camp->add_option("--replications", camp_reps, "override replication count");
    camp->add_option("--iterations", camp_iters, "override iteration count");

    CLI::App* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on the emulator");
    add_common(ev, eval_f, false);
    ev->add_option("--checkpoint", eval_checkpoint, "policy checkpoint")->required();
    ev->add_option("--episodes", eval_episodes, "evaluation episodes")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
        if (sim->parsed()) return cmd_simulate(sim_f, sim_episodes, sim_action);
        if (cal->parsed()) return cmd_calibrate(cal_f, cal_data);
        if (trn->parsed()) return cmd_train(train_f, train_log);
        if (run->parsed()) return cmd_run(run_f, run_rep);
        if (camp->parsed()) return cmd_campaign(camp_f, camp_reps, camp_iters);
        if (ev->parsed()) return cmd_evaluate(eval_f, eval_checkpoint, eval_episodes);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const actsim::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    } catch (const actsim::RunFailedError& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        return 3;
    } catch (const actsim::DivergedError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const actsim::IllConditionedError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const actsim::TrainingDivergedError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const actsim::FitFailedError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const actsim::SelectionFailedError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
