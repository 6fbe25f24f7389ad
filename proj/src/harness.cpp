#include "actsim/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

namespace actsim::harness {

namespace {

constexpr const char* kArmActor = "actor-simulator";
constexpr const char* kArmRandom = "random";
constexpr const char* kArmGp = "gp";

bool valid_arm(const std::string& arm) {
    return arm == kArmActor || arm == kArmRandom || arm == kArmGp;
}

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    for (char ch : text) {
        if (ch == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            item.push_back(ch);
        }
    }
    if (!item.empty()) out.push_back(item);
    return out;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else if (ch == '\n') out += ' ';
        else out += ch;
    }
    out += '"';
    return out;
}

double relative_param_error(const Vec& beta_hat, const Vec& beta_true) {
    double acc = 0.0;
    for (size_t i = 0; i < beta_true.size(); ++i) {
        const double denom = std::max(std::abs(beta_true[i]), 1e-12);
        const double r = (beta_hat[i] - beta_true[i]) / denom;
        acc += r * r;
    }
    return std::sqrt(acc);
}

double mean_negative_loglik(const TransitionModel& model, const Dataset& data) {
    double acc = 0.0;
    int m = 0;
    for (const auto& sample : data.samples) {
        try {
            acc += calibration::log_likelihood(model, sample);
            ++m;
        } catch (const DivergedError&) {
        }
    }
    return m > 0 ? -acc / m : std::numeric_limits<double>::quiet_NaN();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    return out;
}

struct BandStat {
    int n = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
};

BandStat band_stat(const std::vector<double>& xs) {
    BandStat b;
    b.n = static_cast<int>(xs.size());
    if (b.n == 0) return b;
    double sum = 0.0;
    for (double x : xs) sum += x;
    b.mean = sum / b.n;
    if (b.n < 2) {
        b.lo = b.hi = b.mean;
        return b;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - b.mean) * (x - b.mean);
    const double half = t_critical_975(b.n - 1) * std::sqrt(ss / (b.n - 1) / b.n);
    b.lo = b.mean - half;
    b.hi = b.mean + half;
    return b;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_config(KVConfig::load(path));
}

ExperimentConfig ExperimentConfig::from_config(const KVConfig& cfg) {
    ExperimentConfig c;
    c.arm = cfg.get_str("run.arm", c.arm);
    c.arms = split_list(cfg.get_str("run.arms", "actor-simulator,random,gp"));
    c.case_size = static_cast<int>(cfg.get_int("run.case_size", c.case_size));
    c.iterations = static_cast<int>(cfg.get_int("run.iterations", c.iterations));
    c.init_episodes = static_cast<int>(cfg.get_int("run.init_episodes", c.init_episodes));
    c.horizon = static_cast<int>(cfg.get_int("run.horizon", c.horizon));
    c.replications = static_cast<int>(cfg.get_int("run.replications", c.replications));
    c.eval_every = static_cast<int>(cfg.get_int("run.eval_every", c.eval_every));
    c.eval_episodes = static_cast<int>(cfg.get_int("run.eval_episodes", c.eval_episodes));
    c.final_eval_episodes =
        static_cast<int>(cfg.get_int("run.final_eval_episodes", c.final_eval_episodes));
    c.gamma = cfg.get_num("run.gamma", c.gamma);
    c.penalty_c = cfg.get_num("run.penalty_c", c.penalty_c);
    c.n_actions = static_cast<int>(cfg.get_int("run.n_actions", c.n_actions));
    c.master_seed =
        static_cast<std::uint64_t>(cfg.get_int("run.seed", static_cast<long>(c.master_seed)));
    c.out_dir = cfg.get_str("run.out_dir", c.out_dir);
    c.write_audit = cfg.get_bool("run.write_audit", c.write_audit);

    c.dt_hours = cfg.get_num("kinetics.dt_hours", c.dt_hours);
    c.substeps = static_cast<int>(cfg.get_int("kinetics.substeps", c.substeps));
    c.noise_frac = cfg.get_num("kinetics.noise_frac", c.noise_frac);
    c.noise_floor = cfg.get_num("kinetics.noise_floor", c.noise_floor);
    c.params_file = cfg.get_str("kinetics.params_file", c.params_file);
    c.stoich_file = cfg.get_str("kinetics.stoich_file", c.stoich_file);

    c.mle.lr = cfg.get_num("mle.lr", c.mle.lr);
    c.mle.max_epochs = static_cast<int>(cfg.get_int("mle.max_epochs", c.mle.max_epochs));
    c.mle.patience = static_cast<int>(cfg.get_int("mle.patience", c.mle.patience));
    c.mle.grad_tol = cfg.get_num("mle.grad_tol", c.mle.grad_tol);
    c.mle.val_fraction = cfg.get_num("mle.val_fraction", c.mle.val_fraction);

    c.uopts.v_max = cfg.get_num("uncertainty.v_max", c.uopts.v_max);
    c.uopts.rollouts = static_cast<int>(cfg.get_int("uncertainty.rollouts", c.uopts.rollouts));
    c.uopts.horizon = static_cast<int>(cfg.get_int("uncertainty.horizon", c.horizon));
    c.uopts.gamma = cfg.get_num("uncertainty.gamma", c.gamma);
    c.uopts.w_draws = static_cast<int>(cfg.get_int("uncertainty.w_draws", c.uopts.w_draws));
    c.uopts.reward_scale = cfg.get_num("uncertainty.reward_scale", c.uopts.reward_scale);

    c.dqn.batch = static_cast<int>(cfg.get_int("dqn.batch", c.dqn.batch));
    c.dqn.gamma = cfg.get_num("dqn.gamma", c.gamma);
    c.dqn.lr = cfg.get_num("dqn.lr", c.dqn.lr);
    c.dqn.l2 = cfg.get_num("dqn.l2", c.dqn.l2);
    c.dqn.episodes = static_cast<int>(cfg.get_int("dqn.episodes", c.dqn.episodes));
    c.dqn.horizon = static_cast<int>(cfg.get_int("dqn.horizon", c.horizon));
    c.dqn.grad_steps_per_episode = static_cast<int>(
        cfg.get_int("dqn.grad_steps_per_episode", c.dqn.grad_steps_per_episode));
    c.dqn.replay_capacity = static_cast<size_t>(
        cfg.get_int("dqn.replay_capacity", static_cast<long>(c.dqn.replay_capacity)));

    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (case_size != 20 && case_size != 30 && case_size != 40)
        fail("run.case_size must be 20, 30 or 40");
    if (iterations < 1) fail("run.iterations must be >= 1");
    if (init_episodes < 1) fail("run.init_episodes must be >= 1");
    if (horizon < 1) fail("run.horizon must be >= 1");
    if (replications < 1) fail("run.replications must be >= 1");
    if (eval_every < 0) fail("run.eval_every must be >= 0");
    if (eval_episodes < 1) fail("run.eval_episodes must be >= 1");
    if (final_eval_episodes < 1) fail("run.final_eval_episodes must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) fail("run.gamma must be in (0,1)");
    if (penalty_c < 0.0) fail("run.penalty_c must be >= 0");
    if (n_actions < 2) fail("run.n_actions must be >= 2");
    if (!valid_arm(arm)) fail("run.arm must be actor-simulator, random or gp");
    if (arms.empty()) fail("run.arms must not be empty");
    for (const auto& a : arms)
        if (!valid_arm(a)) fail("unknown arm in run.arms: " + a);
    if (dt_hours <= 0.0) fail("kinetics.dt_hours must be > 0");
    if (substeps < 1) fail("kinetics.substeps must be >= 1");
    if (noise_frac < 0.0) fail("kinetics.noise_frac must be >= 0");
    if (noise_floor <= 0.0) fail("kinetics.noise_floor must be > 0");
    if (mle.lr <= 0.0) fail("mle.lr must be > 0");
    if (mle.max_epochs < 1) fail("mle.max_epochs must be >= 1");
    if (mle.patience < 1) fail("mle.patience must be >= 1");
    if (mle.grad_tol < 0.0) fail("mle.grad_tol must be >= 0");
    if (mle.val_fraction < 0.0 || mle.val_fraction >= 1.0)
        fail("mle.val_fraction must be in [0,1)");
    if (uopts.v_max <= 0.0) fail("uncertainty.v_max must be > 0");
    if (uopts.rollouts < 1) fail("uncertainty.rollouts must be >= 1");
    if (uopts.horizon < 1) fail("uncertainty.horizon must be >= 1");
    if (!(uopts.gamma > 0.0 && uopts.gamma < 1.0)) fail("uncertainty.gamma must be in (0,1)");
    if (uopts.w_draws < 1) fail("uncertainty.w_draws must be >= 1");
    if (uopts.reward_scale <= 0.0) fail("uncertainty.reward_scale must be > 0");
    if (dqn.batch < 1) fail("dqn.batch must be >= 1");
    if (!(dqn.gamma > 0.0 && dqn.gamma < 1.0)) fail("dqn.gamma must be in (0,1)");
    if (dqn.lr <= 0.0) fail("dqn.lr must be > 0");
    if (dqn.l2 < 0.0) fail("dqn.l2 must be >= 0");
    if (dqn.episodes < 1) fail("dqn.episodes must be >= 1");
    if (dqn.horizon < 1) fail("dqn.horizon must be >= 1");
    if (dqn.grad_steps_per_episode < 0) fail("dqn.grad_steps_per_episode must be >= 0");
    if (dqn.replay_capacity < static_cast<size_t>(dqn.batch))
        fail("dqn.replay_capacity must be >= dqn.batch");
}

kinetics::KineticsSpec ExperimentConfig::make_kinetics_spec() const {
    kinetics::KineticsSpec spec = kinetics::KineticsSpec::defaults();
    if (!params_file.empty()) spec.params = kinetics::load_params(params_file, spec.params);
    if (!stoich_file.empty()) spec.stoich = kinetics::StoichiometryMatrix::load(stoich_file);
    spec.dt_hours = dt_hours;
    spec.substeps = substeps;
    spec.noise = kinetics::NoiseSpec::from_initial_state(spec.base_state, noise_frac, noise_floor);
    spec.params.set_case_mask(case_size);
    return spec;
}

Vec init_beta(const Vec& beta_true, const Vec& lo, const Vec& hi, RngStream& rng) {
    if (beta_true.size() != lo.size() || beta_true.size() != hi.size())
        throw std::invalid_argument("init_beta: bounds dimension mismatch");
    Vec beta(beta_true.size());
    for (size_t i = 0; i < beta_true.size(); ++i) {
        double a = 1e-6 * beta_true[i];
        double b = 4.0 * beta_true[i];
        if (a > b) std::swap(a, b);
        beta[i] = clamp(rng.uniform(a, b), lo[i], hi[i]);
    }
    return beta;
}

double t_critical_975(int df) {
    static constexpr std::array<double, 30> kTable = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) throw std::invalid_argument("t_critical_975: df must be >= 1");
    if (df <= 30) return kTable[static_cast<size_t>(df - 1)];
    if (df <= 40) return 2.021;
    if (df <= 60) return 2.000;
    if (df <= 120) return 1.980;
    return 1.960;
}

RunArtifacts run_arm(const ExperimentConfig& config, const std::string& arm, int replication) {
    config.validate();
    if (!valid_arm(arm)) throw ConfigError("unknown arm: " + arm);
    if (replication < 0) throw ConfigError("replication index must be >= 0");

    const kinetics::KineticsSpec spec = config.make_kinetics_spec();
    kinetics::KineticsModel truth(spec);
    kinetics::KineticsEnv phys_env(&truth, config.n_actions);
    kinetics::KineticsModel twin(spec);
    const std::vector<ActionValue>& grid = phys_env.grid();

    SeedNode rep_node = SeedNode(config.master_seed).child(static_cast<std::uint64_t>(replication));
    // Streams shared by every arm (paired replications): physical noise,
    // episode initial states, warm-up actions, initial parameter guess, eval.
    RngStream phys_rng = rep_node.stream("physical-noise");
    RngStream init_state_rng = rep_node.stream("init-state");
    RngStream init_action_rng = rep_node.stream("init-actions");
    RngStream beta_rng = rep_node.stream("beta-init");
    SeedNode eval_node = rep_node.child("eval");
    SeedNode arm_node = rep_node.child(arm);

    RunArtifacts out;
    out.beta_true = truth.params();

    Dataset data;
    for (int ep = 0; ep < config.init_episodes; ++ep) {
        Vec s = phys_env.initial_state(init_state_rng);
        for (int step = 0; step < config.horizon; ++step) {
            const ActionValue a = baselines::random_action(grid, init_action_rng);
            Vec sn = phys_env.step_sample(s, a, phys_rng);
            data.append(s, a, sn, ep, step);
            s = std::move(sn);
        }
    }

    Vec lo, hi;
    twin.param_bounds(lo, hi);
    Vec beta_hat = init_beta(out.beta_true, lo, hi, beta_rng);
    twin.set_params(beta_hat);

    const calibration::CovOptions cov_opts;
    calibration::CovarianceEstimate cov =
        calibration::estimate_covariance(twin, data, beta_hat, cov_opts);
    double calib_loss = mean_negative_loglik(twin, data);

    Vec input_scale(kinetics::kStateDim);
    for (int i = 0; i < kinetics::kStateDim; ++i)
        input_scale[static_cast<size_t>(i)] =
            std::max(spec.base_state[static_cast<size_t>(i)], 0.1);
    RngStream net_rng = arm_node.stream("net-init");
    policy::TrainState st(truth.state_dim(), config.n_actions, input_scale,
                          config.dqn.replay_capacity, net_rng);

    const double lambda = config.penalty_c * config.gamma;
    const uncertainty::RewardFn reward_fn = [&twin](const Vec& s, const ActionValue& a,
                                                    const Vec& sn) {
        return kinetics::reward_shifted(twin.spec(), s, a, sn);
    };

    Vec s_phys;
    int episode_id = config.init_episodes - 1;
    int consumed = config.init_episodes * config.horizon;

    for (int n = 1; n <= config.iterations; ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        bool degraded = false;
        const int ep_step = (n - 1) % config.horizon;
        if (ep_step == 0) {
            s_phys = phys_env.initial_state(init_state_rng);
            ++episode_id;
        }

        policy::QNetwork snapshot = st.net;  // previous policy, frozen for this iteration
        const long env_steps_snapshot = st.env_steps;
        policy::GreedyPolicy prev_policy(&snapshot, grid);

        SeedNode select_node = arm_node.child("select").child(static_cast<std::uint64_t>(n));
        ActionValue a = grid.front();
        if (arm == kArmActor) {
            try {
                auto sel = uncertainty::select_calibration_action(
                    twin, s_phys, cov.finite_sample(), prev_policy, reward_fn, grid, config.uopts,
                    select_node);
                a = sel.action;
                for (const auto& e : sel.audit) out.audit.push_back({n, e});
            } catch (const SelectionFailedError&) {
                degraded = true;
                RngStream fb = arm_node.child("fallback").child(static_cast<std::uint64_t>(n)).stream();
                a = baselines::random_action(grid, fb);
            }
        } else if (arm == kArmRandom) {
            RngStream r = select_node.stream();
            a = baselines::random_action(grid, r);
        } else {
            RngStream r = select_node.stream();
            const int m_all = data.size();
            const int m = std::min(500, m_all);
            std::vector<Vec> inputs;
            std::vector<double> target_vals;
            inputs.reserve(static_cast<size_t>(m));
            target_vals.reserve(static_cast<size_t>(m));
            for (int i = m_all - m; i < m_all; ++i) {
                const auto& smp = data.samples[static_cast<size_t>(i)];
                try {
                    const Vec f = twin.mean(smp.s, smp.a);
                    double err = 0.0;
                    for (size_t d = 0; d < f.size(); ++d) {
                        const double diff = f[d] - smp.s_next[d];
                        err += diff * diff;
                    }
                    err /= static_cast<double>(f.size());
                    Vec q = smp.s;
                    q.push_back(smp.a.b);
                    inputs.push_back(std::move(q));
                    target_vals.push_back(err);
                } catch (const DivergedError&) {
                }
            }
            if (inputs.size() >= 2) {
                try {
                    Vec targets(target_vals.begin(), target_vals.end());
                    const baselines::GPSurrogate gp =
                        baselines::GPSurrogate::fit_auto(inputs, targets);
                    a = baselines::gp_select_action(&gp, s_phys, grid, r);
                } catch (const FitFailedError&) {
                    degraded = true;
                    a = baselines::random_action(grid, r);
                }
            } else {
                a = baselines::random_action(grid, r);
            }
        }

        Vec s_next = phys_env.step_sample(s_phys, a, phys_rng);
        data.append(s_phys, a, s_next, episode_id, ep_step);
        ++consumed;

        try {
            const calibration::FitResult fit = calibration::mle_fit(twin, data, beta_hat, config.mle);
            calibration::CovarianceEstimate cov_new =
                calibration::estimate_covariance(twin, data, fit.beta, cov_opts);
            beta_hat = fit.beta;
            cov = std::move(cov_new);
            calib_loss = -fit.train_ll;
        } catch (const FitFailedError&) {
            degraded = true;
            twin.set_params(beta_hat);
        } catch (const IllConditionedError&) {
            degraded = true;
            twin.set_params(beta_hat);
        } catch (const std::invalid_argument&) {
            degraded = true;
            twin.set_params(beta_hat);
        }

        kinetics::KineticsEnv twin_env(&twin, config.n_actions);
        policy::PenalizedTwinEnv pen_env(&twin, &twin_env, cov.finite_sample(), &prev_policy,
                                         lambda, config.uopts,
                                         arm_node.child("penalty").child(static_cast<std::uint64_t>(n)));
        RngStream train_rng = arm_node.child("train").child(static_cast<std::uint64_t>(n)).stream();
        try {
            const auto rows = policy::train_policy(pen_env, st, config.dqn, n, train_rng);
            out.train_log.insert(out.train_log.end(), rows.begin(), rows.end());
        } catch (const TrainingDivergedError&) {
            degraded = true;
            st.net = snapshot;
            st.env_steps = env_steps_snapshot;
        }

        MetricsRecord m;
        m.replication = replication;
        m.iteration = n;
        m.arm = arm;
        m.rel_param_error = relative_param_error(beta_hat, out.beta_true);
        m.calibration_loss = calib_loss;
        m.physical_transitions = consumed;
        m.degraded = degraded;
        m.j_hat = std::numeric_limits<double>::quiet_NaN();
        const bool is_final = n == config.iterations;
        if (is_final || (config.eval_every > 0 && n % config.eval_every == 0)) {
            const int eval_eps = is_final ? config.final_eval_episodes : config.eval_episodes;
            policy::GreedyPolicy current(&st.net, grid);
            RngStream erng = eval_node.child(static_cast<std::uint64_t>(n)).stream();
            const EvalResult ev =
                evaluate_policy(phys_env, current, eval_eps, config.horizon, config.gamma, erng);
            m.j_hat = ev.mean_return;
            if (is_final) out.final_eval = ev;
        }
        m.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.metrics.push_back(std::move(m));
        if (degraded) ++out.degraded_iterations;
        s_phys = std::move(s_next);
    }

    if (5 * out.degraded_iterations > config.iterations) {
        char msg[160];
        std::snprintf(msg, sizeof msg,
                      "run-failed: %d of %d iterations degraded (arm %s, replication %d)",
                      out.degraded_iterations, config.iterations, arm.c_str(), replication);
        throw RunFailedError(msg);
    }

    out.beta_final = beta_hat;
    out.data = std::move(data);
    out.net_final = std::make_unique<policy::QNetwork>(st.net);
    return out;
}

Vec per_flux_mape(const ExperimentConfig& config, const RunArtifacts& art, int replication) {
    const kinetics::KineticsSpec spec = config.make_kinetics_spec();
    kinetics::KineticsModel truth(spec);
    kinetics::KineticsEnv env(&truth, config.n_actions);
    policy::GreedyPolicy pol(art.net_final.get(), env.grid());
    RngStream rng =
        SeedNode(config.master_seed).child(static_cast<std::uint64_t>(replication)).stream("probe-states");

    constexpr int kProbes = 100;
    std::vector<Vec> probes;
    probes.reserve(kProbes);
    for (int guard = 0; guard < 64 && static_cast<int>(probes.size()) < kProbes; ++guard) {
        try {
            Trajectory tr = rollout(env, pol, config.horizon, rng);
            for (auto& s : tr.states) {
                probes.push_back(std::move(s));
                if (static_cast<int>(probes.size()) >= kProbes) break;
            }
        } catch (const DivergedError&) {
        }
    }

    kinetics::KineticParams p_hat = spec.params;
    p_hat.set_masked_values(art.beta_final);

    Vec mape(kinetics::kNumReactions, 0.0);
    std::vector<int> counts(kinetics::kNumReactions, 0);
    for (const Vec& s : probes) {
        const Vec v_true = kinetics::flux_rates(s, spec.params);
        const Vec v_hat = kinetics::flux_rates(s, p_hat);
        for (int j = 0; j < kinetics::kNumReactions; ++j) {
            const size_t ju = static_cast<size_t>(j);
            if (std::abs(v_true[ju]) > 1e-9) {
                mape[ju] += std::abs(v_hat[ju] - v_true[ju]) / std::abs(v_true[ju]);
                ++counts[ju];
            }
        }
    }
    for (int j = 0; j < kinetics::kNumReactions; ++j) {
        const size_t ju = static_cast<size_t>(j);
        mape[ju] = counts[ju] > 0 ? 100.0 * mape[ju] / counts[ju]
                                  : std::numeric_limits<double>::quiet_NaN();
    }
    return mape;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
    std::ofstream out = open_out(path);
    out << "replication,iteration,arm,rel_param_error,j_hat,calibration_loss,"
           "physical_transitions,degraded\n";
    for (const auto& r : rows) {
        out << r.replication << ',' << r.iteration << ',' << r.arm << ','
            << fmt_num(r.rel_param_error) << ',' << fmt_num(r.j_hat) << ','
            << fmt_num(r.calibration_loss) << ',' << r.physical_transitions << ','
            << (r.degraded ? 1 : 0) << '\n';
    }
}

void write_timings_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
    std::ofstream out = open_out(path);
    out << "replication,iteration,arm,wall_time_s\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.wall_time_s);
        out << r.replication << ',' << r.iteration << ',' << r.arm << ',' << buf << '\n';
    }
}

void write_audit_csv(const std::string& path, const std::string& arm, int replication,
                     const std::vector<AuditRow>& rows, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    if (!append) out << "arm,replication,iteration,action_index,w,trace,u,ok\n";
    for (const auto& r : rows) {
        out << arm << ',' << replication << ',' << r.iteration << ',' << r.entry.action_index
            << ',' << fmt_num(r.entry.w) << ',' << fmt_num(r.entry.trace) << ','
            << fmt_num(r.entry.u) << ',' << (r.entry.ok ? 1 : 0) << '\n';
    }
}

void write_train_log_csv(const std::string& path, const std::vector<policy::TrainLogRow>& rows) {
    std::ofstream out = open_out(path);
    out << "iteration,episode,mean_loss,epsilon,mean_penalized_return\n";
    for (const auto& r : rows) {
        out << r.iteration << ',' << r.episode << ',' << fmt_num(r.mean_loss) << ','
            << fmt_num(r.epsilon) << ',' << fmt_num(r.mean_penalized_return) << '\n';
    }
}

CampaignResult run_campaign(const ExperimentConfig& config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    CampaignResult res;
    res.metrics_path = config.out_dir + "/metrics.csv";
    res.summary_path = config.out_dir + "/summary.csv";
    res.mape_path = config.out_dir + "/flux_mape.csv";
    res.status_path = config.out_dir + "/status.csv";
    const std::string audit_path = config.out_dir + "/audit.csv";
    const std::string timings_path = config.out_dir + "/timings.csv";

    std::vector<MetricsRecord> all;
    struct StatusRow {
        std::string arm;
        int replication;
        bool ok;
        std::string message;
    };
    std::vector<StatusRow> status;
    std::map<std::string, Vec> mape_sum;
    std::map<std::string, std::vector<int>> mape_count;
    bool audit_started = false;

    for (const std::string& arm : config.arms) {
        mape_sum.emplace(arm, Vec(kinetics::kNumReactions, 0.0));
        mape_count.emplace(arm, std::vector<int>(kinetics::kNumReactions, 0));
        for (int rep = 0; rep < config.replications; ++rep) {
            try {
                RunArtifacts art = run_arm(config, arm, rep);
                all.insert(all.end(), art.metrics.begin(), art.metrics.end());
                if (config.write_audit && arm == kArmActor) {
                    write_audit_csv(audit_path, arm, rep, art.audit, audit_started);
                    audit_started = true;
                }
                if (rep == 0) art.data.save_csv(config.out_dir + "/visited_" + arm + ".csv");
                const Vec mape = per_flux_mape(config, art, rep);
                for (int j = 0; j < kinetics::kNumReactions; ++j) {
                    const size_t ju = static_cast<size_t>(j);
                    if (std::isfinite(mape[ju])) {
                        mape_sum[arm][ju] += mape[ju];
                        ++mape_count[arm][ju];
                    }
                }
                status.push_back({arm, rep, true, "ok"});
                ++res.completed_runs;
            } catch (const RunFailedError& e) {
                status.push_back({arm, rep, false, e.what()});
                ++res.failed_runs;
            }
        }
    }

    write_metrics_csv(res.metrics_path, all);
    write_timings_csv(timings_path, all);

    {
        std::ofstream out = open_out(res.summary_path);
        out << "arm,iteration,n,rel_param_error_mean,rel_param_error_lo,rel_param_error_hi,"
               "n_eval,j_hat_mean,j_hat_lo,j_hat_hi\n";
        for (const std::string& arm : config.arms) {
            std::map<int, std::vector<const MetricsRecord*>> by_iter;
            for (const auto& r : all)
                if (r.arm == arm) by_iter[r.iteration].push_back(&r);
            for (const auto& [iter, rows] : by_iter) {
                std::vector<double> errs, js;
                for (const auto* r : rows) {
                    errs.push_back(r->rel_param_error);
                    if (std::isfinite(r->j_hat)) js.push_back(r->j_hat);
                }
                const BandStat eb = band_stat(errs);
                const BandStat jb = band_stat(js);
                out << arm << ',' << iter << ',' << eb.n << ',' << fmt_num(eb.mean) << ','
                    << fmt_num(eb.lo) << ',' << fmt_num(eb.hi) << ',' << jb.n << ','
                    << fmt_num(jb.mean) << ',' << fmt_num(jb.lo) << ',' << fmt_num(jb.hi) << '\n';
            }
        }
    }

    {
        std::ofstream out = open_out(res.mape_path);
        out << "arm,reaction,mape_percent\n";
        const auto& rxn = kinetics::reaction_names();
        for (const std::string& arm : config.arms) {
            for (int j = 0; j < kinetics::kNumReactions; ++j) {
                const size_t ju = static_cast<size_t>(j);
                const double v = mape_count[arm][ju] > 0
                                     ? mape_sum[arm][ju] / mape_count[arm][ju]
                                     : std::numeric_limits<double>::quiet_NaN();
                out << arm << ',' << rxn[ju] << ',' << fmt_num(v) << '\n';
            }
        }
    }

    {
        std::ofstream out = open_out(res.status_path);
        out << "arm,replication,status,message\n";
        for (const auto& s : status)
            out << s.arm << ',' << s.replication << ',' << (s.ok ? "ok" : "failed") << ','
                << csv_quote(s.message) << '\n';
    }

    return res;
}

}  // namespace actsim::harness
