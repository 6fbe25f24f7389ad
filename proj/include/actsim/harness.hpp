#pragma once

#include <memory>
#include <string>
#include <vector>

#include "actsim/baselines.hpp"
#include "actsim/calibration.hpp"
#include "actsim/common.hpp"
#include "actsim/config.hpp"
#include "actsim/core.hpp"
#include "actsim/kinetics.hpp"
#include "actsim/policy.hpp"
#include "actsim/uncertainty.hpp"

namespace actsim::harness {

/// Everything a run or campaign needs, loadable from a key/value config file.
struct ExperimentConfig {
    std::string arm = "actor-simulator";
    std::vector<std::string> arms = {"actor-simulator", "random", "gp"};
    int case_size = 20;
    int iterations = 100;  // Algorithm iterations K
    int init_episodes = 5;
    int horizon = 12;      // physical episode length (steps)
    int replications = 30;
    int eval_every = 5;
    int eval_episodes = 200;
    int final_eval_episodes = 1000;
    double gamma = 0.99;
    double penalty_c = 1.0;  // lambda = c * gamma
    int n_actions = 11;
    std::uint64_t master_seed = 20240817;
    std::string out_dir = "out";
    bool write_audit = true;

    double dt_hours = 4.0;
    int substeps = 16;
    double noise_frac = 0.05;
    double noise_floor = 0.01;
    std::string params_file;  // optional kinetic-parameter overrides
    std::string stoich_file;  // optional stoichiometry override

    calibration::MleOptions mle;
    uncertainty::UncertaintyOptions uopts;
    policy::DqnOptions dqn;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_config(const KVConfig& cfg);
    void validate() const;

    kinetics::KineticsSpec make_kinetics_spec() const;
};

struct MetricsRecord {
    int replication = 0;
    int iteration = 0;
    std::string arm;
    double rel_param_error = 0.0;  // ||(beta_hat - beta*) / beta*||_2
    double j_hat = 0.0;            // NaN on iterations without evaluation
    double calibration_loss = 0.0; // negative mean log-likelihood at beta_hat
    double wall_time_s = 0.0;      // reported separately from the deterministic CSV
    int physical_transitions = 0;
    bool degraded = false;
};

/// Uniform draw in [1e-6 b*, 4 b*] per entry, clipped to the box bounds.
Vec init_beta(const Vec& beta_true, const Vec& lo, const Vec& hi, RngStream& rng);

struct AuditRow {
    int iteration = 0;
    uncertainty::ActionUncertainty entry;
};

struct RunArtifacts {
    std::vector<MetricsRecord> metrics;
    Vec beta_true;
    Vec beta_final;
    Dataset data;
    std::vector<AuditRow> audit;
    std::vector<policy::TrainLogRow> train_log;
    int degraded_iterations = 0;
    EvalResult final_eval;
    std::unique_ptr<policy::QNetwork> net_final;
};

/// One replication of the full loop for one arm. Throws RunFailedError when
/// more than 20% of iterations degrade.
RunArtifacts run_arm(const ExperimentConfig& config, const std::string& arm, int replication);

struct CampaignResult {
    int completed_runs = 0;
    int failed_runs = 0;
    std::string metrics_path;
    std::string summary_path;
    std::string mape_path;
    std::string status_path;
};

/// All arms x replications, sequentially; writes metrics.csv, summary.csv
/// (per-arm t-intervals), flux_mape.csv, status.csv, audit.csv and
/// timings.csv under config.out_dir.
CampaignResult run_campaign(const ExperimentConfig& config);

/// Two-sided 95% Student-t critical value.
double t_critical_975(int df);

/// Mean absolute percentage error per reaction flux between the true kinetic
/// parameters and the run's final estimate, averaged over probe states drawn
/// by replaying the learned policy on the true system. NaN for fluxes that
/// stay at zero along the probes.
Vec per_flux_mape(const ExperimentConfig& config, const RunArtifacts& art, int replication);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows);
void write_timings_csv(const std::string& path, const std::vector<MetricsRecord>& rows);
void write_audit_csv(const std::string& path, const std::string& arm, int replication,
                     const std::vector<AuditRow>& rows, bool append);
void write_train_log_csv(const std::string& path, const std::vector<policy::TrainLogRow>& rows);

}  // namespace actsim::harness
