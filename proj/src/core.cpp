#include "actsim/core.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace actsim {

ActionValue UniformRandomPolicy::act(const Vec&, RngStream& rng) const {
    return grid_[rng.uniform_int(static_cast<int>(grid_.size()))];
}

int Dataset::n_episodes() const {
    int m = -1;
    for (const auto& t : samples)
        if (t.episode > m) m = t.episode;
    return m + 1;
}

void Dataset::append(Vec s, ActionValue a, Vec s_next, int episode, int step) {
    samples.push_back(TransitionSample{std::move(s), a, std::move(s_next), episode, step});
}

namespace {

void format_double(std::string& out, double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    out += buf;
}

}  // namespace

void Dataset::save_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open dataset file for writing: " + path);
    const int d = samples.empty() ? 0 : static_cast<int>(samples.front().s.size());
    std::string line = "episode,step";
    for (int i = 0; i < d; ++i) line += ",s_" + std::to_string(i);
    line += ",action_index,b";
    for (int i = 0; i < d; ++i) line += ",sprime_" + std::to_string(i);
    f << line << "\n";
    for (const auto& t : samples) {
        line.clear();
        line += std::to_string(t.episode) + "," + std::to_string(t.step);
        for (double x : t.s) {
            line += ",";
            format_double(line, x);
        }
        line += "," + std::to_string(t.a.index) + ",";
        format_double(line, t.a.b);
        for (double x : t.s_next) {
            line += ",";
            format_double(line, x);
        }
        f << line << "\n";
    }
}

Dataset Dataset::load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open dataset file: " + path);
    std::string header;
    if (!std::getline(f, header)) throw ConfigError("empty dataset file: " + path);

    // Infer the state dimension from the header.
    int d = 0;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ','))
            if (col.rfind("s_", 0) == 0) ++d;
    }
    if (d == 0) throw ConfigError("dataset header has no state columns: " + path);

    Dataset data;
    std::string line;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
        if (static_cast<int>(vals.size()) != 2 * d + 4)
            throw ConfigError("dataset row " + std::to_string(lineno) + " has " +
                              std::to_string(vals.size()) + " fields, expected " +
                              std::to_string(2 * d + 4));
        TransitionSample t;
        t.episode = static_cast<int>(vals[0]);
        t.step = static_cast<int>(vals[1]);
        t.s.assign(vals.begin() + 2, vals.begin() + 2 + d);
        t.a.index = static_cast<int>(vals[2 + d]);
        t.a.b = vals[3 + d];
        t.s_next.assign(vals.begin() + 4 + d, vals.begin() + 4 + 2 * d);
        data.samples.push_back(std::move(t));
    }
    return data;
}

double discounted_return(const Vec& rewards, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("discounted_return: gamma must be in [0,1)");
    double g = 0.0;
    double w = 1.0;
    for (double r : rewards) {
        g += w * r;
        w *= gamma;
    }
    return g;
}

Trajectory rollout(const Environment& env, const Policy& policy, int horizon, RngStream& rng) {
    Trajectory traj;
    Vec s = env.initial_state(rng);
    if (!all_finite(s)) throw DivergedError("non-finite initial state", 0);
    traj.states.push_back(s);
    for (int t = 0; t < horizon; ++t) {
        ActionValue a = policy.act(s, rng);
        Vec s_next = env.step_sample(s, a, rng);
        if (!all_finite(s_next)) throw DivergedError("simulation diverged", t);
        traj.actions.push_back(a);
        traj.rewards.push_back(env.reward(s, a, s_next));
        traj.rewards_raw.push_back(env.reward_raw(s, a, s_next));
        traj.states.push_back(s_next);
        s = std::move(s_next);
    }
    return traj;
}

EvalResult evaluate_policy(const Environment& env, const Policy& policy, int episodes, int horizon,
                           double gamma, RngStream& rng) {
    if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes must be >= 1");
    EvalResult res;
    res.episodes = episodes;
    double sum = 0.0, sum_sq = 0.0, sum_raw = 0.0;
    for (int e = 0; e < episodes; ++e) {
        Trajectory traj = rollout(env, policy, horizon, rng);
        double g = discounted_return(traj.rewards, gamma);
        sum += g;
        sum_sq += g * g;
        sum_raw += discounted_return(traj.rewards_raw, gamma);
    }
    res.mean_return = sum / episodes;
    res.mean_return_raw = sum_raw / episodes;
    if (episodes > 1) {
        double var = (sum_sq - sum * sum / episodes) / (episodes - 1);
        res.std_error = std::sqrt(var > 0.0 ? var / episodes : 0.0);
    }
    return res;
}

}  // namespace actsim
