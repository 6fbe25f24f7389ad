#include "actsim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

namespace actsim::policy {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'S', 'Q', 'N', 'E', 'T', '0', '1'};

size_t weight_count(int d, int n) {
    const int h = QNetwork::kHidden;
    return static_cast<size_t>(h) * d + h + static_cast<size_t>(h) * h + h +
           static_cast<size_t>(n) * h + n;
}

}  // namespace

QNetwork::QNetwork(int state_dim, int n_actions, Vec input_scale)
    : state_dim_(state_dim), n_actions_(n_actions), scale_(std::move(input_scale)) {
    if (state_dim < 1 || n_actions < 1) {
        throw std::invalid_argument("QNetwork needs positive state and action dimensions");
    }
    if (scale_.empty()) scale_.assign(static_cast<size_t>(state_dim), 1.0);
    if (scale_.size() != static_cast<size_t>(state_dim)) {
        throw std::invalid_argument("input scale size does not match the state dimension");
    }
    for (double s : scale_) {
        if (!(s > 0.0)) throw std::invalid_argument("input scales must be positive");
    }
    w_.assign(weight_count(state_dim, n_actions), 0.0);
    adam_m_.assign(w_.size(), 0.0);
    adam_v_.assign(w_.size(), 0.0);
}

void QNetwork::init_params(RngStream& rng) {
    const int h = kHidden;
    size_t off = 0;
    auto he_block = [&](int rows, int cols) {
        const double sd = std::sqrt(2.0 / cols);
        for (int i = 0; i < rows * cols; ++i) w_[off++] = rng.normal(0.0, sd);
        for (int i = 0; i < rows; ++i) w_[off++] = 0.0;  // biases
    };
    he_block(h, state_dim_);
    he_block(h, h);
    he_block(n_actions_, h);
    std::fill(adam_m_.begin(), adam_m_.end(), 0.0);
    std::fill(adam_v_.begin(), adam_v_.end(), 0.0);
    adam_t_ = 0;
}

namespace {

struct Activations {
    Vec x, h1, h2, q;
};

void forward_pass(const Vec& w, const Vec& scale, int d, int n, const Vec& state,
                  Activations& act) {
    const int h = QNetwork::kHidden;
    act.x.resize(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        act.x[static_cast<size_t>(i)] = state[static_cast<size_t>(i)] / scale[static_cast<size_t>(i)];
    }
    const size_t w1 = 0, b1 = w1 + static_cast<size_t>(h) * d;
    const size_t w2 = b1 + h, b2 = w2 + static_cast<size_t>(h) * h;
    const size_t w3 = b2 + h, b3 = w3 + static_cast<size_t>(n) * h;

    act.h1.assign(static_cast<size_t>(h), 0.0);
    for (int i = 0; i < h; ++i) {
        double z = w[b1 + static_cast<size_t>(i)];
        const size_t row = w1 + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) z += w[row + static_cast<size_t>(j)] * act.x[static_cast<size_t>(j)];
        act.h1[static_cast<size_t>(i)] = z > 0.0 ? z : 0.0;
    }
    act.h2.assign(static_cast<size_t>(h), 0.0);
    for (int i = 0; i < h; ++i) {
        double z = w[b2 + static_cast<size_t>(i)];
        const size_t row = w2 + static_cast<size_t>(i) * h;
        for (int j = 0; j < h; ++j) z += w[row + static_cast<size_t>(j)] * act.h1[static_cast<size_t>(j)];
        act.h2[static_cast<size_t>(i)] = z > 0.0 ? z : 0.0;
    }
    act.q.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double z = w[b3 + static_cast<size_t>(i)];
        const size_t row = w3 + static_cast<size_t>(i) * h;
        for (int j = 0; j < h; ++j) z += w[row + static_cast<size_t>(j)] * act.h2[static_cast<size_t>(j)];
        act.q[static_cast<size_t>(i)] = z;
    }
}

}  // namespace

Vec QNetwork::q_values(const Vec& state) const {
    if (state.size() != static_cast<size_t>(state_dim_)) {
        throw std::invalid_argument("state size does not match the network input");
    }
    Activations act;
    forward_pass(w_, scale_, state_dim_, n_actions_, state, act);
    return act.q;
}

int QNetwork::argmax_action(const Vec& state) const {
    const Vec q = q_values(state);
    int best = 0;
    for (int i = 1; i < n_actions_; ++i) {
        if (q[static_cast<size_t>(i)] > q[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

double QNetwork::batch_loss(const std::vector<BatchRef>& batch, const Vec& targets) const {
    if (batch.empty() || batch.size() != targets.size()) {
        throw std::invalid_argument("batch and targets must be non-empty and equal-sized");
    }
    Activations act;
    double loss = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        forward_pass(w_, scale_, state_dim_, n_actions_, *batch[i].s, act);
        const double e = act.q[static_cast<size_t>(batch[i].action_index)] - targets[i];
        loss += e * e;
    }
    return loss / static_cast<double>(batch.size());
}

double QNetwork::batch_loss_and_grad(const std::vector<BatchRef>& batch, const Vec& targets,
                                     Vec& grad) const {
    if (batch.empty() || batch.size() != targets.size()) {
        throw std::invalid_argument("batch and targets must be non-empty and equal-sized");
    }
    const int d = state_dim_, n = n_actions_, h = kHidden;
    const size_t w1 = 0, b1 = w1 + static_cast<size_t>(h) * d;
    const size_t w2 = b1 + h, b2 = w2 + static_cast<size_t>(h) * h;
    const size_t w3 = b2 + h, b3 = w3 + static_cast<size_t>(n) * h;

    grad.assign(w_.size(), 0.0);
    Activations act;
    Vec d2(static_cast<size_t>(h)), d1(static_cast<size_t>(h));
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    for (size_t bi = 0; bi < batch.size(); ++bi) {
        forward_pass(w_, scale_, d, n, *batch[bi].s, act);
        const int a = batch[bi].action_index;
        const double e = act.q[static_cast<size_t>(a)] - targets[bi];
        loss += e * e;
        const double dq = 2.0 * e * inv_b;

        // Output layer: only row `a` carries gradient.
        const size_t row3 = w3 + static_cast<size_t>(a) * h;
        for (int j = 0; j < h; ++j) grad[row3 + static_cast<size_t>(j)] += dq * act.h2[static_cast<size_t>(j)];
        grad[b3 + static_cast<size_t>(a)] += dq;

        for (int j = 0; j < h; ++j) {
            const double back = dq * w_[row3 + static_cast<size_t>(j)];
            d2[static_cast<size_t>(j)] = act.h2[static_cast<size_t>(j)] > 0.0 ? back : 0.0;
        }
        for (int i = 0; i < h; ++i) {
            const double di = d2[static_cast<size_t>(i)];
            if (di == 0.0) continue;
            const size_t row = w2 + static_cast<size_t>(i) * h;
            for (int j = 0; j < h; ++j) grad[row + static_cast<size_t>(j)] += di * act.h1[static_cast<size_t>(j)];
            grad[b2 + static_cast<size_t>(i)] += di;
        }
        for (int j = 0; j < h; ++j) {
            double back = 0.0;
            for (int i = 0; i < h; ++i) {
                if (d2[static_cast<size_t>(i)] != 0.0) {
                    back += d2[static_cast<size_t>(i)] * w_[w2 + static_cast<size_t>(i) * h + static_cast<size_t>(j)];
                }
            }
            d1[static_cast<size_t>(j)] = act.h1[static_cast<size_t>(j)] > 0.0 ? back : 0.0;
        }
        for (int i = 0; i < h; ++i) {
            const double di = d1[static_cast<size_t>(i)];
            if (di == 0.0) continue;
            const size_t row = w1 + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) grad[row + static_cast<size_t>(j)] += di * act.x[static_cast<size_t>(j)];
            grad[b1 + static_cast<size_t>(i)] += di;
        }
    }
    return loss * inv_b;
}

void QNetwork::adam_step(const Vec& grad, double lr, double l2) {
    if (grad.size() != w_.size()) throw std::invalid_argument("gradient size mismatch");
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++adam_t_;
    const double c1 = 1.0 - std::pow(beta1, adam_t_);
    const double c2 = 1.0 - std::pow(beta2, adam_t_);
    for (size_t i = 0; i < w_.size(); ++i) {
        const double g = grad[i] + l2 * w_[i];
        adam_m_[i] = beta1 * adam_m_[i] + (1.0 - beta1) * g;
        adam_v_[i] = beta2 * adam_v_[i] + (1.0 - beta2) * g * g;
        w_[i] -= lr * (adam_m_[i] / c1) / (std::sqrt(adam_v_[i] / c2) + eps);
    }
}

void QNetwork::set_params(const Vec& w) {
    if (w.size() != w_.size()) throw std::invalid_argument("parameter vector size mismatch");
    w_ = w;
}

std::uint64_t QNetwork::param_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t bytes) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    mix(&state_dim_, sizeof(state_dim_));
    mix(&n_actions_, sizeof(n_actions_));
    mix(w_.data(), w_.size() * sizeof(double));
    return h;
}

void QNetwork::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::int32_t dims[3] = {static_cast<std::int32_t>(state_dim_),
                                  static_cast<std::int32_t>(n_actions_), kHidden};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    const std::int64_t t = adam_t_;
    out.write(reinterpret_cast<const char*>(&t), sizeof(t));
    auto put = [&out](const Vec& v) {
        const std::uint64_t n = v.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    };
    put(scale_);
    put(w_);
    put(adam_m_);
    put(adam_v_);
    if (!out) throw ConfigError("checkpoint write failed: " + path);
}

QNetwork QNetwork::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw ConfigError("bad checkpoint header: " + path);
    }
    std::int32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    std::int64_t t = 0;
    in.read(reinterpret_cast<char*>(&t), sizeof(t));
    if (!in || dims[2] != kHidden) throw ConfigError("incompatible checkpoint: " + path);
    auto get = [&in, &path](Vec& v) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!in || n > (1ull << 30)) throw ConfigError("corrupt checkpoint: " + path);
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw ConfigError("corrupt checkpoint: " + path);
    };
    Vec scale;
    get(scale);
    QNetwork net(dims[0], dims[1], scale);
    get(net.w_);
    get(net.adam_m_);
    get(net.adam_v_);
    net.adam_t_ = t;
    if (net.w_.size() != weight_count(dims[0], dims[1])) {
        throw ConfigError("checkpoint weight count mismatch: " + path);
    }
    return net;
}

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(ReplayItem item) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(item));
    } else {
        items_[head_] = std::move(item);
        head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
}

std::vector<size_t> ReplayBuffer::sample_indices(int k, RngStream& rng) const {
    const size_t n = items_.size();
    if (k < 1 || static_cast<size_t>(k) > n) {
        throw std::invalid_argument("cannot sample " + std::to_string(k) + " of " +
                                    std::to_string(n) + " buffered transitions");
    }
    // Floyd's sampling: k distinct indices, O(k) expected work.
    std::set<size_t> chosen;
    for (size_t j = n - static_cast<size_t>(k); j < n; ++j) {
        const size_t t = static_cast<size_t>(rng.uniform_int(static_cast<int>(j) + 1));
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    return std::vector<size_t>(chosen.begin(), chosen.end());
}

ActionValue epsilon_greedy_action(const Vec& q_values, double eps,
                                  const std::vector<ActionValue>& grid, RngStream& rng) {
    if (grid.empty() || q_values.size() != grid.size()) {
        throw std::invalid_argument("action grid and q-values must match and be non-empty");
    }
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("epsilon must lie in [0,1]");
    if (eps > 0.0 && rng.uniform() < eps) {
        return grid[static_cast<size_t>(rng.uniform_int(static_cast<int>(grid.size())))];
    }
    size_t best = 0;
    for (size_t i = 1; i < q_values.size(); ++i) {
        if (q_values[i] > q_values[best]) best = i;
    }
    return grid[best];
}

double dqn_train_step(QNetwork& net, const ReplayBuffer& buffer, const DqnOptions& opts,
                      RngStream& rng) {
    if (buffer.size() < static_cast<size_t>(opts.batch)) {
        throw std::invalid_argument("replay buffer smaller than the batch size");
    }
    const std::vector<size_t> idx = buffer.sample_indices(opts.batch, rng);
    std::vector<QNetwork::BatchRef> batch;
    Vec targets;
    batch.reserve(idx.size());
    targets.reserve(idx.size());
    for (size_t i : idx) {
        const ReplayItem& item = buffer[i];
        double y = item.r;
        if (!item.terminal) {
            const Vec qn = net.q_values(item.s_next);
            double qmax = qn[0];
            for (double q : qn) qmax = std::max(qmax, q);
            y += opts.gamma * qmax;
        }
        batch.push_back(QNetwork::BatchRef{&item.s, item.action_index});
        targets.push_back(y);
    }
    Vec grad;
    const double loss = net.batch_loss_and_grad(batch, targets, grad);
    if (!std::isfinite(loss)) {
        double tmin = targets[0], tmax = targets[0];
        for (double t : targets) {
            tmin = std::min(tmin, t);
            tmax = std::max(tmax, t);
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "training-diverged: non-finite TD loss (targets in [%.3g, %.3g], step %ld)",
                      tmin, tmax, static_cast<long>(buffer.inserted()));
        throw TrainingDivergedError(buf);
    }
    net.adam_step(grad, opts.lr, opts.l2);
    return loss;
}

TrainState::TrainState(int state_dim, int n_actions, Vec input_scale, size_t replay_capacity,
                       RngStream& init_rng)
    : net(state_dim, n_actions, std::move(input_scale)), buffer(replay_capacity) {
    net.init_params(init_rng);
}

void TrainState::save(const std::string& path) const {
    net.save(path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    const std::int64_t steps = env_steps;
    out.write(reinterpret_cast<const char*>(&steps), sizeof(steps));
    if (!out) throw ConfigError("checkpoint write failed: " + path);
}

void TrainState::load_from(const std::string& path) {
    net = QNetwork::load(path);
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    const std::streamoff end = in.tellg();
    in.seekg(end - static_cast<std::streamoff>(sizeof(std::int64_t)));
    std::int64_t steps = 0;
    in.read(reinterpret_cast<char*>(&steps), sizeof(steps));
    if (!in) throw ConfigError("corrupt checkpoint trailer: " + path);
    env_steps = steps;
}

std::vector<TrainLogRow> train_policy(const Environment& env, TrainState& state,
                                      const DqnOptions& opts, int iteration_tag, RngStream& rng) {
    if (opts.episodes < 1) throw std::invalid_argument("train_policy: episodes must be >= 1");
    std::vector<ActionValue> grid;
    grid.reserve(static_cast<size_t>(env.n_actions()));
    for (int i = 0; i < env.n_actions(); ++i) grid.push_back(env.action(i));

    std::vector<TrainLogRow> rows;
    rows.reserve(static_cast<size_t>(opts.episodes));
    for (int ep = 0; ep < opts.episodes; ++ep) {
        Vec s = env.initial_state(rng);
        double loss_sum = 0.0;
        int loss_n = 0;
        int grad_steps = 0;
        Vec rewards;
        for (int t = 0; t < opts.horizon; ++t) {
            const double eps = state.schedule.at(state.env_steps);
            const Vec q = state.net.q_values(s);
            const ActionValue a = epsilon_greedy_action(q, eps, grid, rng);
            Vec s_next;
            try {
                s_next = env.step_sample(s, a, rng);
            } catch (const DivergedError&) {
                break;  // simulated episode ends early
            }
            const double r = env.reward(s, a, s_next);
            state.buffer.push(ReplayItem{s, a.index, r, s_next, false});
            ++state.env_steps;
            rewards.push_back(r);
            if (state.buffer.size() >= static_cast<size_t>(opts.batch) &&
                grad_steps < opts.grad_steps_per_episode) {
                loss_sum += dqn_train_step(state.net, state.buffer, opts, rng);
                ++loss_n;
                ++grad_steps;
            }
            s = std::move(s_next);
        }
        TrainLogRow row;
        row.iteration = iteration_tag;
        row.episode = ep;
        row.mean_loss = loss_n > 0 ? loss_sum / loss_n : 0.0;
        row.epsilon = state.schedule.at(state.env_steps);
        row.mean_penalized_return = discounted_return(rewards, opts.gamma);
        rows.push_back(row);
    }
    return rows;
}

PenalizedTwinEnv::PenalizedTwinEnv(const TransitionModel* twin, const Environment* base, Mat cov,
                                   const Policy* prev_policy, double lambda,
                                   uncertainty::UncertaintyOptions uopts, SeedNode useed)
    : twin_(twin),
      base_(base),
      cov_(std::move(cov)),
      prev_policy_(prev_policy),
      lambda_(lambda),
      uopts_(uopts),
      useed_(useed) {
    if (lambda_ < 0.0) throw std::invalid_argument("penalty weight must be nonnegative");
    const Vec& sd = twin_->noise_stddev();
    bucket_scale_.resize(sd.size());
    for (size_t i = 0; i < sd.size(); ++i) bucket_scale_[i] = std::max(5.0 * sd[i], 1e-3);
}

double PenalizedTwinEnv::penalty(const Vec& s, const ActionValue& a) const {
    if (lambda_ == 0.0) return 0.0;
    std::vector<int> bucket(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        bucket[i] = static_cast<int>(std::lround(s[i] / bucket_scale_[i]));
    }
    const auto key = std::make_pair(std::move(bucket), a.index);
    const auto it = cache_.find(key);
    if (it != cache_.end()) return lambda_ * it->second;

    std::uint64_t h = static_cast<std::uint64_t>(a.index) + 0x9e3779b97f4a7c15ull;
    for (int b : key.first) h = mix_seed(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(b)));
    RngStream stream = useed_.child(h).stream();
    const uncertainty::RewardFn base_reward = [this](const Vec& ps, const ActionValue& pa,
                                                     const Vec& pn) {
        return base_->reward(ps, pa, pn);
    };
    double u = 0.0;
    try {
        u = uncertainty::uncertainty_plug_in(*twin_, s, a, cov_, *prev_policy_, base_reward,
                                             uopts_, stream)
                .u;
    } catch (const DivergedError&) {
        // Unevaluable uncertainty: treat as maximal so training avoids it.
        u = std::sqrt(2.0 * (1.0 + uopts_.v_max * uopts_.v_max));
    }
    cache_.emplace(key, u);
    return lambda_ * u;
}

double PenalizedTwinEnv::reward(const Vec& s, const ActionValue& a, const Vec& s_next) const {
    return base_->reward(s, a, s_next) - penalty(s, a);
}

}  // namespace actsim::policy
