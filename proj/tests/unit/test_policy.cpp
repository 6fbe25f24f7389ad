#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "actsim/kinetics.hpp"
#include "actsim/linear_gaussian.hpp"
#include "actsim/policy.hpp"
#include "actsim/rng.hpp"

using namespace actsim;
using namespace actsim::policy;

namespace {

// Deterministic two-state MDP: action 0 keeps the state, action 1 flips it,
// landing in state 0 pays 1. With gamma = 1/2 the optimal values are
// Q(0,keep) = 2, Q(0,flip) = 1, Q(1,keep) = 1, Q(1,flip) = 2.
class FlipChainEnv : public Environment {
  public:
    int state_dim() const override { return 1; }
    int n_actions() const override { return 2; }
    ActionValue action(int index) const override {
        return {index, static_cast<double>(index)};
    }
    Vec initial_state(RngStream& rng) const override {
        return {rng.uniform() < 0.5 ? 0.0 : 1.0};
    }
    Vec step_sample(const Vec& s, const ActionValue& a, RngStream&) const override {
        if (a.index == 0) return s;
        return {s[0] < 0.5 ? 1.0 : 0.0};
    }
    double reward(const Vec&, const ActionValue&, const Vec& s_next) const override {
        return s_next[0] < 0.5 ? 1.0 : 0.0;
    }
    double reward_raw(const Vec& s, const ActionValue& a, const Vec& s_next) const override {
        return reward(s, a, s_next);
    }
};

// Minimal base environment around a transition model: fixed start window,
// constant reward, grid of `n` actions.
class ConstantRewardEnv : public Environment {
  public:
    ConstantRewardEnv(const TransitionModel* twin, int n_actions, double reward)
        : twin_(twin), grid_(make_action_grid(n_actions)), reward_(reward) {}
    int state_dim() const override { return twin_->state_dim(); }
    int n_actions() const override { return static_cast<int>(grid_.size()); }
    ActionValue action(int index) const override { return grid_[index]; }
    Vec initial_state(RngStream& rng) const override {
        return Vec(static_cast<size_t>(twin_->state_dim()), rng.uniform(0.5, 1.5));
    }
    Vec step_sample(const Vec& s, const ActionValue& a, RngStream& rng) const override {
        return twin_->sample(s, a, rng);
    }
    double reward(const Vec&, const ActionValue&, const Vec&) const override { return reward_; }
    double reward_raw(const Vec& s, const ActionValue& a, const Vec& s_next) const override {
        return reward(s, a, s_next);
    }

  private:
    const TransitionModel* twin_;
    std::vector<ActionValue> grid_;
    double reward_;
};

uncertainty::UncertaintyOptions tiny_uopts() {
    uncertainty::UncertaintyOptions u;
    u.rollouts = 2;
    u.w_draws = 2;
    u.horizon = 3;
    return u;
}

}  // namespace

TEST_CASE("exploration schedule decays linearly to its floor") {
    EpsilonSchedule sched;
    CHECK(sched.at(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(sched.at(100) == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(sched.at(1180) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(sched.at(100000) == 0.01);
}

TEST_CASE("epsilon-greedy is greedy at zero and validates inputs") {
    auto grid = make_action_grid(3);
    RngStream rng(1);
    CHECK(epsilon_greedy_action({0.2, 0.9, 0.9}, 0.0, grid, rng).index == 1);  // tie -> lowest
    CHECK(epsilon_greedy_action({0.5, 0.5, 0.5}, 0.0, grid, rng).index == 0);
    CHECK(epsilon_greedy_action({0.1, 0.2, 0.7}, 0.0, grid, rng).index == 2);
    CHECK_THROWS_AS(epsilon_greedy_action({0.1, 0.2}, 0.0, grid, rng), std::invalid_argument);
    CHECK_THROWS_AS(epsilon_greedy_action({0.1, 0.2, 0.3}, 1.5, grid, rng),
                    std::invalid_argument);
}

TEST_CASE("epsilon-greedy at one is uniform over the grid") {
    auto grid = make_action_grid(11);
    Vec q(11, 0.0);
    q[4] = 100.0;  // the argmax must not matter at eps = 1
    RngStream rng(314159);
    std::vector<int> counts(11, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[epsilon_greedy_action(q, 1.0, grid, rng).index];
    for (int i = 0; i < 11; ++i) {
        CHECK(std::abs(counts[i] / static_cast<double>(n) - 1.0 / 11) <= 0.02);
    }
}

TEST_CASE("q-network scales its inputs and keeps shapes consistent") {
    RngStream rng(7);
    QNetwork scaled(1, 2, {2.0});
    scaled.init_params(rng);
    QNetwork plain(1, 2, {1.0});
    plain.set_params(scaled.params());

    Vec qa = scaled.q_values({1.4});
    Vec qb = plain.q_values({0.7});
    REQUIRE(qa.size() == 2);
    CHECK(qa[0] == doctest::Approx(qb[0]).epsilon(1e-15));
    CHECK(qa[1] == doctest::Approx(qb[1]).epsilon(1e-15));

    int best = scaled.argmax_action({1.4});
    CHECK(qa[best] >= qa[1 - best]);
}

TEST_CASE("q-network backpropagation matches finite differences") {
    RngStream rng(11);
    QNetwork net(2, 3, {1.0, 1.0});
    net.init_params(rng);

    std::vector<Vec> states;
    std::vector<QNetwork::BatchRef> batch;
    Vec targets;
    for (int i = 0; i < 8; ++i) {
        states.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
        targets.push_back(rng.uniform(0.0, 2.0));
    }
    for (int i = 0; i < 8; ++i) batch.push_back({&states[i], i % 3});

    Vec grad;
    const double loss = net.batch_loss_and_grad(batch, targets, grad);
    CHECK(loss == doctest::Approx(net.batch_loss(batch, targets)).epsilon(1e-12));
    REQUIRE(grad.size() == net.params().size());

    Vec w = net.params();
    const size_t stride = std::max<size_t>(1, w.size() / 50);
    for (size_t p = 0; p < w.size(); p += stride) {
        const double h = 1e-6 * std::max(1.0, std::abs(w[p]));
        Vec wp = w, wm = w;
        wp[p] += h;
        wm[p] -= h;
        net.set_params(wp);
        const double lp = net.batch_loss(batch, targets);
        net.set_params(wm);
        const double lm = net.batch_loss(batch, targets);
        net.set_params(w);
        const double fd = (lp - lm) / (2 * h);
        CHECK(std::abs(grad[p] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("weight decay pulls parameters toward zero") {
    RngStream rng(13);
    QNetwork net(1, 2, {1.0});
    net.init_params(rng);
    Vec before = net.params();
    Vec zero_grad(before.size(), 0.0);
    net.adam_step(zero_grad, 1e-4, 0.1);
    const Vec& after = net.params();
    int moved_toward_zero = 0, considered = 0;
    for (size_t i = 0; i < before.size(); ++i) {
        if (std::abs(before[i]) < 1e-3) continue;
        ++considered;
        if (std::abs(after[i]) < std::abs(before[i])) ++moved_toward_zero;
    }
    REQUIRE(considered > 50);
    CHECK(moved_toward_zero == considered);
}

TEST_CASE("replay buffer evicts oldest entries and samples without replacement") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) {
        buf.push(ReplayItem{{0.0}, 0, static_cast<double>(i), {0.0}, false});
    }
    CHECK(buf.size() == 3);
    CHECK(buf.inserted() == 5);
    std::multiset<double> kept;
    for (size_t i = 0; i < buf.size(); ++i) kept.insert(buf[i].r);
    CHECK(kept == std::multiset<double>{2.0, 3.0, 4.0});

    ReplayBuffer big(100);
    for (int i = 0; i < 10; ++i) {
        big.push(ReplayItem{{0.0}, 0, static_cast<double>(i), {0.0}, false});
    }
    RngStream rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        auto idx = big.sample_indices(5, rng);
        REQUIRE(idx.size() == 5);
        std::set<size_t> uniq(idx.begin(), idx.end());
        CHECK(uniq.size() == 5);
        for (size_t i : idx) CHECK(i < 10);
    }
    auto all = big.sample_indices(10, rng);
    CHECK(std::set<size_t>(all.begin(), all.end()).size() == 10);
    CHECK_THROWS_AS(big.sample_indices(11, rng), std::invalid_argument);
}

TEST_CASE("td step needs a full batch and fits a single repeated target") {
    RngStream rng(17);
    QNetwork net(1, 2, {1.0});
    net.init_params(rng);
    DqnOptions opts;
    opts.gamma = 0.0;
    opts.batch = 64;

    ReplayBuffer buf(100);
    ReplayItem item{{0.3}, 1, 0.7, {0.9}, false};
    buf.push(item);
    CHECK_THROWS_AS(dqn_train_step(net, buf, opts, rng), std::invalid_argument);
    for (int i = 1; i < 64; ++i) buf.push(item);

    // gamma = 0 makes the target exactly r, so Q(s, a) must converge to it
    double loss = 0.0;
    for (int step = 0; step < 800; ++step) loss = dqn_train_step(net, buf, opts, rng);
    CHECK(loss < 1e-4);
    CHECK(net.q_values({0.3})[1] == doctest::Approx(0.7).epsilon(1e-2));
}

TEST_CASE("dqn recovers the optimal values of a deterministic chain") {
    FlipChainEnv env;
    RngStream init_rng(23);
    TrainState state(1, 2, {1.0}, 10000, init_rng);
    DqnOptions opts;
    opts.gamma = 0.5;
    opts.episodes = 400;
    opts.horizon = 12;

    RngStream rng(29);
    auto rows = train_policy(env, state, opts, 3, rng);
    REQUIRE(rows.size() == 400);
    CHECK(rows.front().iteration == 3);
    CHECK(rows.front().epsilon > rows.back().epsilon);
    CHECK(state.env_steps == 400 * 12);

    const double q00 = state.net.q_values({0.0})[0];
    const double q01 = state.net.q_values({0.0})[1];
    const double q10 = state.net.q_values({1.0})[0];
    const double q11 = state.net.q_values({1.0})[1];
    CHECK(std::abs(q00 - 2.0) <= 0.05 * 2.0);
    CHECK(std::abs(q01 - 1.0) <= 0.05 * 2.0);
    CHECK(std::abs(q10 - 1.0) <= 0.05 * 2.0);
    CHECK(std::abs(q11 - 2.0) <= 0.05 * 2.0);

    // greedy play is optimal: keep in state 0, flip in state 1
    CHECK(state.net.argmax_action({0.0}) == 0);
    CHECK(state.net.argmax_action({1.0}) == 1);
}

TEST_CASE("training mutates the network and the checkpoint restores it exactly") {
    FlipChainEnv env;
    RngStream init_rng(31);
    TrainState state(1, 2, {1.0}, 1000, init_rng);
    const std::uint64_t fresh_hash = state.net.param_hash();

    DqnOptions opts;
    opts.gamma = 0.5;
    opts.episodes = 20;
    RngStream rng(37);
    train_policy(env, state, opts, 0, rng);
    CHECK(state.net.param_hash() != fresh_hash);
    CHECK(state.env_steps == 20 * opts.horizon);

    const std::string path = "test_policy_ckpt.bin";
    state.save(path);
    RngStream init2(999);
    TrainState restored(1, 2, {1.0}, 1000, init2);
    restored.load_from(path);
    std::remove(path.c_str());

    CHECK(restored.env_steps == state.env_steps);
    CHECK(restored.net.param_hash() == state.net.param_hash());
    Vec qa = state.net.q_values({0.4});
    Vec qb = restored.net.q_values({0.4});
    CHECK(qa[0] == qb[0]);
    CHECK(qa[1] == qb[1]);

    // Adam moments travel with the checkpoint: one identical training step on
    // each copy stays bit-identical.
    ReplayBuffer buf(100);
    for (int i = 0; i < 64; ++i) {
        buf.push(ReplayItem{{0.1 * (i % 7)}, i % 2, 0.5, {0.2}, false});
    }
    DqnOptions sopts;
    sopts.gamma = 0.0;
    RngStream ra(41), rb(41);
    dqn_train_step(state.net, buf, sopts, ra);
    dqn_train_step(restored.net, buf, sopts, rb);
    CHECK(state.net.param_hash() == restored.net.param_hash());
}

TEST_CASE("penalized twin reward subtracts the scaled uncertainty") {
    // sigma = 1, gain 1, s = 2: unit information is 4; covariance 0.03125
    // puts the trace at 0.125. A huge reward scale pins the weight at 2, so
    // u = sqrt(2 * 0.125) = 1/2 and the penalized reward is 1 - 0.99/2.
    LinearGaussianModel twin({1.0}, {1.0}, {1.0});
    ConstantRewardEnv base(&twin, 2, 1.0);
    FixedActionPolicy prev({0, 0.0});
    Mat cov(1, 1);
    cov(0, 0) = 0.03125;
    uncertainty::UncertaintyOptions uopts = tiny_uopts();
    uopts.reward_scale = 1e9;
    PenalizedTwinEnv env(&twin, &base, cov, &prev, 0.99, uopts, SeedNode(43));

    CHECK(env.penalty({2.0}, {0, 0.0}) == doctest::Approx(0.99 * 0.5).epsilon(1e-9));
    CHECK(env.reward({2.0}, {0, 0.0}, {0.0}) == doctest::Approx(1.0 - 0.99 * 0.5).epsilon(1e-9));
    // the unpenalized channel stays untouched
    CHECK(env.reward_raw({2.0}, {0, 0.0}, {0.0}) == 1.0);
    CHECK(env.state_dim() == 1);
    CHECK(env.n_actions() == 2);
}

TEST_CASE("penalty cache buckets by quantized state and action") {
    LinearGaussianModel twin({1.0}, {1.0}, {1.0, 1.5});
    ConstantRewardEnv base(&twin, 2, 0.0);
    FixedActionPolicy prev({0, 0.0});
    Mat cov(1, 1);
    cov(0, 0) = 0.5;
    PenalizedTwinEnv env(&twin, &base, cov, &prev, 1.0, tiny_uopts(), SeedNode(47));

    CHECK(env.cache_size() == 0);
    const double p1 = env.penalty({2.0}, {0, 0.0});
    CHECK(env.cache_size() == 1);
    // noise sd 1 -> bucket width 5; 2.0 and 2.3 share a bucket
    const double p2 = env.penalty({2.3}, {0, 0.0});
    CHECK(env.cache_size() == 1);
    CHECK(p1 == p2);
    env.penalty({2.0}, {1, 1.0});
    CHECK(env.cache_size() == 2);
    env.penalty({8.0}, {0, 0.0});  // bucket index 2
    CHECK(env.cache_size() == 3);

    // evaluation is seeded by the bucket, so a fresh instance reproduces it
    PenalizedTwinEnv env2(&twin, &base, cov, &prev, 1.0, tiny_uopts(), SeedNode(47));
    CHECK(env2.penalty({2.0}, {0, 0.0}) == p1);
}

TEST_CASE("zero penalty weight short-circuits the uncertainty machinery") {
    LinearGaussianModel twin({1.0}, {1.0}, {1.0});
    ConstantRewardEnv base(&twin, 2, 0.25);
    FixedActionPolicy prev({0, 0.0});
    Mat cov(1, 1);
    cov(0, 0) = 100.0;
    PenalizedTwinEnv env(&twin, &base, cov, &prev, 0.0, tiny_uopts(), SeedNode(53));
    CHECK(env.penalty({2.0}, {0, 0.0}) == 0.0);
    CHECK(env.reward({2.0}, {0, 0.0}, {0.0}) == 0.25);
    CHECK(env.cache_size() == 0);

    CHECK_THROWS_AS(PenalizedTwinEnv(&twin, &base, cov, &prev, -0.1, tiny_uopts(), SeedNode(1)),
                    std::invalid_argument);
}

TEST_CASE("unevaluable uncertainty falls back to the maximal penalty") {
    kinetics::KineticsSpec spec = kinetics::KineticsSpec::defaults();
    spec.params.set_case_mask(20);
    kinetics::KineticsModel twin(spec);
    kinetics::KineticsEnv base(&twin);
    FixedActionPolicy prev({0, 0.0});
    Mat cov(20, 20);
    for (int i = 0; i < 20; ++i) cov(i, i) = 1.0;
    uncertainty::UncertaintyOptions uopts = tiny_uopts();
    PenalizedTwinEnv env(&twin, &base, cov, &prev, 2.0, uopts, SeedNode(59));

    Vec runaway = spec.base_state;
    runaway[kinetics::M_X] = 5e9;
    const double expected = 2.0 * std::sqrt(2.0 * (1.0 + uopts.v_max * uopts.v_max));
    CHECK(env.penalty(runaway, {0, 0.0}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dqn avoids the action the penalty singles out") {
    // Action 1 moves the mean with gain 10, so its information (and penalty)
    // dwarfs action 0's zero gain; rewards are otherwise identical, so the
    // learned greedy policy must prefer action 0 everywhere.
    LinearGaussianModel twin({1.0}, {1.0}, {0.0, 10.0});
    ConstantRewardEnv base(&twin, 2, 0.0);
    FixedActionPolicy prev({0, 0.0});
    Mat cov(1, 1);
    cov(0, 0) = 0.5;
    PenalizedTwinEnv env(&twin, &base, cov, &prev, 1.0, tiny_uopts(), SeedNode(61));

    RngStream init_rng(67);
    TrainState state(1, 2, {1.0}, 10000, init_rng);
    DqnOptions opts;
    opts.gamma = 0.5;
    opts.episodes = 150;
    RngStream rng(71);
    train_policy(env, state, opts, 0, rng);

    for (double s = -2.0; s <= 2.0; s += 0.5) {
        CHECK(state.net.argmax_action({s}) == 0);
    }
}
