import math

import numpy as np
import pytest

from contract_lab.adversaries import cost_code_angle, make_environment
from contract_lab.codes import generate_circle
from contract_lab.errors import MissingProposal, NoSmallerCost
from contract_lab.game import GameRound, ResolvedInstance, Setting, opt_profit, resolve
from contract_lab.geometry import ConvexBody
from contract_lab.learners import (
    BisectionPricer,
    FixedContract,
    GreedyMyopic,
    MaximalLearner,
    OptimisticCostLearner,
    PricingReduction,
    RandomContract,
    delta_schedule_cost,
    delta_schedule_reward,
    left_cost_gap,
    lifted_hidden_vector,
    make_learner,
    non_degenerating_reward,
    valuation_context,
)


def play(env, learner, T):
    for _ in range(T):
        rnd = env.next_round()
        if rnd is None:
            break
        a, rev = env.respond(learner.propose(rnd))
        learner.feedback(a, rev)


def grid_ndr(known, c_star, step=1e-3):
    """Smallest r on a grid for which some contract on a grid implements the new action."""
    xs = np.arange(step, 1 + step / 2, step)
    U = np.array([np.max(x * known.rewards - known.costs) for x in xs])
    need = (U + c_star) / xs
    i = int(np.argmin(need))
    return need[i], xs[i]


def test_delta_schedule_cost():
    # (2 pi)^0.2 * 2^0.6 * 10^-0.8 evaluated independently
    expect = math.exp(0.2 * math.log(2 * math.pi) + 0.6 * math.log(2) - 0.8 * math.log(10))
    assert delta_schedule_cost(2, 10**4) == pytest.approx(expect, abs=1e-12)
    assert delta_schedule_cost(2, 10**4) == pytest.approx(0.346940, abs=1e-6)
    assert delta_schedule_cost(2, 2) == 0.5
    assert delta_schedule_cost(2, 10**30) < 1e-4


def test_delta_schedule_reward():
    assert delta_schedule_reward(2, 10**4, 0.1) == pytest.approx(0.0921, abs=1e-4)
    with pytest.raises(ValueError):
        delta_schedule_reward(2, 10**4, 0.0)


def test_left_cost_gap():
    assert left_cost_gap(0.5, [0.0, 0.2, 1.0]) == pytest.approx(0.3)
    assert left_cost_gap(0.7, [0.0]) == pytest.approx(0.7)
    with pytest.raises(NoSmallerCost):
        left_cost_gap(0.0, [0.0, 0.3])


def test_ndr_worked_example():
    r, x = non_degenerating_reward(ResolvedInstance([0.0, 1.0, 2.0], [0.0, 0.2, 1.0]), 0.5)
    assert r == pytest.approx(1.375, abs=1e-12)
    assert x == pytest.approx(0.8, abs=1e-12)


def test_ndr_trivial_known():
    r, x = non_degenerating_reward(ResolvedInstance([0.0], [0.0]), 0.5)
    assert (r, x) == (pytest.approx(0.5), 1.0)


def test_ndr_matches_grid_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        inst = ResolvedInstance(np.r_[0.0, rng.random(n) * 2], np.r_[0.0, rng.random(n) * 0.5])
        c_star = float(rng.uniform(0.05, 0.5))
        r, _ = non_degenerating_reward(inst, c_star)
        rg, _ = grid_ndr(inst, c_star)
        assert r <= rg + 1e-12
        assert r == pytest.approx(rg, abs=1e-2 * max(1.0, rg))


def test_fixed_and_random_baselines():
    rnd = GameRound(Setting.COST, [0.0, 1.0], [[0.0, 0.0], [0.5, 0.0]])
    f = FixedContract(0.5)
    for _ in range(3):
        assert f.propose(rnd) == 0.5
        f.feedback(0)
    a, b = RandomContract(3), RandomContract(3)
    xs = []
    for _ in range(5):
        xa, xb = a.propose(rnd), b.propose(rnd)
        a.feedback(0)
        b.feedback(0)
        assert xa == xb and 0 <= xa <= 1
        xs.append(xa)
    assert len(set(xs)) == 5


def test_alternation_enforced():
    rnd = GameRound(Setting.COST, [0.0, 1.0], [[0.0, 0.0], [0.5, 0.0]])
    f = FixedContract(0.2)
    with pytest.raises(MissingProposal):
        f.feedback(0)
    f.propose(rnd)
    with pytest.raises(MissingProposal):
        f.propose(rnd)
    with pytest.raises(ValueError):
        f.feedback(0, 0.3)


def test_alg1_singleton_body():
    th = np.array([0.3, 0.2])
    rnd = GameRound(Setting.COST, [0.0, 0.6, 1.0], [[0, 0], [0.5, 0.1], [0.9, 0.3]])
    x_star = opt_profit(resolve(rnd, th))[0]
    for delta in (0.05, 0.9):
        alg = OptimisticCostLearner(2, delta)
        alg._body = ConvexBody.ball(2, fixed=[(0, th[0]), (1, th[1])])
        assert alg.propose(rnd) == pytest.approx(min(x_star + delta, 1.0), abs=1e-9)
        greedy = GreedyMyopic(2)
        greedy._body = alg._body
        assert greedy.propose(rnd) == pytest.approx(x_star, abs=1e-9)


def test_alg1_adv2_round():
    D = 0.1
    env = make_environment("adv2", d=3, T=20, delta=D, code=generate_circle(cost_code_angle(D)))
    alg = OptimisticCostLearner(3, D)
    alg._body = env.body()
    alg.propose(env.next_round())
    assert alg.last["x_star"] == pytest.approx((2 + 3 * D) / (4 * (1 + D)), abs=1e-7)


def test_alg1_keep_and_cut_branches():
    # reward of action 1 is 1; action 2 has reward 2 and is optimistic at theta = (1, 0)
    rnd = GameRound(Setting.COST, [0.0, 1.0, 2.0], [[0, 0], [0.2, 0], [0.8, 0]])
    alg = OptimisticCostLearner(2, 0.05)
    x = alg.propose(rnd)
    assert alg.last["a_star"] == 2
    alg.feedback(2)
    assert alg.branch == "keep" and alg.body.n_constraints == 0
    x = alg.propose(rnd)
    alg.feedback(1)
    assert alg.branch == "cut" and alg.body.n_constraints == 1
    # the new body keeps only hypotheses for which action 2 needs more than x
    xi = (rnd.contexts[1] - rnd.contexts[2]) / (1.0 - 2.0)
    assert alg.body.min_support(xi).value >= x - 1e-6


def test_alg1_retains_truth():
    for seed in range(10):
        env = make_environment("random", d=2, T=60, seed=seed)
        alg = make_learner("alg1", d=2, T=60, setting=Setting.COST, delta=0.1)
        play(env, alg, 60)
        assert alg.body.contains(env.theta, 1e-7)


def test_alg2_retains_truth_and_caps_slices():
    for seed in range(10):
        env = make_environment("random", d=2, T=60, seed=seed, setting=Setting.REWARD)
        alg = MaximalLearner(2, 0.1)
        branches = []
        for _ in range(60):
            rnd = env.next_round()
            a, rev = env.respond(alg.propose(rnd))
            alg.feedback(a, rev)
            branches.append(alg.branch)
        assert alg.body.contains(env.theta, 1e-7)
        assert alg.body.eq_values.size <= 2


def test_alg2_rejects_bad_delta():
    with pytest.raises(ValueError):
        MaximalLearner(2, 0.0)


def test_lift_identity():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        mu, th = rng.standard_normal(3), rng.standard_normal(3)
        mu /= max(1.0, np.linalg.norm(mu))
        th /= max(1.0, np.linalg.norm(th))
        lhs = valuation_context(mu) @ lifted_hidden_vector(th)
        assert abs(lhs - (1 - mu @ th)) < 1e-12
        assert np.linalg.norm(lifted_hidden_vector(th)) <= 1 + 1e-12


def test_bisection_converges():
    v = 0.3141
    p = BisectionPricer(1, width=0.0)
    for k in range(1, 21):
        price = p.price([1.0])
        p.update(price <= v, price)
        lo = p.body.min_support([1.0]).value
        hi = p.body.support([1.0]).value
        assert lo - 1e-6 <= v <= hi + 1e-6
        assert hi - lo <= 2.0 ** (1 - k) + 1e-6


def test_pricing_reduction_purchase_rule():
    env = make_environment("two_action", d=2, T=50, seed=0)
    alg = PricingReduction(BisectionPricer(3))
    lifted = lifted_hidden_vector(env.theta)
    for _ in range(50):
        rnd = env.next_round()
        x = alg.propose(rnd)
        a, _ = env.respond(x)
        value = valuation_context(rnd.contexts[1]) @ lifted
        # the agent buys (takes the rewarded action) iff the price is at most its value
        assert (a == 1) == (alg.last_price <= value + 1e-9)
        alg.feedback(a)
    assert alg.inner.body.contains(lifted, 1e-7)


def test_pricing_reduction_rejects_wide_rounds():
    alg = make_learner("pricing", d=2, T=10, setting=Setting.COST)
    with pytest.raises(ValueError):
        alg.propose(GameRound(Setting.COST, [0.0, 1.0, 2.0], [[0, 0], [0.1, 0], [0.2, 0]]))


def test_make_learner_names():
    for name in ("alg1", "greedy", "fixed", "random", "pricing"):
        assert make_learner(name, d=2, T=100, setting=Setting.COST).name in (name, "alg1", "greedy")
    assert make_learner("alg2", d=2, T=100, setting=Setting.REWARD).delta == pytest.approx(
        delta_schedule_reward(2, 100, 0.1))
    with pytest.raises(ValueError):
        make_learner("nope", d=2, T=10, setting=Setting.COST)


def test_snapshot_serializable():
    import json

    env = make_environment("random", d=2, T=5, seed=1)
    alg = make_learner("alg1", d=2, T=5, setting=Setting.COST)
    play(env, alg, 5)
    json.dumps(alg.snapshot())
