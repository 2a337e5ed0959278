import json
import math

import numpy as np
import pytest

from contract_lab.adversaries import (
    BOT,
    CLUB,
    HEART,
    SPADE,
    AdversaryConfig,
    adversary_code,
    beta_gamma,
    beta_gamma_residuals,
    code_requirements,
    cost_code_angle,
    default_delta,
    make_environment,
    replay_check,
    reward_code_angle,
)
from contract_lab.codes import generate_circle
from contract_lab.errors import CodeTooSmall, ConfigError
from contract_lab.game import Setting, resolve
from contract_lab.learners import FixedContract, make_learner

E = math.e


def play(env, learner, T):
    n = 0
    for _ in range(T):
        rnd = env.next_round()
        if rnd is None:
            break
        a, rev = env.respond(learner.propose(rnd))
        learner.feedback(a, rev)
        n += 1
    return n


def test_adv1_rejects_quarter():
    with pytest.raises(ConfigError):
        make_environment("adv1", d=2, T=100, delta=0.25)
    with pytest.raises(ConfigError):
        make_environment("adv1", d=3, T=100, delta=0.1)


def test_adv1_constants():
    env = make_environment("adv1", d=2, T=4096)
    D = 0.25 * 4096**-0.25
    assert env.delta == pytest.approx(0.03125)
    c_min = 0.25 + D - D / (4 * D + 2) - D**2 / (4 + 8 * D)
    assert env.c_min == pytest.approx(c_min, abs=1e-15)
    assert env.c_min == pytest.approx(0.266314, abs=1e-6)
    assert env.X == pytest.approx((4 * c_min - 1) / (4 * D), abs=1e-12)
    assert env.X == pytest.approx(0.522059, abs=1e-6)
    assert env.R == pytest.approx(math.sqrt(3) / 4)


def test_adv1_radius_cap():
    env = make_environment("adv1", d=2, T=400, delta=0.2)
    for _ in range(200):
        if env.next_round() is None:
            break
        env.respond(1.0)
        assert env.R <= math.sqrt(3) / 2 + 1e-15
    assert env.R == pytest.approx(math.sqrt(3) / 2)
    assert replay_check(env, env.finalize()) == 0


def test_adv1_halts_after_passive_window():
    T = 100
    env = make_environment("adv1", d=2, T=T, delta=0.1)
    n = play(env, FixedContract(0.0), T)
    assert n == math.ceil(math.sqrt(T)) and env.is_halted()
    assert replay_check(env, env.finalize()) == 0


def test_beta_gamma_values():
    beta, gamma = beta_gamma(0.1)
    # roots of the defining equations found by bracketing, frozen
    assert beta == pytest.approx(0.24983751781645833, abs=1e-12)
    assert gamma == pytest.approx(0.2372634682416025, abs=1e-12)
    assert max(beta_gamma_residuals(0.1)) < 1e-9
    assert 2 * gamma / beta - 1 == pytest.approx(0.899342, abs=1e-6)
    b0, g0 = beta_gamma(0.0)
    assert b0 == pytest.approx(1 / (2 * E)) and g0 == pytest.approx(1 / (2 * E))


def test_residuals_small_over_range():
    for D in np.linspace(1e-4, 0.125, 50):
        assert max(beta_gamma_residuals(float(D))) < 1e-9


def test_code_angles():
    assert math.cos(cost_code_angle(0.05)) == pytest.approx(1 - 0.05**2)
    beta, gamma = beta_gamma(0.05)
    assert math.cos(reward_code_angle(0.05)) == pytest.approx(2 * gamma / beta - 1)


def test_adv2_code_size_gate():
    code = generate_circle(cost_code_angle(0.05))
    assert len(code) == 88
    make_environment("adv2", d=3, T=35000, delta=0.05, code=code)
    with pytest.raises(CodeTooSmall):
        make_environment("adv2", d=3, T=35300, delta=0.05, code=code)
    # the halting variant only needs (T / K) * D^2 words
    make_environment("adv4", d=3, T=10**6, delta=0.05, K=1000, code=code)


def test_code_adversaries_reject_plane():
    with pytest.raises(ConfigError):
        make_environment("adv2", d=2, T=10, delta=0.05, code=generate_circle(0.1))


def test_adv2_boundary_cost_identity():
    D = 0.1
    env = make_environment("adv2", d=3, T=50, delta=D, code=generate_circle(cost_code_angle(D)))
    rnd = env.next_round()
    low = env.body().min_support(rnd.contexts[HEART]).value
    assert low == pytest.approx(1 / (4 * E) + D / (8 * E) * (2 + 3 * D) / (1 + D), abs=1e-7)
    assert rnd.known[CLUB] == pytest.approx(1 / (2 * E))
    assert rnd.known[SPADE] == rnd.known[HEART] == pytest.approx(1 / (2 * E) + D / (2 * E))
    assert env.X == pytest.approx((2 + 3 * D) / (4 * (1 + D)))


def test_adv2_confinement_and_replay():
    D = 0.1
    env = make_environment("adv2", d=3, T=300, delta=D, code=generate_circle(cost_code_angle(D)))
    rng = np.random.default_rng(0)
    for t in range(300):
        rnd = env.next_round()
        for x in rng.random(50):
            assert env.peek_response(float(x)) in (BOT, CLUB, SPADE)
        assert np.all(np.linalg.norm(rnd.contexts, axis=1) <= 1 + 1e-12)
        env.respond(1.0 if t % 2 else 0.3)
        assert env.R >= math.sqrt(3) / (2 * E) - 1e-12
    assert env.shrinks >= 1
    assert replay_check(env, env.finalize()) == 0


def test_adv3_reveals_rewards_and_replays():
    D = 0.05
    code = adversary_code("adv3", 4, 40, D, size=60)
    env = make_environment("adv3", d=4, T=40, delta=D, code=code, setting=Setting.REWARD)
    learner = make_learner("random", d=4, T=40, setting=Setting.REWARD, seed=1)
    for _ in range(40):
        rnd = env.next_round()
        a, rev = env.respond(learner.propose(rnd))
        assert rev is not None and rev >= 0
        learner.feedback(a, rev)
    th = env.finalize()
    assert replay_check(env, th) == 0
    for rnd, _, a in env.history[:5]:
        assert np.all(resolve(rnd, th).rewards >= 0)


def test_stackelberg_halts_at_K():
    D = 0.1
    env = make_environment("adv4", d=3, T=1000, delta=D, K=7, code=generate_circle(cost_code_angle(D)))
    assert play(env, FixedContract(0.0), 1000) == 7
    assert env.halt_reason == "passive"
    assert replay_check(env, env.finalize()) == 0


def test_stackelberg_counter_resets():
    D = 0.1
    env = make_environment("adv4", d=3, T=1000, delta=D, K=5, code=generate_circle(cost_code_angle(D)))
    for t in range(40):
        env.next_round()
        env.respond(1.0 if t % 4 == 3 else 0.0)
    assert not env.is_halted()


def test_code_requirements_scale_with_K():
    _, need = code_requirements("adv2", 10_000, 0.05)
    _, need_k = code_requirements("adv4", 10_000, 0.05, 100)
    assert need == pytest.approx(25.0) and need_k == pytest.approx(0.25)
    with pytest.raises(ConfigError):
        code_requirements("adv1", 100, 0.1)


def test_default_delta():
    assert default_delta("adv1", 2, 4096) == pytest.approx(0.03125)
    assert default_delta("adv2", 3, 10**4) <= math.sqrt(2) / 2
    assert default_delta("adv5", 4, 10**4) <= 1 / 8
    with pytest.raises(ConfigError):
        default_delta("random", 2, 10)


def test_random_environment_reproducible_and_nonnegative():
    for setting in (Setting.COST, Setting.REWARD):
        a = make_environment("random", d=3, T=50, seed=4, setting=setting)
        b = make_environment("random", d=3, T=50, seed=4, setting=setting)
        assert np.array_equal(a.theta, b.theta)
        for _ in range(50):
            ra, rb = a.next_round(), b.next_round()
            assert np.array_equal(ra.contexts, rb.contexts)
            inst = resolve(ra, a.theta)
            assert np.all(inst.costs >= 0) and np.all(inst.rewards >= 0)
            if setting is Setting.REWARD:
                assert np.all(ra.known[1:] >= 0.1)
            a.respond(0.5)
        assert replay_check(a, a.finalize()) == 0


def test_adversary_config_json():
    cfg = AdversaryConfig(100, 3, 0.1, 10, generate_circle(0.5), 2)
    back = AdversaryConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.to_dict() == cfg.to_dict()


def test_unknown_environment():
    with pytest.raises(ConfigError):
        make_environment("nope", d=2, T=10)
