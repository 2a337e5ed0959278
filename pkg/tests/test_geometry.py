import math

import numpy as np
import pytest

from contract_lab.adversaries import cost_code_angle, make_environment
from contract_lab.codes import generate_circle
from contract_lab.errors import EmptyBody, Infeasible, OutOfRange
from contract_lab.game import GameRound, Setting, min_pay_contract, opt_profit, resolve
from contract_lab.geometry import (
    ConvexBody,
    _low_dim_support,
    cut_if_new,
    hit_and_run,
    information_width,
    is_redundant,
    min_pay_over_body,
    optimistic_profit,
    prune,
)
from contract_lab import _barrier

E = math.e
DISK = ConvexBody.ball(2)


def test_contains_ball_origin():
    assert DISK.contains(np.zeros(2))


def test_contains_empty_body():
    body = DISK.cut([1.0, 0.0], -2.0)
    assert not body.contains(np.array([0.0, 0.0]))
    assert body.is_empty()


def test_contains_fixed_coordinate_disk():
    body = ConvexBody.ball(2, fixed=[(0, 0.5)])
    assert body.contains(np.array([0.5, 0.86]))
    assert not body.contains(np.array([0.5, 0.87]))


def test_support_ball():
    res = DISK.support([0.0, 1.0])
    assert res.value == pytest.approx(1.0, abs=1e-7)
    assert np.allclose(res.maximizer, [0, 1], atol=1e-7)


def test_support_heart_context():
    R, beta = math.sqrt(3) / 4, 0.3
    # free coordinates range over a disk of radius R
    body = ConvexBody(3, math.sqrt(0.25 + R**2), ((0, 0.5),))
    w = np.array([0.6, 0.8])
    mu = np.r_[beta, beta / (2 * R) * w]
    assert body.support(mu).value == pytest.approx(beta, abs=1e-7)


def test_support_half_disk():
    assert DISK.cut([0.0, 1.0], 0.0).support([0.0, 1.0]).value == pytest.approx(0.0, abs=1e-7)


def test_min_support():
    assert DISK.min_support([1.0, 0.0]).value == pytest.approx(-1.0, abs=1e-7)


def test_support_empty_raises():
    with pytest.raises(EmptyBody):
        DISK.cut([1.0, 0.0], -2.0).support([1.0, 0.0])


def test_information_width():
    assert information_width(DISK, [1.0, 0.0], 1.0) == pytest.approx(0.0, abs=1e-7)
    assert information_width(DISK, [1.0, 0.0], 0.0) == pytest.approx(1.0, abs=1e-7)
    assert information_width(DISK, [2.0, 0.0], 0.0) == pytest.approx(2.0, abs=1e-7)
    with pytest.raises(OutOfRange):
        information_width(DISK, [1.0, 0.0], 1.5)


def test_cut_and_slice():
    assert DISK.cut([0.0, 1.0], 0.0).support([0, 1]).value == pytest.approx(0.0, abs=1e-7)
    sl = DISK.slice([1.0, 0.0], 0.5)
    assert sl.support([0, 1]).value == pytest.approx(math.sqrt(3) / 2, abs=1e-7)
    assert DISK.n_constraints == 0


def test_redundant_cut_keeps_support():
    body = DISK.cut([1.0, 1.0], 2.0)
    for phi in np.linspace(0, 2 * np.pi, 13):
        mu = np.array([np.cos(phi), np.sin(phi)])
        assert body.support(mu).value == pytest.approx(1.0, abs=1e-7)
    assert is_redundant(DISK, [1.0, 1.0], 2.0)


def test_is_empty_examples():
    assert not DISK.is_empty()
    assert DISK.cut([1.0, 0.0], -2.0).is_empty()
    assert not DISK.slice([1.0, 0.0], 1.0).is_empty()


def test_support_monotone_under_cuts_and_maximizer_contained():
    rng = np.random.Generator(np.random.Philox(0))
    for _ in range(100):
        d = int(rng.integers(2, 5))
        body = ConvexBody.ball(d)
        for _ in range(int(rng.integers(1, 6))):
            w = rng.standard_normal(d)
            body2 = body.cut(w, float(rng.uniform(-0.2, 1.0)))
            if body2.is_empty():
                continue
            mu = rng.standard_normal(d)
            s1, s2 = body.support(mu), body2.support(mu)
            assert s2.value <= s1.value + 1e-7
            assert body2.contains(s2.maximizer, 1e-7)
            assert s2.value == pytest.approx(float(mu @ s2.maximizer), abs=1e-7)
            body = body2


def test_low_dim_support_matches_barrier():
    rng = np.random.default_rng(7)
    for _ in range(500):
        k = int(rng.integers(1, 3))
        W = rng.standard_normal((int(rng.integers(1, 20)), k))
        b = rng.uniform(-0.3, 1.0, W.shape[0])
        g = rng.standard_normal(k)
        body = ConvexBody(k, 1.0, (), W, b)
        u = _low_dim_support(body, g, W, b, 1.0)
        ub, st, marg = _barrier.solve_lp(-g, W, b, k, 1.0, np.zeros(k), 1e-9)
        if u is None:
            assert st != 1 or marg < 1e-7
        else:
            assert st == 1
            assert g @ u == pytest.approx(g @ ub, abs=1e-7)


def test_cut_if_new_skips_duplicates():
    body = DISK.cut([1.0, 0.0], 0.5)
    assert cut_if_new(body, [2.0, 0.0], 1.0).n_constraints == 1
    assert cut_if_new(body, [1.0, 0.0], 0.3).n_constraints == 2


def test_prune_keeps_body():
    body = DISK
    for phi in np.linspace(0, np.pi, 7):
        body = body.cut([np.cos(phi), np.sin(phi)], 0.9)
    body = body.cut([1.0, 0.0], 5.0)
    pruned = prune(body)
    assert pruned.n_constraints < body.n_constraints
    for phi in np.linspace(0, 2 * np.pi, 11):
        mu = np.array([np.cos(phi), np.sin(phi)])
        assert pruned.support(mu).value == pytest.approx(body.support(mu).value, abs=1e-7)


def test_min_pay_trivial_and_clamped():
    rnd = GameRound(Setting.COST, [0.0, 1.0], [[0.0, 0.0], [1.0, 0.0]])
    assert min_pay_over_body(rnd, 0, DISK)[0] == 0.0
    x, th = min_pay_over_body(rnd, 1, DISK)
    assert x == pytest.approx(0.0, abs=1e-7)
    assert th[0] <= 1e-6


def test_min_pay_singleton_matches_game():
    rng = np.random.default_rng(3)
    for _ in range(100):
        th = rng.standard_normal(2)
        th *= 0.5 / np.linalg.norm(th)
        n = 4
        mu = rng.standard_normal((n, 2))
        mu /= np.linalg.norm(mu, axis=1, keepdims=True)
        mu[mu @ th < 0] *= -1
        mu[0] = 0
        rnd = GameRound(Setting.COST, np.r_[0.0, rng.random(n - 1) * 2], mu)
        body = ConvexBody.ball(2, fixed=[(0, th[0]), (1, th[1])])
        inst = resolve(rnd, th)
        for a in range(1, n):
            expect = min_pay_contract(inst, a)
            if expect is None:
                with pytest.raises(Infeasible):
                    min_pay_over_body(rnd, a, body)
            else:
                assert min_pay_over_body(rnd, a, body)[0] == pytest.approx(expect, abs=1e-6)


def test_optimistic_singleton_equals_opt_profit():
    th = np.array([0.3, 0.2])
    rnd = GameRound(Setting.COST, [0.0, 0.6, 1.0], [[0, 0], [0.5, 0.1], [0.9, 0.3]])
    body = ConvexBody.ball(2, fixed=[(0, 0.3), (1, 0.2)])
    assert optimistic_profit(rnd, body).value == pytest.approx(opt_profit(resolve(rnd, th))[2], abs=1e-9)


def test_optimistic_adv2_round():
    D = 0.1
    env = make_environment("adv2", d=3, T=20, delta=D, code=generate_circle(cost_code_angle(D)))
    rnd = env.next_round()
    val = optimistic_profit(rnd, env.body()).value
    assert val == pytest.approx(1 / (4 * E) + D / (8 * E), abs=1e-7)


def test_optimistic_matches_grid_oracle():
    rng = np.random.default_rng(5)
    g = np.linspace(-1, 1, 201)
    P = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    P = P[np.linalg.norm(P, axis=1) <= 1]
    for _ in range(10):
        body = DISK.cut(rng.standard_normal(2), 0.2)
        inside = P[(P @ body.halfspaces.T <= body.offsets).all(axis=1)]
        mu = rng.standard_normal((3, 2))
        mu /= np.linalg.norm(mu, axis=1, keepdims=True) * 1.5
        mu = np.vstack([np.zeros(2), mu])
        rnd = GameRound(Setting.COST, np.r_[0.0, rng.random(3)], mu)
        best = 0.0
        for th in inside:
            c = mu @ th
            if np.all(c[1:] >= 0):
                best = max(best, opt_profit(resolve(rnd, th))[2])
        val = optimistic_profit(rnd, body).value
        assert val >= best - 1e-7
        assert val <= best + 1e-2


def test_optimistic_monotone_under_cuts():
    rng = np.random.default_rng(8)
    rnd = GameRound(Setting.COST, [0.0, 0.5, 0.9], [[0, 0], [0.4, 0.2], [0.7, -0.3]])
    body = DISK
    prev = optimistic_profit(rnd, body).value
    for _ in range(10):
        nb = body.cut(rng.standard_normal(2), 0.3)
        if nb.is_empty():
            continue
        v = optimistic_profit(rnd, nb).value
        assert v <= prev + 1e-7
        body, prev = nb, v


def test_hit_and_run_inside():
    body = DISK.cut([1.0, 0.0], 0.2).slice([0.0, 1.0], 0.1)
    P = hit_and_run(body, 200, np.random.Generator(np.random.Philox(1)))
    assert all(body.contains(p, 1e-9) for p in P)


def test_json_roundtrip():
    body = ConvexBody.ball(3, fixed=[(0, 0.5)]).cut([0, 1.0, 0], 0.2).slice([0, 0, 1.0], 0.1)
    back = ConvexBody.from_dict(body.to_dict())
    assert back.to_dict() == body.to_dict()
    assert back.support([0, 1, 0]).value == pytest.approx(body.support([0, 1, 0]).value)
