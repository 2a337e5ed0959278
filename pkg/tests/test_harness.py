import math
import xml.etree.ElementTree as ET
from functools import partial

import numpy as np
import pytest

from contract_lab.adversaries import adversary_code, cost_code_angle, make_environment
from contract_lab.codes import generate_circle
from contract_lab.errors import ConsistencyViolation, DimensionTooLarge
from contract_lab.game import GameRound, ResolvedInstance, Setting, opt_profit, opt_value, resolve
from contract_lab.geometry import ConvexBody, optimistic_profit
from contract_lab.harness import (
    CSV_COLUMNS,
    ConsistentSet,
    brute_force_opt_contract,
    consistent_grid,
    emit_csv,
    emit_scaling,
    emit_svg,
    fit_slope,
    pessimistic_benchmark,
    read_csv,
    run,
    scaling_experiment,
)
from contract_lab.learners import FixedContract, Learner, make_learner

E = math.e


class Omniscient(Learner):
    name = "omniscient"

    def __init__(self, theta):
        super().__init__()
        self.theta = theta

    def _propose(self, rnd):
        return opt_profit(resolve(rnd, self.theta))[0]


def lying(env):
    """Make the environment finalize a vector that contradicts its answers."""
    env.finalize = lambda: -env.theta
    return env


def fixed_pair(T, seed):
    return make_environment("random", d=2, T=T, seed=seed), FixedContract(0.4)


def test_fixed_random_deterministic(tmp_path):
    paths = []
    for i in range(2):
        env = make_environment("random", d=2, T=100, seed=3)
        traj = run(env, FixedContract(0.5), 100)
        p = tmp_path / f"run{i}.csv"
        emit_csv(traj, p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_csv_roundtrip(tmp_path):
    env = make_environment("random", d=2, T=40, seed=1)
    traj = run(env, make_learner("alg1", d=2, T=40, setting=Setting.COST), 40)
    p = tmp_path / "traj.csv"
    emit_csv(traj, p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) - 1 == len(traj) == 40
    rows = read_csv(p)
    for rec, row in zip(traj.records, rows):
        for c in CSV_COLUMNS:
            v = getattr(rec, c)
            if isinstance(v, float):
                assert abs(row[c] - v) <= 1e-9
            else:
                assert row[c] == v


def test_svg_well_formed(tmp_path):
    p = tmp_path / "plot.svg"
    emit_svg({"a": ([1, 2, 3], [1, 4, 9]), "b & c": ([1, 2, 3], [2, 3, 5])}, p, title="<t>", logx=True, logy=True)
    root = ET.parse(p).getroot()
    assert root.tag.endswith("svg")
    assert "http" not in p.read_text().replace("http://www.w3.org/2000/svg", "")


def test_summary_sums_and_dominance():
    env = make_environment("random", d=2, T=60, seed=2)
    traj = run(env, make_learner("random", d=2, T=60, setting=Setting.COST, seed=2), 60)
    assert traj.summary["stackelberg_regret"] == pytest.approx(traj.column("regret").sum(), abs=1e-6)
    assert traj.summary["pessimistic_regret"] == pytest.approx(traj.column("regret_pess").sum(), abs=1e-6)
    assert np.all(traj.column("bench_optimistic") >= traj.column("bench_hindsight") - 1e-6)
    assert traj.summary["pessimistic_regret"] >= traj.summary["stackelberg_regret"] - 1e-6


def test_omniscient_zero_regret():
    env = make_environment("random", d=3, T=50, seed=5)
    traj = run(env, Omniscient(env.theta), 50)
    assert abs(traj.summary["stackelberg_regret"]) <= 1e-9


def test_alg1_on_adv2_per_round_bound():
    D = 0.1
    env = make_environment("adv2", d=3, T=40, delta=D, code=generate_circle(cost_code_angle(D)))
    traj = run(env, make_learner("alg1", d=3, T=40, setting=Setting.COST, delta=D), 40)
    assert np.all(traj.column("regret_pess") >= D / (8 * E) - 1e-9)


def test_alg2_on_adv3_per_round_bound():
    D = 0.05
    code = adversary_code("adv3", 4, 30, D, size=60)
    env = make_environment("adv3", d=4, T=30, delta=D, code=code, setting=Setting.REWARD)
    traj = run(env, make_learner("alg2", d=4, T=30, setting=Setting.REWARD, delta=D), 30)
    pess = traj.column("bench_optimistic_lower") - traj.column("utility")
    assert np.all(pess >= D / (2 * E) - 1e-9)


def test_adv3_closed_form():
    D = 0.1
    code = adversary_code("adv3", 4, 10, D, size=30)
    env = make_environment("adv3", d=4, T=10, delta=D, code=code, setting=Setting.REWARD)
    assert env.closed_form_benchmark() == pytest.approx(1 / (4 * E) + 0.05 / E, abs=1e-15)
    assert env.closed_form_benchmark() == pytest.approx(0.110364, abs=1e-6)


def test_reward_grid_needs_small_dimension():
    env = make_environment("random", d=4, T=5, seed=0, setting=Setting.REWARD)
    cset = ConsistentSet(4, Setting.REWARD)
    with pytest.raises(DimensionTooLarge):
        pessimistic_benchmark(env.next_round(), cset, grid=5)


def test_singleton_benchmark():
    th = np.array([0.3, -0.1])
    rnd = GameRound(Setting.COST, [0.0, 0.6, 1.0], [[0, 0], [0.5, 0.1], [0.9, 0.3]])
    cset = ConsistentSet(2, Setting.COST)
    cset.body = ConvexBody.ball(2, fixed=[(0, th[0]), (1, th[1])])
    lo, hi = pessimistic_benchmark(rnd, cset)
    assert lo == hi == pytest.approx(opt_value(resolve(rnd, th)), abs=1e-9)


def test_grid_agrees_with_convex_program():
    rng = np.random.default_rng(0)
    for _ in range(10):
        cset = ConsistentSet(2, Setting.COST)
        cset.body = ConvexBody.ball(2).cut(rng.standard_normal(2), 0.3)
        mu = rng.standard_normal((3, 2))
        mu /= 2 * np.linalg.norm(mu, axis=1, keepdims=True)
        rnd = GameRound(Setting.COST, np.r_[0.0, rng.random(3) + 0.5], np.vstack([np.zeros(2), mu]))
        best = -np.inf
        for th in consistent_grid(cset.body, 81):
            if np.all(mu @ th >= 0):
                best = max(best, opt_value(resolve(rnd, th)))
        exact = pessimistic_benchmark(rnd, cset)[0]
        # 81 points give a step of 0.025; the value is 2-Lipschitz in theta here
        assert best - 1e-9 <= exact <= best + 2 * 2 * 0.025


def test_reward_bounds_bracket_grid():
    env = make_environment("random", d=2, T=30, seed=7, setting=Setting.REWARD)
    cset = ConsistentSet(2, Setting.REWARD)
    learner = make_learner("random", d=2, T=30, setting=Setting.REWARD, seed=0)
    for _ in range(30):
        rnd = env.next_round()
        lo, hi = pessimistic_benchmark(rnd, cset, grid=41)
        assert lo <= hi + 1e-12
        assert opt_value(resolve(rnd, env.theta)) <= hi + 1e-7
        x = learner.propose(rnd)
        a, rev = env.respond(x)
        learner.feedback(a, rev)
        cset.update(rnd, x, a, rev)
    assert cset.body.contains(env.theta, 1e-7)


def test_brute_force_examples():
    x, v = brute_force_opt_contract(ResolvedInstance([0.0, 4.0, 6.0, 3.2], [0.0, 1.0, 2.0, 1.6]))
    assert v == pytest.approx(3.0, abs=1e-9)
    assert brute_force_opt_contract(ResolvedInstance([0.0], [0.0]))[1] == 0.0


def test_consistency_violation_detected():
    env = lying(make_environment("random", d=2, T=30, seed=0))
    with pytest.raises(ConsistencyViolation):
        run(env, make_learner("random", d=2, T=30, setting=Setting.COST), 30)


def test_contract_range_enforced():
    env = make_environment("random", d=2, T=3, seed=0)
    with pytest.raises(ValueError):
        run(env, _Bad(), 3)


class _Bad(Learner):
    def _propose(self, rnd):
        return 1.5


def test_fit_slope_power_law():
    Ts = [100, 1000, 10000]
    assert fit_slope(Ts, [3 * t**0.75 for t in Ts]) == pytest.approx(0.75, abs=1e-12)


def test_scaling_experiment(tmp_path):
    res = scaling_experiment(fixed_pair, [20, 40, 80], [0, 1])
    assert [r["T"] for r in res["table"]] == [20, 40, 80]
    assert all(r["n"] == 2 for r in res["table"])
    assert 0.5 < res["slope"] < 1.5
    emit_scaling(res, tmp_path / "s.csv", tmp_path / "s.svg")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 4
    ET.parse(tmp_path / "s.svg")


def test_scaling_parallel_matches_serial():
    a = scaling_experiment(fixed_pair, [10, 20], [0])
    b = scaling_experiment(fixed_pair, [10, 20], [0], workers=2)
    assert a["table"] == b["table"]


def test_adv1_regret_floor_short():
    T = 256
    D = 0.25 * T**-0.25
    env = make_environment("adv1", d=2, T=T, delta=D)
    traj = run(env, FixedContract(0.5), T)
    assert traj.summary["stackelberg_regret"] >= T**0.25 / 32
