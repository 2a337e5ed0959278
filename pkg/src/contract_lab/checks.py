"""Quick invariant suites behind ``contract-lab verify``.

Each suite returns a list of ``(name, passed, detail)``. The suites are small
versions of the acceptance checks so that a run finishes in seconds.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .adversaries import (
    BOT,
    CLUB,
    SPADE,
    adversary_code,
    beta_gamma_residuals,
    make_environment,
    replay_check,
)
from .codes import generate_circle, validate
from .game import (
    ResolvedInstance,
    Setting,
    critical_contracts,
    implementable_interval,
    opt_profit,
)
from .geometry import ConvexBody
from .harness import brute_force_opt_contract
from .learners import lifted_hidden_vector, make_learner, non_degenerating_reward, valuation_context
from .volumes import body_to_polygon, potential_decay, regular_polygon

Check = tuple[str, bool, str]

EXAMPLE = ResolvedInstance([0.0, 4.0, 6.0, 3.2], [0.0, 1.0, 2.0, 1.6])


def random_instance(rng: np.random.Generator, n: int | None = None) -> ResolvedInstance:
    n = n or int(rng.integers(2, 7))
    r = np.concatenate([[0.0], rng.random(n - 1) * 2])
    c = np.concatenate([[0.0], rng.random(n - 1)])
    return ResolvedInstance(r, c)


def game_suite(n: int = 100, seed: int = 0) -> list[Check]:
    out = []
    xs, acts = critical_contracts(EXAMPLE)
    x, a, v = opt_profit(EXAMPLE)
    ok = np.allclose(xs, [0, 0.25, 0.5, 1], atol=1e-9) and list(acts) == [0, 1, 2]
    out.append(("envelope breakpoints", bool(ok), f"{list(xs)} {list(acts)}"))
    out.append(("degenerated action", implementable_interval(EXAMPLE, 3) is None, ""))
    out.append(("principal optimum", abs(v - 3.0) <= 1e-9, f"{v}"))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        inst = random_instance(rng)
        worst = max(worst, abs(opt_profit(inst)[2] - brute_force_opt_contract(inst, 1e-3)[1]))
    out.append(("opt_profit vs brute force", worst <= 1e-9, f"max gap {worst:.2e}"))
    return out


def volume_suite(n: int = 50, seed: int = 0) -> list[Check]:
    out = []
    disk = regular_polygon(512)
    out.append(("512-gon disk", abs(disk.perimeter / 2 - math.pi) < 1e-3 and abs(disk.area - math.pi) < 1e-3, ""))
    half = body_to_polygon(ConvexBody(2, 1.0, (), [[1.0, 0.0]], [0.0]))
    out.append(("half disk area", abs(half.area - math.pi / 2) < 1e-3, f"{half.area:.6f}"))
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(n):
        mu = rng.standard_normal(2)
        v = disk.vertices @ mu
        drop, need = potential_decay(disk, mu, rng.uniform(v.min(), v.max()))
        fails += not np.any(drop >= need - 1e-12)
    out.append(("potential decay", fails == 0, f"{fails} of {n} failed"))
    return out


def code_suite() -> list[Check]:
    c = generate_circle(0.05)
    return [("circle code", validate(c) and len(c) == int(2 * math.pi / 0.05), f"{len(c)} words")]


def adversary_suite(T: int = 60, contracts: int = 200, seed: int = 0) -> list[Check]:
    out = []
    rng = np.random.default_rng(seed)
    res = max(beta_gamma_residuals(0.05))
    out.append(("beta/gamma residuals", res < 1e-9, f"{res:.1e}"))
    specs = [("adv1", 2, Setting.COST), ("adv2", 3, Setting.COST), ("adv3", 4, Setting.REWARD),
             ("adv4", 3, Setting.COST), ("adv5", 4, Setting.REWARD)]
    for name, d, setting in specs:
        delta = {"adv1": 0.25 * T**-0.25, "adv2": 0.05, "adv3": 0.05, "adv4": 0.05, "adv5": 0.05}[name]
        K = 4 if name in ("adv4", "adv5") else None
        code = None if name == "adv1" else adversary_code(name, d, T, delta, K, size=100 if d == 4 else None)
        allowed = {BOT, CLUB} if name == "adv1" else {BOT, CLUB, SPADE}
        env = make_environment(name, d=d, T=T, delta=delta, K=K, code=code, setting=setting)
        learner = make_learner("random", d=d, T=T, setting=setting, seed=seed)
        confined = True
        for _ in range(T):
            rnd = env.next_round()
            if rnd is None:
                break
            for x in rng.random(contracts // T + 1):
                if name == "adv1" and env.collapses(float(x)):
                    continue
                confined &= env.peek_response(float(x)) in allowed
            a, rev = env.respond(learner.propose(rnd))
            learner.feedback(a, rev)
        bad = replay_check(env, env.finalize())
        out.append((f"{name} replay", bad == 0, f"{bad} mismatches in {env.t} rounds"))
        out.append((f"{name} confinement", bool(confined), ""))
    return out


def reduction_suite(n: int = 1000, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        mu, th = rng.standard_normal(3), rng.standard_normal(3)
        mu /= max(1.0, np.linalg.norm(mu))
        th /= max(1.0, np.linalg.norm(th))
        worst = max(worst, abs(valuation_context(mu) @ lifted_hidden_vector(th) - (1 - mu @ th)))
    return [("valuation identity", bool(worst <= 1e-12), f"max error {worst:.1e}")]


def ndr_suite() -> list[Check]:
    r, x = non_degenerating_reward(ResolvedInstance([0.0, 1.0, 2.0], [0.0, 0.2, 1.0]), 0.5)
    return [("worked example", abs(r - 1.375) < 1e-9 and abs(x - 0.8) < 1e-9, f"R={r}, x={x}")]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "game": game_suite,
    "volumes": volume_suite,
    "codes": code_suite,
    "adversaries": adversary_suite,
    "reduction": reduction_suite,
    "ndr": ndr_suite,
}


def run_suites(names) -> list[tuple[str, Check]]:
    out = []
    for name in names:
        out += [(name, c) for c in SUITES[name]()]
    return out
