"""Deterministic principal-agent game with linear contracts.

An instance is a list of actions with concrete rewards and costs. Under a
contract ``x`` the agent earns ``x * r - c`` and the principal keeps
``(1 - x) * r``. The agent picks its utility maximizer and breaks ties in
favour of the principal, then by lowest id.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import NegativeResolvedValue

TOL = 1e-9


class Setting(str, Enum):
    COST = "cost"
    REWARD = "reward"


@dataclass(frozen=True)
class Action:
    id: int
    reward: float
    cost: float


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


class ResolvedInstance:
    """Actions with concrete rewards and costs; ids are array positions."""

    __slots__ = ("rewards", "costs")

    def __init__(self, rewards: Sequence[float], costs: Sequence[float]):
        r = _frozen(rewards, 1)
        c = _frozen(costs, 1)
        if r.shape != c.shape or r.ndim != 1 or r.size == 0:
            raise ValueError("rewards and costs must be nonempty 1-D arrays of equal length")
        if np.any(r < 0) or np.any(c < 0):
            raise ValueError("rewards and costs must be nonnegative")
        self.rewards = r
        self.costs = c

    @classmethod
    def from_actions(cls, actions: Sequence[Action]) -> "ResolvedInstance":
        ids = [a.id for a in actions]
        if sorted(ids) != list(range(len(ids))):
            raise ValueError("action ids must be unique and contiguous from 0")
        ordered = sorted(actions, key=lambda a: a.id)
        return cls([a.reward for a in ordered], [a.cost for a in ordered])

    @property
    def actions(self) -> list[Action]:
        return [Action(i, float(r), float(c)) for i, (r, c) in enumerate(zip(self.rewards, self.costs))]

    def __len__(self) -> int:
        return self.rewards.size

    def subset(self, ids: Sequence[int]) -> tuple["ResolvedInstance", list[int]]:
        """Sub-instance on ``ids`` (renumbered); returns the id map back."""
        ids = list(ids)
        return ResolvedInstance(self.rewards[ids], self.costs[ids]), ids

    def __repr__(self) -> str:
        return f"ResolvedInstance(rewards={self.rewards.tolist()}, costs={self.costs.tolist()})"


class GameRound:
    """Public data of one round.

    ``known`` holds rewards in the cost setting and costs in the reward setting.
    ``contexts`` is an ``(n, d)`` array; row 0 is the trivial action.
    """

    __slots__ = ("setting", "known", "contexts")

    def __init__(self, setting: Setting, known: Sequence[float], contexts):
        setting = Setting(setting)
        k = _frozen(known, 1)
        mu = _frozen(contexts, 2)
        if mu.shape[0] != k.size:
            raise ValueError("one context per action required")
        if k[0] != 0 or np.any(mu[0] != 0):
            raise ValueError("action 0 must be trivial")
        if np.any(k < 0):
            raise ValueError("known scalars must be nonnegative")
        if np.any(np.linalg.norm(mu, axis=1) > 1 + 1e-9):
            raise ValueError("context vectors must lie in the unit ball")
        self.setting = setting
        self.known = k
        self.contexts = mu

    @property
    def n_actions(self) -> int:
        return self.known.size

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    def to_dict(self) -> dict:
        return {
            "setting": self.setting.value,
            "known": self.known.tolist(),
            "contexts": self.contexts.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameRound":
        return cls(Setting(data["setting"]), data["known"], data["contexts"])


def resolve(round_: GameRound, theta) -> ResolvedInstance:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (round_.dim,):
        raise ValueError("theta has the wrong dimension")
    vals = round_.contexts @ theta
    if np.any(vals < -TOL):
        raise NegativeResolvedValue(f"resolved value {vals.min():.3e} < 0")
    vals = np.maximum(vals, 0.0)
    if round_.setting is Setting.COST:
        return ResolvedInstance(round_.known, vals)
    return ResolvedInstance(vals, round_.known)


def best_response(inst: ResolvedInstance, x: float) -> int:
    r, c = inst.rewards, inst.costs
    u = x * r - c
    top = u.max()
    best = -1
    best_p = -np.inf
    for a in range(r.size):
        if u[a] >= top - TOL:
            p = (1.0 - x) * r[a]
            if p > best_p + TOL:
                best, best_p = a, p
    return best


def agent_indirect_utility(inst: ResolvedInstance, x: float) -> float:
    return float(max(0.0, (x * inst.rewards - inst.costs).max()))


def principal_indirect_utility(inst: ResolvedInstance, x: float) -> float:
    return float((1.0 - x) * inst.rewards[best_response(inst, x)])


def critical_contracts(inst: ResolvedInstance) -> tuple[list[float], list[int]]:
    """Breakpoints ``0 = x0 < ... < xm = 1`` and the action induced on each segment."""
    r, c = inst.rewards, inst.costs
    xs = [0.0]
    acts = [best_response(inst, 0.0)]
    while True:
        cur, x0 = acts[-1], xs[-1]
        nxt = np.inf
        for b in range(r.size):
            if r[b] > r[cur]:
                xb = (c[b] - c[cur]) / (r[b] - r[cur])
                if x0 < xb < nxt:
                    nxt = xb
        if nxt >= 1.0 - 1e-12:
            break
        a = best_response(inst, nxt)
        if a == cur:
            # only reachable through rounding; skip past this point
            break
        xs.append(float(nxt))
        acts.append(a)
    xs.append(1.0)
    return xs, acts


def implementable_interval(inst: ResolvedInstance, a: int) -> Optional[tuple[float, float]]:
    """Contracts under which ``a`` maximizes agent utility; ``None`` if degenerated."""
    r, c = inst.rewards, inst.costs
    lo, hi = 0.0, 1.0
    for b in range(r.size):
        if b == a:
            continue
        dr = r[a] - r[b]
        if dr > 0:
            lo = max(lo, (c[a] - c[b]) / dr)
        elif dr < 0:
            hi = min(hi, (c[b] - c[a]) / (-dr))
        elif c[a] > c[b] + TOL:
            return None
    if lo > hi + TOL:
        return None
    return (float(lo), float(max(lo, hi)))


def min_pay_contract(inst: ResolvedInstance, a: int) -> Optional[float]:
    iv = implementable_interval(inst, a)
    return None if iv is None else iv[0]


def opt_profit_from_action(inst: ResolvedInstance, a: int) -> Optional[float]:
    """Best principal utility among contracts implementing ``a``."""
    iv = implementable_interval(inst, a)
    if iv is None:
        return None
    return float((1.0 - iv[0]) * inst.rewards[a])


def opt_profit(inst: ResolvedInstance) -> tuple[float, int, float]:
    """Optimal ``(x, action, value)``; ties go to the smallest contract."""
    xs, acts = critical_contracts(inst)
    best = (0.0, acts[0], (1.0 - 0.0) * float(inst.rewards[acts[0]]))
    for x, a in zip(xs[1:-1], acts[1:]):
        v = (1.0 - x) * float(inst.rewards[a])
        if v > best[2] + TOL:
            best = (x, a, v)
    return best


def opt_value(inst: ResolvedInstance) -> float:
    return opt_profit(inst)[2]


def opt_value_batch(rewards, costs) -> np.ndarray:
    """Optimal principal utility for many instances at once.

    ``rewards`` and ``costs`` broadcast to shape ``(P, n)``; row ``p`` is one
    instance. Equals ``max_a opt_profit_from_action`` row by row.
    """
    R, C = np.broadcast_arrays(np.asarray(rewards, dtype=float), np.asarray(costs, dtype=float))
    R = np.atleast_2d(R)
    C = np.atleast_2d(C)
    dr = R[:, :, None] - R[:, None, :]  # [p, a, b] = r_a - r_b
    dc = C[:, :, None] - C[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dc / dr
    lo = np.where(dr > 0, ratio, -np.inf).max(axis=2)
    hi = np.where(dr < 0, ratio, np.inf).min(axis=2)
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, 1.0)
    dominated = ((dr == 0) & (dc > TOL)).any(axis=2)
    ok = ~dominated & (lo <= hi + TOL)
    vals = np.where(ok, (1.0 - lo) * R, -np.inf)
    return vals.max(axis=1)
