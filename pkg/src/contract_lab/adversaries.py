"""Adaptive environments: the three-action adversary, the spherical-code
adversaries for both settings (with optional halting), and a benign random
environment.

Every environment answers contracts with a best response that stays
consistent with the hidden vector it commits to in ``finalize``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codes import SphericalCode, generate_circle, generate_greedy, validate
from .errors import CodeTooSmall, ConfigError, ConsistencyViolation, NegativeResolvedValue
from .game import GameRound, ResolvedInstance, Setting, best_response, resolve
from .geometry import ConvexBody

E = math.e
# contracts this close below the threshold count as exploration; keeps
# replayed best responses clear of floating ties with the unknown action
EXPLORE_SLACK = 1e-7
CAP_GROWTH = 1e-7
RADIUS_FLOOR = math.sqrt(3) / (2 * E)

BOT, CLUB, SPADE, HEART = 0, 1, 2, 3


def beta_gamma(delta: float) -> tuple[float, float]:
    beta = 3 / (8 * E) * (1 + 2 * delta) + 1 / (8 * E) * math.sqrt(36 * delta**2 + 20 * delta + 1)
    gamma = 3 / (8 * E) + delta / (4 * E) + 1 / (8 * E) * math.sqrt(4 * delta**2 + 28 * delta + 1)
    return beta, gamma


def beta_gamma_residuals(delta: float) -> tuple[float, float]:
    beta, gamma = beta_gamma(delta)
    rb = (1 - (delta / E) / (beta - 1 / (2 * E))) * beta - (1 / (4 * E) + delta / (2 * E))
    rg = (1 - (delta / E) / (gamma - 1 / (2 * E))) * gamma - (1 / (4 * E) - delta / (2 * E))
    return abs(rb), abs(rg)


def cost_code_angle(delta: float) -> float:
    return math.acos(1 - delta**2)


def reward_code_angle(delta: float) -> float:
    beta, gamma = beta_gamma(delta)
    return math.acos(2 * gamma / beta - 1)


def cost_optimism_delta(d: int, T: int, C: float = 1.0) -> float:
    return min(math.sqrt(2) / 2 * C ** (1 / d) * (d - 1) ** (1 / (2 * d)) * T ** (-1 / d), math.sqrt(2) / 2)


def reward_optimism_delta(d: int, T: int, C: float = 1.0) -> float:
    return min(C ** (1 / d) * (d - 1) ** (1 / (2 * d)) * T ** (-1 / d) / 8, 1 / 8)


def cost_stackelberg_delta(d: int, T: int, C: float = 1.0) -> float:
    return min(math.sqrt(2) / 2 * C ** (1 / d) * (d - 1) ** (1 / (2 * d)) * T ** (-1 / (2 * d)), math.sqrt(2) / 2)


def reward_stackelberg_delta(d: int, T: int, C: float = 1.0) -> float:
    return min(C ** (1 / d) * (d - 1) ** (1 / (2 * d)) * T ** (-1 / (2 * d)) / 8, 1 / 8)


@dataclass
class AdversaryConfig:
    T: int
    d: int
    delta: float
    K: Optional[int] = None
    code: Optional[SphericalCode] = None
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "d": self.d,
            "delta": self.delta,
            "K": self.K,
            "code": None if self.code is None else self.code.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdversaryConfig":
        code = data.get("code")
        return cls(
            int(data["T"]),
            int(data["d"]),
            float(data["delta"]),
            None if data.get("K") is None else int(data["K"]),
            None if code is None else SphericalCode.from_dict(code),
            int(data.get("seed", 0)),
        )


class Environment:
    """Round generator and best-response oracle."""

    setting: Setting = Setting.COST
    name = "environment"

    def __init__(self, d: int):
        self.d = d
        self.halted = False
        self.t = 0
        self._round: Optional[GameRound] = None
        self.history: list[tuple[GameRound, float, int]] = []

    def is_halted(self) -> bool:
        return self.halted

    def next_round(self) -> Optional[GameRound]:
        if self.halted:
            return None
        self._round = self._make_round()
        return self._round

    def peek_response(self, x: float) -> int:
        """Answer ``x`` for the current round without changing any state."""
        return self._answer(self._round, x)

    def respond(self, x: float) -> tuple[int, Optional[float]]:
        rnd = self._round
        if rnd is None:
            raise RuntimeError("respond called without a pending round")
        a = self._respond(rnd, float(x))
        self.history.append((rnd, float(x), a))
        self._round = None
        self.t += 1
        return a, self._revealed(rnd, a)

    def witnesses(self) -> list[np.ndarray]:
        """Points believed consistent with all feedback, for benchmark lower bounds."""
        return []

    def closed_form_benchmark(self) -> Optional[float]:
        return None

    def finalize(self) -> np.ndarray:
        raise NotImplementedError

    def _revealed(self, rnd: GameRound, a: int) -> Optional[float]:
        return None

    def _make_round(self) -> GameRound:
        raise NotImplementedError

    def _answer(self, rnd: GameRound, x: float) -> int:
        raise NotImplementedError

    def _respond(self, rnd: GameRound, x: float) -> int:
        return self._answer(rnd, x)

    def config(self) -> dict:
        return {"name": self.name, "d": self.d}


def replay_check(env: Environment, theta: np.ndarray) -> int:
    """Number of logged rounds whose action differs under ``theta``."""
    bad = 0
    for rnd, x, a in env.history:
        try:
            bad += int(best_response(resolve(rnd, theta), x) != a)
        except NegativeResolvedValue:
            bad += 1
    return bad


# ----------------------------------------------------------------------
# three actions, two dimensions


class ThreeActionAdversary(Environment):
    """Masks the unknown action behind a dominating known one."""

    name = "adv1"

    def __init__(self, T: int, delta: float):
        super().__init__(2)
        if not 0 < delta < 0.25:
            raise ConfigError("delta must lie in (0, 1/4)")
        self.T = T
        self.delta = delta
        self.c_min = 0.25 + delta - delta / (4 * delta + 2) - delta**2 / (4 + 8 * delta)
        self.X = (4 * self.c_min - 1) / (4 * delta)
        self.R = math.sqrt(3) / 4
        self.R_max = math.sqrt(3) / 2
        self.window = math.ceil(math.sqrt(T))
        self.streak = 0
        self.collapsed = False
        self._final: Optional[np.ndarray] = None

    def _make_round(self):
        return GameRound(
            Setting.COST,
            [0.0, 0.5, 0.5 + self.delta],
            [[0.0, 0.0], [0.5, 0.0], [0.0, self.c_min / self.R]],
        )

    def _known_answer(self, x):
        return best_response(ResolvedInstance([0.0, 0.5], [0.0, 0.25]), x)

    def _growth(self, x):
        return (1 + 4 * self.delta * x) / (4 * self.c_min) * self.R * (1 + CAP_GROWTH)

    def collapses(self, x: float) -> bool:
        """Whether answering ``x`` would stop masking the unknown action."""
        return x >= self.X - EXPLORE_SLACK and self._growth(x) >= self.R_max

    def _answer(self, rnd, x):
        if self.collapses(x):
            return best_response(resolve(rnd, np.array([0.5, self.R_max])), x)
        return self._known_answer(x)

    def _respond(self, rnd, x):
        a = self._answer(rnd, x)
        if x >= self.X - EXPLORE_SLACK:
            self.streak = 0
            r_new = self._growth(x)
            if r_new < self.R_max:
                if not self.R < self.R_max * 4 * self.c_min / (1 + 4 * self.delta * x):
                    raise ConsistencyViolation("masking condition fails before update")
                self.R = r_new
            else:
                self.R = self.R_max
                self.collapsed = True
        else:
            self.streak += 1
            if self.streak >= self.window:
                self.halted = True
                self._final = np.array([0.5, self.R])
        return a

    def finalize(self):
        if self._final is not None:
            return self._final.copy()
        return np.array([0.5, self.R_max])

    def config(self):
        return {"name": self.name, "d": 2, "T": self.T, "delta": self.delta}


# ----------------------------------------------------------------------
# spherical-code adversaries


class _CodeAdversary(Environment):
    """Shared mechanics: cap cuts along codewords, then radius shrink."""

    halting = False

    def __init__(self, config: AdversaryConfig):
        super().__init__(config.d)
        if config.d < 3:
            raise ConfigError("code adversaries need d >= 3")
        code = config.code
        if code is None or code.dim != config.d - 1:
            raise ConfigError("a code on the (d-1)-sphere is required")
        if not validate(code):
            raise ConfigError("code fails validation")
        if code.min_angle < self.required_angle(config.delta) - 1e-12:
            raise ConfigError("code angle is below the required minimal angle")
        self.cfg = config
        self.T = config.T
        self.delta = config.delta
        self.code = code
        self.W = code.codewords
        if self.halting:
            self.K = config.K if config.K is not None else math.ceil(math.sqrt(config.T))
        else:
            self.K = None
        need = self.required_size()
        if len(code) < need:
            raise CodeTooSmall(f"code has {len(code)} words, needs {need:.3f}")
        self.R = math.sqrt(3) / 2
        self.i = 0
        self.shrinks = 0
        self.cuts: list[int] = []
        self.k = 0
        self._final: Optional[np.ndarray] = None
        self.halt_reason = ""

    # subclasses supply the geometry
    def required_angle(self, delta):
        raise NotImplementedError

    def required_size(self):
        raise NotImplementedError

    def _threshold(self):
        raise NotImplementedError

    def _cut(self, idx):
        """(normal on zeta, offset) of the cap removed along codeword ``idx``."""
        raise NotImplementedError

    def _shrink_factor(self):
        raise NotImplementedError

    def _extreme(self):
        """Hidden vector attaining the optimistic benchmark this round."""
        raise NotImplementedError

    def _known_instance(self) -> ResolvedInstance:
        raise NotImplementedError

    def body(self) -> ConvexBody:
        """Current hypothesis set of the adversary."""
        d = self.d
        hs = [np.concatenate([[0.0], self._cut(c)[0]]) for c in self.cuts]
        bs = [self._cut(c)[1] for c in self.cuts]
        return ConvexBody(d, math.sqrt(0.25 + self.R**2), ((0, 0.5),), hs, bs)

    @property
    def X(self):
        return self._threshold()

    def _answer(self, rnd, x):
        return best_response(self._known_instance(), x)

    def _respond(self, rnd, x):
        a = self._answer(rnd, x)
        if x >= self.X - EXPLORE_SLACK:
            self.cuts.append(self.i)
            self.i += 1
            self.k = 0
            if self.i >= len(self.W):
                self.i = 0
                self.cuts = []
                self.R *= self._shrink_factor()
                self.shrinks += 1
                if self.R < RADIUS_FLOOR - 1e-12:
                    raise ConsistencyViolation(f"radius {self.R:.6f} below floor")
                if self.halting and self.shrinks >= self.T / (len(self.W) * self.K):
                    self.halted = True
                    self.halt_reason = "shrinks"
                    self._final = np.concatenate([[0.5], np.zeros(self.d - 1)])
        else:
            self.k += 1
            if self.halting and self.k == self.K:
                self.halted = True
                self.halt_reason = "passive"
                self._final = self._extreme()
        return a

    def _check_round(self, rnd: GameRound):
        if np.any(np.linalg.norm(rnd.contexts, axis=1) > 1 + 1e-12):
            raise ConsistencyViolation("context outside the unit ball")
        for pt in (self._extreme(), np.concatenate([[0.5], -self.R * self.W[self.i]])):
            if np.any(rnd.contexts @ pt < -1e-12):
                raise ConsistencyViolation("negative resolved value")

    def witnesses(self):
        return [self._extreme()]

    def finalize(self):
        if self._final is not None:
            return self._final.copy()
        return self._extreme()

    def config(self):
        out = {"name": self.name}
        out.update(self.cfg.to_dict())
        return out


class CostCodeAdversary(_CodeAdversary):
    name = "adv2"

    def required_angle(self, delta):
        return cost_code_angle(delta)

    def required_size(self):
        scale = self.T / self.K if self.halting else self.T
        return scale * self.delta**2

    def _threshold(self):
        D = self.delta
        return (2 + 3 * D) / (4 * (1 + D))

    def _heart_first(self):
        D = self.delta
        return 1 / (2 * E) + D / (4 * E) * (2 + 3 * D) / (1 + D) + 1 / (2 * E * (1 + D))

    def _spade_first(self):
        D = self.delta
        return 1 / (2 * E) + D / (4 * E) * (2 + 5 * D) / (1 + D)

    def _make_round(self):
        D, d = self.delta, self.d
        mu = np.zeros((4, d))
        mu[CLUB, 0] = 1 / (2 * E)
        mu[SPADE, 0] = self._spade_first()
        mu[HEART, 0] = self._heart_first()
        mu[HEART, 1:] = self.W[self.i] / (4 * E * (1 + D) * self.R)
        r = [0.0, 1 / (2 * E), 1 / (2 * E) + D / (2 * E), 1 / (2 * E) + D / (2 * E)]
        rnd = GameRound(Setting.COST, r, mu)
        self._check_round(rnd)
        return rnd

    def _known_instance(self):
        D = self.delta
        r = [0.0, 1 / (2 * E), 1 / (2 * E) + D / (2 * E)]
        c = [0.0, 1 / (4 * E), self._spade_first() / 2]
        return ResolvedInstance(r, c)

    def _cut(self, idx):
        return -self.W[idx], self.R * (1 - self.delta**2)

    def _shrink_factor(self):
        return 1 - self.delta**2

    def _extreme(self):
        return np.concatenate([[0.5], -self.R * self.W[self.i]])

    def closed_form_benchmark(self):
        return 1 / (4 * E) + self.delta / (8 * E)


class RewardCodeAdversary(_CodeAdversary):
    name = "adv3"
    setting = Setting.REWARD

    def __init__(self, config: AdversaryConfig):
        self.beta, self.gamma = beta_gamma(config.delta)
        super().__init__(config)

    def required_angle(self, delta):
        return reward_code_angle(delta)

    def required_size(self):
        scale = self.T / self.K if self.halting else self.T
        return 2 * scale * (1 - self.gamma / self.beta)

    def _threshold(self):
        return self.delta / (E * self.beta - 0.5)

    def _make_round(self):
        D, d = self.delta, self.d
        mu = np.zeros((4, d))
        mu[CLUB, 0] = 1 / E
        mu[SPADE, 0] = 2 * self.gamma
        mu[HEART, 0] = self.beta
        mu[HEART, 1:] = self.beta / (2 * self.R) * self.W[self.i]
        c = [0.0, 1 / (4 * E), 1 / (4 * E) + D / E, 1 / (4 * E) + D / E]
        rnd = GameRound(Setting.REWARD, c, mu)
        self._check_round(rnd)
        return rnd

    def _known_instance(self):
        D = self.delta
        return ResolvedInstance([0.0, 1 / (2 * E), self.gamma], [0.0, 1 / (4 * E), 1 / (4 * E) + D / E])

    def _revealed(self, rnd, a):
        return float(self._known_instance().rewards[a])

    def _cut(self, idx):
        return self.W[idx], (2 * self.gamma / self.beta - 1) * self.R

    def _shrink_factor(self):
        return 2 * self.gamma / self.beta - 1

    def _extreme(self):
        return np.concatenate([[0.5], self.R * self.W[self.i]])

    def closed_form_benchmark(self):
        return 1 / (4 * E) + self.delta / (2 * E)


class CostStackelbergAdversary(CostCodeAdversary):
    name = "adv4"
    halting = True


class RewardStackelbergAdversary(RewardCodeAdversary):
    name = "adv5"
    halting = True


# ----------------------------------------------------------------------
# benign environment


class RandomEnvironment(Environment):
    """Fixed uniform hidden vector; random rounds answered truthfully."""

    name = "random"

    def __init__(self, d: int, T: int, seed: int, setting: Setting = Setting.COST,
                 c_low: float = 0.1, batch: int = 4096):
        super().__init__(d)
        self.setting = Setting(setting)
        self.T = T
        self.seed = seed
        self.c_low = c_low
        self._rng = np.random.Generator(np.random.Philox(seed))
        g = self._rng.standard_normal(d)
        self.theta = g / np.linalg.norm(g) * self._rng.random() ** (1 / d)
        self._batch = batch
        self._queue: list[GameRound] = []

    def _unit_ball(self, n):
        g = self._rng.standard_normal((n, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * (self._rng.random(n) ** (1 / self.d))[:, None]

    def _refill(self):
        B = self._batch
        sizes = self._rng.integers(2, 7, size=B)
        total = int((sizes - 1).sum())
        # per-action rejection: redraw contexts with a negative resolved value
        ctx = self._unit_ball(total)
        bad = ctx @ self.theta < 0
        while bad.any():
            ctx[bad] = self._unit_ball(int(bad.sum()))
            bad = ctx @ self.theta < 0
        if self.setting is Setting.COST:
            known = self._rng.random(total)
        else:
            known = self._rng.uniform(self.c_low, 0.5, total)
        pos = 0
        for n in sizes:
            m = n - 1
            mu = np.vstack([np.zeros((1, self.d)), ctx[pos:pos + m]])
            kn = np.concatenate([[0.0], known[pos:pos + m]])
            pos += m
            self._queue.append(GameRound(self.setting, kn, mu))
        self._queue.reverse()

    def _make_round(self):
        if not self._queue:
            self._refill()
        return self._queue.pop()

    def _answer(self, rnd, x):
        return best_response(resolve(rnd, self.theta), x)

    def _revealed(self, rnd, a):
        if self.setting is Setting.REWARD:
            return float(max(rnd.contexts[a] @ self.theta, 0.0))
        return None

    def witnesses(self):
        return [self.theta.copy()]

    def finalize(self):
        return self.theta.copy()

    def config(self):
        return {"name": self.name, "d": self.d, "T": self.T, "seed": self.seed,
                "setting": self.setting.value, "c_low": self.c_low}


class TwoActionEnvironment(RandomEnvironment):
    """Cost rounds with a null action and one action of reward 1 (the pricing specialization)."""

    name = "two_action"

    def __init__(self, d: int, T: int, seed: int, batch: int = 4096):
        super().__init__(d, T, seed, Setting.COST, batch=batch)

    def _refill(self):
        B = self._batch
        ctx = self._unit_ball(B)
        bad = ctx @ self.theta < 0
        while bad.any():
            ctx[bad] = self._unit_ball(int(bad.sum()))
            bad = ctx @ self.theta < 0
        zero = np.zeros(self.d)
        kn = np.array([0.0, 1.0])
        self._queue = [GameRound(Setting.COST, kn, np.vstack([zero, mu])) for mu in ctx[::-1]]

    def config(self):
        return {"name": self.name, "d": self.d, "T": self.T, "seed": self.seed}


def default_delta(name: str, d: int, T: int) -> float:
    """Scheduled adversary parameter for ``name`` at constant 1."""
    name = name.lower()
    if name == "adv1":
        return 0.25 * T ** -0.25
    table = {"adv2": cost_optimism_delta, "adv3": reward_optimism_delta,
             "adv4": cost_stackelberg_delta, "adv5": reward_stackelberg_delta}
    if name not in table:
        raise ConfigError(f"{name!r} has no delta schedule")
    return table[name](d, T)


def code_requirements(name: str, T: int, delta: float, K: Optional[int] = None) -> tuple[float, float]:
    """(minimal angle, minimal size) of the code an adversary needs."""
    name = name.lower()
    scale = T / (K if K is not None else math.ceil(math.sqrt(T))) if name in ("adv4", "adv5") else T
    if name in ("adv2", "adv4"):
        return cost_code_angle(delta), scale * delta**2
    if name in ("adv3", "adv5"):
        beta, gamma = beta_gamma(delta)
        return reward_code_angle(delta), 2 * scale * (1 - gamma / beta)
    raise ConfigError(f"{name!r} does not use a spherical code")


def adversary_code(name: str, d: int, T: int, delta: float, K: Optional[int] = None, *, size: Optional[int] = None,
                   seed: int = 0, max_trials: int = 1_000_000) -> SphericalCode:
    """Circle code for d = 3, otherwise a greedy code with at least the required size."""
    angle, need = code_requirements(name, T, delta, K)
    if d == 3:
        return generate_circle(angle)
    target = max(int(math.ceil(need - 1e-9)), size or 0, 1)
    return generate_greedy(d - 1, angle, target, max_trials, seed)


def make_environment(name: str, *, d: int, T: int, delta: Optional[float] = None, K: Optional[int] = None,
                     code: Optional[SphericalCode] = None, seed: int = 0,
                     setting: Setting = Setting.COST, c_low: float = 0.1) -> Environment:
    name = name.lower()
    if name == "adv1":
        if d != 2:
            raise ConfigError("the three-action adversary lives in d = 2")
        return ThreeActionAdversary(T, delta if delta is not None else 0.25 * T ** -0.25)
    if name in ("adv2", "adv3", "adv4", "adv5"):
        if delta is None:
            raise ConfigError(f"{name} needs an explicit delta")
        cfg = AdversaryConfig(T, d, delta, K, code, seed)
        cls = {"adv2": CostCodeAdversary, "adv3": RewardCodeAdversary,
               "adv4": CostStackelbergAdversary, "adv5": RewardStackelbergAdversary}[name]
        return cls(cfg)
    if name == "random":
        return RandomEnvironment(d, T, seed, setting, c_low)
    if name == "two_action":
        return TwoActionEnvironment(d, T, seed)
    raise ConfigError(f"unknown environment {name!r}")
