"""Online contract learners sharing a propose/feedback interface."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import MissingProposal, NoSmallerCost, RepresentativeMissing
from .game import (
    TOL,
    GameRound,
    ResolvedInstance,
    Setting,
    agent_indirect_utility,
    critical_contracts,
    implementable_interval,
    min_pay_contract,
    opt_profit,
    opt_profit_from_action,
)
from .geometry import ConvexBody, cut_if_new, optimistic_profit, prune

SPAN_TOL = 1e-8
GAP_TOL = 1e-12


def delta_schedule_cost(d: int, T: int) -> float:
    val = (2 * math.pi) ** (d / (4 * d + 2)) * d ** ((d + 4) / (4 * d + 2)) * T ** (-1 / (2 * d + 1))
    return min(val, 0.5)


def delta_schedule_reward(d: int, T: int, c_low: float) -> float:
    if c_low <= 0:
        raise ValueError("the cost floor must be positive")
    return math.sqrt(3 * c_low) * d ** (0.25 + 1 / d) / T ** (1 / (2 * d))


def cost_regret_bound(d: int, T: int) -> float:
    """Closed-form cumulative bound for the cost-context learner."""
    return 5 * (2 * math.pi) ** (d / (4 * d + 2)) * d ** ((d + 4) / (4 * d + 2)) * T ** (1 - 1 / (2 * d + 1))


def low_gap_round_bound(d: int, delta: float) -> float:
    return d**2 * (2 * math.pi * d) ** (d / 2) / delta ** (2 * d)


def reward_regret_bound(d: int, T: int, c_low: float) -> float:
    return math.sqrt(6 * math.pi) * d ** (0.25 + 1 / d) / math.sqrt(c_low) * T ** (1 - 1 / (2 * d)) + d


def indifference_context(mu_a, r_a: float, mu_b, r_b: float) -> np.ndarray:
    """xi with <xi, theta> the contract making the agent indifferent between a and b."""
    if r_a == r_b:
        raise ValueError("indifference context needs distinct rewards")
    return (np.asarray(mu_a, dtype=float) - np.asarray(mu_b, dtype=float)) / (r_a - r_b)


def left_cost_gap(c_star: float, known_costs) -> float:
    costs = np.asarray(known_costs, dtype=float)
    smaller = costs[costs < c_star]
    if smaller.size == 0:
        raise NoSmallerCost(f"no known action costs less than {c_star}")
    return float(c_star - smaller.max())


def non_degenerating_reward(known: ResolvedInstance, c_star: float) -> tuple[float, float]:
    """Smallest reward making a new action of cost ``c_star`` implementable, and its min-pay contract."""
    if c_star <= 0:
        raise ValueError("c_star must be positive")
    xs, _ = critical_contracts(known)
    cands = sorted(set(x for x in xs if x > 0) | {1.0})
    best_r, best_x = math.inf, 1.0
    for x in cands:
        r = (agent_indirect_utility(known, x) + c_star) / x
        if r < best_r - 1e-12 * max(1.0, abs(r)):
            best_r, best_x = r, x
    return float(best_r), float(best_x)


class Learner:
    """Base class enforcing strict propose/feedback alternation."""

    name = "learner"

    def __init__(self):
        self._pending: Optional[GameRound] = None
        self._x: Optional[float] = None
        self.branch = ""

    def propose(self, round_: GameRound) -> float:
        if self._pending is not None:
            raise MissingProposal("propose called twice without feedback")
        x = float(self._propose(round_))
        self._pending, self._x = round_, x
        return x

    def feedback(self, chosen: int, revealed_reward: Optional[float] = None) -> None:
        if self._pending is None:
            raise MissingProposal("feedback before proposal")
        rnd, x = self._pending, self._x
        if (revealed_reward is not None) != (rnd.setting is Setting.REWARD):
            raise ValueError("revealed reward must be given exactly in the reward setting")
        self._pending = None
        self._feedback(rnd, x, int(chosen), revealed_reward)

    def _propose(self, round_: GameRound) -> float:
        raise NotImplementedError

    def _feedback(self, round_: GameRound, x: float, chosen: int, revealed: Optional[float]) -> None:
        pass

    def snapshot(self) -> dict:
        return {"name": self.name, "branch": self.branch}

    @property
    def body(self) -> Optional[ConvexBody]:
        return getattr(self, "_body", None)


# ----------------------------------------------------------------------
# baselines


class FixedContract(Learner):
    name = "fixed"

    def __init__(self, x0: float):
        super().__init__()
        if not 0 <= x0 <= 1:
            raise ValueError("contract must lie in [0, 1]")
        self.x0 = float(x0)

    def _propose(self, round_):
        return self.x0

    def snapshot(self):
        return {"name": self.name, "x0": self.x0}


class RandomContract(Learner):
    name = "random"

    def __init__(self, seed: int):
        super().__init__()
        self.seed = seed
        self._rng = np.random.Generator(np.random.Philox(seed))

    def _propose(self, round_):
        return float(self._rng.random())

    def snapshot(self):
        return {"name": self.name, "seed": self.seed}


# ----------------------------------------------------------------------
# cost setting


class OptimisticCostLearner(Learner):
    """Optimistic contract plus padding ``delta``; cuts on low-reward feedback."""

    name = "alg1"

    def __init__(self, d: int, delta: float, prune_slack: int = 8):
        super().__init__()
        self.d = d
        self.delta = float(delta)
        self._body = ConvexBody.ball(d)
        self._pruned_size = 0
        self._prune_slack = prune_slack
        self.last: dict = {}

    def _propose(self, round_):
        if round_.setting is not Setting.COST:
            raise ValueError("this learner needs cost-context rounds")
        res = optimistic_profit(round_, self._body)
        self.last = {"theta": res.theta, "x_star": res.x, "a_star": res.action, "value": res.value}
        x = min(res.x + self.delta, 1.0)
        self.last["x"] = x
        return x

    def _feedback(self, round_, x, chosen, revealed):
        a_star = self.last["a_star"]
        r = round_.known
        if r[chosen] >= r[a_star]:
            self.branch = "keep"
            return
        self.branch = "cut"
        mu = round_.contexts
        xi = indifference_context(mu[chosen], r[chosen], mu[a_star], r[a_star])
        # the agent may pick within TOL of its best utility
        self._body = self._body.cut(-xi, -x + TOL / (r[a_star] - r[chosen]))
        m = self._body.n_constraints
        if m > 2 * self._pruned_size + self._prune_slack:
            self._body = prune(self._body)
            self._pruned_size = self._body.n_constraints

    def snapshot(self):
        return {
            "name": self.name,
            "delta": self.delta,
            "branch": self.branch,
            "x_star": self.last.get("x_star"),
            "a_star": self.last.get("a_star"),
            "theta_star": None if "theta" not in self.last else np.asarray(self.last["theta"]).tolist(),
            "body": self._body.to_dict(),
        }


class GreedyMyopic(OptimisticCostLearner):
    """Optimistic contract without padding; same hypothesis updates."""

    name = "greedy"

    def __init__(self, d: int, prune_slack: int = 8):
        super().__init__(d, 0.0, prune_slack)


# ----------------------------------------------------------------------
# reward setting


class MaximalLearner(Learner):
    """Reward-context learner: span-based partition, optimistic target, three branches."""

    name = "alg2"

    def __init__(self, d: int, delta: float):
        super().__init__()
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.d = d
        self.delta = float(delta)
        self._body = ConvexBody.ball(d)
        self._basis = np.zeros((0, d))
        self.last: dict = {}
        self.fallbacks = 0

    def partition(self, round_: GameRound) -> tuple[list[int], list[int]]:
        known, unknown = [], []
        for a, mu in enumerate(round_.contexts):
            res = mu - self._basis.T @ (self._basis @ mu)
            nrm = np.linalg.norm(mu)
            (known if np.linalg.norm(res) <= SPAN_TOL * max(nrm, 1e-300) or nrm == 0 else unknown).append(a)
        return known, unknown

    def _targets(self, round_):
        """Known instance, optimistic target action and its optimistic reward."""
        if round_.setting is not Setting.REWARD:
            raise ValueError("this learner needs reward-context rounds")
        mu, c = round_.contexts, round_.known
        known, unknown = self.partition(round_)
        theta_any = self._body.interior_point() if self._basis.shape[0] else np.zeros(self.d)
        r_known = np.maximum(mu[known] @ theta_any, 0.0)
        inst_all = ResolvedInstance(r_known, c[known])
        keep = [i for i in range(len(known)) if implementable_interval(inst_all, i) is not None]
        known_nd = [known[i] for i in keep]
        kinst = ResolvedInstance(r_known[keep], c[known_nd])

        best_val, a_star, theta_star, r_star = -1.0, 0, theta_any, 0.0
        for i, a in enumerate(known_nd):
            v = opt_profit_from_action(kinst, i)
            if v is not None and v > best_val + 1e-12:
                best_val, a_star, r_star = v, a, float(kinst.rewards[i])
        for a in unknown:
            s = self._body.support(mu[a])
            inst = ResolvedInstance(np.append(kinst.rewards, max(s.value, 0.0)), np.append(kinst.costs, c[a]))
            v = opt_profit_from_action(inst, len(known_nd))
            if v is not None and v > best_val + 1e-12:
                best_val, a_star, theta_star, r_star = v, a, s.maximizer, max(s.value, 0.0)
        self.last = {
            "known": known,
            "unknown": unknown,
            "known_nd": known_nd,
            "a_star": a_star,
            "r_star": r_star,
            "theta_star": theta_star,
            "target_value": best_val,
        }
        return kinst, known_nd, a_star, r_star

    def _propose(self, round_):
        c = round_.known
        kinst, known_nd, a_star, r_star = self._targets(round_)
        if a_star in known_nd:
            self.branch = "known"
            x, _, _ = opt_profit(kinst)
            return x
        c_star = float(c[a_star])
        gap = left_cost_gap(c_star, kinst.costs)
        self.last["gap"] = gap
        if gap < self.delta - GAP_TOL:
            lo = c_star - self.delta
            window = [(kinst.costs[i], a, i) for i, a in enumerate(known_nd) if lo <= kinst.costs[i] <= c_star]
            if window:
                _, a_minus, i_minus = min(window)
                x = min_pay_contract(kinst, i_minus)
                self.branch = "gap_lt"
                self.last.update(a_minus=a_minus, c_minus=float(kinst.costs[i_minus]), r_minus=float(kinst.rewards[i_minus]))
                return x
            # no representative in the window; fall back to the other branch
            self.fallbacks += 1
            self.last["fallback"] = str(RepresentativeMissing("empty cost window"))
        r_bar, x_bar = non_degenerating_reward(kinst, c_star)
        self.branch = "gap_ge"
        self.last.update(r_bar=r_bar, x_bar=x_bar)
        return x_bar

    def _feedback(self, round_, x, chosen, revealed):
        mu = round_.contexts
        if chosen in self.last["unknown"]:
            self._body = self._body.slice(mu[chosen], float(revealed))
            v = mu[chosen] - self._basis.T @ (self._basis @ mu[chosen])
            self._basis = np.vstack([self._basis, v / np.linalg.norm(v)])
            self.last["update"] = "slice"
            return
        a_star = self.last["a_star"]
        if self.branch == "gap_ge":
            self._body = cut_if_new(self._body, mu[a_star], self.last["r_bar"] + TOL / max(x, 1e-12))
            self.last["update"] = "cut"
        elif self.branch == "gap_lt" and x > 1e-12:
            bound = (round_.known[a_star] - self.last["c_minus"] + TOL) / x + self.last["r_minus"]
            self._body = cut_if_new(self._body, mu[a_star], bound)
            self.last["update"] = "cut"
        else:
            self.last["update"] = "none"

    def snapshot(self):
        return {
            "name": self.name,
            "delta": self.delta,
            "branch": self.branch,
            "a_star": self.last.get("a_star"),
            "span_dim": int(self._basis.shape[0]),
            "body": self._body.to_dict(),
        }


# ----------------------------------------------------------------------
# pricing reduction


class GreedyReward(MaximalLearner):
    """Proposes the optimistic optimal contract with no exploration padding.

    When a known action is taken instead of the optimistic target, the
    target's utility was at most the known envelope, which bounds its reward.
    """

    name = "greedy"

    def __init__(self, d: int):
        super().__init__(d, 1.0)

    def _propose(self, round_):
        kinst, known_nd, a_star, r_star = self._targets(round_)
        if a_star in known_nd:
            self.branch = "known"
            return opt_profit(kinst)[0]
        inst = ResolvedInstance(np.append(kinst.rewards, r_star), np.append(kinst.costs, round_.known[a_star]))
        self.branch = "greedy"
        self._kinst = kinst
        return min_pay_contract(inst, len(known_nd))

    def _feedback(self, round_, x, chosen, revealed):
        mu = round_.contexts
        if chosen in self.last["unknown"]:
            super()._feedback(round_, x, chosen, revealed)
            return
        self.last["update"] = "none"
        if self.branch == "greedy" and x > 1e-12:
            a_star = self.last["a_star"]
            bound = (agent_indirect_utility(self._kinst, x) + round_.known[a_star] + TOL) / x
            self._body = cut_if_new(self._body, mu[a_star], bound)
            self.last["update"] = "cut"


class BisectionPricer:
    """Contextual pricing baseline: midpoint of the consistent value interval.

    Once the interval is narrower than ``width`` the pricer posts its lower
    end, which is accepted, and stops cutting.
    """

    def __init__(self, dim: int, width: float = 1e-6):
        self.dim = dim
        self.width = width
        self.body = ConvexBody.ball(dim)
        self._ctx: Optional[np.ndarray] = None
        self._explore = False

    def price(self, context) -> float:
        self._ctx = np.asarray(context, dtype=float)
        hi = self.body.support(self._ctx).value
        lo = self.body.min_support(self._ctx).value
        self._explore = hi - lo >= self.width
        return 0.5 * (lo + hi) if self._explore else lo

    def update(self, purchased: bool, price: float) -> None:
        if not self._explore:
            return
        if purchased:
            self.body = self.body.cut(-self._ctx, -price + TOL)
        else:
            self.body = self.body.cut(self._ctx, price)


def valuation_context(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return np.concatenate([[math.sqrt(2)], -math.sqrt(2) * mu])


def lifted_hidden_vector(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.concatenate([[math.sqrt(2) / 2], math.sqrt(2) / 2 * theta])


class PricingReduction(Learner):
    """Two-action cost rounds driven by a contextual pricing learner on lifted contexts."""

    name = "pricing"

    def __init__(self, inner):
        super().__init__()
        self.inner = inner
        self.last_price = None

    def _propose(self, round_):
        if round_.setting is not Setting.COST or round_.n_actions != 2 or round_.known[1] != 1.0:
            raise ValueError("pricing reduction needs two-action cost rounds with reward 1")
        p = float(np.clip(self.inner.price(valuation_context(round_.contexts[1])), 0.0, 1.0))
        self.last_price = p
        return 1.0 - p

    def _feedback(self, round_, x, chosen, revealed):
        self.inner.update(chosen == 1, self.last_price)


def make_learner(name: str, *, d: int, T: int, setting: Setting, delta: Optional[float] = None,
                 c_low: float = 0.1, x0: float = 0.5, seed: int = 0) -> Learner:
    name = name.lower()
    if name == "alg1":
        return OptimisticCostLearner(d, delta if delta is not None else delta_schedule_cost(d, T))
    if name == "alg2":
        return MaximalLearner(d, delta if delta is not None else delta_schedule_reward(d, T, c_low))
    if name == "greedy":
        return GreedyMyopic(d) if Setting(setting) is Setting.COST else GreedyReward(d)
    if name == "fixed":
        return FixedContract(x0)
    if name == "random":
        return RandomContract(seed)
    if name == "pricing":
        return PricingReduction(BisectionPricer(d + 1))
    raise ValueError(f"unknown learner {name!r}")
