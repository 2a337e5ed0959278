"""Experiment runner: learner/environment loop, exact consistent set,
benchmarks for both regret notions, CSV/SVG emitters and scaling fits."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .adversaries import Environment, replay_check
from .errors import ConsistencyViolation, DimensionTooLarge
from .game import (
    TOL,
    GameRound,
    ResolvedInstance,
    Setting,
    critical_contracts,
    opt_profit_from_action,
    opt_value,
    opt_value_batch,
    principal_indirect_utility,
    resolve,
)
from .geometry import ConvexBody, has_parallel_tighter, hit_and_run, optimistic_profit, prune
from .learners import Learner

CSV_COLUMNS = ["t", "x", "action", "utility", "bench_hindsight", "bench_optimistic", "regret", "regret_pess", "branch"]
SPAN_TOL = 1e-8
CONTAIN_TOL = 1e-7


# ----------------------------------------------------------------------
# exact consistent set


class ConsistentSet:
    """All hidden vectors in the unit ball that reproduce the feedback so far."""

    def __init__(self, d: int, setting: Setting, prune_slack: int = 16):
        self.d = d
        self.setting = Setting(setting)
        self.body = ConvexBody.ball(d)
        self.basis = np.zeros((0, d))
        self._pruned = 0
        self._slack = prune_slack
        self._lp_checks = 0

    def known_mask(self, contexts: np.ndarray) -> np.ndarray:
        res = contexts - (contexts @ self.basis.T) @ self.basis
        nrm = np.linalg.norm(contexts, axis=1)
        return (np.linalg.norm(res, axis=1) <= SPAN_TOL * np.maximum(nrm, 1e-300)) | (nrm == 0)

    def update(self, rnd: GameRound, x: float, a: int, revealed: Optional[float] = None) -> None:
        mu = rnd.contexts
        if self.setting is Setting.COST:
            r = rnd.known
            W = mu[a][None, :] - mu
            b = x * (r[a] - r) + TOL
        else:
            c = rnd.known
            if not self.known_mask(mu[a:a + 1])[0]:
                self.body = self.body.slice(mu[a], float(revealed))
                v = mu[a] - self.basis.T @ (self.basis @ mu[a])
                self.basis = np.vstack([self.basis, v / np.linalg.norm(v)])
            W = x * (mu - mu[a][None, :])
            b = c - c[a] + TOL
        nrm = np.linalg.norm(W, axis=1)
        keep = nrm > 1e-14
        keep[a] = False
        for i in np.flatnonzero(keep):
            self._add(W[i], b[i], nrm[i])
        if self.body.n_constraints > 2 * self._pruned + self._slack:
            self.body = prune(self.body)
            self._pruned = self.body.n_constraints
        if self._lp_checks >= 2 * self.d and self.body._box is None and self.body.n_constraints:
            self.body.bounding_box()
            self._lp_checks = 0

    def _add(self, w, b, nrm):
        body = self.body
        if has_parallel_tighter(body, w, b):
            return
        red = body.reduced
        g = red.N.T @ w
        if float(w @ red.theta0) + red.rho * float(np.linalg.norm(g)) <= b + 1e-9:
            return
        if body._box is not None:
            lo, hi = body._box
            if float(np.maximum(w * lo, w * hi).sum()) <= b + 1e-9:
                return
        self._lp_checks += 1
        if body.support(w).value <= b + 1e-9:
            return
        self.body = body.cut(w, b)

    def known_rewards(self, contexts: np.ndarray) -> np.ndarray:
        """Rewards of in-span actions, fixed by the revealed equalities."""
        return np.maximum(contexts @ self.body.reduced.theta0, 0.0)


def _witness_values(rnd: GameRound, body: ConvexBody, points) -> list[float]:
    out = []
    for w in points:
        w = np.asarray(w, dtype=float)
        if body.contains(w, 1e-9):
            try:
                out.append(opt_value(resolve(rnd, w)))
            except Exception:
                pass
    return out


def reward_benchmark_bounds(rnd: GameRound, cset: ConsistentSet, grid: int = 0,
                            witnesses: Sequence = (), closed_form: Optional[float] = None) -> tuple[float, float]:
    """Lower and upper bounds on the optimistic benchmark in the reward setting.

    The upper bound relaxes to the known actions plus one unknown action at
    its largest consistent reward; the lower bound evaluates actual
    consistent points (support maximizers, witnesses, optional grid).
    """
    body = cset.body
    mu, c = rnd.contexts, rnd.known
    known = np.flatnonzero(cset.known_mask(mu))
    unknown = np.flatnonzero(~cset.known_mask(mu))
    kin = ResolvedInstance(cset.known_rewards(mu[known]), c[known])
    upper = opt_value(kin)
    points = list(witnesses)
    for a in unknown:
        s = body.support(mu[a])
        points.append(s.maximizer)
        inst = ResolvedInstance(np.append(kin.rewards, max(s.value, 0.0)), np.append(kin.costs, c[a]))
        v = opt_profit_from_action(inst, len(known))
        if v is not None:
            upper = max(upper, v)
    lower = max([opt_value(kin) if unknown.size == 0 else -math.inf] + _witness_values(rnd, body, points))
    if closed_form is not None:
        lower = max(lower, closed_form)
    if grid:
        if rnd.dim > 3:
            if closed_form is None:
                raise DimensionTooLarge("grid benchmark needs d <= 3")
        else:
            P = consistent_grid(body, grid)
            if len(P):
                R = np.maximum(P @ mu.T, 0.0)
                lower = max(lower, float(opt_value_batch(R, c[None, :]).max()))
    return lower, max(upper, lower)


def consistent_grid(body: ConvexBody, n: int) -> np.ndarray:
    """Points of a regular grid over the reduced ball that lie in the body."""
    red = body.reduced
    k = red.N.shape[1]
    if k == 0:
        return red.theta0[None, :].copy()
    ax = np.linspace(-red.rho, red.rho, n)
    U = np.stack(np.meshgrid(*([ax] * k), indexing="ij"), axis=-1).reshape(-1, k)
    P = red.theta0[None, :] + U @ red.N.T
    ok = np.linalg.norm(P, axis=1) <= body.ball_radius + 1e-12
    if body.offsets.size:
        ok &= (P @ body.halfspaces.T <= body.offsets + 1e-12).all(axis=1)
    return P[ok]


def pessimistic_benchmark(rnd: GameRound, cset: ConsistentSet, grid: int = 0, witnesses: Sequence = (),
                          closed_form: Optional[float] = None) -> tuple[float, float]:
    """(lower, upper) bounds on the optimistic benchmark; equal in the cost setting."""
    if rnd.setting is Setting.COST:
        v = optimistic_profit(rnd, cset.body).value
        v = max([v] + _witness_values(rnd, cset.body, witnesses))
        return v, v
    return reward_benchmark_bounds(rnd, cset, grid, witnesses, closed_form)


def brute_force_opt_contract(inst: ResolvedInstance, grid_step: float = 1e-4) -> tuple[float, float]:
    """Principal utility maximized over a contract grid joined with all critical contracts."""
    xs = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    xs = np.union1d(xs, critical_contracts(inst)[0])
    vals = np.array([principal_indirect_utility(inst, float(x)) for x in xs])
    i = int(np.argmax(vals))
    return float(xs[i]), float(vals[i])


# ----------------------------------------------------------------------
# trajectories


@dataclass
class RoundRecord:
    t: int
    x: float
    action: int
    utility: float
    bench_hindsight: float
    bench_optimistic: float
    regret: float
    regret_pess: float
    branch: str
    bench_optimistic_lower: float = math.nan
    n_constraints: int = 0
    info: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    config: dict
    records: list
    theta_hat: Optional[np.ndarray] = None
    summary: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list, repr=False)
    learner_bodies: list = field(default_factory=list, repr=False)
    exact_bodies: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def stackelberg_regret(traj: Trajectory) -> float:
    return float(sum(r.regret for r in traj.records))


def pessimistic_regret(traj: Trajectory) -> float:
    return float(sum(r.regret_pess for r in traj.records))


def _learner_info(learner: Learner) -> dict:
    last = getattr(learner, "last", None) or {}
    out = {}
    for k in ("a_star", "x_star", "value", "unknown", "gap", "r_star"):
        if k in last:
            v = last[k]
            out[k] = list(map(int, v)) if k == "unknown" else v
    return out


def run(env: Environment, learner: Learner, T: int, *, grid: int = 0, keep_bodies: bool = False,
        check: bool = True, config: Optional[dict] = None) -> Trajectory:
    """Play up to ``T`` rounds, then fill hindsight benchmarks from the finalized vector."""
    t0 = time.perf_counter()
    cset = ConsistentSet(env.d, env.setting)
    closed = env.closed_form_benchmark()
    traj = Trajectory(config or {}, [])
    for t in range(T):
        rnd = env.next_round()
        if rnd is None:
            break
        lower, upper = pessimistic_benchmark(rnd, cset, grid, env.witnesses(), closed)
        if keep_bodies:
            traj.learner_bodies.append(learner.body)
            traj.exact_bodies.append(cset.body)
        x = learner.propose(rnd)
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"learner proposed {x} outside [0, 1]")
        info = _learner_info(learner)
        a, revealed = env.respond(x)
        learner.feedback(a, revealed)
        r_a = rnd.known[a] if rnd.setting is Setting.COST else revealed
        util = (1.0 - x) * float(r_a)
        traj.records.append(
            RoundRecord(t + 1, x, int(a), util, math.nan, upper, math.nan, upper - util,
                        learner.branch or learner.name, lower, cset.body.n_constraints, info)
        )
        traj.rounds.append(rnd)
        cset.update(rnd, x, a, revealed)
    theta = env.finalize()
    traj.theta_hat = theta
    if check:
        bad = replay_check(env, theta)
        if bad:
            raise ConsistencyViolation(f"{bad} replayed rounds disagree with the finalized vector")
        if not cset.body.contains(theta, CONTAIN_TOL):
            raise ConsistencyViolation("finalized vector lies outside the consistent set")
    for rec, rnd in zip(traj.records, traj.rounds):
        h = opt_value(resolve(rnd, theta))
        rec.bench_hindsight = h
        rec.regret = h - rec.utility
        # the true vector is consistent, so it is a valid lower witness
        rec.bench_optimistic_lower = max(rec.bench_optimistic_lower, h)
        if rec.bench_optimistic < h:
            rec.bench_optimistic = h
            rec.regret_pess = h - rec.utility
    traj.summary = {
        "rounds": len(traj.records),
        "halted": env.is_halted(),
        "stackelberg_regret": stackelberg_regret(traj),
        "pessimistic_regret": pessimistic_regret(traj),
        "final_constraints": cset.body.n_constraints,
        "runtime_s": time.perf_counter() - t0,
    }
    traj.final_set = cset
    return traj


def run_surrogate(env: Environment, learner, T: int) -> dict:
    """Long-horizon run of the cost learner on a fixed hidden vector.

    The learner's own optimistic value bounds the benchmark over the exact
    consistent set from above, so the summed gap bounds the pessimistic
    regret. Only running sums are kept.
    """
    t0 = time.perf_counter()
    theta = env.finalize()
    pess = 0.0
    classic = 0.0
    for _ in range(T):
        rnd = env.next_round()
        if rnd is None:
            break
        x = learner.propose(rnd)
        upper = learner.last["value"]
        a, revealed = env.respond(x)
        learner.feedback(a, revealed)
        util = (1.0 - x) * float(rnd.known[a])
        pess += upper - util
        classic += opt_value(resolve(rnd, theta)) - util
    return {"rounds": env.t, "pessimistic_regret_upper": pess, "stackelberg_regret": classic,
            "runtime_s": time.perf_counter() - t0, "final_constraints": learner.body.n_constraints}


def hypothesis_containment(traj: Trajectory, samples: int = 1000, seed: int = 0, every: int = 1) -> tuple[int, int]:
    """Sampled points of the exact set that fall outside the learner's set: (failures, checked)."""
    rng = np.random.Generator(np.random.Philox(seed))
    fails = checked = 0
    for i in range(0, len(traj.exact_bodies), every):
        lb, eb = traj.learner_bodies[i], traj.exact_bodies[i]
        if lb is None:
            continue
        P = hit_and_run(eb, samples, rng)
        for p in P:
            checked += 1
            if not lb.contains(p, CONTAIN_TOL):
                fails += 1
    return fails, checked


# ----------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in traj.records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def read_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out = {}
            for k, v in row.items():
                if k in ("t", "action"):
                    out[k] = int(v)
                elif k == "branch":
                    out[k] = v
                else:
                    out[k] = float(v)
            rows.append(out)
    return rows


def emit_svg(series: dict, path, *, title: str = "", xlabel: str = "t", ylabel: str = "",
             logx: bool = False, logy: bool = False, width: int = 640, height: int = 400) -> None:
    """Line chart with one polyline per named ``(xs, ys)`` series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    ml, mr, mt, mb = 60, 20, 30, 45
    tx = (lambda v: np.log10(v)) if logx else (lambda v: np.asarray(v, dtype=float))
    ty = (lambda v: np.log10(v)) if logy else (lambda v: np.asarray(v, dtype=float))
    data = []
    for name, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            ok &= xs > 0
        if logy:
            ok &= ys > 0
        data.append((name, tx(xs[ok]), ty(ys[ok])))
    allx = np.concatenate([d[1] for d in data]) if data else np.zeros(1)
    ally = np.concatenate([d[2] for d in data]) if data else np.zeros(1)
    if allx.size == 0:
        allx = ally = np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        lx = f"{10 ** fx:.3g}" if logx else f"{fx:.3g}"
        ly = f"{10 ** fy:.3g}" if logy else f"{fy:.3g}"
        parts.append(f'<text x="{px(fx):.1f}" y="{mt + ph + 15}" text-anchor="middle" font-size="10">{lx}</text>')
        parts.append(f'<text x="{ml - 5}" y="{py(fy) + 3:.1f}" text-anchor="end" font-size="10">{ly}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    parts.append(
        f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {mt + ph / 2})">{escape(ylabel)}</text>'
    )
    for i, (name, xs, ys) in enumerate(data):
        col = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{ml + 10}" y="{mt + 14 * (i + 1)}" font-size="11" fill="{col}">{escape(name)}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


# ----------------------------------------------------------------------
# scaling


def fit_slope(Ts, values) -> float:
    """Least-squares slope of log(value) against log(T)."""
    lx, ly = np.log(np.asarray(Ts, dtype=float)), np.log(np.asarray(values, dtype=float))
    A = np.column_stack([lx, np.ones_like(lx)])
    return float(np.linalg.lstsq(A, ly, rcond=None)[0][0])


def _cell(args):
    factory, T, seed = args
    env, learner = factory(T, seed)
    traj = run(env, learner, T, check=True)
    return T, seed, traj.summary


def scaling_experiment(factory: Callable, T_list: Sequence[int], seeds: Sequence[int],
                       metric: str = "pessimistic_regret", workers: int = 1) -> dict:
    """Mean regret per horizon and the fitted log-log slope.

    ``factory(T, seed)`` returns a fresh ``(environment, learner)`` pair and
    must be picklable when ``workers > 1``.
    """
    cells = [(factory, T, s) for T in T_list for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    rows = []
    for T in T_list:
        vals = [s[metric] for (t, _, s) in results if t == T]
        rows.append({"T": T, "mean": float(np.mean(vals)), "n": len(vals),
                     "rounds": float(np.mean([s["rounds"] for (t, _, s) in results if t == T]))})
    means = [r["mean"] for r in rows]
    slope = fit_slope(T_list, means) if len(T_list) > 1 and min(means) > 0 else math.nan
    return {"table": rows, "slope": slope, "metric": metric}


def emit_scaling(result: dict, csv_path, svg_path=None) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "mean", "n", "rounds"])
        for r in result["table"]:
            w.writerow([r["T"], repr(r["mean"]), r["n"], repr(r["rounds"])])
    if svg_path is not None:
        Ts = [r["T"] for r in result["table"]]
        emit_svg({result["metric"]: (Ts, [r["mean"] for r in result["table"]])}, svg_path,
                 title=f"slope {result['slope']:.3f}", xlabel="T", ylabel=result["metric"], logx=True, logy=True)
