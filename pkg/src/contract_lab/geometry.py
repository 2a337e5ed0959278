"""Hypothesis sets for the hidden vector and optimization over them.

A body is a centred ball intersected with halfspaces ``<w, theta> <= b``,
affine equalities ``<mu, theta> = r`` and fixed coordinates. Equalities are
removed by writing ``theta = theta0 + N u`` with orthonormal ``N`` and
``theta0`` orthogonal to its range, so the ball becomes ``|u| <= rho``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _barrier
from .errors import EmptyBody, Infeasible, OutOfRange
from .game import GameRound, Setting, min_pay_contract, opt_profit, resolve

INFLATE = 1e-9
POINT_TOL = 1e-12
BOX_PAD = 1e-7
PLANAR_MAX_ROWS = 400


@dataclass(frozen=True)
class SupportResult:
    value: float
    maximizer: np.ndarray


@dataclass(frozen=True)
class _Reduced:
    theta0: np.ndarray
    N: np.ndarray  # d x k
    rho: float  # -1 when the equalities miss the ball
    consistent: bool


def _as_rows(rows, d: int) -> np.ndarray:
    arr = np.array(rows, dtype=float).reshape(-1, d)
    arr.setflags(write=False)
    return arr


def _as_vec(vals) -> np.ndarray:
    arr = np.array(vals, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


def _reduce(E: np.ndarray, e: np.ndarray, d: int, radius: float) -> _Reduced:
    # modified Gram-Schmidt on the equality rows, carrying right-hand sides
    Q: list[np.ndarray] = []
    h: list[float] = []
    consistent = True
    for row, val in zip(E, e):
        v = row.astype(float).copy()
        rhs = float(val)
        nrm0 = np.linalg.norm(v)
        for q, hq in zip(Q, h):
            coef = q @ v
            v -= coef * q
            rhs -= coef * hq
        nrm = np.linalg.norm(v)
        if nrm <= 1e-10 * max(nrm0, 1.0):
            if abs(rhs) > 1e-9:
                consistent = False
            continue
        Q.append(v / nrm)
        h.append(rhs / nrm)
    if Q:
        Qm = np.array(Q)
        theta0 = Qm.T @ np.array(h)
        _, _, vt = np.linalg.svd(Qm, full_matrices=True)
        N = vt[len(Q):].T.copy()
    else:
        theta0 = np.zeros(d)
        N = np.eye(d)
    rho2 = radius * radius - float(theta0 @ theta0)
    if rho2 < -1e-9:
        rho = -1.0
    elif rho2 <= POINT_TOL:
        rho = 0.0
        N = np.zeros((d, 0))
    else:
        rho = float(np.sqrt(rho2))
    return _Reduced(theta0, N, rho, consistent)


@dataclass(frozen=True, eq=False)
class ConvexBody:
    dim: int
    ball_radius: float = 1.0
    fixed: tuple = ()
    halfspaces: np.ndarray = None  # type: ignore[assignment]
    offsets: np.ndarray = None  # type: ignore[assignment]
    eq_normals: np.ndarray = None  # type: ignore[assignment]
    eq_values: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        d = self.dim
        set_ = object.__setattr__
        set_(self, "fixed", tuple((int(i), float(v)) for i, v in self.fixed))
        set_(self, "halfspaces", _as_rows(self.halfspaces if self.halfspaces is not None else [], d))
        set_(self, "offsets", _as_vec(self.offsets if self.offsets is not None else []))
        set_(self, "eq_normals", _as_rows(self.eq_normals if self.eq_normals is not None else [], d))
        set_(self, "eq_values", _as_vec(self.eq_values if self.eq_values is not None else []))
        if self.halfspaces.shape[0] != self.offsets.size:
            raise ValueError("one offset per halfspace")
        if self.eq_normals.shape[0] != self.eq_values.size:
            raise ValueError("one value per equality")
        if self.ball_radius <= 0:
            raise ValueError("ball radius must be positive")
        if not np.all(np.isfinite(self.halfspaces)) or np.any(np.linalg.norm(self.halfspaces, axis=1) == 0):
            raise ValueError("halfspace normals must be finite and nonzero")
        set_(self, "_red", None)
        set_(self, "_interior", None)
        set_(self, "_rows", None)
        set_(self, "_box", None)
        set_(self, "_verts", None)

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0, fixed: Sequence = ()) -> "ConvexBody":
        return cls(dim, radius, tuple(fixed))

    # ------------------------------------------------------------------
    @property
    def reduced(self) -> _Reduced:
        if self._red is None:
            d = self.dim
            rows = [r for r in self.eq_normals]
            vals = list(self.eq_values)
            for i, v in self.fixed:
                e = np.zeros(d)
                e[i] = 1.0
                rows.append(e)
                vals.append(v)
            E = np.array(rows).reshape(-1, d)
            object.__setattr__(self, "_red", _reduce(E, np.array(vals), d, self.ball_radius))
        return self._red

    def _reduced_rows(self):
        """Halfspaces in reduced coordinates.

        Rows whose normal vanishes on the affine hull are dropped. If such a
        row is violated, a contradictory pair is appended so that phase 1
        reports a negative margin.
        """
        if self._rows is None:
            red = self.reduced
            W = self.halfspaces @ red.N
            b = self.offsets - self.halfspaces @ red.theta0
            k = red.N.shape[1]
            if k and W.shape[0]:
                zero = np.linalg.norm(W, axis=1) <= 1e-14 * np.maximum(np.linalg.norm(self.halfspaces, axis=1), 1.0)
                if zero.any():
                    bad = zero & (b < -INFLATE)
                    W, b = W[~zero], b[~zero]
                    if bad.any():
                        # infeasible: two opposite rows with a negative gap
                        e = np.zeros((2, k))
                        e[0, 0], e[1, 0] = 1.0, -1.0
                        W = np.vstack([W, e])
                        b = np.concatenate([b, [-0.5, -0.5]])
            object.__setattr__(self, "_rows", (np.ascontiguousarray(W), b))
        return self._rows

    @property
    def n_constraints(self) -> int:
        return self.offsets.size

    def _derive(self, **changes) -> "ConvexBody":
        kw = dict(
            dim=self.dim,
            ball_radius=self.ball_radius,
            fixed=self.fixed,
            halfspaces=self.halfspaces,
            offsets=self.offsets,
            eq_normals=self.eq_normals,
            eq_values=self.eq_values,
        )
        keep_red = "eq_normals" not in changes and "fixed" not in changes and "ball_radius" not in changes
        kw.update(changes)
        out = ConvexBody(**kw)
        if keep_red:
            object.__setattr__(out, "_red", self._red)
        return out

    def cut(self, w, b: float) -> "ConvexBody":
        w = np.asarray(w, dtype=float).reshape(1, self.dim)
        return self._derive(
            halfspaces=np.vstack([self.halfspaces, w]),
            offsets=np.append(self.offsets, float(b)),
        )

    def cuts(self, W, b) -> "ConvexBody":
        W = np.asarray(W, dtype=float).reshape(-1, self.dim)
        if W.shape[0] == 0:
            return self
        return self._derive(
            halfspaces=np.vstack([self.halfspaces, W]),
            offsets=np.concatenate([self.offsets, np.asarray(b, dtype=float).reshape(-1)]),
        )

    def slice(self, mu, r: float) -> "ConvexBody":
        mu = np.asarray(mu, dtype=float).reshape(1, self.dim)
        return self._derive(
            eq_normals=np.vstack([self.eq_normals, mu]),
            eq_values=np.append(self.eq_values, float(r)),
        )

    def keep_halfspaces(self, mask) -> "ConvexBody":
        mask = np.asarray(mask, dtype=bool)
        return self._derive(halfspaces=self.halfspaces[mask], offsets=self.offsets[mask])

    # ------------------------------------------------------------------
    def contains(self, theta, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        if np.linalg.norm(theta) > self.ball_radius + tol:
            return False
        if self.offsets.size and np.any(self.halfspaces @ theta - self.offsets > tol):
            return False
        if self.eq_values.size and np.any(np.abs(self.eq_normals @ theta - self.eq_values) > tol):
            return False
        return all(abs(theta[i] - v) <= tol for i, v in self.fixed)

    def _margin_point(self, stop_margin: float = -INFLATE):
        """Phase-1 point in reduced coordinates and its margin."""
        red = self.reduced
        if not red.consistent or red.rho < 0:
            return None, -np.inf
        W, b = self._reduced_rows()
        k = red.N.shape[1]
        if k == 0:
            marg = float(np.min(b)) if b.size else np.inf
            return np.zeros(0), marg
        if b.size == 0:
            return np.zeros(k), red.rho
        u, s, st = _barrier.phase1(W, b, W.shape[0], k, k, red.rho, np.zeros(k), stop_margin)
        return u, float(s)

    def is_empty(self, tol: float = 1e-10) -> bool:
        red = self.reduced
        if not red.consistent or red.rho < 0:
            return True
        if red.N.shape[1] == 0:
            W, b = self._reduced_rows()
            return bool(b.size and np.min(b) < -tol)
        _, marg = self._margin_point(tol)
        return marg < tol

    def interior_point(self) -> np.ndarray:
        """Analytic centre of the body (equality-reduced)."""
        if self._interior is not None:
            return self._interior
        red = self.reduced
        if not red.consistent or red.rho < 0:
            raise EmptyBody("equalities are inconsistent with the ball")
        W, b = self._reduced_rows()
        k = red.N.shape[1]
        if k == 0:
            if b.size and np.min(b) < -INFLATE:
                raise EmptyBody("point body violates a halfspace")
            th = red.theta0.copy()
        else:
            u, marg = self._margin_point()
            if marg < -INFLATE:
                raise EmptyBody(f"phase-1 margin {marg:.3e}")
            if marg <= 1e-10:
                nrm = np.linalg.norm(W, axis=1)
                b = b + 2 * INFLATE * nrm
                u, _, _ = _barrier.phase1(W, b, W.shape[0], k, k, red.rho + 2 * INFLATE, u, -INFLATE)
                u = _barrier.analytic_center(W, b, W.shape[0], k, k, red.rho + 2 * INFLATE, u)
            else:
                u = _barrier.analytic_center(W, b, W.shape[0], k, k, red.rho, u)
            th = red.theta0 + red.N @ u
        object.__setattr__(self, "_interior", th)
        return th

    def support(self, mu) -> SupportResult:
        mu = np.asarray(mu, dtype=float)
        red = self.reduced
        if not red.consistent or red.rho < 0:
            raise EmptyBody("equalities are inconsistent with the ball")
        W, b = self._reduced_rows()
        k = red.N.shape[1]
        if k == 0:
            if b.size and np.min(b) < -INFLATE:
                raise EmptyBody("point body violates a halfspace")
            th = red.theta0.copy()
            return SupportResult(float(mu @ th), th)
        g = red.N.T @ mu
        gn = np.linalg.norm(g)
        if b.size == 0:
            u = red.rho * g / gn if gn > 0 else np.zeros(k)
            th = red.theta0 + red.N @ u
            return SupportResult(float(mu @ th), th)
        if gn == 0:
            th = self.interior_point()
            return SupportResult(float(mu @ th), th)
        u = _low_dim_support(self, g, W, b, red.rho) if k <= 2 and b.size <= PLANAR_MAX_ROWS else None
        if u is not None:
            th = red.theta0 + red.N @ u
            return SupportResult(float(mu @ th), th)
        u0 = self._strict_start()
        if u0 is not None:
            u = _barrier.phase2(-g, W, b, W.shape[0], k, k, red.rho, u0, _barrier.GAP_TOL)
        else:
            u, st, marg = _barrier.solve_lp(-g, W, b, k, red.rho, np.zeros(k), INFLATE)
            if st != 1:
                raise EmptyBody(f"phase-1 margin {marg:.3e}")
        th = red.theta0 + red.N @ u
        return SupportResult(float(mu @ th), th)

    def _strict_start(self):
        """Reduced analytic centre if it is strictly inside the uninflated body."""
        if self._interior is None:
            try:
                self.interior_point()
            except EmptyBody:
                return None
        red = self.reduced
        W, b = self._reduced_rows()
        u = red.N.T @ (self._interior - red.theta0)
        if np.min(b - W @ u) <= 1e-12 or np.linalg.norm(u) >= red.rho - 1e-12:
            return None
        return u

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise support values, cached per body."""
        if self._box is None:
            eye = np.eye(self.dim)
            lo = np.array([self.min_support(e).value for e in eye])
            hi = np.array([self.support(e).value for e in eye])
            # pad by more than the barrier's optimality gap
            object.__setattr__(self, "_box", (lo - BOX_PAD, hi + BOX_PAD))
        return self._box

    def min_support(self, mu) -> SupportResult:
        res = self.support(-np.asarray(mu, dtype=float))
        return SupportResult(-res.value, res.maximizer)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "ball_radius": self.ball_radius,
            "fixed": [list(p) for p in self.fixed],
            "halfspaces": [[list(map(float, w)), float(b)] for w, b in zip(self.halfspaces, self.offsets)],
            "equalities": [[list(map(float, m)), float(r)] for m, r in zip(self.eq_normals, self.eq_values)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConvexBody":
        d = int(data["dim"])
        hs = data.get("halfspaces", [])
        eqs = data.get("equalities", [])
        return cls(
            d,
            float(data.get("ball_radius", 1.0)),
            tuple(tuple(p) for p in data.get("fixed", [])),
            [w for w, _ in hs],
            [b for _, b in hs],
            [m for m, _ in eqs],
            [r for _, r in eqs],
        )


def _planar_vertices(W, b, rho, tol=1e-12):
    """Feasible line-line and line-circle intersection points of a planar body."""
    scale = tol * max(1.0, rho)
    nn = np.einsum("ij,ij->i", W, W)
    cands = [np.zeros((0, 2))]
    i, j = np.triu_indices(len(b), 1)
    det = W[i, 0] * W[j, 1] - W[i, 1] * W[j, 0]
    ok = np.abs(det) > 1e-14
    i, j, det = i[ok], j[ok], det[ok]
    if det.size:
        x = (b[i] * W[j, 1] - b[j] * W[i, 1]) / det
        y = (W[i, 0] * b[j] - W[j, 0] * b[i]) / det
        cands.append(np.column_stack([x, y]))
    foot = W * (b / nn)[:, None]
    h2 = rho**2 - b**2 / nn
    has = h2 >= 0
    if has.any():
        tang = np.column_stack([-W[has, 1], W[has, 0]]) / np.sqrt(nn[has])[:, None]
        h = np.sqrt(h2[has])[:, None]
        cands += [foot[has] + h * tang, foot[has] - h * tang]
    P = np.vstack(cands)
    feas = (np.linalg.norm(P, axis=1) <= rho * (1 + tol)) & np.all(P @ W.T <= b + scale * np.sqrt(nn), axis=1)
    return P[feas]


def _low_dim_support(body: "ConvexBody", g, W, b, rho, tol=1e-12):
    """Exact maximizer of ``g . u`` over ``{|u| <= rho, W u <= b}`` for one or two coordinates.

    Returns None when no candidate is feasible (empty or numerically thin body).
    """
    k = g.size
    scale = tol * max(1.0, rho)
    if k == 1:
        lo, hi = -rho, rho
        w = W[:, 0]
        pos, neg = w > 0, w < 0
        if pos.any():
            hi = min(hi, float(np.min(b[pos] / w[pos])))
        if neg.any():
            lo = max(lo, float(np.max(b[neg] / w[neg])))
        if np.any(b[~(pos | neg)] < -scale) or lo > hi + scale:
            return None
        return np.array([hi if g[0] > 0 else lo])
    # the optimum is the tangent point of the ball when feasible, otherwise a vertex
    u = rho * g / np.linalg.norm(g)
    if np.all(W @ u <= b + scale * np.linalg.norm(W, axis=1)):
        return u
    if body._verts is None:
        object.__setattr__(body, "_verts", _planar_vertices(W, b, rho, tol))
    P = body._verts
    if not len(P):
        return None
    return P[int(np.argmax(P @ g))].copy()


def information_width(body: ConvexBody, mu, r: float) -> float:
    top = body.support(mu).value
    if r > top + 1e-7:
        raise OutOfRange(f"threshold {r} exceeds support value {top}")
    return max(0.0, top - r)


def is_redundant(body: ConvexBody, w, b: float, tol: float = 1e-9) -> bool:
    """True if ``<w, theta> <= b`` already holds on the whole body."""
    w = np.asarray(w, dtype=float)
    red = body.reduced
    # cheap tests against the reduced ball and the cached bounding box
    g = red.N.T @ w
    if float(w @ red.theta0) + red.rho * float(np.linalg.norm(g)) <= b + tol:
        return True
    if body._box is not None:
        lo, hi = body._box
        if float(np.maximum(w * lo, w * hi).sum()) <= b + tol:
            return True
    return body.support(w).value <= b + tol


def has_parallel_tighter(body: ConvexBody, w, b: float, tol: float = 1e-12) -> bool:
    """True if an existing halfspace with the same direction is at least as tight."""
    if not body.n_constraints:
        return False
    w = np.asarray(w, dtype=float)
    nrm = np.linalg.norm(w)
    H = body.halfspaces
    hn = np.linalg.norm(H, axis=1)
    par = H @ w >= (1 - tol) * hn * nrm
    return bool(np.any(par & (body.offsets / hn <= b / nrm + tol)))


def cut_if_new(body: ConvexBody, w, b: float, tol: float = 1e-9) -> ConvexBody:
    """``body.cut(w, b)`` unless the halfspace is already implied."""
    if has_parallel_tighter(body, w, b) or is_redundant(body, w, b, tol):
        return body
    return body.cut(w, b)


def prune(body: ConvexBody, tol: float = 1e-9) -> ConvexBody:
    """Drop halfspaces implied by the others."""
    keep = np.ones(body.offsets.size, dtype=bool)
    for i in range(body.offsets.size):
        keep[i] = False
        trial = body.keep_halfspaces(keep)
        if not is_redundant(trial, body.halfspaces[i], body.offsets[i], tol):
            keep[i] = True
    if keep.all():
        return body
    return body.keep_halfspaces(keep)


# ----------------------------------------------------------------------
# min-pay programs in the cost setting


def _cost_round_data(round_: GameRound, body: ConvexBody):
    if round_.setting is not Setting.COST:
        raise ValueError("min-pay programs need a cost-context round")
    red = body.reduced
    if not red.consistent or red.rho < 0:
        raise EmptyBody("equalities are inconsistent with the ball")
    Mred = np.ascontiguousarray(round_.contexts @ red.N)
    moff = round_.contexts @ red.theta0
    W, b = body._reduced_rows()
    return red, Mred, moff, np.ascontiguousarray(W), b


def _start_u(body: ConvexBody) -> np.ndarray:
    red = body.reduced
    th = body.interior_point()
    return red.N.T @ (th - red.theta0)


def min_pay_over_body(round_: GameRound, a: int, body: ConvexBody):
    """Smallest contract making ``a`` a best response for some theta in the body.

    Returns ``(x_min, theta)``; raises ``Infeasible`` when no such pair exists.
    """
    red, Mred, moff, W, b = _cost_round_data(round_, body)
    if a == 0:
        return 0.0, body.interior_point()
    if red.N.shape[1] == 0:
        th = body.interior_point()
        x = min_pay_contract(resolve(round_, th), a)
        if x is None:
            raise Infeasible(f"action {a} is degenerated at the single hypothesis")
        return float(x), th
    u0 = _start_u(body)
    if a == 0:
        return 0.0, body.interior_point()
    order = np.array([a], dtype=np.int64)
    k = red.N.shape[1]
    xs, U = _barrier.min_pay_batch(
        Mred, moff, round_.known.copy(), W, b, k, red.rho if k else 0.0, order, 1.0, INFLATE, u0
    )
    if np.isnan(xs[a]):
        raise Infeasible(f"action {a} is not implementable on this body")
    return float(xs[a]), red.theta0 + red.N @ U[a]


@dataclass(frozen=True)
class OptimisticResult:
    theta: np.ndarray
    x: float
    action: int
    value: float


def optimistic_profit(round_: GameRound, body: ConvexBody) -> OptimisticResult:
    """``max over theta in body`` of the optimal principal utility."""
    red, Mred, moff, W, b = _cost_round_data(round_, body)
    if red.N.shape[1] == 0:
        th = body.interior_point()
        x, a, v = opt_profit(resolve(round_, th))
        return OptimisticResult(th, float(x), int(a), float(v))
    u0 = _start_u(body)
    r = round_.known
    order = np.array(sorted(range(1, r.size), key=lambda a: (-r[a], a)), dtype=np.int64)
    k = red.N.shape[1]
    xs, U = _barrier.min_pay_batch(
        Mred, moff, r.copy(), W, b, k, red.rho if k else 0.0, order, 1.0, INFLATE, u0
    )
    best = OptimisticResult(body.interior_point(), 0.0, 0, 0.0)
    for a in order:
        if np.isnan(xs[a]):
            continue
        v = (1.0 - xs[a]) * r[a]
        if v > best.value:
            best = OptimisticResult(red.theta0 + red.N @ U[a], float(xs[a]), int(a), float(v))
    return best


def hit_and_run(body: ConvexBody, n_samples: int, rng: np.random.Generator, burn: int = 20, chains: int = 50):
    """Approximately uniform samples from the body (equality-reduced)."""
    red = body.reduced
    k = red.N.shape[1]
    start = body.interior_point()
    if k == 0:
        return np.repeat(start[None, :], n_samples, axis=0)
    W, b = body._reduced_rows()
    u = np.repeat((red.N.T @ (start - red.theta0))[None, :], chains, axis=0)
    out = []
    steps = burn + int(np.ceil(n_samples / chains))
    for step in range(steps):
        dirs = rng.standard_normal((chains, k))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        # ball chord
        ud = np.einsum("ij,ij->i", u, dirs)
        uu = np.einsum("ij,ij->i", u, u)
        disc = np.sqrt(np.maximum(ud * ud - (uu - red.rho**2), 0.0))
        lo, hi = -ud - disc, -ud + disc
        if b.size:
            Wd = dirs @ W.T
            sl = b[None, :] - u @ W.T
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = sl / Wd
            pos = Wd > 1e-15
            neg = Wd < -1e-15
            hi = np.minimum(hi, np.where(pos, ratio, np.inf).min(axis=1))
            lo = np.maximum(lo, np.where(neg, ratio, -np.inf).max(axis=1))
        hi = np.maximum(hi, lo)
        lam = lo + (hi - lo) * rng.random(chains)
        u = u + lam[:, None] * dirs
        if step >= burn:
            out.append(u.copy())
    U = np.concatenate(out, axis=0)[:n_samples]
    return red.theta0[None, :] + U @ red.N.T
