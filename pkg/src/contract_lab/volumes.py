"""Intrinsic volumes of small convex bodies and the factorial-weighted potential.

Exact values come from planar polygons; ``steiner_fit`` estimates them in
dimension <= 3 by fitting the Steiner polynomial of the parallel body to
Monte-Carlo volume estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial, gamma, pi
from typing import Optional, Sequence

import numpy as np

from .errors import DegeneratePolygon, EmptyBody
from .geometry import ConvexBody

CONVEX_TOL = 1e-12
AREA_TOL = 1e-12


def unit_ball_volume(j: int) -> float:
    """kappa_j, the volume of the j-dimensional unit ball."""
    return pi ** (j / 2) / gamma(j / 2 + 1)


@dataclass(frozen=True)
class VolumeVector:
    values: tuple
    stderr: Optional[tuple] = None

    @property
    def d(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, j: int) -> float:
        return self.values[j]


def potential_term(v: VolumeVector, j: int) -> float:
    return factorial(j) * v.values[j]


def potential(v: VolumeVector) -> float:
    return float(sum(potential_term(v, j) for j in range(1, len(v.values))))


# ----------------------------------------------------------------------
# polygons


class Polygon2D:
    """Convex polygon with counterclockwise vertices and positive area."""

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        v = np.array(vertices, dtype=float).reshape(-1, 2)
        if v.shape[0] < 3:
            raise DegeneratePolygon("fewer than three vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross < -CONVEX_TOL):
            raise ValueError("vertices are not convex and counterclockwise")
        if _shoelace(v) <= AREA_TOL:
            raise DegeneratePolygon("polygon has zero area")
        v.setflags(write=False)
        self.vertices = v

    @property
    def area(self) -> float:
        return _shoelace(self.vertices)

    @property
    def perimeter(self) -> float:
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.hypot(e[:, 0], e[:, 1]).sum())

    def clip(self, w, b: float) -> "Polygon2D":
        """Intersection with ``<w, p> <= b``."""
        pts = clip_halfplane(self.vertices, np.asarray(w, dtype=float), float(b))
        return Polygon2D(pts)

    def __repr__(self) -> str:
        return f"Polygon2D({len(self.vertices)} vertices, area={self.area:.6g})"


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_halfplane(v: np.ndarray, w: np.ndarray, b: float, tol: float = 1e-12) -> np.ndarray:
    """Sutherland-Hodgman step for one halfplane; returns the kept vertices."""
    out = []
    s = v @ w - b
    n = len(v)
    for i in range(n):
        j = (i + 1) % n
        if s[i] <= tol:
            out.append(v[i])
        if (s[i] < -tol and s[j] > tol) or (s[i] > tol and s[j] < -tol):
            lam = s[i] / (s[i] - s[j])
            out.append(v[i] + lam * (v[j] - v[i]))
    if not out:
        return np.zeros((0, 2))
    pts = np.array(out)
    # drop consecutive near-duplicates
    keep = np.linalg.norm(pts - np.roll(pts, 1, axis=0), axis=1) > 1e-14
    if keep.sum() < len(pts) and keep.any():
        pts = pts[keep]
    return pts


def polygon_intrinsic_volumes(p: Polygon2D) -> VolumeVector:
    return VolumeVector((1.0, p.perimeter / 2.0, p.area))


def regular_polygon(k: int, radius: float = 1.0) -> Polygon2D:
    phi = 2 * pi * np.arange(k) / k
    return Polygon2D(radius * np.column_stack([np.cos(phi), np.sin(phi)]))


def body_to_polygon(body: ConvexBody, k: int = 512) -> Polygon2D:
    """Clip the inscribed ``k``-gon of the body's ball by its constraints."""
    if body.dim != 2:
        raise ValueError("body_to_polygon needs a planar body")
    if body.fixed or body.eq_values.size:
        if body.is_empty():
            raise EmptyBody("body is empty")
        raise DegeneratePolygon("equality constraints leave no area")
    v = regular_polygon(k, body.ball_radius).vertices
    for w, b in zip(body.halfspaces, body.offsets):
        v = clip_halfplane(v, w, b)
        if len(v) == 0:
            raise EmptyBody("halfspaces remove the whole polygon")
    return Polygon2D(v)


# ----------------------------------------------------------------------
# Monte-Carlo Steiner fit


def _project_body(P: np.ndarray, body: ConvexBody, iters: int = 2000, tol: float = 1e-10) -> np.ndarray:
    """Euclidean projection of each row of ``P`` onto the body (Dykstra)."""
    red = body.reduced
    # affine part first: project onto theta0 + range(N)
    def affine(X):
        return red.theta0 + (X - red.theta0) @ red.N @ red.N.T

    R = body.ball_radius
    W = np.asarray(body.halfspaces)
    b = np.asarray(body.offsets)
    sets = 2 + len(b)

    def proj(k, X):
        if k == 0:
            return affine(X)
        if k == 1:
            nrm = np.linalg.norm(X, axis=1, keepdims=True)
            return X * np.minimum(1.0, R / np.maximum(nrm, 1e-300))
        w = W[k - 2]
        ex = X @ w - b[k - 2]
        return X - np.maximum(ex, 0.0)[:, None] * w / (w @ w)

    X = P.copy()
    if sets == 2 and red.N.shape[1] == body.dim:
        return proj(1, X)
    incs = [np.zeros_like(X) for _ in range(sets)]
    active = np.arange(len(X))
    for _ in range(iters):
        Xa = X[active]
        prev = Xa.copy()
        for k in range(sets):
            Y = Xa + incs[k][active]
            Z = proj(k, Y)
            incs[k][active] = Y - Z
            Xa = Z
        X[active] = Xa
        moved = np.linalg.norm(Xa - prev, axis=1) > tol
        active = active[moved]
        if active.size == 0:
            break
    return X


def steiner_fit(
    body: ConvexBody,
    epsilons: Sequence[float] = (0.1, 0.2, 0.4),
    samples: int = 1_000_000,
    seed: int = 0,
    shards: int = 8,
) -> VolumeVector:
    """Least-squares Steiner coefficients from Monte-Carlo parallel volumes."""
    d = body.dim
    if d > 3:
        raise ValueError("steiner_fit supports dimension <= 3")
    eps = np.asarray(epsilons, dtype=float)
    if eps.size < 3 or eps.max() > 1:
        raise ValueError("need at least three epsilons, all <= 1")
    if body.is_empty(tol=-1e-9):
        raise EmptyBody("body is empty")
    red = body.reduced
    if red.N.shape[1] == 0:
        return VolumeVector((1.0,) + (0.0,) * d, (0.0,) * (d + 1))
    center = np.zeros(d)
    rad = body.ball_radius + eps.max()
    box_vol = unit_ball_volume(d) * rad**d
    counts = np.zeros(eps.size)
    # sharded Philox streams recombined in shard order
    seqs = np.random.SeedSequence(seed).spawn(shards)
    per = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]
    for ss, n in zip(seqs, per):
        rng = np.random.Generator(np.random.Philox(ss))
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        P = center + g * (rad * rng.random(n) ** (1.0 / d))[:, None]
        dist = np.linalg.norm(P - _project_body(P, body), axis=1)
        counts += (dist[:, None] <= eps[None, :]).sum(axis=0)
    p = counts / samples
    vols = box_vol * p
    # nested indicator covariance: Cov(I_a, I_b) = p_min (1 - p_max)
    pa = np.minimum.outer(p, p)
    pb = np.maximum.outer(p, p)
    cov = box_vol**2 * pa * (1 - pb) / samples
    y = vols - unit_ball_volume(d) * eps**d
    A = np.column_stack([unit_ball_volume(d - j) * eps ** (d - j) for j in range(1, d + 1)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pinv = np.linalg.pinv(A)
    se = np.sqrt(np.maximum(np.diag(pinv @ cov @ pinv.T), 0.0))
    return VolumeVector((1.0,) + tuple(float(c) for c in coef), (0.0,) + tuple(float(s) for s in se))


def ball_potential_bound(d: int) -> float:
    """Upper bound ``d (2 pi d)^{d/2}`` on the potential of the unit ball."""
    return d * (2 * pi * d) ** (d / 2)


def ball_intrinsic_volumes(d: int) -> VolumeVector:
    """Exact intrinsic volumes of the unit ball: binom(d, j) kappa_d / kappa_{d-j}."""
    from math import comb

    return VolumeVector(tuple(comb(d, j) * unit_ball_volume(d) / unit_ball_volume(d - j) for j in range(d + 1)))


def potential_decay(poly: Polygon2D, mu, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-order potential drop from cutting ``poly`` by ``<mu, p> <= r``, and the width thresholds.

    Returns ``(drop, need)`` indexed by j = 1, 2 where
    ``drop[j-1] = phi_j(S) - phi_j(S+)`` and ``need[j-1] = (W / |mu|)^j / 2``.
    """
    mu = np.asarray(mu, dtype=float)
    v = poly.vertices @ mu
    if not v.min() - 1e-12 <= r <= v.max() + 1e-12:
        raise ValueError("threshold must lie in the support range")
    width = float(v.max() - r)
    before = polygon_intrinsic_volumes(poly)
    pts = clip_halfplane(poly.vertices, mu, float(r))
    try:
        after = polygon_intrinsic_volumes(Polygon2D(pts))
    except DegeneratePolygon:
        # the cut leaves a segment or a point
        seg = 0.0
        if len(pts) >= 2:
            seg = float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)))
        after = VolumeVector((1.0, seg, 0.0))
    drop = np.array([potential_term(before, j) - potential_term(after, j) for j in (1, 2)])
    need = np.array([(width / np.linalg.norm(mu)) ** j / 2 for j in (1, 2)])
    return drop, need
