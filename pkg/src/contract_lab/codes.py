"""Spherical codes: unit vectors with a certified minimal pairwise angle."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import TargetUnreached

NORM_TOL = 1e-12
ANGLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SphericalCode:
    dim: int
    min_angle: float
    codewords: np.ndarray  # (n, dim)

    def __post_init__(self):
        w = np.array(self.codewords, dtype=float).reshape(-1, self.dim)
        w.setflags(write=False)
        object.__setattr__(self, "codewords", w)
        if not 0 < self.min_angle <= np.pi + 1e-15:
            raise ValueError("min_angle must lie in (0, pi]")

    def __len__(self) -> int:
        return self.codewords.shape[0]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "min_angle": self.min_angle, "codewords": self.codewords.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SphericalCode":
        return cls(int(data["dim"]), float(data["min_angle"]), data["codewords"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SphericalCode":
        return cls.from_dict(json.loads(text))


def validate(code: SphericalCode) -> bool:
    W = code.codewords
    if W.shape[0] == 0:
        return True
    if np.any(np.abs(np.linalg.norm(W, axis=1) - 1.0) > NORM_TOL):
        return False
    G = W @ W.T
    np.fill_diagonal(G, -np.inf)
    return bool(G.max() <= np.cos(code.min_angle) + ANGLE_TOL)


def generate_circle(alpha: float) -> SphericalCode:
    n = int(np.floor(2 * np.pi / alpha + 1e-12))
    phi = 2 * np.pi * np.arange(n) / n
    code = SphericalCode(2, alpha, np.column_stack([np.cos(phi), np.sin(phi)]))
    if not validate(code):
        raise AssertionError("circle code failed validation")
    return code


def generate_greedy(dim: int, alpha: float, target_size: int, max_trials: int, seed: int) -> SphericalCode:
    """Random greedy packing; raises ``TargetUnreached`` carrying the partial code."""
    if dim == 2:
        code = generate_circle(alpha)
        if len(code) < target_size:
            raise TargetUnreached(f"circle code has {len(code)} < {target_size} words", code=code)
        return SphericalCode(2, alpha, code.codewords[:target_size])
    rng = np.random.default_rng(seed)
    cos_a = np.cos(alpha)
    words = np.empty((target_size, dim))
    n = 0
    batch = 1024
    trials = 0
    while n < target_size and trials < max_trials:
        m = min(batch, max_trials - trials)
        cand = rng.standard_normal((m, dim))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        trials += m
        for v in cand:
            if n == 0 or np.max(words[:n] @ v) <= cos_a:
                words[n] = v
                n += 1
                if n == target_size:
                    break
    code = SphericalCode(dim, alpha, words[:n])
    if not validate(code):
        raise AssertionError("greedy code failed validation")
    if n < target_size:
        raise TargetUnreached(f"reached {n} of {target_size} words in {max_trials} trials", code=code)
    return code


def size_lower_bound(d: int, alpha: float, C: float) -> float:
    return float(C * np.sqrt(d) * np.cos(alpha) / np.sin(alpha) ** (d - 1))
