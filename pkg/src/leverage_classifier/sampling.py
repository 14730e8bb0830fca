"""Subsampling probabilities and weighted draws with replacement."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import make_rng
from .svm import Dataset, Hyperplane, Instances

__all__ = [
    "Criterion",
    "ProbabilityVector",
    "SubsampleDraw",
    "AliasTable",
    "uniform_probs",
    "optimal_probs",
    "thresholded_probs",
    "draw_with_replacement",
    "ht_weights",
    "export_probs_csv",
    "default_delta",
]


class Criterion(str, enum.Enum):
    A = "A"
    L = "L"

    @classmethod
    def parse(cls, value) -> "Criterion":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown optimality criterion {value!r}; use 'A' or 'L'") from None


class ProbabilityVector:
    """Strictly positive probabilities over the N training rows."""

    def __init__(self, probs, atol: float = 1e-12):
        p = np.array(probs, dtype=float, copy=True).reshape(-1)
        if p.size == 0:
            raise ValueError("empty probability vector")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise ValueError("probabilities must be finite and strictly positive")
        if abs(p.sum() - 1.0) > atol:
            raise ValueError(f"probabilities sum to {p.sum():.17g}, not 1")
        p.setflags(write=False)
        self.probs = p

    def __len__(self):
        return self.probs.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def summary(self) -> dict:
        p = self.probs
        return {"min": float(p.min()), "max": float(p.max()),
                "entropy": float(-(p * np.log(p)).sum())}


@dataclass(frozen=True)
class SubsampleDraw:
    indices: np.ndarray
    draw_probs: np.ndarray
    seed: int

    def __len__(self):
        return self.indices.shape[0]


def default_delta(N: int) -> float:
    return 0.01 / N


def uniform_probs(N: int) -> ProbabilityVector:
    if N < 1:
        raise ValueError("N must be positive")
    return ProbabilityVector(np.full(N, 1.0 / N))


def thresholded_probs(scores, indicators, delta: float) -> np.ndarray:
    """``max(indicator * score, delta)`` normalized to sum to one."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite scores")
    num = np.maximum(np.where(np.asarray(indicators, dtype=bool), s, 0.0), delta)
    if np.all(num == num[0]):
        # all on the floor (or tied): exactly uniform, free of summation rounding
        return np.full(num.shape[0], 1.0 / num.shape[0])
    return num / num.sum()


def optimal_probs(data: Dataset, pilot_beta: Hyperplane, hessian_inv=None,
                  criterion="A", delta: float | None = None) -> ProbabilityVector:
    """Plug-in A- or L-optimal probabilities with the ``delta`` floor.

    Rows whose pilot margin satisfies ``y f <= 1`` get score ``||H^-1 x~||``
    (A) or ``||x~||`` (L); all others get only the floor.
    """
    crit = Criterion.parse(criterion)
    if delta is None:
        delta = default_delta(data.N)
    Xt = data.augmented()
    if crit is Criterion.A:
        if hessian_inv is None:
            raise ValueError("A-optimal probabilities need the inverse Hessian")
        Hinv = np.asarray(hessian_inv, dtype=float)
        if Hinv.shape != (data.p + 1, data.p + 1):
            raise ValueError(f"inverse Hessian must be {(data.p + 1,) * 2}, got {Hinv.shape}")
        scores = np.linalg.norm(Xt @ Hinv.T, axis=1)
    else:
        scores = np.linalg.norm(Xt, axis=1)
    margin = data.y * pilot_beta.decision_function(data.X)
    return ProbabilityVector(thresholded_probs(scores, margin <= 1.0, delta))


@njit(cache=True)
def _build_alias(p):
    n = p.shape[0]
    prob = np.empty(n)
    alias = np.arange(n)
    scaled = p * (n / p.sum())
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        l = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            nl -= 1
            small[ns] = l
            ns += 1
    # leftovers are 1 up to rounding
    for t in range(nl):
        prob[large[t]] = 1.0
    for t in range(ns):
        prob[small[t]] = 1.0
    return prob, alias


class AliasTable:
    """Vose alias table: O(N) build, O(1) per draw."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.size == 0:
            raise ValueError("empty probability vector")
        self.prob, self.alias = _build_alias(np.ascontiguousarray(p))

    def __len__(self):
        return self.prob.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        col = rng.integers(0, len(self), size=n)
        coin = rng.random(n)
        return np.where(coin < self.prob[col], col, self.alias[col])


def draw_with_replacement(probs, n: int, seed, table: AliasTable | None = None) -> SubsampleDraw:
    """``n`` independent categorical draws; deterministic for a fixed seed."""
    p = probs.probs if isinstance(probs, ProbabilityVector) else np.asarray(probs, dtype=float)
    if p.size == 0:
        raise ValueError("empty probability vector")
    if n < 1:
        raise ValueError("n must be positive")
    table = AliasTable(p) if table is None else table
    idx = table.sample(int(n), make_rng(seed))
    idx.setflags(write=False)
    dp = p[idx]
    dp.setflags(write=False)
    return SubsampleDraw(idx, dp, int(seed) if not isinstance(seed, np.random.Generator) else -1)


def ht_weights(draw: SubsampleDraw, N: int) -> Instances:
    """Horvitz-Thompson weights ``1 / (N pi)`` for each drawn row."""
    if np.any(draw.draw_probs <= 0):
        raise ValueError("draw contains a zero probability")
    return Instances(draw.indices, 1.0 / (N * draw.draw_probs))


def export_probs_csv(probs, path):
    p = probs.probs if isinstance(probs, ProbabilityVector) else np.asarray(probs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "pi"])
        for i, v in enumerate(p):
            w.writerow([i, f"{v:.17g}"])
