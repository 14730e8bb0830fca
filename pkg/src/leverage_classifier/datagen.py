"""Synthetic data for the four simulation settings.

Labels are drawn first (Bernoulli with the class proportion), then covariates
from the class-conditional law:

* ``ImUniform`` -- 80% positives; coordinates U[0, 1] for Y=+1, U[0.3, 1.3] for Y=-1.
* ``NormMix``   -- balanced; three-component normal mixtures with Sigma = I.
* ``T3``        -- balanced; (mu +/- T) / 10 with T multivariate t(3), mu = +/-0.75.
* ``T3Mix``     -- balanced; two-component multivariate t(3) mixtures.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .rng import make_rng
from .svm import Dataset

__all__ = [
    "Scenario",
    "ScenarioSpec",
    "gen_scenario",
    "sample_mvnormal",
    "sample_mvt",
    "casp_like",
    "write_dataset_csv",
]


class Scenario(str, enum.Enum):
    IM_UNIFORM = "ImUniform"
    NORM_MIX = "NormMix"
    T3 = "T3"
    T3_MIX = "T3Mix"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        aliases = {"i": cls.IM_UNIFORM, "1": cls.IM_UNIFORM, "im-uniform": cls.IM_UNIFORM,
                   "ii": cls.NORM_MIX, "2": cls.NORM_MIX, "normmix": cls.NORM_MIX,
                   "iii": cls.T3, "3": cls.T3, "t3": cls.T3,
                   "iv": cls.T3_MIX, "4": cls.T3_MIX, "t3mix": cls.T3_MIX,
                   "imuniform": cls.IM_UNIFORM}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown scenario {value!r}")


POSITIVE_RATE = {
    Scenario.IM_UNIFORM: 0.8,
    Scenario.NORM_MIX: 0.5,
    Scenario.T3: 0.5,
    Scenario.T3_MIX: 0.5,
}


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: Scenario
    N: int
    p: int = 8
    seed: int = 0
    # "whole": (mu + T) / 10; "noise": mu + T / 10
    t3_scaling: str = "whole"
    counters: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if int(self.N) < 1:
            raise ValueError("N must be positive")
        if int(self.p) < 1:
            raise ValueError("p must be positive")
        if self.scenario is Scenario.NORM_MIX and (self.p < 2 or self.p % 2):
            raise ValueError("NormMix needs an even p >= 2")
        if self.t3_scaling not in ("whole", "noise"):
            raise ValueError("t3_scaling must be 'whole' or 'noise'")


def sample_mvnormal(mean, rng, size=None, scale=None) -> np.ndarray:
    """Normal draws with identity (or diagonal ``scale**2``) covariance.

    Uses numpy's ziggurat standard normal generator.
    """
    mean = np.asarray(mean, dtype=float)
    shape = mean.shape if size is None else (int(size),) + mean.shape
    z = make_rng(rng).standard_normal(shape)
    if scale is not None:
        z = z * np.asarray(scale, dtype=float)
    return mean + z


def sample_mvt(mean, rng, dof: int = 3, size=None) -> np.ndarray:
    """Multivariate t draws ``mean + Z / sqrt(W / dof)`` with identity scale."""
    if dof != 3:
        raise ValueError("only dof = 3 is supported")
    rng = make_rng(rng)
    mean = np.asarray(mean, dtype=float)
    shape = mean.shape if size is None else (int(size),) + mean.shape
    z = rng.standard_normal(shape)
    w = rng.chisquare(dof, size=shape[:-1] if len(shape) > 1 else None)
    return mean + z / np.sqrt(np.asarray(w) / dof)[..., None]


def _mixture(rng, n, means, weights, sampler, counts):
    comp = rng.choice(len(means), size=n, p=weights)
    out = np.empty((n, len(means[0])))
    for j, mu in enumerate(means):
        hit = comp == j
        counts[j] = counts.get(j, 0) + int(hit.sum())
        if hit.any():
            out[hit] = sampler(np.asarray(mu, dtype=float), rng, size=int(hit.sum()))
    return out


def _normmix_means(p):
    h = p // 2
    o, t = np.ones(h), np.ones(p)
    pos = [np.r_[0 * o, 3 * o], np.r_[-3 * o, 5 * o], -3 * t]
    neg = [np.r_[0 * o, -3 * o], np.r_[3 * o, -5 * o], np.r_[3 * o, 5 * o]]
    return pos, neg


def gen_scenario(spec: ScenarioSpec) -> Dataset:
    """Generate ``spec.N`` labeled points; a pure function of ``spec``."""
    rng = make_rng(spec.seed)
    N, p = int(spec.N), int(spec.p)
    y = np.where(rng.random(N) < POSITIVE_RATE[spec.scenario], 1.0, -1.0)
    pos = y > 0
    npos, nneg = int(pos.sum()), int((~pos).sum())
    X = np.empty((N, p))
    spec.counters.clear()
    if spec.scenario is Scenario.IM_UNIFORM:
        X[pos] = rng.uniform(0.0, 1.0, size=(npos, p))
        X[~pos] = rng.uniform(0.3, 1.3, size=(nneg, p))
    elif spec.scenario is Scenario.NORM_MIX:
        mp, mn = _normmix_means(p)
        cp, cn = {}, {}
        X[pos] = _mixture(rng, npos, mp, [0.5, 0.25, 0.25], sample_mvnormal, cp)
        X[~pos] = _mixture(rng, nneg, mn, [0.5, 0.25, 0.25], sample_mvnormal, cn)
        spec.counters.update({"+1": cp, "-1": cn})
    elif spec.scenario is Scenario.T3:
        mu = 0.75 * np.ones(p)
        for mask, sgn in ((pos, 1.0), (~pos, -1.0)):
            t = sample_mvt(np.zeros(p), rng, size=int(mask.sum()))
            X[mask] = (sgn * mu + t) / 10 if spec.t3_scaling == "whole" else sgn * mu + t / 10
    else:
        one = np.ones(p)
        cp, cn = {}, {}
        X[pos] = _mixture(rng, npos, [2 * one, -3 * one], [0.3, 0.7], sample_mvt, cp)
        X[~pos] = _mixture(rng, nneg, [-1 * one, 8 * one], [0.4, 0.6], sample_mvt, cn)
        spec.counters.update({"+1": cp, "-1": cn})
    return Dataset(X, y)


CASP_ROWS = 45730
CASP_COLUMNS = ["RMSD"] + [f"F{j}" for j in range(1, 10)]


def casp_like(seed: int = 0, N: int = CASP_ROWS):
    """Synthetic table with the CASP protein-structure schema.

    Columns are ``RMSD, F1..F9``.  The response ``RMSD`` is a nonnegative
    skewed quantity whose exceedance of 10 happens for about 40% of rows and
    depends on the covariates through a noisy linear score.  Returns
    ``(header, rows)`` with ``rows`` an (N, 10) array.
    """
    rng = make_rng(seed)
    # nine correlated positive covariates on different scales
    L = np.tril(rng.uniform(-0.4, 0.4, size=(9, 9)), -1) + np.eye(9)
    Z = rng.standard_normal((N, 9)) @ L.T
    scales = np.array([1e4, 3e3, 0.3, 80.0, 2e6, 200.0, 4e3, 70.0, 35.0])
    F = np.abs(scales * (2.0 + 0.5 * Z))
    coef = np.array([1.0, -0.6, 0.8, 0.5, -0.4, 0.3, 0.7, -0.5, 0.2])
    score = Z @ coef / np.sqrt(coef @ coef) + 0.9 * rng.logistic(size=N)
    # shift so that P(score > 0) is about 0.4
    score -= np.quantile(score, 0.6)
    rmsd = np.clip(10.0 + 3.0 * score + 0.01 * rng.standard_normal(N), 0.0, None)
    return list(CASP_COLUMNS), np.column_stack([rmsd, F])


def write_dataset_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.asarray(rows):
            w.writerow([f"{v:.17g}" for v in row])
