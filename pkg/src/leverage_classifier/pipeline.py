"""General and two-step optimal leverage classifiers.

``leverage_classifier`` is the general one-shot procedure: given sampling
probabilities, draw with replacement, weight every drawn row by ``1/(N pi)``
and fit the weighted SVM.

The two-step method first fits a small uniform pilot (``pilot_fit``) and then
draws the main subsample with plug-in optimal probabilities
(``leverage_fit``).  The final fit uses the pilot rows (weight 1) together
with the new draw.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .hessian import HessianEstimate, estimate_hessian, regularized_inverse, silverman_bandwidth
from .rng import derive_seed, make_rng
from .sampling import (AliasTable, Criterion, ProbabilityVector, SubsampleDraw,
                       draw_with_replacement, ht_weights, optimal_probs)
from .svm import Dataset, Hyperplane, Instances, SolverConfig, fit_weighted
from .tuning import LambdaGrid, default_grid, select_lambda

__all__ = ["PilotEstimate", "LeverageFit", "PilotError", "uniform_draw", "uniform_pilot", "pilot_fit",
           "leverage_fit", "leverage_classifier", "MAX_PILOT_ATTEMPTS"]

MAX_PILOT_ATTEMPTS = 10
UNIF = "UNIF"


class PilotError(RuntimeError):
    pass


@dataclass
class PilotEstimate:
    beta0: Hyperplane
    hessian: HessianEstimate | None
    hessian_inv: np.ndarray | None
    pilot_draw: SubsampleDraw
    lambda0: float
    attempts: int = 1
    seconds: float = 0.0

    @property
    def n0(self) -> int:
        return len(self.pilot_draw)

    def instances(self, N: int) -> Instances:
        return ht_weights(self.pilot_draw, N)


@dataclass
class LeverageFit:
    beta: Hyperplane
    criterion: str
    n: int
    n0: int
    lam: float
    probs_summary: dict
    seeds: dict
    timings: dict = field(default_factory=dict)
    gacv: np.ndarray | None = None
    instances: Instances | None = field(default=None, repr=False)


def uniform_draw(N: int, n: int, seed) -> SubsampleDraw:
    """Uniform draw with replacement; skips the alias table."""
    idx = make_rng(seed).integers(0, N, size=int(n))
    idx.setflags(write=False)
    pr = np.full(idx.shape[0], 1.0 / N)
    pr.setflags(write=False)
    return SubsampleDraw(idx, pr, int(seed))


def uniform_pilot(data: Dataset, n0: int, seed) -> PilotEstimate:
    """Pilot draw only, for uniform subsampling which needs no pilot fit."""
    draw = uniform_draw(data.N, n0, seed)
    return PilotEstimate(Hyperplane.zeros(data.p), None, None, draw, float("nan"))


def _config(config, lam=1e-3):
    return SolverConfig(lam) if config is None else config


def pilot_fit(data: Dataset, n0: int, seed, grid=None, config: SolverConfig | None = None,
              with_hessian: bool = True) -> PilotEstimate:
    """Uniform pilot of ``n0`` rows, penalty by leave-one-out scoring, kernel Hessian.

    A pilot draw with a single class is redrawn from a derived seed, at most
    ``MAX_PILOT_ATTEMPTS`` times in total.  ``with_hessian=False`` skips the
    Hessian, which only the A criterion needs.
    """
    t0 = time.perf_counter()
    need = max(20, 2 * (data.p + 1))
    if n0 < need:
        raise ValueError(f"pilot size n0={n0} below the minimum {need}")
    if not data.has_both_classes():
        raise ValueError("data contain a single class")
    config = _config(config)
    grid = default_grid(n0) if grid is None else LambdaGrid.coerce(grid)
    for attempt in range(MAX_PILOT_ATTEMPTS):
        s = int(seed) if attempt == 0 else derive_seed(seed, attempt)
        draw = uniform_draw(data.N, n0, s)
        if data.has_both_classes(draw.indices):
            break
    else:
        raise PilotError(f"pilot draw had a single class in all {MAX_PILOT_ATTEMPTS} attempts")
    inst = ht_weights(draw, data.N)
    lam0 = select_lambda(data, inst, grid, config)
    beta0 = fit_weighted(data, inst, config.with_lambda(lam0)).beta
    H = Hinv = None
    if with_hessian:
        idx = draw.indices
        r = 1.0 - data.y[idx] * beta0.decision_function(data.X[idx])
        H = estimate_hessian(data, draw, beta0, silverman_bandwidth(r))
        Hinv = regularized_inverse(H)
    return PilotEstimate(beta0, H, Hinv, draw, lam0, attempt + 1, time.perf_counter() - t0)


def leverage_classifier(data: Dataset, probs, n: int, seed, lam: float | None = None, grid=None,
                        config: SolverConfig | None = None, table: AliasTable | None = None):
    """One-shot weighted subsample fit; returns ``(result, draw, instances, lam)``."""
    config = _config(config)
    draw = draw_with_replacement(probs, n, seed, table=table)
    inst = ht_weights(draw, data.N)
    if lam is None:
        lam = select_lambda(data, inst, default_grid(n) if grid is None else grid, config)
    res = fit_weighted(data, inst, config.with_lambda(lam))
    return res, draw, inst, lam


def leverage_fit(data: Dataset, pilot: PilotEstimate, criterion, n: int, seed, grid=None,
                 config: SolverConfig | None = None, delta: float | None = None,
                 gacv_scope: str = "combined") -> LeverageFit:
    """Second step: optimal (or uniform) draw, union with the pilot, tune, fit.

    ``criterion`` is ``"A"``, ``"L"`` or ``"UNIF"``.  ``gacv_scope`` picks
    the instances scored for the penalty: ``"combined"`` (pilot plus draw,
    the rows actually fitted) or ``"draw"`` (the new draw only).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if gacv_scope not in ("combined", "draw"):
        raise ValueError("gacv_scope must be 'combined' or 'draw'")
    config = _config(config)
    crit = str(criterion).upper()
    N = data.N
    t0 = time.perf_counter()
    if crit == UNIF:
        summary = {"min": 1.0 / N, "max": 1.0 / N, "entropy": float(np.log(N))}
        t1 = time.perf_counter()
        draw = uniform_draw(N, n, seed)
    else:
        c = Criterion.parse(crit)
        if c is Criterion.A and pilot.hessian_inv is None:
            raise ValueError("A criterion needs a pilot fitted with its Hessian")
        pv: ProbabilityVector = optimal_probs(
            data, pilot.beta0, pilot.hessian_inv if c is Criterion.A else None, c, delta)
        summary = pv.summary()
        t1 = time.perf_counter()
        draw = draw_with_replacement(pv, n, seed)
        crit = c.value
    t2 = time.perf_counter()
    new = ht_weights(draw, N)
    combined = pilot.instances(N).concat(new)
    grid = default_grid(len(combined)) if grid is None else LambdaGrid.coerce(grid)
    scored = combined if gacv_scope == "combined" else new
    lam, scores = select_lambda(data, scored, grid, config, return_scores=True)
    beta = fit_weighted(data, combined, config.with_lambda(lam)).beta
    t3 = time.perf_counter()
    return LeverageFit(
        beta=beta, criterion=crit, n=int(n), n0=pilot.n0, lam=lam, probs_summary=summary,
        seeds={"pilot": pilot.pilot_draw.seed, "draw": int(seed)},
        timings={"probs": t1 - t0, "draw": t2 - t1, "fit": t3 - t2}, gacv=scores,
        instances=combined)
