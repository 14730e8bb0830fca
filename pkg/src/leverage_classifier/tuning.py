"""Choice of the ridge penalty by (weighted) leave-one-out hinge scoring.

For instances ``i = 1..n`` with weights ``w_i`` the score of ``lam`` is

    (1/n) * sum_k w_k * max(1 - y_k f(x_k; beta_lam^[-k]), 0)

where ``beta_lam^[-k]`` is the fit on all instances except ``k``.  With unit
weights this is the plain leave-one-out hinge average.

Leave-one-out fits are exact.  The default route follows the solution path
while the cap of row ``k`` is lowered to zero, starting from the all-data
solution (an active-set homotopy, see ``_kernels.loo_residuals``).  Only
support vectors need a path: removing a row strictly outside the margin
leaves the fit unchanged.  Any query the path cannot follow is refit
directly, and ``method="refit"`` refits every query warm-started from the
all-data fit.
"""

from __future__ import annotations

import logging

import numpy as np

from . import _kernels as K
from .svm import (Dataset, Instances, SolverConfig, _Problem, _solve, fit_weighted)

__all__ = ["LambdaGrid", "default_grid", "loo_residuals", "gacv_score", "gacv_scores",
           "select_lambda"]

log = logging.getLogger(__name__)

MAX_PATH_EVENTS = 400


class LambdaGrid:
    """Strictly increasing positive penalty values."""

    def __init__(self, values):
        v = np.array(values, dtype=float, copy=True).reshape(-1)
        if v.size == 0:
            raise ValueError("lambda grid must be nonempty")
        if not np.all(np.isfinite(v) & (v > 0)):
            raise ValueError("lambda grid values must be positive")
        if np.any(np.diff(v) <= 0):
            raise ValueError("lambda grid must be strictly increasing")
        v.setflags(write=False)
        self.values = v

    @classmethod
    def coerce(cls, obj) -> "LambdaGrid":
        if isinstance(obj, LambdaGrid):
            return obj
        return cls(np.atleast_1d(obj))

    def __len__(self):
        return self.values.shape[0]

    def __iter__(self):
        return iter(self.values.tolist())

    def __repr__(self):
        return f"LambdaGrid({self.values.tolist()})"


def default_grid(n: int, lo: float = 1e-6, hi: float = 1e-1, num: int = 8) -> LambdaGrid:
    """``num`` log-spaced values in ``[lo, hi]`` scaled by ``n^(-1/2)``."""
    return LambdaGrid(np.logspace(np.log10(lo), np.log10(hi), num) / np.sqrt(n))


def _refit_residual(data, inst, k, lam, config, warm):
    rest = inst.drop(k)
    res = fit_weighted(data, rest, config.with_lambda(lam), warm_start=warm)
    i = inst.indices[k]
    return 1.0 - data.y[i] * res.beta.decision_function(data.X[i])[0], res.one_class


def loo_residuals(data: Dataset, instances, lam: float, config: SolverConfig | None = None,
                  method: str = "homotopy", stats: dict | None = None) -> np.ndarray:
    """Held-out residuals ``1 - y_k f(x_k; beta^[-k])`` for every instance."""
    config = SolverConfig(lam) if config is None else config.with_lambda(lam)
    inst = Instances.coerce(instances)
    m = len(inst)
    if m < 2:
        raise ValueError("leave-one-out needs at least 2 instances")
    if method not in ("homotopy", "refit"):
        raise ValueError(f"unknown method {method!r}")
    stats = {} if stats is None else stats
    stats.update(paths=0, refits=0, one_class=0)
    prob = _Problem(data, inst)
    if prob.one_class_label != 0.0:
        # every refit sees a single class too and puts all rows on the margin
        stats["one_class"] = m
        return np.zeros(m)
    # fitting all m rows with caps w/m at lam (m-1)/m and then removing row k
    # is exactly the fit on the other m-1 instances at lam
    lam_base = lam * (m - 1) / m
    base = _solve(prob, lam_base, config.tolerance, int(config.max_epochs))
    r_base = 1.0 - prob.A[prob.inverse] @ base.beta.as_vector()
    out = r_base.copy()
    if not base.exact:
        method = "refit"
    st = None if base._state is None else base._state.status
    need = np.ones(m, dtype=bool) if st is None else st[prob.inverse] != K.STATUS_R
    todo = np.flatnonzero(need)
    if todo.size == 0:
        return out
    ok = np.zeros(todo.size, dtype=bool)
    if method == "homotopy":
        # identical rows with identical weights share one path
        keys = np.stack([prob.inverse[todo].astype(float), inst.weights[todo]], axis=1)
        uk, first, back = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        back = back.reshape(-1)
        rows = prob.inverse[todo[first]].astype(np.int64)
        deltas = prob.row_caps[todo[first]]
        s = base._state
        res, good = K.loo_residuals(prob.A, prob.C, lam_base, s.beta, s.status, s.c, rows,
                                    deltas, MAX_PATH_EVENTS)
        out[todo] = res[back]
        ok = good[back]
        stats["paths"] = int(rows.size)
    warm = base.beta.as_vector()
    for j in np.flatnonzero(~ok):
        k = todo[j]
        out[k], oc = _refit_residual(data, inst, k, lam, config, warm)
        stats["refits"] += 1
        stats["one_class"] += int(oc)
    if stats["one_class"]:
        log.info("%d leave-one-out refits saw a single class", stats["one_class"])
    return out


def gacv_score(data: Dataset, instances, lam: float, config: SolverConfig | None = None,
               method: str = "homotopy") -> float:
    """Weighted leave-one-out hinge average for penalty ``lam``."""
    inst = Instances.coerce(instances)
    if len(inst) < 3:
        raise ValueError("gacv_score needs n >= 3 instances")
    r = loo_residuals(data, inst, lam, config, method)
    return float(np.sum(inst.weights * np.maximum(r, 0.0)) / len(inst))


def gacv_scores(data, instances, grid, config=None, method="homotopy") -> np.ndarray:
    grid = LambdaGrid.coerce(grid)
    inst = Instances.coerce(instances)
    return np.array([gacv_score(data, inst, lam, config, method) for lam in grid])


def select_lambda(data: Dataset, instances, grid, config: SolverConfig | None = None,
                  method: str = "homotopy", return_scores: bool = False):
    """Grid value with the smallest score; ties go to the smaller penalty."""
    grid = LambdaGrid.coerce(grid)
    if len(grid) == 1:
        lam = float(grid.values[0])
        return (lam, np.array([np.nan])) if return_scores else lam
    scores = gacv_scores(data, instances, grid, config, method)
    best = scores.min()
    # first index within rounding of the minimum; grid is increasing
    j = int(np.flatnonzero(scores <= best + 1e-12 * abs(best))[0])
    lam = float(grid.values[j])
    return (lam, scores) if return_scores else lam
