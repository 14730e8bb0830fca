"""Weighted hinge-loss linear SVM: domain types, solver and reference oracle.

The fitted objective is

    F(beta) = (1/m) * sum_i w_i * max(1 - y_i * (b0 + x_i @ b1), 0) + lam/2 * ||b1||^2

over ``m`` weighted instances, with the intercept ``b0`` left unpenalized.

The solver runs damped Newton on a smoothed hinge with a decreasing smoothing
width.  Once the smoothing is small the margin/loss partition is read off the
iterate and the KKT system of the exact problem is solved for that partition.
A verified partition gives the exact minimizer (up to rounding) and a duality
gap certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from . import _kernels as K

__all__ = [
    "Sample",
    "Dataset",
    "Hyperplane",
    "WeightedInstance",
    "Instances",
    "SolverConfig",
    "SolverResult",
    "ConvergenceError",
    "hinge",
    "decision_value",
    "predict",
    "objective",
    "weighted_svm_fit",
    "fit_weighted",
    "reference_solve",
    "empirical_gradient",
    "subgradient_certificate",
]

REFERENCE_MAX_M = 500


class ConvergenceError(RuntimeError):
    """Raised when the solver stops with a relative gap above tolerance."""

    def __init__(self, message, gap=float("nan"), result=None):
        super().__init__(message)
        self.gap = gap
        self.result = result


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label!r}")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "label", int(self.label))


class Dataset:
    """N labeled samples stored as a feature matrix and a label vector.

    Parameters
    ----------
    X : array_like, shape (N, p)
    y : array_like, shape (N,)
        Labels in {+1, -1}.
    """

    def __init__(self, X, y):
        X = np.array(X, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(y, dtype=float, copy=True).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X has shape {X.shape} but y has length {y.shape[0]}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need N >= 1 samples of dimension p >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be +1 or -1")
        X.setflags(write=False)
        y.setflags(write=False)
        self._X = X
        self._y = y

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("empty sample list")
        dims = {s.features.shape[0] for s in samples}
        if len(dims) != 1:
            raise ValueError(f"samples have mixed dimensions {sorted(dims)}")
        X = np.vstack([s.features for s in samples])
        y = np.array([s.label for s in samples], dtype=float)
        return cls(X, y)

    @property
    def X(self) -> np.ndarray:
        return self._X

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def N(self) -> int:
        return self._X.shape[0]

    @property
    def p(self) -> int:
        return self._X.shape[1]

    def __len__(self):
        return self.N

    def __getitem__(self, i) -> Sample:
        return Sample(self._X[i], int(self._y[i]))

    def samples(self):
        for i in range(self.N):
            yield self[i]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self._X[idx], self._y[idx])

    def augmented(self, idx=None) -> np.ndarray:
        """Rows ``(1, x_i)``; built on demand, never stored."""
        X = self._X if idx is None else self._X[idx]
        return np.hstack([np.ones((X.shape[0], 1)), X])

    def has_both_classes(self, idx=None) -> bool:
        y = self._y if idx is None else self._y[idx]
        return bool(np.any(y > 0) and np.any(y < 0))

    def __repr__(self):
        return f"Dataset(N={self.N}, p={self.p})"


@dataclass(frozen=True)
class Hyperplane:
    intercept: float
    slope: np.ndarray

    def __post_init__(self):
        s = np.array(self.slope, dtype=float, copy=True).reshape(-1)
        b0 = float(self.intercept)
        if not (np.isfinite(b0) and np.all(np.isfinite(s))):
            raise ValueError("hyperplane entries must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "slope", s)
        object.__setattr__(self, "intercept", b0)

    @property
    def p(self) -> int:
        return self.slope.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.slope])

    @classmethod
    def from_vector(cls, beta) -> "Hyperplane":
        beta = np.asarray(beta, dtype=float).reshape(-1)
        return cls(beta[0], beta[1:])

    @classmethod
    def zeros(cls, p: int) -> "Hyperplane":
        return cls(0.0, np.zeros(p))

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.p:
            raise ValueError(f"dimension mismatch: x has {X.shape[1]} features, slope has {self.p}")
        return self.intercept + X @ self.slope


@dataclass(frozen=True)
class WeightedInstance:
    index: int
    weight: float

    def __post_init__(self):
        w = float(self.weight)
        if not (np.isfinite(w) and w > 0):
            raise ValueError(f"instance weight must be positive and finite, got {self.weight!r}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "index", int(self.index))


class Instances:
    """Array form of a sequence of :class:`WeightedInstance`.

    Indices may repeat (subsampling with replacement).
    """

    def __init__(self, indices, weights=None):
        idx = np.array(indices, dtype=np.int64, copy=True).reshape(-1)
        if weights is None:
            w = np.ones(idx.shape[0])
        else:
            w = np.array(weights, dtype=float, copy=True).reshape(-1)
        if idx.shape != w.shape:
            raise ValueError("indices and weights differ in length")
        if idx.size == 0:
            raise ValueError("instances must be nonempty")
        if not np.all(np.isfinite(w) & (w > 0)):
            raise ValueError("instance weights must be positive and finite")
        idx.setflags(write=False)
        w.setflags(write=False)
        self.indices = idx
        self.weights = w

    @classmethod
    def coerce(cls, obj) -> "Instances":
        if isinstance(obj, Instances):
            return obj
        obj = list(obj)
        if obj and isinstance(obj[0], WeightedInstance):
            return cls([o.index for o in obj], [o.weight for o in obj])
        return cls(obj)

    @classmethod
    def full(cls, N: int) -> "Instances":
        return cls(np.arange(N))

    def __len__(self):
        return self.indices.shape[0]

    def __iter__(self):
        for i, w in zip(self.indices, self.weights):
            yield WeightedInstance(int(i), float(w))

    def drop(self, k: int) -> "Instances":
        keep = np.ones(len(self), dtype=bool)
        keep[k] = False
        return Instances(self.indices[keep], self.weights[keep])

    def concat(self, other: "Instances") -> "Instances":
        return Instances(np.concatenate([self.indices, other.indices]),
                         np.concatenate([self.weights, other.weights]))

    def scaled(self, c: float) -> "Instances":
        return Instances(self.indices, self.weights * c)

    def check(self, data: Dataset):
        if self.indices.min() < 0 or self.indices.max() >= data.N:
            raise IndexError(f"instance index out of range for dataset of size {data.N}")


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``lam`` is the ridge penalty.  ``tolerance`` bounds the relative
    objective gap of the returned solution.  ``max_epochs`` caps the total
    number of Newton iterations.  The solver is deterministic; ``seed`` is
    carried for interface compatibility with randomized solvers and
    recorded in results.
    """

    lam: float = 1e-3
    tolerance: float = 1e-8
    max_epochs: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lambda must be nonnegative")
        if not (self.tolerance > 0):
            raise ValueError("tolerance must be positive")
        if int(self.max_epochs) < 1:
            raise ValueError("max_epochs must be a positive integer")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")

    def with_lambda(self, lam: float) -> "SolverConfig":
        return SolverConfig(lam, self.tolerance, self.max_epochs, self.seed)


@dataclass
class SolverResult:
    beta: Hyperplane
    objective: float
    gap: float
    exact: bool
    history: np.ndarray
    n_iter: int
    one_class: bool = False
    # internal state on the deduplicated rows, reused by leave-one-out
    _state: object = field(default=None, repr=False)

    @property
    def relative_gap(self) -> float:
        return self.gap / (1.0 + abs(self.objective))


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------


def hinge(u):
    """``max(u, 0)``; callers pass ``u = 1 - y * f``."""
    return np.maximum(u, 0.0) if isinstance(u, np.ndarray) else max(float(u), 0.0)


def decision_value(beta: Hyperplane, x):
    x = np.asarray(x, dtype=float)
    f = beta.decision_function(x)
    return float(f[0]) if x.ndim == 1 else f


def predict(beta: Hyperplane, x):
    """Sign of the decision value with ties at exactly 0 mapped to +1."""
    f = decision_value(beta, x)
    if np.ndim(f) == 0:
        return 1 if f >= 0 else -1
    return np.where(f >= 0, 1, -1)


def _signed_design(data: Dataset, inst: Instances):
    idx = inst.indices
    A = data.y[idx, None] * data.augmented(idx)
    return np.ascontiguousarray(A)


def objective(beta: Hyperplane, data: Dataset, instances, lam: float) -> float:
    inst = Instances.coerce(instances)
    m = len(inst)
    idx = inst.indices
    r = 1.0 - data.y[idx] * beta.decision_function(data.X[idx])
    return float(inst.weights @ np.maximum(r, 0.0) / m + 0.5 * lam * beta.slope @ beta.slope)


def empirical_gradient(beta: Hyperplane, data: Dataset, instances) -> np.ndarray:
    """``-(1/m) sum_i w_i 1(y_i f_i <= 1) y_i (1, x_i)``."""
    inst = Instances.coerce(instances)
    inst.check(data)
    if beta.p != data.p:
        raise ValueError(f"dimension mismatch: beta has {beta.p} slopes, data has {data.p}")
    idx = inst.indices
    y = data.y[idx]
    active = y * beta.decision_function(data.X[idx]) <= 1.0
    coef = inst.weights * active * y
    return -(coef @ data.augmented(idx)) / len(inst)


def subgradient_certificate(beta: Hyperplane, data: Dataset, instances, lam: float,
                            margin_tol: float = 1e-9) -> float:
    """Smallest norm of a subgradient of the objective at ``beta``.

    Rows strictly inside the margin contribute their full weight and rows
    outside contribute nothing.  Rows within ``margin_tol`` of the margin may
    contribute any fraction of their weight; the best fractions come from a
    bounded least-squares problem.
    """
    inst = Instances.coerce(instances)
    m = len(inst)
    A = _signed_design(data, inst)
    C = inst.weights / m
    r = 1.0 - A @ beta.as_vector()
    scale = margin_tol * (1.0 + np.abs(A).max(axis=1) * np.abs(beta.as_vector()).sum())
    on = np.abs(r) <= scale
    inside = (r > 0) & ~on
    g = -(C[inside] @ A[inside])
    g[1:] += lam * beta.slope
    if not np.any(on):
        return float(np.linalg.norm(g))
    # g - A_E^T c,  c in [0, C_E]
    M = -A[on].T
    res = lsq_linear(M, -g, bounds=(np.zeros(on.sum()), C[on]), method="bvls")
    return float(np.linalg.norm(g + M @ res.x))


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


class _Problem:
    """Signed design with identical rows merged (their caps add up)."""

    def __init__(self, data: Dataset, inst: Instances):
        inst.check(data)
        self.m = len(inst)
        A = _signed_design(data, inst)
        C = inst.weights / self.m
        uniq, inverse = np.unique(A, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        self.A = np.ascontiguousarray(uniq)
        self.C = np.bincount(inverse, weights=C, minlength=uniq.shape[0])
        self.inverse = inverse
        self.row_caps = C
        labels = data.y[inst.indices]
        self.one_class_label = labels[0] if np.all(labels == labels[0]) else 0.0
        self.d = A.shape[1]


@dataclass
class _State:
    problem: _Problem
    lam: float
    beta: np.ndarray
    status: np.ndarray
    c: np.ndarray


def _dual_value(A, c, lam):
    # enforce sum_i c_i y_i = 0 by shrinking the heavier class; any c in
    # [0, C] with that balance gives a valid lower bound
    c = c.copy()
    y = A[:, 0]
    sp, sn = c[y > 0].sum(), c[y < 0].sum()
    if sp > sn and sp > 0:
        c[y > 0] *= sn / sp
    elif sn > sp and sn > 0:
        c[y < 0] *= sp / sn
    v = c @ A[:, 1:]
    return c.sum() - 0.5 * (v @ v) / lam


def _dual_lower_bound(A, C, lam, beta, mu):
    """A dual objective value built from the smoothed multipliers at ``beta``."""
    r = 1.0 - A @ beta
    c = C * np.clip((r + mu) / (2 * mu), 0.0, 1.0) if mu > 0 else C * (r > 0)
    return _dual_value(A, c, lam)


def _vertex_lower_bound(A, C, lam, beta, tau):
    """Dual value from multipliers fitted on the near-margin rows.

    Covers degenerate optima with more margin rows than coefficients, where
    the KKT polish does not apply.
    """
    r = 1.0 - A @ beta
    on = np.abs(r) <= tau
    c = np.where(r > tau, C, 0.0)
    if np.any(on):
        g = c @ A
        g[1:] -= lam * beta[1:]
        res = lsq_linear(A[on].T, -g, bounds=(np.zeros(on.sum()), C[on]), method="bvls")
        c[on] = res.x
    return _dual_value(A, c, lam)


def _vertex_snap(A, C, lam, beta, tau, f):
    """Move ``beta`` onto the margin of its near-margin rows.

    The smallest correction with ``A_E beta = 1`` on the rows within ``tau``
    of the margin; returned only if that system is consistent and the
    objective does not go up.
    """
    r = 1.0 - A @ beta
    on = np.abs(r) <= tau
    if not np.any(on):
        return None
    delta = np.linalg.lstsq(A[on], r[on], rcond=None)[0]
    b2 = beta + delta
    size = 1.0 + np.abs(A).max() * np.abs(b2).sum()
    if np.abs(1.0 - A[on] @ b2).max() > 1e-12 * size:
        return None
    f2 = K.objective(A, C, lam, b2, 0.0)
    if f2 > f + 1e-12 * (1.0 + abs(f)):
        return None
    return b2, f2


def _solve(prob: _Problem, lam: float, tol: float, max_iter: int, warm=None):
    A, C, d = prob.A, prob.C, prob.d
    if prob.one_class_label != 0.0:
        # y_i * b0 = 1 for every row: zero hinge, zero penalty
        beta = np.zeros(d)
        beta[0] = prob.one_class_label
        st = np.full(A.shape[0], K.STATUS_E, dtype=np.int8)
        state = _State(prob, lam, beta, st, np.zeros(A.shape[0]))
        return SolverResult(Hyperplane.from_vector(beta), 0.0, 0.0, True, np.zeros(1), 0,
                            one_class=True, _state=state)
    beta = np.zeros(d) if warm is None else np.array(warm, dtype=float)
    best_beta = beta.copy()
    best = np.array([K.objective(A, C, lam, beta, 0.0)])
    history = np.empty(max(int(max_iter), 1) + 1)
    history[0] = best[0]
    n_hist = np.ones(1, dtype=np.int64)
    # a warm start close to the answer does not need the wide stages
    mu = 1.0 if warm is None else 1e-2
    iters = 0
    while True:
        budget = min(200, max_iter - iters)
        if budget <= 0:
            break
        it, _ = K.newton_stage(A, C, lam, beta, mu, budget, best_beta, best, history, n_hist)
        iters += it
        if mu <= 1e-2 and lam > 0:
            for tau in (mu, 1e-2 * mu):
                b2, st, c, ok = K.polish(A, C, lam, beta, tau, 1e-9)
                if ok:
                    f = K.objective(A, C, lam, b2, 0.0)
                    gap = max(K.duality_gap(A, C, lam, b2, c), 0.0)
                    # the exact point can only undercut the incumbent (up to rounding)
                    hist = np.append(history[: n_hist[0]], f)
                    state = _State(prob, lam, b2, st, c)
                    return SolverResult(Hyperplane.from_vector(b2), f, gap, True, hist, iters,
                                        _state=state)
        if mu < 1e-12:
            break
        mu *= 0.1
    f = best[0]
    hist = history[: n_hist[0]].copy()
    if lam > 0:
        lb = _dual_lower_bound(A, C, lam, best_beta, mu)
        size = 1.0 + np.abs(A).max() * np.abs(best_beta).sum()
        for tau in (1e-6, 1e-8, 1e-10):
            lb = max(lb, _vertex_lower_bound(A, C, lam, best_beta, tau * size))
        # a degenerate vertex: put the point exactly on it so that the
        # subgradient at the returned point is small as well as the gap
        for tau in (1e-6, 1e-8, 1e-10):
            snap = _vertex_snap(A, C, lam, best_beta, tau * size, f)
            if snap is None:
                continue
            b2, f2 = snap
            lb2 = max(lb, _vertex_lower_bound(A, C, lam, b2, 1e-12 * size))
            if f2 - lb2 <= max(f - lb, 0.0) or f2 - lb2 <= tol * (1.0 + abs(f2)):
                best_beta, f, lb = b2, f2, lb2
                hist = np.append(hist, f2)
                break
        gap = max(f - lb, 0.0)
    else:
        gap = float("nan")
    return SolverResult(Hyperplane.from_vector(best_beta), f, gap, False, hist, iters)


def fit_weighted(data: Dataset, instances, config: SolverConfig, warm_start=None,
                 raise_on_failure: bool = True) -> SolverResult:
    """Minimize the weighted hinge + ridge objective; returns a full result.

    Raises :class:`ConvergenceError` when the relative duality gap of the
    returned point exceeds ``config.tolerance``.  With ``lam = 0`` no gap
    can be certified and the smoothed-Newton answer is returned as is.
    """
    inst = Instances.coerce(instances)
    prob = _Problem(data, inst)
    warm = None if warm_start is None else (
        warm_start.as_vector() if isinstance(warm_start, Hyperplane) else warm_start)
    res = _solve(prob, float(config.lam), config.tolerance, int(config.max_epochs), warm)
    if raise_on_failure and np.isfinite(res.gap) and res.relative_gap > config.tolerance:
        raise ConvergenceError(
            f"solver stopped after {res.n_iter} iterations with relative gap "
            f"{res.relative_gap:.3e} > {config.tolerance:.1e}", res.relative_gap, res)
    return res


def weighted_svm_fit(data: Dataset, instances, config: SolverConfig) -> Hyperplane:
    """Weighted SVM coefficients; see :func:`fit_weighted`."""
    return fit_weighted(data, instances, config).beta


def reference_solve(data: Dataset, instances, config: SolverConfig) -> Hyperplane:
    """Slow generic QP solve (slack formulation), used as a test oracle."""
    import cvxpy as cp

    inst = Instances.coerce(instances)
    m = len(inst)
    if m > REFERENCE_MAX_M:
        raise ValueError(f"reference_solve is limited to m <= {REFERENCE_MAX_M}, got {m}")
    inst.check(data)
    A = _signed_design(data, inst)
    b = cp.Variable(data.p + 1)
    xi = cp.Variable(m)
    obj = inst.weights @ xi / m + 0.5 * config.lam * cp.sum_squares(b[1:])
    prob = cp.Problem(cp.Minimize(obj), [xi >= 0, xi >= 1 - A @ b])
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
               max_iter=500)
    if b.value is None:
        raise ConvergenceError(f"reference QP failed: {prob.status}")
    return Hyperplane.from_vector(b.value)
