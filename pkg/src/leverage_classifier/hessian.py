"""Kernel-smoothed Hessian of the hinge risk and its regularized inverse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .sampling import SubsampleDraw
from .svm import Dataset, Hyperplane

__all__ = [
    "HessianEstimate",
    "DegenerateHessianError",
    "gaussian_kernel",
    "silverman_bandwidth",
    "estimate_hessian",
    "regularized_inverse",
    "JITTER_LADDER",
]

# multiples of trace(H)/(p+1) tried in order
JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0)
MAX_CONDITION = 1e12
RESIDUAL_TOL = 1e-8


class DegenerateHessianError(ValueError):
    pass


@dataclass
class HessianEstimate:
    matrix: np.ndarray
    bandwidth: float
    ridge_used: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.matrix, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("Hessian must be square")
        if not np.allclose(H, H.T, atol=1e-10, rtol=0):
            raise ValueError("Hessian must be symmetric")
        self.matrix = H


def gaussian_kernel(t, h):
    return np.exp(-0.5 * (np.asarray(t) / h) ** 2) / (h * np.sqrt(2 * np.pi))


def silverman_bandwidth(residuals) -> float:
    """Robust rule of thumb ``0.9 min(sd, IQR/1.34) n^(-1/5)``.

    ``sd`` uses ``ddof=1``; quartiles use linear interpolation between order
    statistics (numpy's default).  Falls back to the spread-free ``n^(-1/5)``
    when the spread term is zero.
    """
    r = np.asarray(residuals, dtype=float).reshape(-1)
    n = r.size
    if n < 2:
        raise ValueError("need at least 2 residuals")
    sd = np.std(r, ddof=1)
    q75, q25 = np.percentile(r, [75, 25], method="linear")
    iqr = (q75 - q25) / 1.34
    spread = min(sd, iqr)
    if spread <= 0:
        return float(n ** -0.2)
    return float(0.9 * spread * n ** -0.2)


def estimate_hessian(data: Dataset, draw: SubsampleDraw, beta0: Hyperplane, h: float) -> HessianEstimate:
    """``(1/n0) sum 1/(N pi_i) K_h(1 - y_i f_i) x~_i x~_i^T`` over the pilot draw."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    idx = draw.indices
    n0 = idx.shape[0]
    Xt = data.augmented(idx)
    r = 1.0 - data.y[idx] * beta0.decision_function(data.X[idx])
    w = gaussian_kernel(r, h) / (data.N * draw.draw_probs) / n0
    H = (Xt * w[:, None]).T @ Xt
    H = 0.5 * (H + H.T)
    return HessianEstimate(H, float(h))


def regularized_inverse(H: HessianEstimate) -> np.ndarray:
    """``(H + eps I)^-1`` for the first eps on the ladder giving cond <= 1e12.

    The chosen eps is stored in ``H.ridge_used``.
    """
    M = H.matrix
    d = M.shape[0]
    scale = np.trace(M) / d
    if not np.any(M) or not scale > 0:
        raise DegenerateHessianError("degenerate Hessian")
    eye = np.eye(d)
    for step in JITTER_LADDER:
        eps = step * scale
        J = M + eps * eye
        if np.linalg.cond(J) > MAX_CONDITION:
            continue
        try:
            cf = scipy.linalg.cho_factor(J, lower=True)
        except np.linalg.LinAlgError:
            continue
        inv = scipy.linalg.cho_solve(cf, eye)
        inv = 0.5 * (inv + inv.T)
        R = eye - J @ inv
        if np.abs(R).max() > RESIDUAL_TOL:
            # one step of iterative refinement before giving up on this rung
            inv = inv + scipy.linalg.cho_solve(cf, R)
            inv = 0.5 * (inv + inv.T)
            if np.abs(J @ inv - eye).max() > RESIDUAL_TOL:
                continue
        H.ridge_used = float(eps)
        return inv
    raise DegenerateHessianError("degenerate Hessian: still ill conditioned after maximal jitter")
