"""Minibatch gradient descent with heavy-ball momentum, and the OLS reference."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import DIVERGENCE_NORM
from .data import BatchMode, BatchPlan, DataSet, full_moments, partition_moments
from .errors import InvalidInput
from .linalg import as_vector, solve_linear


@dataclass(frozen=True)
class GdmConfig:
    alpha: float
    gamma: float
    epochs: int
    theta_init: Optional[np.ndarray] = None
    v_init: Optional[np.ndarray] = None

    def validate(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidInput(f"alpha must be finite and positive, got {self.alpha}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise InvalidInput(f"gamma must be finite and non-negative, got {self.gamma}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidInput(f"epochs must be a positive integer, got {self.epochs}")
        return self


@dataclass(frozen=True)
class GdmTrace:
    """Iterate history of one run.

    ``per_epoch_theta[t]`` is the estimate after the last batch of epoch
    t+1.  When the run diverges, rows from the diverging epoch on are NaN
    and ``diverged_at`` holds that (1-based) epoch.
    """

    theta_final: np.ndarray
    per_epoch_theta: np.ndarray
    deltas: Optional[np.ndarray]
    momentum_final: np.ndarray
    diverged_at: Optional[int] = None

    @property
    def diverged(self):
        return self.diverged_at is not None


def run_mgdm(ds: DataSet, plan: BatchPlan, cfg: GdmConfig, reference=None) -> GdmTrace:
    """Run minibatch GDM over ``plan`` for ``cfg.epochs`` epochs.

    Each batch step is ``v <- gamma v + alpha (S_xx^(m) theta - S_xy^(m))``
    followed by ``theta <- theta - v``; (theta, v) carry over between
    epochs.  Fixed plans use cached batch moments; other regimes evaluate
    the batch gradient directly from the rows.
    """
    cfg.validate()
    if plan.N != ds.N:
        raise InvalidInput(f"plan is for N={plan.N}, data have N={ds.N}")
    if cfg.epochs > plan.epochs and plan.mode is not BatchMode.FIXED:
        raise InvalidInput(f"plan covers {plan.epochs} epochs, {cfg.epochs} requested")
    p = ds.p
    theta = np.zeros(p) if cfg.theta_init is None else as_vector(cfg.theta_init, "theta_init").copy()
    v = np.zeros(p) if cfg.v_init is None else as_vector(cfg.v_init, "v_init").copy()
    if theta.shape != (p,) or v.shape != (p,):
        raise InvalidInput("initial vectors must have length p")
    if reference is not None:
        reference = as_vector(reference, "reference")
        if reference.shape != (p,):
            raise InvalidInput("reference must have length p")

    alpha, gamma = float(cfg.alpha), float(cfg.gamma)
    T = int(cfg.epochs)
    hist = np.full((T, p), np.nan)
    deltas = None if reference is None else np.full(T, np.nan)
    diverged_at = None

    if plan.mode is BatchMode.FIXED:
        cached = [(bm.sxx, bm.sxy) for bm in partition_moments(ds, plan.epoch(0))]

    X, y = ds.X, ds.y
    for t in range(T):
        if plan.mode is BatchMode.FIXED:
            for sxx, sxy in cached:
                v = gamma * v + alpha * (sxx @ theta - sxy)
                theta = theta - v
                nrm = np.linalg.norm(theta)
                if not np.isfinite(nrm) or nrm > DIVERGENCE_NORM:
                    diverged_at = t + 1
                    break
        else:
            for b in plan.epoch(t):
                Xb = X[b]
                g = Xb.T @ (Xb @ theta - y[b]) / len(b)
                v = gamma * v + alpha * g
                theta = theta - v
                nrm = np.linalg.norm(theta)
                if not np.isfinite(nrm) or nrm > DIVERGENCE_NORM:
                    diverged_at = t + 1
                    break
        if diverged_at is not None:
            break
        hist[t] = theta
        if deltas is not None:
            deltas[t] = np.linalg.norm(theta - reference)

    return GdmTrace(theta_final=theta, per_epoch_theta=hist, deltas=deltas,
                    momentum_final=v, diverged_at=diverged_at)


def ols(ds: DataSet):
    """Least-squares coefficients from the full-sample normal equations."""
    fm = full_moments(ds)
    return solve_linear(fm.sxx, fm.sxy)


def estimation_error(theta, target):
    """Squared Euclidean distance between two coefficient vectors."""
    a = as_vector(theta, "theta")
    b = as_vector(target, "target")
    if a.shape != b.shape:
        raise InvalidInput(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)
