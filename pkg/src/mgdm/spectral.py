"""Spectral radius of the momentum iteration, convergence verdicts and tuning.

For a covariance with eigenvalues lambda_j, the 2p x 2p iteration matrix
``D = [[(1+gamma) I - alpha S, -gamma I], [I, 0]]`` has the eigenvalues of
the 2 x 2 companions ``[[1 + gamma - alpha lambda_j, -gamma], [1, 0]]``,
i.e. the roots of ``xi^2 - (1 + gamma - alpha lambda_j) xi + gamma``.
"""
import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constants import BOUNDARY_RTOL
from .errors import InvalidInput


@dataclass(frozen=True)
class SpectralQuery:
    eigenvalues: tuple
    alpha: float
    gamma: float

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        if lam.size == 0 or not np.all(np.isfinite(lam)) or lam.min() <= 0:
            raise InvalidInput("eigenvalues must be finite and positive")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidInput(f"alpha must be positive, got {self.alpha}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise InvalidInput(f"gamma must be non-negative, got {self.gamma}")
        object.__setattr__(self, "eigenvalues", tuple(np.sort(lam)[::-1]))


def companion_radius(lam, alpha, gamma):
    """Largest root magnitude of ``xi^2 - (1+gamma-alpha lam) xi + gamma`` (vectorized)."""
    c = 1.0 + gamma - alpha * np.asarray(lam, dtype=float)
    disc = c * c - 4.0 * gamma
    real = 0.5 * (np.abs(c) + np.sqrt(np.maximum(disc, 0.0)))
    return np.where(disc < 0.0, math.sqrt(gamma), real)


def rho_D(q: SpectralQuery) -> float:
    return float(np.max(companion_radius(np.asarray(q.eigenvalues), q.alpha, q.gamma)))


class Status(str, enum.Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class Verdict:
    status: Status
    condition: str

    @property
    def runnable(self):
        return self.status is not Status.BOUNDARY


def alpha_bound(gamma, lambda1):
    return 2.0 * (1.0 + gamma) / lambda1


def check_convergence(alpha, gamma, lambda1) -> Verdict:
    if not (alpha > 0 and gamma >= 0 and lambda1 > 0):
        raise InvalidInput("need alpha > 0, gamma >= 0, lambda1 > 0")
    bound = alpha_bound(gamma, lambda1)
    at_bound = math.isclose(alpha, bound, rel_tol=BOUNDARY_RTOL, abs_tol=0.0)
    if gamma > 1:
        return Verdict(Status.DIVERGES, "gamma>1")
    if alpha > bound and not at_bound:
        return Verdict(Status.DIVERGES, "alpha>2(1+gamma)/lambda1")
    if gamma == 1:
        return Verdict(Status.BOUNDARY, "gamma==1")
    if at_bound:
        return Verdict(Status.BOUNDARY, "alpha==2(1+gamma)/lambda1")
    return Verdict(Status.CONVERGES, "0<=gamma<1 and alpha<2(1+gamma)/lambda1")


class TuningMode(str, enum.Enum):
    GLOBAL = "global"
    GD_ONLY = "gd-only"
    SMALL_ALPHA = "small-alpha"


@dataclass(frozen=True)
class TuningReport:
    alpha: float
    gamma: float
    rho: float
    mode: TuningMode


def optimal_tuning(lambda1, lambda_p, mode, alpha_opt: Optional[float] = None) -> TuningReport:
    """Rate-optimal (alpha, gamma) for extreme eigenvalues ``lambda1 >= lambda_p``.

    ``global`` optimizes both parameters, ``gd-only`` fixes gamma = 0, and
    ``small-alpha`` picks the best gamma for a given alpha below 1/lambda1.
    """
    mode = TuningMode(mode)
    if not (lambda1 >= lambda_p > 0):
        raise InvalidInput(f"need lambda1 >= lambda_p > 0, got {lambda1}, {lambda_p}")
    if mode is TuningMode.GLOBAL:
        s1, sp = math.sqrt(lambda1), math.sqrt(lambda_p)
        alpha = 4.0 / (s1 + sp) ** 2
        gamma = ((s1 - sp) / (s1 + sp)) ** 2
        r = math.sqrt(lambda1 / lambda_p)
        rho = (r - 1.0) / (r + 1.0)
    elif mode is TuningMode.GD_ONLY:
        alpha = 2.0 / (lambda1 + lambda_p)
        gamma = 0.0
        k = lambda1 / lambda_p
        rho = (k - 1.0) / (k + 1.0)
    else:
        if alpha_opt is None or not (0 < alpha_opt < 1.0 / lambda1):
            raise InvalidInput(f"small-alpha mode needs alpha in (0, 1/lambda1), got {alpha_opt}")
        alpha = float(alpha_opt)
        root = math.sqrt(alpha * lambda_p)
        gamma = (1.0 - root) ** 2
        rho = 1.0 - root
    return TuningReport(alpha=alpha, gamma=gamma, rho=rho, mode=mode)
