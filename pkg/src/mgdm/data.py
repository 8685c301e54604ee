"""Synthetic data, minibatch plans, batch moments and CSV ingestion."""
import csv
import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import EmptyData, InvalidInput, SchemaError
from .linalg import as_vector, cholesky


@dataclass(frozen=True)
class SimConfig:
    """Simulation design: covariance ``I_p + kappa 1 1^T``, Gaussian noise."""

    N: int
    p: int
    kappa: float = 1.0
    sigma: float = 1.0
    seed: int = 0
    theta0: Optional[tuple] = None  # overrides the default 10 exp(-j/2) coefficients

    def validate(self):
        if int(self.p) != self.p or self.p < 1:
            raise InvalidInput(f"p must be a positive integer, got {self.p}")
        if int(self.N) != self.N or self.N < self.p:
            raise InvalidInput(f"need integer N >= p, got N={self.N}, p={self.p}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise InvalidInput(f"kappa must be finite and >= 0, got {self.kappa}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidInput(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.theta0 is not None and len(self.theta0) != self.p:
            raise InvalidInput("theta0 length must equal p")
        return self

    def population_cov(self):
        return np.eye(self.p) + self.kappa * np.ones((self.p, self.p))

    def population_extremes(self):
        """(lambda_1, lambda_p) of the population covariance."""
        return self.kappa * self.p + 1.0, 1.0


@dataclass(frozen=True)
class DataSet:
    X: np.ndarray
    y: np.ndarray
    theta0: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    columns: Optional[tuple] = None

    def __post_init__(self):
        for name in ("X", "y", "theta0"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=np.float64)
                a.setflags(write=False)
                object.__setattr__(self, name, a)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise InvalidInput(f"X {self.X.shape} and y {self.y.shape} disagree")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise InvalidInput("data contain non-finite values")

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def default_theta0(p):
    j = np.arange(1, p + 1)
    return 10.0 * np.exp(-0.5 * j)


def generate_dataset(cfg: SimConfig) -> DataSet:
    """Draw ``X ~ N(0, I + kappa 1 1^T)`` and ``y = X theta0 + eps``."""
    cfg.validate()
    N, p = int(cfg.N), int(cfg.p)
    theta0 = default_theta0(p) if cfg.theta0 is None else np.asarray(cfg.theta0, dtype=float)
    L = cholesky(cfg.population_cov())
    g = rngmod.stream(cfg.seed, rngmod.DATA)
    Z = rngmod.box_muller(g, (N, p))
    eps = rngmod.box_muller(g, (N,))
    X = Z @ L.T
    y = X @ theta0 + cfg.sigma * eps
    return DataSet(X=X, y=y, theta0=theta0, sigma=float(cfg.sigma))


class BatchMode(str, enum.Enum):
    FIXED = "fixed"
    SHUFFLED = "shuffled"
    RANDOM = "random"


@dataclass(frozen=True)
class BatchPlan:
    """Batch assignments per epoch.

    ``partitions`` has shape (E, M, n); a Fixed plan stores a single
    partition (E = 1) that every epoch reuses.  Indices are 0-based.
    """

    mode: BatchMode
    N: int
    M: int
    n: int
    epochs: int
    seed: int
    partitions: np.ndarray

    def epoch(self, t):
        """Batches of epoch ``t`` (0-based) as an (M, n) array."""
        if not 0 <= t < self.epochs:
            raise IndexError(t)
        if self.mode is BatchMode.FIXED:
            return self.partitions[0]
        return self.partitions[t]

    @property
    def assignments(self):
        return [self.epoch(t) for t in range(self.epochs)]


def make_batch_plan(N, n, mode, epochs, seed) -> BatchPlan:
    mode = BatchMode(mode)
    if n < 1 or n > N:
        raise InvalidInput(f"batch size must lie in [1, N], got n={n}, N={N}")
    if epochs < 1:
        raise InvalidInput("epochs must be >= 1")
    if mode is not BatchMode.RANDOM and N % n:
        raise InvalidInput(f"N={N} is not divisible by n={n}")
    M = N // n
    if mode is BatchMode.FIXED:
        perm = rngmod.stream(seed, rngmod.PLAN, 0).permutation(N)
        parts = perm[: M * n].reshape(1, M, n)
    elif mode is BatchMode.SHUFFLED:
        parts = np.stack([
            rngmod.stream(seed, rngmod.PLAN, t).permutation(N).reshape(M, n)
            for t in range(epochs)
        ])
    else:
        parts = np.empty((epochs, M, n), dtype=np.int64)
        for t in range(epochs):
            g = rngmod.stream(seed, rngmod.PLAN, t)
            for m in range(M):
                parts[t, m] = g.permutation(N)[:n]
    parts.setflags(write=False)
    return BatchPlan(mode=mode, N=N, M=M, n=n, epochs=epochs, seed=seed, partitions=parts)


@dataclass(frozen=True)
class BatchMoments:
    sxx: np.ndarray
    sxy: np.ndarray


def batch_moments(ds: DataSet, indices) -> BatchMoments:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise InvalidInput("empty index list")
    if idx.min() < 0 or idx.max() >= ds.N:
        raise InvalidInput("batch index out of range")
    Xb = ds.X[idx]
    k = idx.size
    return BatchMoments(sxx=Xb.T @ Xb / k, sxy=Xb.T @ ds.y[idx] / k)


def partition_moments(ds: DataSet, batches):
    return [batch_moments(ds, b) for b in batches]


def full_moments(ds: DataSet) -> BatchMoments:
    return BatchMoments(sxx=ds.X.T @ ds.X / ds.N, sxy=ds.X.T @ ds.y / ds.N)


# --------------------------------------------------------------------------
# CSV ingestion

MISSING = {"", "na", "nan", "null", "none"}


def _parse_directive(col, d):
    if isinstance(d, str):
        if d == "numeric":
            return ("numeric", None)
        if d.startswith("categorical:"):
            return ("categorical", int(d.split(":", 1)[1]))
    elif isinstance(d, dict):
        if d.get("type") == "numeric":
            return ("numeric", None)
        if d.get("type") == "categorical":
            return ("categorical", int(d["top_k"]))
        if "categorical" in d:
            return ("categorical", int(d["categorical"]))
    raise SchemaError(f"bad directive for column {col!r}: {d!r}")


def _to_float(s, col):
    try:
        v = float(s)
    except ValueError:
        raise SchemaError(f"non-numeric value {s!r} in column {col!r}") from None
    if not math.isfinite(v):
        raise SchemaError(f"non-finite value {s!r} in column {col!r}")
    return v


def ingest_csv(path, schema, response_column) -> DataSet:
    """Load a CSV and build a design matrix.

    ``schema`` maps column name to ``"numeric"`` or ``"categorical:K"``
    (or ``{"type": "categorical", "top_k": K}``).  Numeric columns are
    standardized with the 1/N variance; a categorical column keeps its K
    most frequent levels (ties by level name), drops the first as the
    reference and emits K-1 dummies.  Rows with missing required fields or
    with a level outside the top K are excluded.
    """
    directives = {c: _parse_directive(c, d) for c, d in schema.items()}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in list(directives) + [response_column]:
            if col not in header:
                raise SchemaError(f"missing column {col!r}")
        required = list(directives) + [response_column]
        rows = [r for r in reader
                if all((r.get(c) or "").strip().lower() not in MISSING for c in required)]

    y = [_to_float(r[response_column], response_column) for r in rows]

    keep = np.ones(len(rows), dtype=bool)
    levels = {}
    for col, (kind, top_k) in directives.items():
        if kind != "categorical":
            continue
        counts = Counter(r[col].strip() for r in rows)
        ranked = sorted(counts, key=lambda lv: (-counts[lv], lv))[:top_k]
        levels[col] = ranked
        allowed = set(ranked)
        keep &= np.array([r[col].strip() in allowed for r in rows], dtype=bool)

    rows = [r for r, k in zip(rows, keep) if k]
    y = np.array([v for v, k in zip(y, keep) if k])
    if not rows:
        raise EmptyData("no rows left after filtering")

    blocks, names = [], []
    for col, (kind, _) in directives.items():
        if kind == "numeric":
            v = np.array([_to_float(r[col], col) for r in rows])
            sd = v.std()
            blocks.append(((v - v.mean()) / sd if sd > 0 else v - v.mean())[:, None])
            names.append(col)
    for col, (kind, _) in directives.items():
        if kind == "categorical":
            vals = np.array([r[col].strip() for r in rows])
            for lv in levels[col][1:]:
                blocks.append((vals == lv).astype(float)[:, None])
                names.append(f"{col}={lv}")
    X = np.hstack(blocks) if blocks else np.zeros((len(rows), 0))
    return DataSet(X=X, y=as_vector(y, "response"), columns=tuple(names))
