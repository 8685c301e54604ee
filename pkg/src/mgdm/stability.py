"""Stable solution of the fixed-minibatch momentum recursion.

At a fixed point the per-batch limits theta^(1..M) satisfy the block
system ``Omega theta* = alpha S*_xy`` with, in block row m,

    I at column m,  -(Delta_m) at column m-1,  gamma I at column m-2,

columns taken cyclically and ``Delta_m = (1+gamma) I - alpha S_xx^(m)``.
Blocks landing on the same position (M <= 2) add.  ``Omega`` splits as
``A + alpha B`` where A carries the data-free part.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
import numpy as np

from . import constants as C
from . import rng as rngmod
from .data import DataSet, full_moments, partition_moments
from .errors import InvalidInput, SingularMatrix
from .linalg import as_matrix, block_ones, build_Z, solve_linear


@dataclass(frozen=True)
class OmegaSystem:
    M: int
    p: int
    alpha: float
    gamma: float
    omega: np.ndarray
    a_mat: np.ndarray
    b_mat: np.ndarray
    sxy_star: np.ndarray
    batch_moments: tuple

    @property
    def q(self):
        return self.M * self.p

    @property
    def sxx_full(self):
        """Average of the batch covariances (the full-sample one for a partition)."""
        return sum(bm.sxx for bm in self.batch_moments) / self.M


@dataclass(frozen=True)
class StableSolution:
    theta_star: np.ndarray
    per_batch: np.ndarray  # (M, p)
    residual: float

    @property
    def last(self):
        return self.per_batch[-1]


def circulant_pattern(M, gamma):
    """The M x M matrix with 1, -(1+gamma), gamma on the diagonal, first and
    second cyclic sub-diagonals (A is this Kronecker I_p)."""
    At = np.zeros((M, M))
    for m in range(M):
        At[m, m] += 1.0
        At[m, (m - 1) % M] -= 1.0 + gamma
        At[m, (m - 2) % M] += gamma
    return At


def lag_pattern(M):
    """Positions of the batch covariances in B: block (m, m-1)."""
    L = np.zeros((M, M))
    for m in range(M):
        L[m, (m - 1) % M] = 1.0
    return L


def assemble_omega(moments, alpha, gamma) -> OmegaSystem:
    moments = tuple(moments)
    M = len(moments)
    if M < 1:
        raise InvalidInput("need at least one batch")
    p = np.shape(moments[0].sxx)[0]
    for bm in moments:
        if np.shape(bm.sxx) != (p, p) or np.shape(bm.sxy) != (p,):
            raise InvalidInput("batch moments disagree in dimension")
    if not (math.isfinite(alpha) and math.isfinite(gamma)) or gamma < 0:
        raise InvalidInput(f"need finite alpha and gamma >= 0, got {alpha}, {gamma}")
    if gamma == 1.0:
        raise SingularMatrix("gamma == 1 is excluded: no unique stable solution")

    A = np.kron(circulant_pattern(M, gamma), np.eye(p))
    B = np.zeros((M * p, M * p))
    for m, bm in enumerate(moments):
        j = (m - 1) % M
        B[m * p:(m + 1) * p, j * p:(j + 1) * p] += as_matrix(bm.sxx, "sxx")
    omega = A + alpha * B
    sxy = np.concatenate([np.asarray(bm.sxy, dtype=float) for bm in moments])
    for a in (omega, A, B, sxy):
        a.setflags(write=False)
    return OmegaSystem(M=M, p=p, alpha=float(alpha), gamma=float(gamma), omega=omega,
                       a_mat=A, b_mat=B, sxy_star=sxy, batch_moments=moments)


def solve_stable(sys: OmegaSystem) -> StableSolution:
    rhs = sys.alpha * sys.sxy_star
    theta = solve_linear(sys.omega, rhs)
    residual = float(np.linalg.norm(sys.omega @ theta - rhs))
    return StableSolution(theta_star=theta, per_batch=theta.reshape(sys.M, sys.p),
                          residual=residual)


def stable_for_partition(ds: DataSet, batches, alpha, gamma) -> StableSolution:
    return solve_stable(assemble_omega(partition_moments(ds, batches), alpha, gamma))


# --------------------------------------------------------------------------
# first-order bias term

def bias_term(sys: OmegaSystem, theta_ols):
    """First-order coefficient E of ``theta* = 1 (x) theta_ols + alpha E + ...``.

    Evaluated literally with ``P1 = (1 (x) I)/sqrt(M)``, ``P2 = Z (x) I`` and
    ``A22 = P2^T A P2``.
    """
    if sys.gamma == 1.0:
        raise InvalidInput("gamma == 1 is excluded")
    M, p, q = sys.M, sys.p, sys.q
    if M == 1:
        return np.zeros(q)
    theta_ols = np.asarray(theta_ols, dtype=float)
    P1 = block_ones(M, p) / math.sqrt(M)
    P2 = np.kron(build_Z(M), np.eye(p))
    A22 = P2.T @ sys.a_mat @ P2
    r = sys.b_mat @ np.tile(theta_ols, M) - sys.sxy_star
    u = P2 @ solve_linear(A22, P2.T @ r)
    Bu = sys.b_mat @ u
    h1 = P1 @ solve_linear(sys.sxx_full, P1.T @ Bu)
    return h1 - u


def projected_inverse(M, gamma):
    """``Z (Z^T A~ Z)^{-1} Z^T`` for the M x M circulant pattern A~."""
    Z = build_Z(M)
    At = circulant_pattern(M, gamma)
    return Z @ solve_linear(Z.T @ At @ Z, Z.T)


def _bias_structured(moments, Q, theta_ols, sxx_inv_apply):
    """Same quantity as ``bias_term`` using ``P2 A22^{-1} P2^T = Q (x) I``."""
    S = np.stack([bm.sxx for bm in moments])
    s = np.stack([bm.sxy for bm in moments])
    r = S @ theta_ols - s                     # block m: S_m theta - s_m
    u = Q @ r                                 # (Q (x) I) r
    Bu = np.einsum("mij,mj->mi", S, np.roll(u, 1, axis=0))
    h1 = sxx_inv_apply(Bu.mean(axis=0))
    return (h1[None, :] - u).ravel()


# --------------------------------------------------------------------------
# d_gamma

@dataclass(frozen=True)
class DGamma:
    M: int
    gamma: float
    a_vec: np.ndarray
    value: float


def d_gamma_closed(M, gamma) -> DGamma:
    """First row ``a`` of the generalized inverse Q and its norm, in closed form.

    The rational expressions are evaluated exactly (``Fraction``) and
    rounded once, which sidesteps cancellation among the ``gamma^-k`` sums
    for small gamma.
    """
    if int(M) != M or M < 2:
        raise InvalidInput(f"M must be an integer >= 2, got {M}")
    if not (math.isfinite(gamma) and gamma >= 0):
        raise InvalidInput(f"gamma must be finite and >= 0, got {gamma}")
    if gamma == 1.0:
        raise InvalidInput("gamma == 1 is excluded")
    M = int(M)
    if gamma == 0:
        a = [Fraction(M - 1, 2 * M)] + [Fraction(2 * m - M - 1, 2 * M) for m in range(1, M)]
    else:
        g = Fraction(gamma)
        S = [Fraction(0)]
        for k in range(1, M + 1):
            S.append(S[-1] + g ** -k)
        sum_S = sum(S[1:M])                                   # sum_{m=1}^{M-1} S_m
        beta = (M * S[M - 1] - sum_S) / (M * g * S[M])
        # prefix[m] = sum_{k=1}^{m-1} S_k
        prefix = [Fraction(0)] * (M + 1)
        for m in range(2, M + 1):
            prefix[m] = prefix[m - 1] + S[m - 1]
        a0 = (beta * g / M) * sum_S + sum(prefix[m] for m in range(2, M)) / M ** 2 \
            - sum(S[1:M - 1]) / M
        a = [a0, a0 - beta]
        for m in range(2, M):
            a.append(a0 - beta * g * S[m] - prefix[m] / M + S[m - 1])
    total = sum(a)
    a_vec = np.array([float(x) for x in a])
    value = math.sqrt(float(sum(x * x for x in a)))
    assert abs(float(total)) <= C.DGAMMA_SUM_TOL
    return DGamma(M=M, gamma=float(gamma), a_vec=a_vec, value=value)


def d_gamma_dense(M, gamma) -> float:
    """Norm of the first row of ``Z (Z^T A~ Z)^{-1} Z^T`` by direct solve."""
    if int(M) != M or M < 2:
        raise InvalidInput(f"M must be an integer >= 2, got {M}")
    if gamma < 0:
        raise InvalidInput("gamma must be >= 0")
    Q = projected_inverse(int(M), gamma)
    return float(np.linalg.norm(Q[0]))


def asymptotic_variance(alpha, gamma, M, sigma, sigma_xx):
    """Leading-order covariance of sqrt(N)(theta^(m) - theta0):
    ``sigma^2 (S^-1 + alpha^2 M d_gamma^2 S)``."""
    S = as_matrix(sigma_xx, "sigma_xx")
    p = S.shape[0]
    S_inv = solve_linear(S, np.eye(p))
    if alpha == 0:
        return sigma ** 2 * S_inv
    d = d_gamma_closed(M, gamma).value
    return sigma ** 2 * (S_inv + alpha ** 2 * M * d ** 2 * S)


# --------------------------------------------------------------------------
# shuffled partitions

@dataclass(frozen=True)
class ShuffleScan:
    values: np.ndarray
    max: float
    seed: int


def shuffle_partition(N, n, seed, k):
    """The k-th shuffled partition used by the scan, as an (N/n, n) index array."""
    return rngmod.stream(seed, rngmod.SHUFFLE_SCAN, k).permutation(N).reshape(N // n, n)


def shuffle_error_scan(ds: DataSet, K, alpha, gamma, seed, n, workers=1) -> ShuffleScan:
    """``||E^(k)||`` over K independently shuffled partitions of size-n batches.

    E does not depend on alpha; alpha is validated only.  Partition k uses
    its own stream derived from ``(seed, k)`` and results are returned in k order.
    """
    if K < 1:
        raise InvalidInput("K must be >= 1")
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    if gamma == 1.0:
        raise InvalidInput("gamma == 1 is excluded")
    if ds.N % n:
        raise InvalidInput(f"N={ds.N} is not divisible by n={n}")
    M = ds.N // n
    fm = full_moments(ds)
    theta_ols = solve_linear(fm.sxx, fm.sxy)
    sxx_inv = solve_linear(fm.sxx, np.eye(ds.p))
    Q = projected_inverse(M, gamma) if M > 1 else None
    ks = tuple(range(K))

    def one(k):
        if M == 1:
            return 0.0
        parts = shuffle_partition(ds.N, n, seed, k)
        e = _bias_structured(partition_moments(ds, parts), Q, theta_ols, lambda v: sxx_inv @ v)
        return float(np.linalg.norm(e))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            vals = list(ex.map(one, ks))
    else:
        vals = [one(k) for k in ks]
    vals = np.array(vals)
    return ShuffleScan(values=vals, max=float(vals.max()), seed=int(seed))
