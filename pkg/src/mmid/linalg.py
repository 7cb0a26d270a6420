"""Dense linear algebra primitives used by the ID algorithms.

Matrices are plain 2-D ``float64`` numpy arrays addressed as ``A[row, col]``.
"""

from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NonFiniteInput, RankDeficient

# |R_kk| <= RANK_RTOL * |R_11| marks a dependent column.
RANK_RTOL = 1e-12


def as_matrix(A, name: str = "A") -> np.ndarray:
    """Validate ``A`` as a finite 2-D float64 array (copy only if needed)."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return A


def _householder(x: np.ndarray):
    """Reflector ``I - beta v v^T`` with ``v[0] = 1`` mapping x to alpha*e1."""
    sigma = np.linalg.norm(x)
    v = x.copy()
    if sigma == 0.0:
        v[:] = 0.0
        v[0] = 1.0
        return v, 0.0, 0.0
    alpha = -sigma if x[0] >= 0 else sigma
    v[0] = x[0] - alpha
    v /= v[0]
    beta = 2.0 / (v @ v)
    return v, beta, alpha


@dataclass(frozen=True)
class PivotedQR:
    q: np.ndarray  # M x k, orthonormal columns
    r: np.ndarray  # k x N, upper trapezoidal, columns in pivot order
    pivots: np.ndarray  # permutation of 0..N-1, selection order first
    rank: int  # number of Householder steps taken

    @property
    def diag(self) -> np.ndarray:
        return np.abs(np.diag(self.r))


def qr_column_pivoted(A, rank_cap: int | None = None) -> PivotedQR:
    """Householder QR with greedy max-norm column pivoting (Businger-Golub).

    Column norms of the trailing block are downdated after every step and
    recomputed when cancellation makes the downdate unreliable (the LAPACK
    xGEQP3 safeguard). With ``rank_cap`` the factorization stops after
    ``rank_cap`` steps; ``pivots[:rank_cap]`` are the selected columns.
    """
    A = as_matrix(A)
    m, n = A.shape
    kmax = min(m, n)
    if rank_cap is None:
        k = kmax
    else:
        if not 1 <= rank_cap <= kmax:
            raise ValueError(f"rank_cap must be in [1, {kmax}], got {rank_cap}")
        k = int(rank_cap)

    R = A.copy()
    perm = np.arange(n)
    norms = np.linalg.norm(R, axis=0)
    ref = norms.copy()
    tol3z = np.sqrt(np.finfo(float).eps)
    vs, betas = [], []

    for j in range(k):
        p = j + int(np.argmax(norms[j:]))
        if p != j:
            R[:, [j, p]] = R[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]
            norms[[j, p]] = norms[[p, j]]
            ref[[j, p]] = ref[[p, j]]

        v, beta, alpha = _householder(R[j:, j])
        if beta != 0.0 and j + 1 < n:
            trail = R[j:, j + 1:]
            trail -= beta * np.outer(v, v @ trail)
        R[j, j] = alpha
        R[j + 1:, j] = 0.0
        vs.append(v)
        betas.append(beta)

        if j + 1 < n:
            cols = slice(j + 1, n)
            nz = norms[cols] > 0
            ratio = np.zeros(n - j - 1)
            ratio[nz] = np.abs(R[j, cols][nz]) / norms[cols][nz]
            factor = np.maximum(0.0, 1.0 - ratio**2)
            with np.errstate(divide="ignore", invalid="ignore"):
                drift = factor * (norms[cols] / ref[cols]) ** 2
            stale = nz & (drift <= tol3z)
            new = norms[cols] * np.sqrt(factor)
            if np.any(stale):
                idx = np.flatnonzero(stale) + j + 1
                fresh = np.linalg.norm(R[j + 1:, idx], axis=0) if j + 1 < m else 0.0
                new[stale] = fresh
                ref[idx] = fresh
            norms[cols] = new

    Q = np.zeros((m, k))
    Q[:k, :k] = np.eye(k)
    for j in reversed(range(k)):
        v, beta = vs[j], betas[j]
        if beta != 0.0:
            Q[j:, j:] -= beta * np.outer(v, v @ Q[j:, j:])
    return PivotedQR(q=Q, r=np.triu(R[:k, :]), pivots=perm, rank=k)


def _householder_r(B: np.ndarray):
    """Unpivoted Householder QR of a tall matrix; returns reflectors and R."""
    m, r = B.shape
    W = B.copy()
    refl = []
    for j in range(r):
        v, beta, alpha = _householder(W[j:, j])
        if beta != 0.0 and j + 1 < r:
            W[j:, j + 1:] -= beta * np.outer(v, v @ W[j:, j + 1:])
        W[j, j] = alpha
        refl.append((v, beta))
    return refl, np.triu(W[:r, :])


def _apply_qt(refl, A: np.ndarray) -> np.ndarray:
    A = A.copy()
    for j, (v, beta) in enumerate(refl):
        if beta != 0.0:
            A[j:] -= beta * np.outer(v, v @ A[j:])
    return A


def column_rank(B, rtol: float = RANK_RTOL) -> int:
    """Numerical column rank from the pivoted-QR diagonal."""
    d = qr_column_pivoted(B).diag
    if d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d > rtol * d[0]))


def ridge_least_squares(B, A, lam: float) -> np.ndarray:
    """Solve ``min_C ||A - B C||_F^2 + lam ||C||_F^2`` for all columns at once.

    Uses Householder QR of the augmented matrix ``[B; sqrt(lam) I]``. With
    ``lam == 0`` the plain least-squares solution is returned and ``B`` must
    have full column rank.
    """
    B = as_matrix(B, "B")
    A = as_matrix(A, "A")
    m, r = B.shape
    if A.shape[0] != m:
        raise ValueError(f"row mismatch: B has {m} rows, A has {A.shape[0]}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam == 0:
        if r > m or column_rank(B) < r:
            raise RankDeficient("B is column rank deficient and lam == 0")
        Baug, Aaug = B, A
    else:
        Baug = np.vstack([B, np.sqrt(lam) * np.eye(r)])
        Aaug = np.vstack([A, np.zeros((r, A.shape[1]))])
    refl, R = _householder_r(Baug)
    rhs = _apply_qt(refl, Aaug)[:r]
    return solve_triangular(R, rhs, lower=False)


def _round_robin(n: int):
    """Tournament schedule: n-1 rounds of n/2 disjoint index pairs (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def singular_values(A, max_sweeps: int = 60) -> np.ndarray:
    """All singular values of ``A`` in non-increasing order.

    One-sided (Hestenes) Jacobi: plane rotations orthogonalize the columns of
    the tall orientation of ``A``, which diagonalizes the smaller Gram matrix
    without ever forming it. Disjoint column pairs of a round-robin schedule
    are rotated together.
    """
    A = as_matrix(A)
    U = A.T.copy() if A.shape[0] < A.shape[1] else A.copy()
    n = U.shape[1]
    if n == 1:
        return np.array([np.linalg.norm(U)])
    if n % 2:
        U = np.hstack([U, np.zeros((U.shape[0], 1))])
    tol = np.finfo(float).eps * U.shape[0]
    rounds = _round_robin(U.shape[1])

    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            Up, Uq = U[:, p], U[:, q]
            a = np.einsum("ij,ij->j", Up, Up)
            b = np.einsum("ij,ij->j", Uq, Uq)
            c = np.einsum("ij,ij->j", Up, Uq)
            hit = np.abs(c) > tol * np.sqrt(a * b)
            if not np.any(hit):
                continue
            rotated = True
            p, q = p[hit], q[hit]
            a, b, c = a[hit], b[hit], c[hit]
            # |zeta| may overflow for negligible c; t then rounds to 0 (no rotation)
            with np.errstate(over="ignore"):
                zeta = (b - a) / (2.0 * c)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            cs = 1.0 / np.sqrt(1.0 + t**2)
            sn = cs * t
            Up, Uq = U[:, p], U[:, q]
            U[:, p] = cs * Up - sn * Uq
            U[:, q] = sn * Up + cs * Uq
        if not rotated:
            break

    s = np.sort(np.linalg.norm(U, axis=0))[::-1]
    return s[:n]


def frobenius_norm(A) -> float:
    A = as_matrix(A)
    return float(np.sqrt(np.sum(A * A)))


def spectral_norm(A) -> float:
    return float(singular_values(A)[0])


def write_matrix_csv(path, A, label: str | None = None, sidecar: bool = True) -> Path:
    """Write ``A`` as CSV (one row per line, shortest round-trip floats).

    A ``.json`` descriptor ``{rows, cols, label}`` is written next to the CSV
    unless ``sidecar`` is false.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    path = Path(path)
    lines = [",".join(repr(float(x)) for x in row) for row in A]
    path.write_text("\n".join(lines) + "\n")
    if sidecar:
        meta = {"rows": int(A.shape[0]), "cols": int(A.shape[1]), "label": label}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_matrix_csv(path) -> np.ndarray:
    rows = [
        [float(x) for x in line.split(",")]
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
    return np.array(rows, dtype=np.float64)
