"""Deterministic interpolative decomposition and the baseline bi-fidelity pipeline."""

from dataclasses import dataclass, field
import json
from pathlib import Path
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import DimensionMismatch, RankDeficient, SamplerFailure
from .linalg import (
    RANK_RTOL,
    as_matrix,
    frobenius_norm,
    qr_column_pivoted,
    ridge_least_squares,
    write_matrix_csv,
)


class HighFidelitySampler(Protocol):
    """Returns the high-fidelity column for parametric input index ``j``.

    Stochastic samplers draw from ``rng``; deterministic ones ignore it.
    """

    def __call__(self, j: int, rng: Optional[np.random.Generator]) -> np.ndarray: ...


@dataclass
class IdFactorization:
    basis_indices: np.ndarray  # selection (pivot) order
    coefficients: np.ndarray  # r x N
    residual_fro: float
    target_tol: Optional[float] = None

    @property
    def rank(self) -> int:
        return len(self.basis_indices)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "basis_indices": [int(j) for j in self.basis_indices],
            "residual_fro": float(self.residual_fro),
            "target_tol": self.target_tol,
        }

    def save(self, directory, stem: str = "factorization") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        write_matrix_csv(directory / f"{stem}_C.csv", self.coefficients, label="C", sidecar=False)


def basis_coefficients(L, basis, lam: float = 0.0, rank_deficient: str = "raise") -> np.ndarray:
    """Interpolation matrix ``C`` with ``L ~ L(:, basis) C``.

    For ``lam == 0`` this is the ID coefficient matrix ``[I | R11^-1 R12] P^T``:
    ``R11`` and ``R12`` come from Householder QR of ``L(:, basis)`` applied to
    the remaining columns, and the basis columns are set to the identity.
    For ``lam > 0`` every column is the ridge solution.

    ``rank_deficient="lstsq"`` replaces the error for a singular ``R11`` with
    a minimum-norm fit of the non-basis columns.
    """
    L = as_matrix(L, "L")
    basis = np.asarray(basis, dtype=int)
    B = L[:, basis]
    r = len(basis)
    if lam == 0 and rank_deficient == "lstsq":
        try:
            C = ridge_least_squares(B, L, 0.0)
        except RankDeficient:
            C = np.linalg.lstsq(B, L, rcond=RANK_RTOL)[0]
    elif rank_deficient in ("raise", "lstsq"):
        C = ridge_least_squares(B, L, lam)
    else:
        raise ValueError(f"unknown rank_deficient mode {rank_deficient!r}")
    if lam == 0:
        C[:, basis] = np.eye(r)
    return C


def interpolative_decomposition(
    L,
    rank: Optional[int] = None,
    *,
    tol: Optional[float] = None,
    rank_deficient: str = "raise",
) -> IdFactorization:
    """Column ID of ``L`` from one column-pivoted QR.

    Give either ``rank`` (fixed r) or ``tol``; with ``tol`` the smallest r
    with ``||L - L_r C||_F <= tol * ||L||_F`` is returned. The pivot order
    of the single full factorization is reused for every trial rank.
    """
    L = as_matrix(L, "L")
    if (rank is None) == (tol is None):
        raise ValueError("give exactly one of rank or tol")
    m, n = L.shape
    kmax = min(m, n)
    qr = qr_column_pivoted(L)
    d = qr.diag
    norm_l = frobenius_norm(L)

    if rank is not None:
        if not 1 <= rank <= kmax:
            raise ValueError(f"rank must be in [1, {kmax}], got {rank}")
        candidates = [int(rank)]
    else:
        if tol <= 0:
            raise ValueError("tol must be positive")
        # R is upper trapezoidal, so ||R22||_F at split k is the norm of rows k..
        row_sq = np.sum(qr.r**2, axis=1)
        tail = np.sqrt(np.append(np.cumsum(row_sq[::-1])[::-1][1:], 0.0))
        ok = np.flatnonzero(tail <= tol * norm_l)
        first = int(ok[0]) + 1 if ok.size else kmax
        candidates = list(range(first, kmax + 1))

    for r in candidates:
        if rank_deficient == "raise" and (d[0] == 0.0 or d[r - 1] <= RANK_RTOL * d[0]):
            raise RankDeficient(f"R11 is numerically singular at rank {r}")
        basis = qr.pivots[:r].copy()
        C = basis_coefficients(L, basis, 0.0, rank_deficient=rank_deficient)
        resid = frobenius_norm(L - L[:, basis] @ C)
        if tol is None or resid <= tol * norm_l or r == kmax:
            return IdFactorization(basis, C, resid, target_tol=tol)
    raise AssertionError("unreachable")


def reconstruct(L, f: IdFactorization) -> np.ndarray:
    L = as_matrix(L, "L")
    if f.coefficients.shape != (f.rank, L.shape[1]) or np.max(f.basis_indices) >= L.shape[1]:
        raise DimensionMismatch("factorization does not match L")
    return L[:, f.basis_indices] @ f.coefficients


def bifidelity_reconstruct(H_r, C) -> np.ndarray:
    """High-fidelity estimate ``H_r C``."""
    H_r = np.asarray(H_r, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if H_r.ndim != 2 or C.ndim != 2 or H_r.shape[1] != C.shape[0]:
        raise DimensionMismatch(f"H_r {H_r.shape} and C {C.shape} are not conformable")
    return H_r @ C


def sample_basis_columns(hf: Callable, basis, rngs=None) -> np.ndarray:
    """Query the high-fidelity sampler once per basis index, one stream each.

    Each call gets its own generator so calls are order independent.
    """
    cols = []
    for pos, j in enumerate(basis):
        g = None if rngs is None else rngs[pos]
        v = np.asarray(hf(int(j), g), dtype=np.float64).ravel()
        if cols and v.shape != cols[0].shape:
            raise SamplerFailure(
                f"sampler returned length {v.size} at column {j}, expected {cols[0].size}"
            )
        if not np.all(np.isfinite(v)):
            raise SamplerFailure(f"sampler returned non-finite values at column {j}")
        cols.append(v)
    return np.column_stack(cols)


@dataclass
class BifidResult:
    H_hat: np.ndarray
    factorization: IdFactorization
    H_r: np.ndarray
    extras: dict = field(default_factory=dict)


def deterministic_bifid_pipeline(
    L,
    hf: Callable,
    rank: Optional[int] = None,
    *,
    tol: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    rank_deficient: str = "raise",
) -> BifidResult:
    """Baseline bi-fidelity ID: factor L, run the high-fidelity model at the
    r basis inputs, and return ``H_hat = H_r C_L``."""
    f = interpolative_decomposition(L, rank, tol=tol, rank_deficient=rank_deficient)
    rngs = None if rng is None else rng.spawn(f.rank)
    H_r = sample_basis_columns(hf, f.basis_indices, rngs)
    return BifidResult(bifidelity_reconstruct(H_r, f.coefficients), f, H_r)
