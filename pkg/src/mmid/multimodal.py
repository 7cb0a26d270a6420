"""Multi-modal interpolative decomposition for stochastic, cluster-structured data.

The low-fidelity model is sampled ``N_S`` times at every parametric input,
giving an ensemble of data matrices whose columns are independent across
inputs. Prediction proceeds in four steps:

1. choose one basis index set for the whole ensemble (simulated annealing on
   a bootstrapped sample-average cost, or pivoted QR of the stacked samples);
2. run the high-fidelity model once at each basis input;
3. label the cluster (mode) of every high-fidelity basis column;
4. repeatedly resample a low-fidelity matrix whose basis columns carry the
   same labels as the high-fidelity basis, fit ridge interpolation weights to
   it, and map them onto the high-fidelity basis.
"""

from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import (
    BasisColumnRequested,
    ClassifierFailure,
    InvalidConfig,
    NoMatchingCluster,
)
from .idcore import basis_coefficients, sample_basis_columns
from .linalg import qr_column_pivoted, write_matrix_csv
from .rng import substream


@dataclass(frozen=True)
class MatrixEnsemble:
    """``N_S`` realizations of an ``M x N`` matrix, stored as ``(N_S, M, N)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = s[None]
        if s.ndim != 3 or s.shape[0] < 1:
            raise ValueError(f"expected (N_S, M, N) samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("ensemble contains non-finite entries")
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_list(cls, mats) -> "MatrixEnsemble":
        mats = [np.asarray(m, dtype=np.float64) for m in mats]
        if len({m.shape for m in mats}) != 1:
            raise ValueError("all ensemble members must share dimensions")
        return cls(np.stack(mats))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape[1:]

    def stacked(self) -> np.ndarray:
        """Vertical stack ``[L1; L2; ...]`` of shape ``(N_S*M, N)``."""
        ns, m, n = self.samples.shape
        return self.samples.reshape(ns * m, n)

    def columns(self, sample_idx) -> np.ndarray:
        """Matrix whose column j is column j of ``samples[sample_idx[j]]``."""
        n = self.samples.shape[2]
        return self.samples[np.asarray(sample_idx), :, np.arange(n)].T


@dataclass
class SaConfig:
    n_iter: Optional[int] = None  # None: 20 * N
    n_restart: int = 5
    n_bootstrap: int = 8
    t_initial: Optional[float] = None  # None: 0.1 * cost of the initial subset
    cooling: Optional[float] = None  # None: reach 1e-3 * t_initial at n_iter
    seed: int = 0

    def validate(self) -> None:
        if self.n_iter is not None and self.n_iter < 1:
            raise InvalidConfig("n_iter must be positive")
        if self.n_restart < 1 or self.n_bootstrap < 1:
            raise InvalidConfig("n_restart and n_bootstrap must be positive")
        if self.t_initial is not None and not self.t_initial > 0:
            raise InvalidConfig("t_initial must be positive")
        if self.cooling is not None and not 0 < self.cooling < 1:
            raise InvalidConfig("cooling must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class ThresholdClassifier:
    """Two-mode classifier: a scalar feature of the column against a threshold.

    Features at or below the threshold map to mode 1, above it to mode 2.
    """

    K = 2

    def __init__(self, feature: Callable[[np.ndarray], float], threshold: float, name: str = ""):
        self.feature = feature
        self.threshold = float(threshold)
        self.name = name

    def __call__(self, column) -> int:
        v = float(self.feature(np.asarray(column, dtype=np.float64)))
        if not math.isfinite(v):
            raise ClassifierFailure(f"feature {self.name!r} is not finite")
        return 1 if v <= self.threshold else 2

    def params(self) -> dict:
        return {"feature": self.name, "threshold": self.threshold, "K": self.K}


class ConstantClassifier:
    """Single-cluster classifier (K = 1)."""

    K = 1

    def __call__(self, column) -> int:
        return 1

    def params(self) -> dict:
        return {"feature": "constant", "K": 1}


def classify_columns(matrix, clf) -> np.ndarray:
    matrix = np.asarray(matrix)
    return np.array([clf(matrix[:, j]) for j in range(matrix.shape[1])], dtype=int)


def label_ensemble(ens: MatrixEnsemble, clf) -> np.ndarray:
    """Cluster label of every (sample, column) pair, shape ``(N_S, N)``."""
    return np.stack([classify_columns(s, clf) for s in ens.samples])


def classify_hf_basis(H_r, clf) -> np.ndarray:
    return classify_columns(H_r, clf)


def basis_select_vertstack(ens: MatrixEnsemble, r: int) -> np.ndarray:
    """First r pivots of a rank-r pivoted QR of the vertically stacked samples."""
    n = ens.shape[1]
    if not 1 <= r <= n:
        raise InvalidConfig(f"rank {r} must lie in [1, {n}]")
    return qr_column_pivoted(ens.stacked(), rank_cap=r).pivots[:r].copy()


def bootstrap_sample(ens: MatrixEnsemble, rng: np.random.Generator) -> np.ndarray:
    """Synthetic sample built from independently chosen ensemble columns."""
    ns, _, n = ens.samples.shape
    return ens.columns(rng.integers(ns, size=n))


def saa_cost(basis, bootstraps) -> float:
    """Mean squared Frobenius residual of projecting each matrix onto its basis columns.

    Rank-deficient basis blocks fall back to the minimum-norm least-squares
    fit, which has the same residual as projecting onto their column span.
    """
    basis = np.asarray(basis, dtype=int)
    Ls = np.asarray(bootstraps, dtype=np.float64)
    if Ls.ndim == 2:
        Ls = Ls[None]
    if len(set(basis.tolist())) != len(basis):
        raise ValueError("basis indices must be distinct")
    B = Ls[:, :, basis]
    Q, R = np.linalg.qr(B)
    d = np.abs(np.diagonal(R, axis1=1, axis2=2))
    bad = np.any(d <= 1e-12 * np.max(d, axis=1, keepdims=True), axis=1) | (np.max(d, axis=1) == 0)
    resid = Ls - Q @ (np.swapaxes(Q, 1, 2) @ Ls)
    cost = np.sum(resid**2, axis=(1, 2))
    for i in np.flatnonzero(bad):
        C = np.linalg.lstsq(B[i], Ls[i], rcond=1e-12)[0]
        cost[i] = np.sum((Ls[i] - B[i] @ C) ** 2)
    return float(np.mean(cost))


class GramCost:
    """Fast ``saa_cost`` for a fixed stack of matrices.

    Each matrix's Gram ``L^T L`` is formed once; a subset's projected energy
    then needs only an eigendecomposition of its ``r x r`` Gram block.
    Eigenvalues below ``1e-12`` of the largest count as dependent
    directions, matching the minimum-norm fit. Rounding error grows like
    ``eps * cond(L(:, J))**2``, which is harmless for search but is why final
    comparisons use ``saa_cost``.
    """

    def __init__(self, mats):
        Ls = np.asarray(mats, dtype=np.float64)
        if Ls.ndim == 2:
            Ls = Ls[None]
        self.G = np.swapaxes(Ls, 1, 2) @ Ls
        self.total = np.einsum("kii->k", self.G)

    def __call__(self, basis) -> float:
        basis = np.asarray(basis, dtype=int)
        GJ = self.G[:, basis, :]
        w, V = np.linalg.eigh(GJ[:, :, basis])
        top = w[:, -1:]
        keep = w > 1e-12 * np.where(top > 0, top, np.inf)
        inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
        W = np.swapaxes(V, 1, 2) @ GJ
        proj = np.einsum("kr,krn->k", inv, W * W)
        return float(np.mean(np.maximum(self.total - proj, 0.0)))


def anneal(
    cost: Callable[[np.ndarray], float],
    n: int,
    r: int,
    n_iter: int,
    rng: np.random.Generator,
    t_initial: Optional[float] = None,
    cooling: Optional[float] = None,
):
    """One simulated-annealing run over r-subsets of ``range(n)``.

    Moves swap one member for one non-member, both uniform. Returns the best
    subset seen (in its current order) and its cost.
    """
    current = rng.choice(n, size=r, replace=False)
    c_cur = cost(current)
    best, c_best = current.copy(), c_cur
    temp = 0.1 * c_cur if t_initial is None else t_initial
    if cooling is None:
        cooling = 1e-3 ** (1.0 / n_iter)
    in_set = np.zeros(n, dtype=bool)
    in_set[current] = True

    for _ in range(n_iter):
        pos = rng.integers(r)
        outside = np.flatnonzero(~in_set)
        new = outside[rng.integers(outside.size)]
        proposal = current.copy()
        proposal[pos] = new
        c_new = cost(proposal)
        delta = c_new - c_cur
        if delta < 0 or (temp > 0 and rng.random() < math.exp(-delta / temp)):
            in_set[current[pos]] = False
            in_set[new] = True
            current, c_cur = proposal, c_new
            if c_cur < c_best:
                best, c_best = current.copy(), c_cur
        temp *= cooling
    return best, c_best


def basis_select_sa(
    ens: MatrixEnsemble,
    r: int,
    cfg: Optional[SaConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Basis subset minimizing the bootstrapped sample-average residual.

    Each restart draws its own ``n_bootstrap`` synthetic samples and keeps
    them fixed while annealing. Restart winners are compared on the
    original ensemble samples.
    """
    cfg = cfg or SaConfig()
    cfg.validate()
    n = ens.shape[1]
    if not 1 <= r < n:
        raise InvalidConfig(f"rank {r} must satisfy 1 <= r < N = {n}")
    n_iter = cfg.n_iter or 20 * n

    best, best_cost = None, math.inf
    for k in range(cfg.n_restart):
        g = substream(cfg.seed, "sa-restart", k) if rng is None else rng.spawn(1)[0]
        boots = np.stack([bootstrap_sample(ens, g) for _ in range(cfg.n_bootstrap)])
        J, _ = anneal(GramCost(boots), n, r, n_iter, g, cfg.t_initial, cfg.cooling)
        c = saa_cost(J, ens.samples)
        if c < best_cost:
            best, best_cost = J, c
    return best


def resample_lf(
    basis,
    ens: MatrixEnsemble,
    lf_labels,
    hf_basis_labels,
    rng: np.random.Generator,
    return_indices: bool = False,
):
    """Low-fidelity matrix whose basis columns share the high-fidelity labels.

    Non-basis columns come from a uniformly chosen ensemble member; basis
    column j comes from a member chosen uniformly among those whose label at
    j equals the high-fidelity basis label.
    """
    basis = np.asarray(basis, dtype=int)
    lf_labels = np.asarray(lf_labels)
    ns, _, n = ens.samples.shape
    if len(hf_basis_labels) != len(basis):
        raise ValueError("need one high-fidelity label per basis column")
    idx = rng.integers(ns, size=n)
    for j, lab in zip(basis, hf_basis_labels):
        match = np.flatnonzero(lf_labels[:, j] == lab)
        if match.size == 0:
            raise NoMatchingCluster(int(j), int(lab))
        idx[j] = match[rng.integers(match.size)]
    L = ens.columns(idx)
    return (L, idx) if return_indices else L


def default_scale(ens: MatrixEnsemble, target: float = 10.0) -> float:
    """Uniform factor bringing the ensemble to magnitude ``target``."""
    a = np.abs(ens.samples)
    nz = a[a > 0]
    return 1.0 if nz.size == 0 else target / float(np.median(nz))


@dataclass
class PredictionEnsemble:
    predictions: np.ndarray  # (S, M_H, N)
    basis_indices: np.ndarray
    hf_basis_labels: np.ndarray
    H_r: Optional[np.ndarray] = None
    lf_sample_indices: Optional[np.ndarray] = None  # (S, N) member used per column
    lam: float = 1.0
    seed: int = 0
    basis_method: str = "sa"
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def S(self) -> int:
        return self.predictions.shape[0]

    def meta_dict(self) -> dict:
        return {
            "S": self.S,
            "basis_indices": [int(j) for j in self.basis_indices],
            "hf_basis_labels": [int(c) for c in self.hf_basis_labels],
            "lambda": self.lam,
            "seed": self.seed,
            "basis_method": self.basis_method,
            "scale": self.scale,
            **self.meta,
        }

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, P in enumerate(self.predictions):
            write_matrix_csv(directory / f"pred_{i:04d}.csv", P, sidecar=False)
        (directory / "meta.json").write_text(json.dumps(self.meta_dict(), indent=2) + "\n")
        return directory


def select_basis(ens, r, basis_method="sa", cfg=None, seed=0) -> np.ndarray:
    if basis_method == "sa":
        cfg = cfg or SaConfig(seed=seed)
        return basis_select_sa(ens, r, cfg)
    if basis_method == "vertstack":
        return basis_select_vertstack(ens, r)
    raise InvalidConfig(f"unknown basis method {basis_method!r}")


def multimodal_id_sample(
    ens: MatrixEnsemble,
    hf: Callable,
    clf,
    r: int,
    lam: float = 1.0,
    S: int = 100,
    basis_method: str = "sa",
    cfg: Optional[SaConfig] = None,
    seed: int = 0,
    *,
    lf_clf=None,
    lf_labels=None,
    basis=None,
    scale="auto",
) -> PredictionEnsemble:
    """Draw S high-fidelity matrix predictions with mode-matched basis columns.

    ``clf`` labels high-fidelity columns and ``lf_clf`` (default ``clf``)
    labels the low-fidelity ensemble. A precomputed ``basis`` skips
    selection. ``scale="auto"`` rescales the low-fidelity data to magnitude
    10 before the ridge fit; it is skipped for ``lam == 0`` where it has no
    effect. The high-fidelity model is queried exactly ``r`` times.
    """
    if S < 1:
        raise InvalidConfig("S must be positive")
    if lam < 0:
        raise InvalidConfig("lambda must be nonnegative")
    if basis is None:
        basis = select_basis(ens, r, basis_method, cfg, seed)
    basis = np.asarray(basis, dtype=int)

    rngs = [substream(seed, "hf-basis", pos) for pos in range(len(basis))]
    H_r = sample_basis_columns(hf, basis, rngs)
    hf_labels = classify_hf_basis(H_r, clf)
    if lf_labels is None:
        lf_labels = label_ensemble(ens, lf_clf if lf_clf is not None else clf)

    if lam == 0 or scale is None:
        factor = 1.0
    elif scale == "auto":
        factor = default_scale(ens)
    else:
        factor = float(scale)

    preds, picks = [], []
    for i in range(S):
        L, idx = resample_lf(basis, ens, lf_labels, hf_labels, substream(seed, "resample", i), True)
        if factor != 1.0:
            L = factor * L
        C = basis_coefficients(L, basis, lam)
        preds.append(H_r @ C)
        picks.append(idx)

    return PredictionEnsemble(
        predictions=np.stack(preds),
        basis_indices=basis,
        hf_basis_labels=hf_labels,
        H_r=H_r,
        lf_sample_indices=np.stack(picks),
        lam=lam,
        seed=seed,
        basis_method=basis_method,
        scale=factor,
    )


def estimate_mixture_probability(pred: PredictionEnsemble, clf, j: int, k: int) -> float:
    """Fraction of predictions whose column j falls in mode k."""
    if j in set(int(b) for b in pred.basis_indices):
        raise BasisColumnRequested(f"column {j} is a basis column")
    labels = [clf(P[:, j]) for P in pred.predictions]
    return float(np.mean(np.asarray(labels) == k))
