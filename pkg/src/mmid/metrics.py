"""Evaluation metrics, mixture-probability calculators and error-bound checks."""

from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidWeights, NoMatchingCluster, SingularOperator, SizeMismatch
from .idcore import deterministic_bifid_pipeline
from .linalg import as_matrix, frobenius_norm, singular_values
from .multimodal import SaConfig, label_ensemble, multimodal_id_sample, select_basis
from .rng import substream

EXACT_RANK_RTOL = 1e-10


def wasserstein1_flat(A, B) -> float:
    """Exact W1 between the flattened entries of two equal-size arrays."""
    a = np.sort(np.asarray(A, dtype=np.float64).ravel())
    b = np.sort(np.asarray(B, dtype=np.float64).ravel())
    if a.size != b.size:
        raise SizeMismatch(f"element counts differ: {a.size} vs {b.size}")
    return float(np.mean(np.abs(a - b)))


@dataclass
class W1Report:
    """Per-trial W1 distances; NaN marks a trial that raised NoMatchingCluster."""

    method: str
    distances: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.distances)

    @property
    def failures(self) -> int:
        return int(np.sum(np.isnan(self.distances)))

    @property
    def summary(self) -> dict:
        d = self.distances[~np.isnan(self.distances)]
        if d.size == 0:
            return {k: math.nan for k in ("mean", "median", "min", "max")}
        return {
            "mean": float(np.mean(d)),
            "median": float(np.median(d)),
            "min": float(np.min(d)),
            "max": float(np.max(d)),
        }

    def to_dict(self) -> dict:
        return {"method": self.method, "trials": self.trials, "failures": self.failures,
                "summary": self.summary, "distances": [float(x) for x in self.distances]}

    def write_csv(self, directory) -> Path:
        path = Path(directory) / f"w1_{self.method}.csv"
        path.write_text("".join(f"{float(x)!r}\n" for x in self.distances))
        return path


def _baseline_trial(ds, r, seed, t):
    L, _ = ds.sample_lf_matrix(substream(seed, "baseline-lf", t))
    res = deterministic_bifid_pipeline(
        L, ds.hf_sampler, r, rng=substream(seed, "baseline-hf", t), rank_deficient="lstsq"
    )
    return res.H_hat


def w1_benchmark(
    ds,
    method: str,
    r: int,
    trials: int = 50,
    seed: int = 0,
    *,
    lam: float = 1.0,
    basis_method: str = "sa",
    sa: Optional[SaConfig] = None,
    basis=None,
) -> W1Report:
    """W1 distance between fresh high-fidelity realizations and fresh predictions.

    Trial t draws the true matrix from stream ``("truth", t)``, so two
    methods run with the same seed are paired trial by trial. The baseline
    factors one fresh low-fidelity matrix per trial; the multi-modal method
    selects its basis once from the dataset's ensemble and then draws fresh
    ``H_r`` and one resampled prediction per trial. A multi-modal trial whose
    high-fidelity basis realizes a mode absent from the ensemble at that
    column is recorded as NaN.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if method == "multimodal":
        if basis is None:
            basis = select_basis(ds.lf_ensemble, r, basis_method, sa, seed)
        lf_labels = label_ensemble(ds.lf_ensemble, ds.lf_classifier)
    elif method != "baseline":
        raise ValueError(f"unknown method {method!r}")

    out = []
    for t in range(trials):
        H, _ = ds.sample_hf_matrix(substream(seed, "truth", t))
        if method == "baseline":
            H_hat = _baseline_trial(ds, r, seed, t)
        else:
            try:
                pred = multimodal_id_sample(
                    ds.lf_ensemble, ds.hf_sampler, ds.hf_classifier, r, lam=lam, S=1,
                    basis=basis, lf_labels=lf_labels,
                    seed=int(substream(seed, "mm", t).integers(2**63)),
                )
            except NoMatchingCluster:
                out.append(math.nan)
                continue
            H_hat = pred.predictions[0]
        out.append(wasserstein1_flat(H, H_hat))
    return W1Report(method, np.array(out))


def mismatch_probability_bounds(weights, r: int) -> tuple[float, float]:
    """Band ``[1 - max(pi)^r, 1 - min(pi)^r]`` for the basis-mismatch probability."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1 or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
        raise InvalidWeights(f"weights must be a probability vector, got {w}")
    if r < 1:
        raise ValueError("r must be positive")
    return 1.0 - float(w.max()) ** r, 1.0 - float(w.min()) ** r


def simulate_mismatch_probability(weights, r: int, draws: int, rng: np.random.Generator) -> float:
    """Monte Carlo frequency that at least one of r basis columns draws
    different modes in the two fidelities (independent draws, constant weights)."""
    w = np.asarray(weights, dtype=np.float64)
    lf = rng.choice(w.size, size=(draws, r), p=w)
    hf = rng.choice(w.size, size=(draws, r), p=w)
    return float(np.mean(np.any(lf != hf, axis=1)))


def nested_binomial_variance(pi: float, n_samples: int, S: int) -> float:
    """Variance of the predicted mode frequency: pi(1-pi)(N_S+S-1)/(N_S S)."""
    if not 0 <= pi <= 1 or n_samples < 1 or S < 1:
        raise ValueError("need pi in [0, 1] and positive sample counts")
    return pi * (1.0 - pi) * (n_samples + S - 1) / (n_samples * S)


def simulate_nested_binomial(pi: float, n_samples: int, S: int, reps: int, rng) -> np.ndarray:
    """Draws of the mode-frequency estimate: Binomial(S, Binomial(N_S, pi)/N_S)/S."""
    p1 = rng.binomial(n_samples, pi, size=reps) / n_samples
    return rng.binomial(S, p1) / S


@dataclass
class BoundsReport:
    lower: float
    actual: float
    upper: float
    refined_upper: float
    exactness_flag: bool
    extras: dict = field(default_factory=dict)

    def sandwich_holds(self, rtol: float = 1e-10, atol: float = 0.0) -> bool:
        """lower <= actual <= refined_upper, up to rounding.

        ``atol`` absorbs round-off when the errors themselves are at machine
        precision (exactly reconstructible data); pass e.g. ``1e-12 ||H||_F``.
        """
        slack = rtol * max(self.actual, self.lower, 1e-300) + atol
        return bool(self.lower <= self.actual + slack and self.actual <= self.refined_upper + slack)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exactness_flag"] = bool(self.exactness_flag)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def verify_linear_operator_exactness(T, H, r: int) -> BoundsReport:
    """Run the baseline pipeline on ``L = T H`` and measure ``||H_hat - H||_F``.

    ``exactness_flag`` reports whether the low-fidelity skeleton has full
    numerical column rank (sigma_r > 1e-10 sigma_1), the condition under
    which the high-fidelity reconstruction is exact for rank-r ``H``.
    """
    T = as_matrix(T, "T")
    H = as_matrix(H, "H")
    L = T @ H
    res = deterministic_bifid_pipeline(L, lambda j, rng: H[:, j], r, rank_deficient="lstsq")
    s_r = singular_values(L[:, res.factorization.basis_indices])
    flag = bool(s_r[0] > 0 and s_r[-1] > EXACT_RANK_RTOL * s_r[0])
    err = frobenius_norm(res.H_hat - H)
    s = singular_values(T)
    L_hat = L[:, res.factorization.basis_indices] @ res.factorization.coefficients
    lf_err = frobenius_norm(L_hat - L)
    invertible = s[-1] > EXACT_RANK_RTOL * s[0]
    upper = lf_err / s[-1] if invertible else math.inf
    sig = singular_values(L)
    n = L.shape[1]
    tail = sig[r] if r < sig.size else 0.0
    refined = math.sqrt(r * (n - r) + 1) * tail / s[-1] if invertible else math.inf
    return BoundsReport(
        lower=lf_err / s[0] if s[0] > 0 else 0.0,
        actual=err,
        upper=upper,
        refined_upper=refined,
        exactness_flag=flag,
        extras={"relative_error": err / frobenius_norm(H), "basis": [int(j) for j in res.factorization.basis_indices]},
    )


def bifidelity_error_bounds(T, L, L_hat, H, H_hat, r: int) -> BoundsReport:
    """Lower and upper bounds on the high-fidelity error from the low-fidelity one.

    ``lower = ||L_hat - L|| / ||T||_2``, ``upper = ||T^-1||_2 ||L_hat - L||``
    and ``refined_upper = ||T^-1||_2 sqrt(r(N-r)+1) sigma_{r+1}(L)``.
    """
    T = as_matrix(T, "T")
    s = singular_values(T)
    if s[-1] <= EXACT_RANK_RTOL * s[0]:
        raise SingularOperator("T is numerically singular")
    L = as_matrix(L, "L")
    lf_err = frobenius_norm(np.asarray(L_hat) - L)
    inv_norm = 1.0 / s[-1]
    sig = singular_values(L)
    n = L.shape[1]
    tail = sig[r] if r < sig.size else 0.0
    return BoundsReport(
        lower=lf_err / s[0],
        actual=frobenius_norm(np.asarray(H_hat) - np.asarray(H)),
        upper=inv_norm * lf_err,
        refined_upper=inv_norm * math.sqrt(r * (n - r) + 1) * tail,
        exactness_flag=bool(tail <= EXACT_RANK_RTOL * sig[0]),
    )
