"""Synthetic bi-fidelity problems with stochastic, two-mode outputs.

Each generator returns a ``ProblemDataset``. Inside a problem every column's
output is a deterministic function of its parametric input ``xi_j`` and a
discrete mode ``omega``, so both branch outputs are computed once per column
and a realization is drawn by sampling ``omega`` per column.

Mode labels are 1-based: ``omega = 0`` is label 1 and ``omega = 1`` label 2.
"""

from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from .multimodal import MatrixEnsemble, ThresholdClassifier
from .ode import OdeProblem, integrate_rk23, integrate_rk45, sample_on_grid
from .rng import substream


def gaussian_convolution_operator(grid, sigma: float) -> np.ndarray:
    """Row-normalized Gaussian kernel matrix on ``grid``."""
    x = np.asarray(grid, dtype=np.float64)
    if x.ndim != 1 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d = x[:, None] - x[None, :]
    W = np.exp(-(d**2) / (2.0 * sigma**2))
    return W / W.sum(axis=1, keepdims=True)


def quadratic_bimodal_column(xi: float, omega: int, grid=None) -> np.ndarray:
    """``(x - xi)^2`` for ``omega == 0``, ``(x + xi)^2`` otherwise."""
    x = np.linspace(0.0, 1.0, 100) if grid is None else np.asarray(grid, dtype=np.float64)
    return (x - xi) ** 2 if omega == 0 else (x + xi) ** 2


def lotka_volterra_mixture_weight(xi) -> np.ndarray:
    """Probability of the low-carrying-capacity branch at ``xi`` in [0,1]^2.

    Logistic transform of the hyperplane ``n . xi - m`` with
    ``n = [10, 10] / sqrt(2)`` and ``m = 5 sqrt(2) - 0.5``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    n = np.array([10.0, 10.0]) / math.sqrt(2.0)
    m = 5.0 * math.sqrt(2.0) - 0.5
    z = xi @ n - m
    return 0.5 * (1.0 - np.tanh(0.5 * z))  # = 1 / (1 + exp(z)) without overflow


def lotka_volterra_params(xi, omega: int) -> tuple[float, float, float, float]:
    """(alpha, K, beta, gamma) of branch ``omega`` at input ``xi``."""
    s = float(xi[0] + xi[1])
    if omega == 0:
        return 0.5, 5.0, 2.0 + 0.5 * s, 1.0
    return 0.5, 10.0, 0.25 * s, 1.0


def lotka_volterra_rhs(alpha, K, beta, gamma):
    def rhs(t, z):
        x, y = z
        return np.array([alpha * x * (1.0 - x / K) - beta * x * y, beta * x * y - gamma * y])

    return rhs


def pitchfork_rhs(xi):
    return lambda t, x: xi * x - x**3


@dataclass
class ProblemDataset:
    name: str
    grid: np.ndarray  # (M,)
    xi: np.ndarray  # (N, d)
    mode_weights: np.ndarray  # (K, N), P(label k+1) per column
    hf_branches: np.ndarray  # (K, M, N)
    lf_branches: np.ndarray  # (K, M, N)
    lf_ensemble: MatrixEnsemble
    truth_labels: np.ndarray  # (N_S, N), labels of the ensemble columns
    hf_classifier: ThresholdClassifier
    lf_classifier: ThresholdClassifier
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.xi.shape[0]

    @property
    def M(self) -> int:
        return self.grid.size

    @property
    def n_samples(self) -> int:
        return self.lf_ensemble.n_samples

    @property
    def classifier(self) -> ThresholdClassifier:
        return self.hf_classifier

    def draw_labels(self, rng: np.random.Generator, n_draws: Optional[int] = None) -> np.ndarray:
        """Independent mode labels per column, shape ``(N,)`` or ``(n_draws, N)``."""
        return draw_mode_labels(self.mode_weights, rng, n_draws)

    def sample_hf_matrix(self, rng: np.random.Generator):
        labels = self.draw_labels(rng)
        return realize(self.hf_branches, labels), labels

    def sample_lf_matrix(self, rng: np.random.Generator):
        labels = self.draw_labels(rng)
        return realize(self.lf_branches, labels), labels

    def sample_hf_column(self, j: int, rng: np.random.Generator) -> np.ndarray:
        w = self.mode_weights[:, j]
        k = int(np.searchsorted(np.cumsum(w)[:-1], rng.random(), side="right"))
        return self.hf_branches[k, :, j].copy()

    @property
    def hf_sampler(self):
        """High-fidelity sampler: fresh mode draw on every call."""
        return self.sample_hf_column

    def manifest(self) -> dict:
        return {
            "problem": self.name,
            "N": self.N,
            "M": self.M,
            "N_S": self.n_samples,
            "seed": self.seed,
            "grid": [float(x) for x in self.grid],
            "classifier_params": {
                "hf": self.hf_classifier.params(),
                "lf": self.lf_classifier.params(),
            },
            **self.params,
        }


def draw_mode_labels(weights, rng: np.random.Generator, n_draws: Optional[int] = None) -> np.ndarray:
    """Categorical draw per column from ``weights`` of shape ``(K, N)``."""
    n = weights.shape[1]
    u = rng.random((n,) if n_draws is None else (n_draws, n))
    cum = np.cumsum(weights, axis=0)[:-1]
    return 1 + np.sum(u[..., None, :] >= cum, axis=-2)


def realize(branches, labels) -> np.ndarray:
    """Matrix whose column j is ``branches[labels[j] - 1, :, j]``."""
    return branches[np.asarray(labels) - 1, :, np.arange(branches.shape[2])].T


def _finish(name, grid, xi, weights, hf_b, lf_b, n_samples, hf_clf, lf_clf, seed, params):
    labels = draw_mode_labels(weights, substream(seed, "lf-ensemble"), n_samples)
    return ProblemDataset(
        name=name,
        grid=grid,
        xi=xi,
        mode_weights=weights,
        hf_branches=hf_b,
        lf_branches=lf_b,
        lf_ensemble=MatrixEnsemble(np.stack([realize(lf_b, lab) for lab in labels])),
        truth_labels=labels,
        hf_classifier=hf_clf,
        lf_classifier=lf_clf,
        seed=seed,
        params=params,
    )


def endpoint_rise(v: np.ndarray) -> float:
    return float(v[-1] - v[0])


def terminal_value(v: np.ndarray) -> float:
    return float(v[-1])


def time_mean(v: np.ndarray) -> float:
    return float(np.mean(v))


def make_quadratic_dataset(N=100, M=100, N_S=10, sigma=0.5, seed=0) -> ProblemDataset:
    """Quadratic two-branch toy; low fidelity is Gaussian smoothing of the output.

    The classifier feature is ``v(x_end) - v(x_0)``: for the high fidelity
    it equals ``1 - 2 xi`` or ``1 + 2 xi``. The threshold is the feature of
    the ``xi = 0`` column where both branches coincide, evaluated per
    fidelity.
    """
    grid = np.linspace(0.0, 1.0, M)
    xi = substream(seed, "xi").uniform(0.0, 1.0, size=N)
    T = gaussian_convolution_operator(grid, sigma)
    hf_b = np.stack([
        np.column_stack([quadratic_bimodal_column(x, w, grid) for x in xi]) for w in (0, 1)
    ])
    lf_b = np.einsum("ij,kjn->kin", T, hf_b)
    weights = np.full((2, N), 0.5)
    base = grid**2
    hf_clf = ThresholdClassifier(endpoint_rise, endpoint_rise(base), "endpoint_rise")
    lf_clf = ThresholdClassifier(endpoint_rise, endpoint_rise(T @ base), "endpoint_rise")
    return _finish(
        "quadratic", grid, xi[:, None], weights, hf_b, lf_b, N_S, hf_clf, lf_clf, seed,
        {"sigma": sigma},
    )


PITCHFORK_T_END = 10.0
PITCHFORK_X0 = 1e-3
PITCHFORK_HF_RTOL = 1e-6
PITCHFORK_LF_RTOL = 1e-2


def pitchfork_trajectory(xi: float, sign: float, grid, high_fidelity: bool = True) -> np.ndarray:
    """Sampled solution of ``dx/dt = xi x - x^3`` from ``x(0) = sign * 1e-3``."""
    grid = np.asarray(grid, dtype=np.float64)
    integ, rtol = (integrate_rk45, PITCHFORK_HF_RTOL) if high_fidelity else (integrate_rk23, PITCHFORK_LF_RTOL)
    tr = integ(OdeProblem(pitchfork_rhs(xi), [sign * PITCHFORK_X0], (0.0, float(grid[-1])), rtol=rtol))
    return sample_on_grid(tr, grid)[:, 0]


def make_pitchfork_dataset(N=100, N_S=10, seed=0, M=100, t_end=PITCHFORK_T_END) -> ProblemDataset:
    """Pitchfork bifurcation; high fidelity RK45 (rtol 1e-6), low fidelity RK23 (rtol 1e-2).

    Mode 1 starts at ``-1e-3`` and mode 2 at ``+1e-3``; the classifier is the
    sign of the terminal state (zero maps to mode 1).
    """
    grid = np.linspace(0.0, t_end, M)
    xi = substream(seed, "xi").uniform(0.0, 5.0, size=N)
    hf_b = np.stack([np.column_stack([pitchfork_trajectory(x, s, grid, True) for x in xi]) for s in (-1.0, 1.0)])
    lf_b = np.stack([np.column_stack([pitchfork_trajectory(x, s, grid, False) for x in xi]) for s in (-1.0, 1.0)])
    weights = np.full((2, N), 0.5)
    clf = ThresholdClassifier(terminal_value, 0.0, "terminal_value")
    return _finish("pitchfork", grid, xi[:, None], weights, hf_b, lf_b, N_S, clf, clf, seed, {"t_end": t_end})


LV_T_END = 50.0
LV_RTOL = 1e-3
LV_SIGMA = 10.0 / 3.0


def lotka_volterra_trajectory(xi, omega: int, grid, params=None) -> np.ndarray:
    """Prey population on ``grid`` for branch ``omega`` (or explicit ``params``)."""
    grid = np.asarray(grid, dtype=np.float64)
    alpha, K, beta, gamma = params if params is not None else lotka_volterra_params(xi, omega)
    p = OdeProblem(lotka_volterra_rhs(alpha, K, beta, gamma), [0.5, 0.5], (0.0, float(grid[-1])), rtol=LV_RTOL)
    return sample_on_grid(integrate_rk45(p), grid)[:, 0]


def _gap_threshold(values_low: np.ndarray, values_high: np.ndarray) -> float:
    """Midpoint of the gap between two separated feature populations."""
    lo, hi = float(np.max(values_low)), float(np.min(values_high))
    if lo >= hi:
        raise ValueError("branch features overlap; no separating threshold")
    return 0.5 * (lo + hi)


def make_lotka_volterra_dataset(N=100, N_S=10, seed=0, M=100, sigma=LV_SIGMA) -> ProblemDataset:
    """Predator-prey system whose parameters follow a two-branch mixture over xi.

    High fidelity: RK45 (rtol 1e-3) prey trajectory on ``[0, 50]``. Low
    fidelity: the same with an independent branch draw, smoothed in time by
    a Gaussian kernel (sigma 10/3). Mode 1 is the K = 5 branch, whose
    probability is the logistic weight of ``xi``. The classifier thresholds
    the time-mean at the midpoint of the gap between the two branches'
    time-means over all columns, per fidelity.
    """
    grid = np.linspace(0.0, LV_T_END, M)
    xi = substream(seed, "xi").uniform(0.0, 1.0, size=(N, 2))
    hf_b = np.stack([np.column_stack([lotka_volterra_trajectory(x, w, grid) for x in xi]) for w in (0, 1)])
    T = gaussian_convolution_operator(grid, sigma)
    lf_b = np.einsum("ij,kjn->kin", T, hf_b)
    phi = lotka_volterra_mixture_weight(xi)
    weights = np.stack([phi, 1.0 - phi])

    def calibrated(branches):
        means = branches.mean(axis=1)  # (K, N)
        return ThresholdClassifier(time_mean, _gap_threshold(means[0], means[1]), "time_mean")

    return _finish(
        "lotka", grid, xi, weights, hf_b, lf_b, N_S, calibrated(hf_b), calibrated(lf_b), seed,
        {"sigma": sigma, "t_end": LV_T_END},
    )


PROBLEMS = {
    "quadratic": make_quadratic_dataset,
    "pitchfork": make_pitchfork_dataset,
    "lotka": make_lotka_volterra_dataset,
}


def make_dataset(problem: str, N=100, M=100, N_S=10, seed=0) -> ProblemDataset:
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}; choose from {sorted(PROBLEMS)}")
    return PROBLEMS[problem](N=N, N_S=N_S, seed=seed, M=M)


def dataset_to_matrices(ds: ProblemDataset, rng: Optional[np.random.Generator] = None) -> dict:
    """The low-fidelity ensemble plus one full high-fidelity realization."""
    rng = rng if rng is not None else substream(ds.seed, "hf-realization")
    H, labels = ds.sample_hf_matrix(rng)
    return {"lf": ds.lf_ensemble, "hf_sample": H, "hf_labels": labels}
