"""Adaptive explicit Runge-Kutta integrators (Dormand-Prince 5(4), Bogacki-Shampine 3(2)).

Both pairs are FSAL and propagate the higher-order solution. The step-size
controller is the usual one: ``h *= clip(0.9 * err**(-1/(q+1)), 0.2, 5)``
where ``q`` is the order of the embedded solution.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import GridOutOfRange, NonFiniteState, StepSizeUnderflow

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass(frozen=True)
class Tableau:
    c: np.ndarray
    a: np.ndarray  # stage coefficients, lower triangular
    b: np.ndarray  # propagating weights
    e: np.ndarray  # b - b_hat, weights of the error estimate
    error_exponent: float


DOPRI5 = Tableau(
    c=np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1]),
    a=np.array([
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]),
    b=np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0]),
    e=np.array([
        35 / 384 - 5179 / 57600,
        0,
        500 / 1113 - 7571 / 16695,
        125 / 192 - 393 / 640,
        -2187 / 6784 + 92097 / 339200,
        11 / 84 - 187 / 2100,
        -1 / 40,
    ]),
    error_exponent=1 / 5,
)

BS32 = Tableau(
    c=np.array([0, 1 / 2, 3 / 4, 1]),
    a=np.array([
        [0, 0, 0],
        [1 / 2, 0, 0],
        [0, 3 / 4, 0],
        [2 / 9, 1 / 3, 4 / 9],
    ]),
    b=np.array([2 / 9, 1 / 3, 4 / 9, 0]),
    e=np.array([2 / 9 - 7 / 24, 1 / 3 - 1 / 4, 4 / 9 - 1 / 3, -1 / 8]),
    error_exponent=1 / 3,
)


@dataclass
class OdeProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    x0: np.ndarray
    t_span: tuple[float, float]
    rtol: float = 1e-6
    atol: float = 1e-9

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValueError("t_span must satisfy t1 > t0")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")

    @property
    def dimension(self) -> int:
        return self.x0.size


@dataclass
class Trajectory:
    times: np.ndarray  # (n,)
    states: np.ndarray  # (n, d)
    derivs: np.ndarray  # (n, d), rhs at each stored state
    accepted_steps: int
    rejected_steps: int


def _integrate(p: OdeProblem, tab: Tableau) -> Trajectory:
    t0, t1 = map(float, p.t_span)
    span = t1 - t0
    h_min = 1e-14 * span
    nstage = len(tab.c)
    d = p.dimension

    def f(t, x):
        out = np.asarray(p.rhs(t, x), dtype=np.float64).reshape(d)
        return out

    t, x = t0, p.x0.copy()
    k = np.empty((nstage, d))
    k[0] = f(t, x)
    if not np.all(np.isfinite(k[0])):
        raise NonFiniteState(f"rhs not finite at t={t}")
    times, states, derivs = [t], [x.copy()], [k[0].copy()]
    h = 1e-3 * span
    accepted = rejected = 0

    while t < t1:
        last = t + h >= t1
        if last:
            h = t1 - t
        for s in range(1, nstage):
            xs = x + h * (tab.a[s, :s] @ k[:s])
            k[s] = f(t + tab.c[s] * h, xs)
        # for FSAL pairs the last stage is evaluated at the new point
        x_new = x + h * (tab.b @ k)
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteState(f"state became non-finite near t={t}")
        err = h * (tab.e @ k)
        scale = p.atol + p.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))

        if err_norm <= 1.0:
            t = t1 if last else t + h
            x = x_new
            k[0] = k[-1]
            times.append(t)
            states.append(x.copy())
            derivs.append(k[0].copy())
            accepted += 1
            factor = MAX_FACTOR if err_norm == 0 else SAFETY * err_norm ** -tab.error_exponent
            h *= min(MAX_FACTOR, max(MIN_FACTOR, factor))
        else:
            rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err_norm ** -tab.error_exponent)
        if h < h_min and t < t1:
            raise StepSizeUnderflow(f"step size {h:.3e} below {h_min:.3e} at t={t}")

    return Trajectory(
        times=np.array(times),
        states=np.array(states),
        derivs=np.array(derivs),
        accepted_steps=accepted,
        rejected_steps=rejected,
    )


def integrate_rk45(p: OdeProblem) -> Trajectory:
    """Dormand-Prince 5(4)."""
    return _integrate(p, DOPRI5)


def integrate_rk23(p: OdeProblem) -> Trajectory:
    """Bogacki-Shampine 3(2)."""
    return _integrate(p, BS32)


def sample_on_grid(tr: Trajectory, grid) -> np.ndarray:
    """States at ``grid`` by cubic Hermite interpolation of the stored steps.

    Returns an array of shape ``(len(grid), dimension)``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    t0, t1 = tr.times[0], tr.times[-1]
    if grid.size and (grid.min() < t0 or grid.max() > t1):
        raise GridOutOfRange(f"grid must lie in [{t0}, {t1}]")
    spline = CubicHermiteSpline(tr.times, tr.states, tr.derivs, axis=0)
    out = spline(grid)
    # exact at knots
    hit = np.searchsorted(tr.times, grid)
    hit = np.clip(hit, 0, len(tr.times) - 1)
    at_knot = tr.times[hit] == grid
    out[at_knot] = tr.states[hit[at_knot]]
    return out
