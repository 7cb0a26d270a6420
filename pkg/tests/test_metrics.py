import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mmid.errors import InvalidWeights, SingularOperator, SizeMismatch
from mmid.idcore import deterministic_bifid_pipeline
from mmid.metrics import (
    W1Report,
    bifidelity_error_bounds,
    mismatch_probability_bounds,
    nested_binomial_variance,
    simulate_mismatch_probability,
    simulate_nested_binomial,
    verify_linear_operator_exactness,
    w1_benchmark,
    wasserstein1_flat,
)
from mmid.multimodal import ConstantClassifier, MatrixEnsemble
from mmid.problems import ProblemDataset, gaussian_convolution_operator, quadratic_bimodal_column

vals = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


# --- Wasserstein-1 --------------------------------------------------------------

def test_w1_examples():
    A = np.random.default_rng(0).standard_normal((4, 5))
    assert wasserstein1_flat(A, A) == 0.0
    assert wasserstein1_flat(A, A + 0.75) == pytest.approx(0.75)
    assert wasserstein1_flat([0.0, 1.0], [0.5, 2.0]) == pytest.approx(0.75)
    with pytest.raises(SizeMismatch):
        wasserstein1_flat(np.zeros(3), np.zeros(4))


def test_w1_ignores_layout():
    A = np.arange(12.0).reshape(3, 4)
    assert wasserstein1_flat(A, A.T[::-1]) == 0.0


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(*(arrays(np.float64, n, elements=vals) for _ in range(3)))))
def test_w1_metric_axioms(abc):
    a, b, c = abc
    ab = wasserstein1_flat(a, b)
    assert ab >= 0
    assert ab == pytest.approx(wasserstein1_flat(b, a), abs=1e-12)
    same = np.allclose(np.sort(a), np.sort(b), rtol=0, atol=1e-12)
    assert ab <= 1e-12 if same else ab > 0
    assert ab <= wasserstein1_flat(a, c) + wasserstein1_flat(c, b) + 1e-9


def test_w1_zero_iff_same_multiset():
    a = np.array([3.0, 1.0, 2.0])
    assert wasserstein1_flat(a, [1.0, 2.0, 3.0]) == 0.0
    assert wasserstein1_flat(a, [1.0, 2.0, 3.0 + 1e-6]) > 0


# --- benchmark ---------------------------------------------------------------

def single_mode_dataset(n=30, m=40, ns=3):
    grid = np.linspace(0, 1, m)
    xi = np.random.default_rng(1).uniform(0, 1, n)
    H = np.column_stack([quadratic_bimodal_column(x, 0, grid) for x in xi])
    L = gaussian_convolution_operator(grid, 0.01) @ H
    return ProblemDataset(
        name="single", grid=grid, xi=xi[:, None], mode_weights=np.ones((1, n)),
        hf_branches=H[None], lf_branches=L[None], lf_ensemble=MatrixEnsemble(np.stack([L] * ns)),
        truth_labels=np.ones((ns, n), dtype=int), hf_classifier=ConstantClassifier(),
        lf_classifier=ConstantClassifier(), seed=0,
    )


@pytest.mark.parametrize("method,kw", [("baseline", {}), ("multimodal", {"lam": 0.0, "basis_method": "vertstack"})])
def test_w1_benchmark_exact_on_deterministic_data(method, kw):
    ds = single_mode_dataset()
    rep = w1_benchmark(ds, method, 3, trials=5, seed=2, **kw)
    scale = np.mean(np.abs(ds.hf_branches))
    assert rep.trials == 5 and rep.failures == 0
    assert np.all(rep.distances <= 1e-8 * scale)


def test_w1_benchmark_rejects_bad_arguments(quadratic_ds):
    with pytest.raises(ValueError):
        w1_benchmark(quadratic_ds, "baseline", 3, trials=0)
    with pytest.raises(ValueError):
        w1_benchmark(quadratic_ds, "other", 3, trials=1)


def test_w1_benchmark_ordering_quadratic(quadratic_ds):
    b = w1_benchmark(quadratic_ds, "baseline", 3, trials=50, seed=0)
    m = w1_benchmark(quadratic_ds, "multimodal", 3, trials=50, seed=0)
    assert m.summary["median"] < b.summary["median"]


def test_w1_report_io(tmp_path):
    rep = W1Report("x", np.array([0.5, math.nan, 0.25]))
    assert rep.failures == 1
    assert rep.summary["median"] == pytest.approx(0.375)
    lines = rep.write_csv(tmp_path).read_text().splitlines()
    assert lines == ["0.5", "nan", "0.25"]
    assert json.loads(json.dumps(rep.to_dict(), allow_nan=True))["trials"] == 3


# --- mixture statistics --------------------------------------------------------

def test_mismatch_bounds_examples():
    assert mismatch_probability_bounds([0.5, 0.5], 3) == pytest.approx((0.875, 0.875))
    lo, hi = mismatch_probability_bounds([0.7, 0.3], 2)
    assert (lo, hi) == pytest.approx((0.51, 0.91))
    p = simulate_mismatch_probability([0.7, 0.3], 2, 100_000, np.random.default_rng(3))
    assert lo <= p <= hi
    lo64, _ = mismatch_probability_bounds([0.9, 0.1], 64)
    assert lo64 >= 1 - 0.9**64


@pytest.mark.parametrize("weights", [(0.5, 0.5), (0.7, 0.3), (0.9, 0.1)])
@pytest.mark.parametrize("r", [1, 2, 4, 8])
def test_mismatch_simulation_within_band(weights, r):
    draws = 100_000
    lo, hi = mismatch_probability_bounds(weights, r)
    p = simulate_mismatch_probability(weights, r, draws, np.random.default_rng(r * 10 + int(10 * weights[0])))
    sd = math.sqrt(max(p * (1 - p), 1e-12) / draws)
    assert lo - 3 * sd <= p <= hi + 3 * sd


def test_mismatch_bounds_reject_invalid_weights():
    for w in ([0.6, 0.6], [-0.1, 1.1], []):
        with pytest.raises(InvalidWeights):
            mismatch_probability_bounds(w, 2)


def test_nested_binomial_variance_formula():
    assert nested_binomial_variance(0.0, 10, 20) == 0.0
    assert nested_binomial_variance(1.0, 10, 20) == 0.0
    assert nested_binomial_variance(0.3, 10, 20) == pytest.approx(0.03045)
    for S in (10, 100, 1000):
        v = nested_binomial_variance(0.5, S, S)
        assert v == pytest.approx(0.25 * (2 * S - 1) / S**2)
        assert 0.25 <= v * S <= 0.5  # O(1/S)


@pytest.mark.parametrize("pi", [0.1, 0.3, 0.5])
def test_nested_binomial_simulation(pi):
    x = simulate_nested_binomial(pi, 10, 20, 100_000, np.random.default_rng(int(pi * 100)))
    assert x.mean() == pytest.approx(pi, abs=0.005)
    assert x.var() == pytest.approx(nested_binomial_variance(pi, 10, 20), rel=0.10)


# --- exactness and error bounds ---------------------------------------------------

def quadratic_H(n=60, m=80, seed=0):
    grid = np.linspace(0, 1, m)
    xi = np.random.default_rng(seed).uniform(0, 1, n)
    return grid, np.column_stack([quadratic_bimodal_column(x, 0, grid) for x in xi])


def test_exactness_identity_operator():
    _, H = quadratic_H()
    rep = verify_linear_operator_exactness(np.eye(H.shape[0]), H, 3)
    assert rep.exactness_flag and rep.actual <= 1e-8 * np.linalg.norm(H)


def test_exactness_convolution_operator():
    grid, H = quadratic_H()
    rep = verify_linear_operator_exactness(gaussian_convolution_operator(grid, 0.01), H, 3)
    assert rep.exactness_flag and rep.actual <= 1e-8 * np.linalg.norm(H)


def test_exactness_fails_for_rank_deficient_operator():
    rng = np.random.default_rng(4)
    H = rng.standard_normal((20, 3)) @ rng.standard_normal((3, 15))
    Q, _ = np.linalg.qr(rng.standard_normal((20, 2)))
    rep = verify_linear_operator_exactness(Q @ Q.T, H, 3)
    assert not rep.exactness_flag
    assert rep.actual > 1e-3 * np.linalg.norm(H)


def bounds_instance(seed, T=None, m=12, n=15, r=4):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((m, m)) + 3 * np.eye(m) if T is None else T
    H = rng.standard_normal((m, 6)) @ rng.standard_normal((6, n))
    L = T @ H
    res = deterministic_bifid_pipeline(L, lambda j, g: H[:, j], r)
    f = res.factorization
    return T, L, L[:, f.basis_indices] @ f.coefficients, H, res.H_hat


def test_bounds_identity_operator():
    T, L, L_hat, H, H_hat = bounds_instance(5, T=np.eye(12))
    rep = bifidelity_error_bounds(T, L, L_hat, H, H_hat, 4)
    lf = np.linalg.norm(L_hat - L)
    assert rep.lower == pytest.approx(lf) and rep.upper == pytest.approx(lf)
    assert rep.actual == pytest.approx(lf)


def test_bounds_scaled_identity_operator():
    T, L, L_hat, H, H_hat = bounds_instance(6, T=2 * np.eye(12))
    rep = bifidelity_error_bounds(T, L, L_hat, H, H_hat, 4)
    lf = np.linalg.norm(L_hat - L)
    assert rep.lower == pytest.approx(lf / 2) and rep.upper == pytest.approx(lf / 2)
    assert rep.actual == pytest.approx(lf / 2)


@pytest.mark.parametrize("seed", range(25))
def test_bounds_sandwich_random_instances(seed):
    rep = bifidelity_error_bounds(*bounds_instance(seed), 4)
    assert rep.lower <= rep.upper * (1 + 1e-12)
    assert rep.sandwich_holds()


def test_bounds_singular_operator():
    T, L, L_hat, H, H_hat = bounds_instance(7)
    T_sing = T.copy()
    T_sing[:, 0] = T_sing[:, 1]
    with pytest.raises(SingularOperator):
        bifidelity_error_bounds(T_sing, L, L_hat, H, H_hat, 4)


def test_bounds_report_json():
    rep = bifidelity_error_bounds(*bounds_instance(8), 4)
    d = json.loads(rep.to_json())
    assert set(d) >= {"lower", "actual", "upper", "refined_upper", "exactness_flag"}
