"""Command-line front end: ``mmid <command> [--config FILE] [overrides]``.

Every command is a deterministic function of its resolved configuration and
writes its outputs under ``--out``. Exit codes: 0 success, 1 other failure,
2 invalid configuration, 3 numerical failure, 4 no matching cluster.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
import json
import os
from pathlib import Path
import sys
from typing import Optional

import numpy as np
from scipy.linalg import orth

from .errors import InvalidConfig, MmidError, NoMatchingCluster, NumericError
from .idcore import deterministic_bifid_pipeline
from .linalg import write_matrix_csv
from .metrics import (
    bifidelity_error_bounds,
    mismatch_probability_bounds,
    nested_binomial_variance,
    simulate_mismatch_probability,
    simulate_nested_binomial,
    verify_linear_operator_exactness,
    w1_benchmark,
)
from .multimodal import SaConfig, multimodal_id_sample, saa_cost, select_basis
from .problems import PROBLEMS, gaussian_convolution_operator, make_dataset, quadratic_bimodal_column
from .rng import substream

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NO_MATCH = 0, 1, 2, 3, 4

METHODS = ("baseline", "multimodal")
BASIS_METHODS = ("sa", "vertstack")
OPERATORS = ("convolution", "identity", "projector")


@dataclass
class RunConfig:
    problem: str = "quadratic"
    method: str = "multimodal"
    r: int = 3
    N: int = 100
    M: int = 100
    N_S: int = 10
    S: int = 100
    lam: float = 1.0  # serialized as "lambda"
    basis_method: str = "sa"
    sa: SaConfig = field(default_factory=SaConfig)
    trials: int = 50
    seed: int = 0
    out_dir: str = "out"
    # basis-bench sweep
    r_list: list = field(default_factory=lambda: [2, 4, 6, 8, 10, 12])
    ns_list: list = field(default_factory=lambda: [1, 10])
    sizes: list = field(default_factory=lambda: [100])
    # verify-linear
    operator: str = "convolution"
    operator_width: float = 0.01
    # mixture-stats
    draws: int = 100_000

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise InvalidConfig(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.method not in METHODS:
            raise InvalidConfig(f"unknown method {self.method!r}")
        if self.basis_method not in BASIS_METHODS:
            raise InvalidConfig(f"unknown basis method {self.basis_method!r}")
        if self.operator not in OPERATORS:
            raise InvalidConfig(f"unknown operator {self.operator!r}")
        for name in ("r", "N", "M", "N_S", "S", "trials", "draws"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {v!r}")
        if self.r > self.N:
            raise InvalidConfig(f"r = {self.r} exceeds N = {self.N}")
        if not self.lam >= 0:
            raise InvalidConfig("lambda must be nonnegative")
        if not self.operator_width > 0:
            raise InvalidConfig("operator_width must be positive")
        for name in ("r_list", "ns_list", "sizes"):
            v = getattr(self, name)
            if not v or any(isinstance(x, bool) or not isinstance(x, int) or x < 1 for x in v):
                raise InvalidConfig(f"{name} must be a nonempty list of positive integers")
        if self.seed < 0 or self.seed >= 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        self.sa.validate()

    def to_dict(self, include_out_dir: bool = True) -> dict:
        """JSON form; ``include_out_dir=False`` gives the location-independent
        echo written into command outputs."""
        d = {}
        for f in fields(self):
            if f.name == "out_dir" and not include_out_dir:
                continue
            v = getattr(self, f.name)
            key = "lambda" if f.name == "lam" else f.name
            d[key] = v.to_dict() if isinstance(v, SaConfig) else (list(v) if isinstance(v, list) else v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise InvalidConfig("config must be a JSON object")
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {unknown}")
        if "sa" in d:
            sa = d["sa"]
            if not isinstance(sa, dict):
                raise InvalidConfig("sa must be an object")
            sa_known = {f.name for f in fields(SaConfig)}
            if set(sa) - sa_known:
                raise InvalidConfig(f"unknown sa keys: {sorted(set(sa) - sa_known)}")
            # the annealer's seed follows the run seed unless given explicitly
            sa = {"seed": d.get("seed", 0), **sa}
            d["sa"] = SaConfig(**sa)
        else:
            d["sa"] = SaConfig(seed=d.get("seed", 0))
        if "lam" in d:
            d["lam"] = float(d["lam"])
        if "operator_width" in d:
            d["operator_width"] = float(d["operator_width"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def worker_count() -> int:
    raw = os.environ.get("MMID_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"MMID_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InvalidConfig(f"MMID_THREADS must be a positive integer, got {raw!r}")
    return n


def _map(fn, items):
    """Ordered map over ``items`` using at most MMID_THREADS workers."""
    items = list(items)
    n = min(worker_count(), len(items)) or 1
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    return out


def _write_json(path: Path, obj) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def _dataset(cfg: RunConfig, N=None, M=None, N_S=None):
    return make_dataset(cfg.problem, N=N or cfg.N, M=M or cfg.M, N_S=N_S or cfg.N_S, seed=cfg.seed)


def _write_int_csv(path: Path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=int))
    path.write_text("".join(",".join(str(int(x)) for x in row) + "\n" for row in A))
    _write_json(path.with_suffix(".json"), {"rows": A.shape[0], "cols": A.shape[1], "label": path.stem})


def cmd_gen_data(cfg: RunConfig) -> Path:
    """Low-fidelity ensemble members, one high-fidelity realization, inputs,
    ensemble truth labels and a manifest."""
    out = _out(cfg)
    ds = _dataset(cfg)
    for i, L in enumerate(ds.lf_ensemble.samples):
        write_matrix_csv(out / f"lf_sample_{i}.csv", L, label=f"lf_sample_{i}")
    H, _ = ds.sample_hf_matrix(substream(ds.seed, "hf-realization"))
    write_matrix_csv(out / "hf_realization.csv", H, label="hf_realization")
    write_matrix_csv(out / "xi.csv", ds.xi, label="xi")
    _write_int_csv(out / "labels.csv", ds.truth_labels)
    _write_json(out / "dataset.json", ds.manifest())
    return out


def cmd_run(cfg: RunConfig) -> Path:
    """One baseline prediction, or an S-member multi-modal prediction ensemble."""
    out = _out(cfg)
    ds = _dataset(cfg)
    record = {"config": cfg.to_dict(include_out_dir=False)}
    if cfg.method == "baseline":
        L = ds.lf_ensemble.samples[0]
        res = deterministic_bifid_pipeline(
            L, ds.hf_sampler, cfg.r, rng=substream(cfg.seed, "run-hf"), rank_deficient="lstsq"
        )
        write_matrix_csv(out / "H_hat.csv", res.H_hat, label="H_hat")
        res.factorization.save(out, "factorization")
        record["basis_indices"] = [int(j) for j in res.factorization.basis_indices]
    else:
        pred = multimodal_id_sample(
            ds.lf_ensemble, ds.hf_sampler, ds.hf_classifier, cfg.r, lam=cfg.lam, S=cfg.S,
            basis_method=cfg.basis_method, cfg=cfg.sa, seed=cfg.seed, lf_clf=ds.lf_classifier,
        )
        pred.save(out)
        record["basis_indices"] = [int(j) for j in pred.basis_indices]
        record["hf_basis_labels"] = [int(c) for c in pred.hf_basis_labels]
    _write_json(out / "run.json", record)
    return out


def cmd_w1_bench(cfg: RunConfig) -> Path:
    """Paired W1 distances for both methods, one CSV row per trial."""
    out = _out(cfg)
    ds = _dataset(cfg)
    reports = _map(
        lambda m: w1_benchmark(ds, m, cfg.r, cfg.trials, cfg.seed, lam=cfg.lam,
                               basis_method=cfg.basis_method, sa=cfg.sa),
        METHODS,
    )
    for rep in reports:
        rep.write_csv(out)
    _write_json(out / "w1_summary.json", {
        "config": cfg.to_dict(include_out_dir=False),
        "methods": {rep.method: {"summary": rep.summary, "failures": rep.failures, "trials": rep.trials}
                    for rep in reports},
    })
    return out


def cmd_basis_bench(cfg: RunConfig) -> Path:
    """Sample-average reconstruction error of SA and vertical-stacking bases
    over matrix sizes, ensemble sizes and ranks."""
    out = _out(cfg)
    cells = [(n, ns) for n in cfg.sizes for ns in cfg.ns_list]
    for n, _ in cells:
        if max(cfg.r_list) >= n:
            raise InvalidConfig(f"every rank in r_list must be below the matrix size {n}")

    def run_cell(cell):
        n, ns = cell
        ds = _dataset(cfg, N=n, M=n, N_S=ns)
        rows = []
        for r in cfg.r_list:
            for method in BASIS_METHODS:
                J = select_basis(ds.lf_ensemble, r, method, cfg.sa, cfg.seed)
                rows.append((n, r, ns, method, saa_cost(J, ds.lf_ensemble.samples)))
        return rows

    rows = [row for cell_rows in _map(run_cell, cells) for row in cell_rows]
    lines = ["size,r,N_S,method,mean_error\n"]
    lines += [f"{n},{r},{ns},{m},{e!r}\n" for n, r, ns, m, e in rows]
    (out / "basis_bench.csv").write_text("".join(lines))
    return out


def planted_linear_case(cfg: RunConfig):
    """Operator T and rank-r high-fidelity matrix H for the exactness check.

    For r = 3, H has the single-mode quadratic columns ``(x - xi)^2``, which
    span the quadratics; other ranks use a random rank-r product. The
    ``projector`` operator has rank r - 1, so the skeleton of ``L = T H``
    cannot have full column rank.
    """
    rng = substream(cfg.seed, "verify-linear")
    grid = np.linspace(0.0, 1.0, cfg.M)
    if cfg.r == 3:
        xi = rng.uniform(0.0, 1.0, cfg.N)
        H = np.column_stack([quadratic_bimodal_column(x, 0, grid) for x in xi])
    else:
        H = rng.standard_normal((cfg.M, cfg.r)) @ rng.standard_normal((cfg.r, cfg.N))
    if cfg.operator == "identity":
        T = np.eye(cfg.M)
    elif cfg.operator == "convolution":
        T = gaussian_convolution_operator(grid, cfg.operator_width)
    else:
        Q = orth(rng.standard_normal((cfg.M, max(cfg.r - 1, 1))))
        T = Q @ Q.T
    return T, H


def cmd_verify_linear(cfg: RunConfig) -> Path:
    """Exactness check and two-sided error bounds for a planted linear
    low-to-high fidelity map."""
    out = _out(cfg)
    T, H = planted_linear_case(cfg)
    rep = verify_linear_operator_exactness(T, H, cfg.r)
    record = {"config": cfg.to_dict(include_out_dir=False), "exactness": rep.to_dict()}
    if cfg.operator != "projector":
        L = T @ H
        res = deterministic_bifid_pipeline(L, lambda j, rng: H[:, j], cfg.r, rank_deficient="lstsq")
        f = res.factorization
        b = bifidelity_error_bounds(T, L, L[:, f.basis_indices] @ f.coefficients, H, res.H_hat, cfg.r)
        record["bounds"] = b.to_dict()
        record["bounds"]["sandwich_holds"] = b.sandwich_holds(atol=1e-12 * float(np.sqrt(np.sum(H**2))))
    _write_json(out / "bounds.json", record)
    return out


MISMATCH_WEIGHTS = ((0.5, 0.5), (0.7, 0.3), (0.9, 0.1))
MISMATCH_RANKS = (1, 2, 4, 8)
NESTED_PIS = (0.1, 0.3, 0.5)


def cmd_mixture_stats(cfg: RunConfig) -> Path:
    """Monte Carlo checks of the basis-mismatch band and of the variance of
    the predicted mode frequency."""
    out = _out(cfg)
    mismatch = []
    for w in MISMATCH_WEIGHTS:
        for r in MISMATCH_RANKS:
            lo, hi = mismatch_probability_bounds(w, r)
            p = simulate_mismatch_probability(w, r, cfg.draws, substream(cfg.seed, "mismatch", r, int(100 * w[0])))
            sd = float(np.sqrt(max(p * (1 - p), 1e-300) / cfg.draws))
            mismatch.append({"weights": list(w), "r": r, "lower": lo, "upper": hi, "empirical": p,
                             "stderr": sd, "inside": bool(lo - 3 * sd <= p <= hi + 3 * sd)})
    nested = []
    for pi in NESTED_PIS:
        x = simulate_nested_binomial(pi, cfg.N_S, cfg.S, cfg.draws, substream(cfg.seed, "nested", int(100 * pi)))
        nested.append({"pi": pi, "N_S": cfg.N_S, "S": cfg.S, "mean": float(x.mean()),
                       "variance": float(x.var()),
                       "predicted_variance": nested_binomial_variance(pi, cfg.N_S, cfg.S)})
    _write_json(out / "mixture_stats.json", {"config": cfg.to_dict(include_out_dir=False), "mismatch": mismatch, "nested_binomial": nested})
    return out


COMMANDS = {
    "gen-data": cmd_gen_data,
    "run": cmd_run,
    "w1-bench": cmd_w1_bench,
    "basis-bench": cmd_basis_bench,
    "verify-linear": cmd_verify_linear,
    "mixture-stats": cmd_mixture_stats,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=" ".join((fn.__doc__ or name).split()))
        s.add_argument("--config", type=Path, help="JSON config file (RunConfig fields)")
        s.add_argument("--seed", type=int, help="master seed (default 0)")
        s.add_argument("--rank", type=int, dest="r", help="basis size r (default 3)")
        s.add_argument("--out", type=str, dest="out_dir", help="output directory (default out)")
        s.add_argument("--problem", choices=sorted(PROBLEMS), help="test problem (default quadratic)")
        s.add_argument("--method", choices=METHODS, help="prediction method for run (default multimodal)")
        s.add_argument("--trials", type=int, help="W1 benchmark trials (default 50)")
    return p


def resolve_config(args) -> RunConfig:
    d = {}
    if args.config is not None:
        try:
            d = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise InvalidConfig(f"cannot read config {args.config}: {e}") from e
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"config {args.config} is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise InvalidConfig("config must be a JSON object")
    for key in ("seed", "r", "out_dir", "problem", "method", "trials"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    return RunConfig.from_dict(d)


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        worker_count()
    except (InvalidConfig, TypeError, ValueError) as e:
        # TypeError/ValueError: malformed values that survive JSON parsing
        print(f"mmid: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](cfg)
    except InvalidConfig as e:
        print(f"mmid: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"mmid: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except NoMatchingCluster as e:
        print(f"mmid: {e}", file=sys.stderr)
        return EXIT_NO_MATCH
    except (MmidError, OSError) as e:
        print(f"mmid: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
