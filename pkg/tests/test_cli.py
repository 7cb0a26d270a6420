import json
import subprocess
import sys

import numpy as np
import pytest

from mmid import cli
from mmid.cli import RunConfig, main
from mmid.errors import NoMatchingCluster, NonFiniteInput
from mmid.idcore import deterministic_bifid_pipeline
from mmid.linalg import read_matrix_csv
from mmid.multimodal import SaConfig
from mmid.problems import make_dataset
from mmid.rng import substream

FAST_SA = {"n_iter": 200, "n_restart": 2, "n_bootstrap": 4}


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return path


def tree_bytes(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_gen_data_shapes(tmp_path):
    cfg = write_config(tmp_path / "c.json", N=10, M=10, N_S=2)
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = tmp_path / "o"
    lf = sorted(out.glob("lf_sample_*.csv"))
    assert len(lf) == 2
    for f in lf:
        lines = f.read_text().splitlines()
        assert len(lines) == 10 and all(len(l.split(",")) == 10 for l in lines)
        assert json.loads(f.with_suffix(".json").read_text())["rows"] == 10
    assert read_matrix_csv(out / "hf_realization.csv").shape == (10, 10)
    assert read_matrix_csv(out / "xi.csv").shape == (10, 1)
    assert read_matrix_csv(out / "labels.csv").shape == (2, 10)
    manifest = json.loads((out / "dataset.json").read_text())
    assert {"problem", "N", "M", "N_S", "seed", "grid", "classifier_params"} <= set(manifest)


def test_gen_data_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["gen-data", "--seed", "42", "--out", str(tmp_path / d)]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_gen_data_lf_matches_library(tmp_path):
    assert main(["gen-data", "--problem", "pitchfork", "--seed", "3", "--out", str(tmp_path)]) == 0
    ds = make_dataset("pitchfork", seed=3)
    assert np.array_equal(read_matrix_csv(tmp_path / "lf_sample_4.csv"), ds.lf_ensemble.samples[4])


def test_invalid_problem_exits_nonzero(tmp_path):
    cfg = write_config(tmp_path / "c.json", problem="nope")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--problem", "nope"])
    assert exc.value.code != 0


@pytest.mark.parametrize("bad", [
    {"N": 0}, {"r": 200}, {"lambda": -1}, {"unknown_key": 1}, {"sa": {"cooling": 2.0}},
    {"N": "ten"}, {"basis_method": "greedy"},
])
def test_invalid_configs_exit_2(tmp_path, bad):
    cfg = write_config(tmp_path / "c.json", **bad)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_malformed_config_file(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert main(["run", "--config", str(tmp_path / "c.json")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_baseline_run_round_trip(tmp_path):
    assert main(["run", "--method", "baseline", "--seed", "5", "--rank", "3", "--out", str(tmp_path)]) == 0
    ds = make_dataset("quadratic", seed=5)
    ref = deterministic_bifid_pipeline(ds.lf_ensemble.samples[0], ds.hf_sampler, 3,
                                       rng=substream(5, "run-hf"), rank_deficient="lstsq")
    assert np.array_equal(read_matrix_csv(tmp_path / "H_hat.csv"), ref.H_hat)
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["basis_indices"] == ref.factorization.basis_indices.tolist()


def test_multimodal_run_meta(tmp_path):
    assert main(["run", "--rank", "3", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["S"] == 100
    assert len(meta["basis_indices"]) == 3 and len(meta["hf_basis_labels"]) == 3
    assert len(list(tmp_path.glob("pred_*.csv"))) == 100


def test_run_json_round_trips_to_config(tmp_path):
    cfg = write_config(tmp_path / "c.json", problem="quadratic", S=4, N=20, M=15, N_S=3,
                       sa=FAST_SA, **{"lambda": 0.5})
    assert main(["run", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    echoed = json.loads((tmp_path / "o" / "run.json").read_text())["config"]
    back = RunConfig.from_dict(echoed)
    assert back.to_dict(include_out_dir=False) == echoed
    assert back.seed == 9 and back.lam == 0.5 and back.sa == SaConfig(seed=9, **FAST_SA)


def test_run_two_runs_identical(tmp_path):
    args = ["run", "--problem", "quadratic", "--seed", "11"]
    cfg = write_config(tmp_path / "c.json", S=5, sa=FAST_SA)
    for d in ("a", "b"):
        assert main(args + ["--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_w1_bench_rows(tmp_path):
    cfg = write_config(tmp_path / "c.json", N=30, M=30, N_S=5, sa=FAST_SA)
    assert main(["w1-bench", "--config", str(cfg), "--trials", "50", "--out", str(tmp_path)]) == 0
    for m in ("baseline", "multimodal"):
        assert len((tmp_path / f"w1_{m}.csv").read_text().splitlines()) == 50
    summary = json.loads((tmp_path / "w1_summary.json").read_text())
    assert set(summary["methods"]) == {"baseline", "multimodal"}


def test_worker_count_does_not_change_output(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.json", N=20, M=20, N_S=4, trials=10, sa=FAST_SA)
    monkeypatch.setenv("MMID_THREADS", "1")
    assert main(["w1-bench", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("MMID_THREADS", "2")
    assert main(["w1-bench", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    monkeypatch.setenv("MMID_THREADS", "zero")
    assert main(["w1-bench", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 2


def test_basis_bench_grid(tmp_path):
    cfg = write_config(tmp_path / "c.json", problem="pitchfork", ns_list=[1, 10], sizes=[50, 100],
                       r_list=[2, 4], sa=FAST_SA)
    assert main(["basis-bench", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "basis_bench.csv").read_text().splitlines()
    assert lines[0] == "size,r,N_S,method,mean_error"
    rows = [l.split(",") for l in lines[1:]]
    for method in ("sa", "vertstack"):
        assert sum(r[3] == method for r in rows) == 2 * 2 * 2
    assert all(float(r[4]) >= 0 for r in rows)


def test_basis_bench_rejects_rank_above_size(tmp_path):
    cfg = write_config(tmp_path / "c.json", sizes=[10], r_list=[12])
    assert main(["basis-bench", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_verify_linear_planted_exact(tmp_path):
    assert main(["verify-linear", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "bounds.json").read_text())
    assert rec["exactness"]["exactness_flag"] is True
    assert rec["exactness"]["extras"]["relative_error"] <= 1e-8
    assert rec["bounds"]["sandwich_holds"] is True


def test_verify_linear_projector_counterexample(tmp_path):
    cfg = write_config(tmp_path / "c.json", operator="projector")
    assert main(["verify-linear", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "bounds.json").read_text())
    assert rec["exactness"]["exactness_flag"] is False
    assert rec["exactness"]["extras"]["relative_error"] > 1e-3


def test_mixture_stats(tmp_path):
    cfg = write_config(tmp_path / "c.json", draws=20_000, N_S=10, S=20)
    assert main(["mixture-stats", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "mixture_stats.json").read_text())
    assert len(rec["mismatch"]) == 12 and all(m["inside"] for m in rec["mismatch"])
    for row in rec["nested_binomial"]:
        assert row["variance"] == pytest.approx(row["predicted_variance"], rel=0.1)


@pytest.mark.parametrize("exc,code", [
    (NonFiniteInput("bad"), cli.EXIT_NUMERIC),
    (NoMatchingCluster(3, 2), cli.EXIT_NO_MATCH),
])
def test_error_exit_codes(tmp_path, monkeypatch, exc, code):
    def boom(cfg):
        raise exc

    monkeypatch.setitem(cli.COMMANDS, "run", boom)
    assert main(["run", "--out", str(tmp_path)]) == code


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mmid.cli", "mixture-stats", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "mixture_stats.json").exists()
