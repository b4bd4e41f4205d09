import json
import sys
from pathlib import Path

import numpy as np
import pytest

from tenad.cli import main
from tenad.data import generate_synthetic_dataset, linear_toy_model
from tenad.experiment import (ConfigError, demo_rank1_constant, parse_config_text,
                              run_experiment)
from tenad.io import read_ten4, write_ten4
from tenad.tensor import mode_spectrum, multilinear_rank

ROOT = Path(__file__).resolve().parents[1]
STUB = ROOT / "scripts" / "stub_model.py"

SMALL = """
dims = 6,6,3,4
n = 3
kind = smooth
seed = 5
model = linear
attack.tenad.method = tenad
attack.tenad.query_budget = 300
attack.baseline.method = baseline
attack.baseline.query_budget = 300
"""


# -- datasets ---------------------------------------------------------------------

def test_gaussian_dataset_deterministic():
    a = generate_synthetic_dataset((4, 4, 3, 16), 10, "gaussian", 1)
    b = generate_synthetic_dataset((4, 4, 3, 16), 10, "gaussian", 1)
    assert len(a) == 10
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    assert not np.array_equal(a[0], a[1])


def test_rank_one_kind():
    for x in generate_synthetic_dataset((5, 4, 3, 6), 5, "rank-k", 2, k=1):
        assert multilinear_rank(x) == (1, 1, 1, 1)
    for x in generate_synthetic_dataset((5, 4, 3, 6), 3, "rank-k", 2, k=2):
        assert multilinear_rank(x) == (2, 2, 2, 2)


def test_smooth_spectra_decay():
    for x in generate_synthetic_dataset((16, 16, 3, 16), 5, "smooth", 3):
        for mode in (1, 2, 3, 4):
            _, s = mode_spectrum(x, mode)
            assert s[0] >= 5 * np.median(s)


def test_dataset_errors():
    with pytest.raises(ValueError):
        generate_synthetic_dataset((4, 4, 3, 4), 1, "video", 0)
    with pytest.raises(ValueError):
        generate_synthetic_dataset((4, 4, 3, 4), 0, "smooth", 0)


def test_linear_toy_model_balanced():
    data = generate_synthetic_dataset((6, 6, 3, 4), 20, "smooth", 0)
    m = linear_toy_model((6, 6, 3, 4), 0, reference=data)
    labels = [m.predict(x) for x in data]
    assert 0 < sum(labels) < 20


# -- config ---------------------------------------------------------------------

def test_config_parsing():
    cfg = parse_config_text(SMALL)
    assert cfg.dims == (6, 6, 3, 4)
    assert [a.name for a in cfg.attacks] == ["tenad", "baseline"]
    assert cfg.attacks[0].config.query_budget == 300
    for bad in ("dims = 1,2\nattack.t.method = tenad\n", "n = 3\n", "attack.t.method = magic\n",
                SMALL + "bogus = 1\n", "dims = 0,1,1,1\nattack.t.method = tenad\n"):
        with pytest.raises(ConfigError):
            parse_config_text(bad)


def test_default_budget():
    cfg = parse_config_text("attack.a.method = tenad\n")
    assert cfg.attacks[0].config.query_budget == 10_000


# -- experiments ----------------------------------------------------------------------

def test_run_experiment_layout_and_isolation(tmp_path):
    cfg = parse_config_text(SMALL)
    reports = run_experiment(cfg, tmp_path)
    assert reports.pop("_errors") == {}
    assert set(reports) == {"tenad", "baseline"}
    assert (tmp_path / "config.txt").exists() and (tmp_path / "comparison.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["reports"]["tenad"]["n"] == 3
    for i in range(3):
        sdir = tmp_path / "samples" / f"{i:04d}"
        for name in ("tenad", "baseline"):
            rec = json.loads((sdir / f"{name}.json").read_text())
            assert rec["queries_used"] <= 300
            adv = read_ten4(sdir / f"{name}.ten4")
            assert adv.shape == (6, 6, 3, 4)


def test_bench_byte_identical(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text(SMALL)
    assert main(["bench", "--config", str(conf), "--out", str(tmp_path / "a")]) == 0
    assert main(["bench", "--config", str(conf), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    for f in ("comparison.csv", "summary.json", "samples/0001/tenad.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_exec_model_failure_marks_samples(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text(SMALL.replace("model = linear", f"model = exec\nmodel.command = "
                                  f"{sys.executable} {STUB} --die-after 0"))
    assert main(["bench", "--config", str(conf), "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "samples" / "0000" / "error.txt").exists()


def test_exec_model_partial_failure(tmp_path):
    # the child refuses the brightest clip; the other samples must be untouched
    cfg = parse_config_text(SMALL)
    data = generate_synthetic_dataset(cfg.dims, cfg.n, cfg.kind, cfg.seed)
    means = sorted(float(x.mean()) for x in data)
    cut = (means[-1] + means[-2]) / 2
    threshold = means[0] - 1.0  # every clip is class 1; darkening flips it
    conf = tmp_path / "exp.conf"
    conf.write_text(SMALL.replace("model = linear", f"model = exec\nmodel.command = "
                                  f"{sys.executable} {STUB} --threshold {threshold} --refuse-above {cut}"))
    assert main(["bench", "--config", str(conf), "--out", str(tmp_path / "o")]) == 4
    bad = [i for i, x in enumerate(data) if x.mean() > cut]
    for i in range(cfg.n):
        sdir = tmp_path / "o" / "samples" / f"{i:04d}"
        assert (sdir / "error.txt").exists() == (i in bad)
        if i not in bad:
            assert json.loads((sdir / "tenad.json").read_text())["success"]


# -- demo and CLI -------------------------------------------------------------------------

def test_demo_rank1():
    x = generate_synthetic_dataset((6, 5, 3, 4), 1, "smooth", 0)[0]
    adv, rank, map_value = demo_rank1_constant(x, 256)
    assert rank == (1, 1, 1, 1) and map_value == 256.0
    same, rank0, m0 = demo_rank1_constant(x, 0)
    assert np.array_equal(same, x) and rank0 == (0, 0, 0, 0) and m0 == 0.0


def test_cli_demo_rank1(tmp_path, capsys):
    x = generate_synthetic_dataset((6, 5, 3, 4), 1, "smooth", 0)[0]
    write_ten4(tmp_path / "x.ten4", x)
    assert main(["demo-rank1", "--input", str(tmp_path / "x.ten4"), "--magnitude", "256"]) == 0
    out = capsys.readouterr().out
    assert "perturbation rank: (1, 1, 1, 1)" in out and "MAP: 256.0" in out


def test_cli_gen_hosvd_attack_metrics(tmp_path, capsys):
    assert main(["gen", "--dims", "5,5,3,4", "--n", "2", "--seed", "1", "--out", str(tmp_path / "d")]) == 0
    x_path = tmp_path / "d" / "sample_0000.ten4"
    assert main(["hosvd", "--input", str(x_path), "--ranks", "2,2,1,2", "--out", str(tmp_path / "h")]) == 0
    assert read_ten4(tmp_path / "h" / "core.ten4").shape == (2, 2, 1, 2)
    assert np.loadtxt(tmp_path / "h" / "factor1.csv", delimiter=",").shape == (5, 2)
    assert main(["attack", "--input", str(x_path), "--model", "toy-centroid:3", "--budget", "400",
                 "--out", str(tmp_path / "a")]) == 0
    rec = json.loads((tmp_path / "a" / "result.json").read_text())
    assert rec["queries_used"] <= 400
    conf = tmp_path / "exp.conf"
    conf.write_text(SMALL)
    main(["bench", "--config", str(conf), "--out", str(tmp_path / "b")])
    capsys.readouterr()
    assert main(["metrics", "--dir", str(tmp_path / "b"), "--out", str(tmp_path / "m.json")]) == 0
    stored = json.loads((tmp_path / "b" / "summary.json").read_text())["reports"]
    recomputed = json.loads((tmp_path / "m.json").read_text())
    assert recomputed["tenad"]["map"] == stored["tenad"]["map"]


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.conf"
    bad.write_text("dims = 1,2\n")
    assert main(["bench", "--config", str(bad)]) == 2
    assert main(["demo-rank1", "--input", str(tmp_path / "missing.ten4")]) == 2
    (tmp_path / "junk.ten4").write_bytes(b"JUNKJUNK")
    assert main(["hosvd", "--input", str(tmp_path / "junk.ten4")]) == 2
    write_ten4(tmp_path / "x.ten4", np.ones((2, 2, 1, 2)))
    assert main(["attack", "--input", str(tmp_path / "x.ten4"), "--model", "exec:/nonexistent/bin",
                 "--out", str(tmp_path / "o")]) == 3
