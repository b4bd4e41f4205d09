"""Experiment configuration and orchestration (TenAd vs baseline over a
synthetic dataset).

An experiment config is a flat ``key = value`` file::

    dims = 16,16,3,16
    n = 10
    kind = smooth          # smooth | gaussian | rank-k
    rank_k = 1
    seed = 1
    model = linear         # linear | centroid | exec
    model.classes = 3      # centroid only
    model.command = ...    # exec only
    model.timeout = 30
    workers = 1
    attack.tenad.method = tenad
    attack.tenad.query_budget = 10000
    attack.baseline.method = baseline

Each ``attack.<name>.<field>`` line sets an AttackConfig field for the named
attack. Attack seeds are derived per sample from the master seed.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attack import ATTACKS, AttackConfig, AttackResult
from .data import KINDS, centroid_toy_model, generate_synthetic_dataset, linear_toy_model
from .io import format_kv, parse_kv, read_kv, write_ten4
from .metrics import build_report, reports_to_csv
from .models import ModelUnavailable, SubprocessModel

log = logging.getLogger(__name__)

MODEL_KINDS = ("linear", "centroid", "exec")
DEFAULT_BUDGET = 10_000


class ConfigError(ValueError):
    pass


@dataclass
class AttackSpec:
    name: str
    method: str
    config: AttackConfig


@dataclass
class ExperimentConfig:
    dims: tuple = (32, 32, 3, 16)
    n: int = 10
    kind: str = "smooth"
    rank_k: int = 1
    seed: int = 0
    model: str = "linear"
    model_classes: int = 3
    model_command: str = ""
    model_timeout: float = 30.0
    workers: int = 1
    eps_active: float = 1e-8
    attacks: list = field(default_factory=list)
    output: str | None = None
    raw: dict = field(default_factory=dict)

    def validate(self):
        if len(self.dims) != 4 or min(self.dims) < 1:
            raise ConfigError(f"dims must be four positive extents, got {self.dims}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}")
        if self.model == "exec" and not self.model_command:
            raise ConfigError("model = exec needs model.command")
        if not self.attacks:
            raise ConfigError("no attack.<name>.method entries")
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise ConfigError("attack names must be unique")

    @classmethod
    def from_kv(cls, items: dict) -> "ExperimentConfig":
        cfg = cls(raw=dict(items))
        attack_items: dict = {}
        try:
            for key, value in items.items():
                if key.startswith("attack."):
                    parts = key.split(".", 2)
                    if len(parts) != 3:
                        raise ConfigError(f"bad attack key {key!r}")
                    attack_items.setdefault(parts[1], {})[parts[2]] = value
                elif key == "dims":
                    cfg.dims = tuple(int(v) for v in value.split(","))
                elif key in ("n", "rank_k", "seed", "workers"):
                    setattr(cfg, key, int(value))
                elif key in ("kind", "model", "output"):
                    setattr(cfg, key, value)
                elif key == "eps_active":
                    cfg.eps_active = float(value)
                elif key == "model.classes":
                    cfg.model_classes = int(value)
                elif key == "model.command":
                    cfg.model_command = value
                elif key == "model.timeout":
                    cfg.model_timeout = float(value)
                else:
                    raise ConfigError(f"unknown key {key!r}")
            for name, kv in attack_items.items():
                method = kv.pop("method", name)
                if method not in ATTACKS:
                    raise ConfigError(f"attack {name!r}: unknown method {method!r}")
                kv.setdefault("query_budget", str(DEFAULT_BUDGET))
                cfg.attacks.append(AttackSpec(name, method, AttackConfig.from_kv(kv)))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            items = read_kv(path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_kv(items)


def attack_seed(master: int, sample: int, attack_index: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(sample), 1, int(attack_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def build_model(cfg: ExperimentConfig, dataset=None):
    if cfg.model == "linear":
        return linear_toy_model(cfg.dims, cfg.seed, reference=dataset)
    if cfg.model == "centroid":
        return centroid_toy_model(cfg.dims, cfg.seed, cfg.model_classes)
    return SubprocessModel(cfg.model_command, cfg.dims, timeout=cfg.model_timeout)


def run_attacks(model, x, specs, master_seed, index):
    """Run every attack on one sample, each on a fresh model instance."""
    out = {}
    for k, spec in enumerate(specs):
        acfg = replace(spec.config, seed=attack_seed(master_seed, index, k))
        m = model.spawn()
        try:
            before = m.query_count
            t0 = time.perf_counter()
            result = ATTACKS[spec.method](m, x, acfg)
            log.info("sample %d %s: %d queries, success=%s, %.2fs", index, spec.name,
                     result.queries_used, result.success, time.perf_counter() - t0)
            assert result.queries_used == m.query_count - before
            out[spec.name] = result
        finally:
            m.close()
    return out


def _worker(args):
    cfg, model, x, index = args
    try:
        return index, run_attacks(model, x, cfg.attacks, cfg.seed, index), None
    except ModelUnavailable as exc:
        return index, None, str(exc)


def _json_result(result: AttackResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run the experiment, write artifacts and return ``{attack: MetricsReport}``.

    Returned dict carries an extra ``"_errors"`` entry listing failed samples.
    """
    out = Path(out_dir or cfg.output or "tenad-out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_kv(cfg.raw), encoding="utf-8")
    dataset = generate_synthetic_dataset(cfg.dims, cfg.n, cfg.kind, cfg.seed, cfg.rank_k)
    model = build_model(cfg, dataset)

    jobs = [(cfg, model, x, i) for i, x in enumerate(dataset)]
    if cfg.workers > 1 and cfg.model != "exec":
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            finished = list(pool.map(_worker, jobs))
    else:
        finished = [_worker(job) for job in jobs]
    model.close()

    errors = {}
    per_attack = {spec.name: [] for spec in cfg.attacks}
    cleans = []
    for index, results, err in sorted(finished, key=lambda r: r[0]):
        sdir = out / "samples" / f"{index:04d}"
        sdir.mkdir(parents=True, exist_ok=True)
        write_ten4(sdir / "clean.ten4", dataset[index])
        if err is not None:
            errors[index] = err
            (sdir / "error.txt").write_text(err + "\n", encoding="utf-8")
            continue
        cleans.append(dataset[index])
        for name, result in results.items():
            write_ten4(sdir / f"{name}.ten4", result.adversarial)
            (sdir / f"{name}.json").write_text(_json_result(result) + "\n", encoding="utf-8")
            per_attack[name].append(result)

    reports = {}
    if cleans:
        for name, results in per_attack.items():
            reports[name] = build_report(cleans, results, eps_active=cfg.eps_active)
    write_summary(out, cfg, reports, errors)
    reports["_errors"] = errors
    return reports


def write_summary(out: Path, cfg, reports, errors):
    summary = {
        "dims": list(cfg.dims),
        "n": cfg.n,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "model": cfg.model,
        "errors": {str(k): v for k, v in sorted(errors.items())},
        "note": "query budgets and model zoo are artifact defaults",
        "attacks": {s.name: {"method": s.method, **s.config.to_kv()} for s in cfg.attacks},
        "reports": {name: json.loads(rep.to_json()) for name, rep in reports.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    (out / "comparison.csv").write_text(reports_to_csv(reports), encoding="utf-8")


def load_results(out_dir) -> tuple[list, dict]:
    """Read a finished experiment directory back: clean tensors and
    per-attack lightweight result records (for recomputing metrics)."""
    from .io import read_ten4

    out = Path(out_dir)
    cleans, per_attack = [], {}
    for sdir in sorted((out / "samples").iterdir()):
        if (sdir / "error.txt").exists():
            continue
        cleans.append(read_ten4(sdir / "clean.ten4"))
        for js in sorted(sdir.glob("*.json")):
            d = json.loads(js.read_text(encoding="utf-8"))
            g = d["g_star"]
            per_attack.setdefault(js.stem, []).append(AttackResult(
                method=d["method"],
                adversarial=read_ten4(sdir / f"{js.stem}.ten4"),
                g_star=g if g is not None else math.inf,
                queries_used=d["queries_used"],
                success=d["success"],
                label=d["label"],
                status=d["status"],
                trajectory=[tuple(p) for p in d["trajectory"]],
            ))
    return cleans, per_attack


def parse_config_text(text: str) -> ExperimentConfig:
    return ExperimentConfig.from_kv(parse_kv(text))


def demo_rank1_constant(x, magnitude: float):
    """Add ``magnitude`` times the all-ones (rank-one) tensor to ``x``.

    Returns ``(adversarial, perturbation rank, MAP against x)``.
    """
    from .metrics import mean_absolute_perturbation
    from .tensor import as_tensor4, multilinear_rank, outer_product

    x = as_tensor4(x)
    ones = outer_product(*(np.ones(n) for n in x.shape))
    adv = x + magnitude * ones
    rank = multilinear_rank(adv - x)
    return adv, rank, mean_absolute_perturbation([(x, adv)])
