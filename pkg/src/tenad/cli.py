"""Command line entry point: ``tenad <subcommand> ...``.

Exit codes: 0 success, 2 invalid config or arguments, 3 model failure,
4 partial experiment failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data
from .attack import ATTACKS, AttackConfig
from .experiment import ConfigError, ExperimentConfig, demo_rank1_constant, load_results, run_experiment
from .io import FormatError, read_kv, read_ten4, write_ten4
from .metrics import build_report, reports_to_csv
from .models import CentroidModel, LinearThresholdModel, ModelUnavailable, SubprocessModel
from .tensor import hosvd

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_PARTIAL = 0, 2, 3, 4


def parse_model_spec(spec: str, dims, timeout=30.0):
    """Model specs:

    ``linear:WEIGHT.ten4[:T1,T2,...]``, ``centroid:A.ten4,B.ten4,...``,
    ``toy-linear:SEED``, ``toy-centroid:SEED``, ``exec:COMMAND``.
    """
    kind, _, rest = spec.partition(":")
    if kind == "linear":
        path, _, ts = rest.partition(":")
        thresholds = [float(t) for t in ts.split(",")] if ts else [0.0]
        return LinearThresholdModel(read_ten4(path), thresholds)
    if kind == "centroid":
        return CentroidModel([read_ten4(p) for p in rest.split(",")])
    if kind == "toy-linear":
        return data.linear_toy_model(dims, int(rest or 0))
    if kind == "toy-centroid":
        return data.centroid_toy_model(dims, int(rest or 0))
    if kind == "exec":
        return SubprocessModel(rest, dims, timeout=timeout)
    raise ValueError(f"unknown model spec {spec!r}")


def cmd_attack(args):
    x = read_ten4(args.input)
    cfg = AttackConfig.from_kv(read_kv(args.config)) if args.config else AttackConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget is not None:
        cfg.query_budget = args.budget
    cfg.validate()
    model = parse_model_spec(args.model, x.shape, args.timeout)
    try:
        result = ATTACKS[args.method](model, x, cfg)
    finally:
        model.close()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ten4(out / "adversarial.ten4", result.adversarial)
    (out / "result.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"{args.method}: success={result.success} g*={result.g_star:.6g} "
          f"queries={result.queries_used} status={result.status}")
    return EXIT_OK


def cmd_bench(args):
    cfg = ExperimentConfig.from_file(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    reports = run_experiment(cfg, args.out)
    errors = reports.pop("_errors")
    print(reports_to_csv({k: v for k, v in reports.items()}).splitlines()[0])
    for name, rep in reports.items():
        mq = "n/a" if rep.mq is None else f"{rep.mq:.1f}"
        print(f"{name}: FR={rep.fr:.2f}% MQ={mq} MAP={rep.map:.4g} MAP*={rep.map_star:.4g} "
              f"SSIM={rep.mssim:.4f} SSIM*={rep.ssim_star:.4f} rank={rep.modal_rank}")
    if errors:
        print(f"{len(errors)} sample(s) failed: {sorted(errors)}", file=sys.stderr)
        return EXIT_PARTIAL if reports else EXIT_MODEL
    return EXIT_OK


def cmd_metrics(args):
    cleans, per_attack = load_results(args.dir)
    reports = {name: build_report(cleans, results, eps_active=args.eps_active)
               for name, results in sorted(per_attack.items())}
    text = json.dumps({k: json.loads(v.to_json()) for k, v in reports.items()},
                      indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    sys.stdout.write(reports_to_csv(reports))
    return EXIT_OK


def cmd_hosvd(args):
    x = read_ten4(args.input)
    ranks = tuple(int(r) for r in args.ranks.split(",")) if args.ranks else None
    fms = hosvd(x, ranks)
    for j, s in enumerate(fms.spectra, 1):
        print(f"mode {j}: " + " ".join(f"{v:.6g}" for v in s))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_ten4(out / "core.ten4", fms.core)
        for j, u in enumerate(fms.factors, 1):
            np.savetxt(out / f"factor{j}.csv", u, delimiter=",", fmt="%.17g")
    return EXIT_OK


def cmd_gen(args):
    dims = tuple(int(d) for d in args.dims.split(","))
    samples = data.generate_synthetic_dataset(dims, args.n, args.kind, args.seed, args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, x in enumerate(samples):
        write_ten4(out / f"sample_{i:04d}.ten4", x)
    print(f"wrote {len(samples)} tensors of dims {dims} to {out}")
    return EXIT_OK


def cmd_demo_rank1(args):
    x = read_ten4(args.input)
    adv, rank, map_value = demo_rank1_constant(x, args.magnitude)
    print(f"perturbation rank: {rank}")
    print(f"MAP: {map_value!r}")
    if args.out:
        write_ten4(args.out, adv)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tenad", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("attack", help="attack a single TEN4 sample")
    a.add_argument("--input", required=True)
    a.add_argument("--model", required=True, help="model spec, e.g. toy-linear:0 or exec:CMD")
    a.add_argument("--config", help="flat key = value AttackConfig file")
    a.add_argument("--method", choices=sorted(ATTACKS), default="tenad")
    a.add_argument("--seed", type=int)
    a.add_argument("--budget", type=int)
    a.add_argument("--timeout", type=float, default=30.0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_attack)

    b = sub.add_parser("bench", help="run an experiment config")
    b.add_argument("--config", required=True)
    b.add_argument("--out")
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("metrics", help="recompute metrics from an experiment directory")
    m.add_argument("--dir", required=True)
    m.add_argument("--eps-active", type=float, default=1e-8)
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    h = sub.add_parser("hosvd", help="HOSVD of a TEN4 tensor")
    h.add_argument("--input", required=True)
    h.add_argument("--ranks", help="r1,r2,r3,r4 truncation")
    h.add_argument("--out")
    h.set_defaults(func=cmd_hosvd)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--dims", default="32,32,3,16")
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--kind", choices=data.KINDS, default="smooth")
    g.add_argument("--k", type=int, default=1, help="rank for --kind rank-k")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("demo-rank1", help="add a constant rank-one perturbation")
    d.add_argument("--input", required=True)
    d.add_argument("--magnitude", type=float, default=256.0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_demo_rank1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ModelUnavailable as exc:
        print(f"model failure: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, FormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
