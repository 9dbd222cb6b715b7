"""
``mmae`` command line.

Subcommands: generate, train, eval, mds, sweep. Global flags (``--seed``,
``--out``, ``--config``, ``--threads``) may appear before or after the
subcommand. Every command writes only inside ``--out``.

Exit codes: 0 success, 2 usage or configuration error, 3 unreadable or
malformed data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np

from .datasets import (
    PointCloud,
    format_float,
    gen_concentric_spheres,
    gen_linked_tori,
    gen_nested_spheres,
    load_csv,
    save_csv,
    split,
)
from .exceptions import InputError, NumericalError, ParseError
from .linalg import make_rng, pairwise_distances
from .mds import classical_mds, mds_stress
from .metrics import EvalConfig, distance_correlation, evaluate, kl_density
from .reference import pca_k_range
from .train import (
    TrainConfig,
    build_reference,
    encode,
    fit,
    load_checkpoint,
    save_checkpoint,
    write_history_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_OUT = "mmae-out"

SWEEP_DEFAULTS = {
    "trials": 20,
    "batch_size": [16, 256],
    "lr": [1e-4, 1e-2],
    "lam": [0.1, 10.0],
    "pca_k": None,
    "validation_fraction": 0.2,
    "sigma": 0.1,
}


class UsageError(InputError):
    pass


# -- helpers -----------------------------------------------------------------------


def read_cloud(path) -> PointCloud:
    """Load a CSV, treating a trailing ``label`` header column as labels."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}", row=0) from None
    has_labels = bool(header) and header[-1].strip() == "label"
    return load_csv(path, has_labels=has_labels)


def read_json(path, what) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{what} must be a JSON object")
    return doc


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def out_dir(args) -> Path:
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def load_config(args, required=True) -> TrainConfig:
    if args.config is None:
        if required:
            raise UsageError("--config is required")
        d = {}
    else:
        d = read_json(args.config, "config")
    if args.seed is not None:
        d = {**d, "seed": args.seed}
    return TrainConfig.from_dict(d)


# -- generate -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.dataset == "spheres":
        n = 500 if args.n is None else args.n
        cloud = gen_nested_spheres(n_per_sphere=n, n_small=args.n_small,
                                   d=101 if args.d is None else args.d,
                                   noise_sd=args.noise_sd, seed=seed, n_big=args.n_big)
    elif args.dataset == "linked-tori":
        cloud = gen_linked_tori(n_per_torus=500 if args.n is None else args.n,
                                ambient_d=args.ambient_d, seed=seed, noise_sd=args.noise_sd)
    else:
        cloud = gen_concentric_spheres(n_per_shell=500 if args.n is None else args.n,
                                       n_shells=args.n_shells,
                                       d=1000 if args.d is None else args.d,
                                       noise_sd=args.noise_sd, seed=seed)
    out = out_dir(args)
    save_csv(out / "data.csv", cloud)
    if args.test_fraction is not None:
        train, test = split(cloud, args.test_fraction, seed)
        save_csv(out / "train.csv", train)
        save_csv(out / "test.csv", test)
    return EXIT_OK


# -- train ----------------------------------------------------------------------------


def cmd_train(args) -> int:
    config = load_config(args)
    train = read_cloud(args.data)
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        if {**resume.config.to_dict(), "epochs": 0} != {**config.to_dict(), "epochs": 0}:
            raise UsageError("checkpoint config differs from --config beyond 'epochs'")
    ref = None
    if config.regularizer != "none":
        ref = build_reference(config.reference, train)
    result = fit(config, train, ref=ref, resume=resume)

    out = out_dir(args)
    save_checkpoint(out / "checkpoint.json", result)
    write_history_csv(out / "history.csv", result)
    save_csv(out / "embedding.csv", encode(result.params, train.points), train.labels)
    write_json(out / "manifest.json", {
        "command": "train",
        "config": config.to_dict(),
        "seed": config.seed,
        "git": git_describe(),
        "epoch_seconds": result.epoch_seconds,
        "inputs": {"data": str(args.data), "resume": args.resume},
        "outputs": ["checkpoint.json", "history.csv", "embedding.csv", "manifest.json"],
    })
    return EXIT_OK


# -- eval --------------------------------------------------------------------------------


def cmd_eval(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    test = read_cloud(args.data)
    cfg = EvalConfig(sigmas=tuple(args.sigmas), ks=tuple(args.ks), n_triplets=args.n_triplets,
                     seed=0 if args.seed is None else args.seed)
    reference = None
    if args.distances == "reference":
        if args.train_data is None:
            raise UsageError("--distances reference needs --train-data to refit the reference")
        reference = build_reference(ck.config.reference, read_cloud(args.train_data))
    report = evaluate(test, ck.params, args.distances, cfg, reference)
    out = out_dir(args)
    report.save(out / "metrics.json")
    save_csv(out / "latent.csv", encode(ck.params, test.points), test.labels)
    return EXIT_OK


# -- mds ----------------------------------------------------------------------------------


def cmd_mds(args) -> int:
    cloud = read_cloud(args.data)
    D = pairwise_distances(cloud.points)
    res = classical_mds(D, args.d)
    out = out_dir(args)
    save_csv(out / "embedding.csv", res.Y, cloud.labels)
    spectrum = ",\n".join(f"    {format_float(v)}" for v in res.eigenvalues)
    text = (
        "{\n"
        f'  "d": {args.d},\n'
        f'  "negative_mass": {format_float(res.negative_mass)},\n'
        f'  "stress": {format_float(mds_stress(D, res.Y))},\n'
        f'  "zero_filled": {json.dumps(list(res.zero_filled))},\n'
        f'  "eigenvalues": [\n{spectrum}\n  ]\n'
        "}\n"
    )
    (out / "spectrum.json").write_text(text, encoding="utf-8")
    return EXIT_OK


# -- sweep ---------------------------------------------------------------------------------


def load_sweep_spec(path, dim) -> dict:
    spec = dict(SWEEP_DEFAULTS)
    if path is not None:
        user = read_json(path, "sweep spec")
        unknown = set(user) - set(SWEEP_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown sweep spec keys: {sorted(unknown)}")
        spec.update(user)
    if spec["pca_k"] is None:
        spec["pca_k"] = list(pca_k_range(dim))
    for key in ("batch_size", "lr", "lam", "pca_k"):
        lo, hi = spec[key]
        if not 0 < lo <= hi:
            raise UsageError(f"sweep range {key} must satisfy 0 < low <= high")
    if not (16 <= spec["batch_size"][0] and spec["batch_size"][1] <= 256):
        raise UsageError("sweep batch_size range must lie within [16, 256]")
    if not (1e-4 <= spec["lr"][0] and spec["lr"][1] <= 1e-2):
        raise UsageError("sweep lr range must lie within [1e-4, 1e-2]")
    if int(spec["trials"]) < 1:
        raise UsageError("sweep needs at least one trial")
    return spec


def _log_uniform(rng, lo, hi):
    return float(lo) if lo == hi else float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_trials(spec, base: TrainConfig) -> list[TrainConfig]:
    rng = make_rng([base.seed, 2])
    trials = []
    for _ in range(int(spec["trials"])):
        b_lo, b_hi = spec["batch_size"]
        k_lo, k_hi = spec["pca_k"]
        d = base.to_dict()
        d["batch_size"] = int(rng.integers(int(b_lo), int(b_hi) + 1))
        d["lr"] = _log_uniform(rng, *spec["lr"])
        d["lam"] = _log_uniform(rng, *spec["lam"])
        k = int(rng.integers(int(k_lo), int(k_hi) + 1))
        if base.reference.get("kind") == "pca":
            d["reference"] = {**base.reference, "k": k}
        trials.append(TrainConfig.from_dict(d))
    return trials


def _run_trial(config_dict, train_pts, train_labels, val_pts, sigma):
    config = TrainConfig.from_dict(config_dict)
    train = PointCloud(train_pts, train_labels)
    try:
        result = fit(config, train)
    except NumericalError as exc:
        return {"kl": math.inf, "dc": math.nan, "status": f"numerical: {exc}"}
    Z = encode(result.params, val_pts)
    if not np.all(np.isfinite(Z)):
        return {"kl": math.inf, "dc": math.nan, "status": "numerical: non-finite latent"}
    D_X, D_Z = pairwise_distances(val_pts), pairwise_distances(Z)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dc = distance_correlation(D_X, D_Z)
    return {"kl": kl_density(D_X, D_Z, sigma), "dc": dc, "status": "ok"}


def cmd_sweep(args) -> int:
    base = load_config(args)
    data = read_cloud(args.data)
    spec = load_sweep_spec(args.spec, data.dim)
    if not base.uses_regularizer and base.regularizer != "none":
        raise UsageError("base config disables the regularizer; nothing to sweep over lam")
    train, val = split(data, float(spec["validation_fraction"]), base.seed)
    if base.reference.get("kind") == "pca":
        spec["pca_k"] = [min(int(v), min(train.n - 1, train.dim)) for v in spec["pca_k"]]
    trials = sample_trials(spec, base)
    jobs = [(c.to_dict(), train.points, train.labels, val.points, float(spec["sigma"]))
            for c in trials]
    workers = max(1, int(args.threads or 1))
    if workers == 1:
        results = [_run_trial(*job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, *zip(*jobs)))

    best = min(range(len(results)), key=lambda t: (results[t]["kl"], t))
    out = out_dir(args)
    lines = ["trial,batch_size,lr,lam,k,kl,dc,status"]
    for t, (cfg, res) in enumerate(zip(trials, results)):
        k = cfg.reference.get("k", "")
        status = res["status"].replace(",", ";").replace("\n", " ")
        lines.append(",".join([str(t), str(cfg.batch_size), format_float(cfg.lr),
                               format_float(cfg.lam), str(k), format_float(res["kl"]),
                               format_float(res["dc"]), status]))
    (out / "trials.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(out / "best_config.json", trials[best].to_dict())
    write_json(out / "manifest.json", {
        "command": "sweep",
        "config": base.to_dict(),
        "seed": base.seed,
        "git": git_describe(),
        "spec": spec,
        "best_trial": best,
        "inputs": {"data": str(args.data)},
        "outputs": ["trials.csv", "best_config.json", "manifest.json"],
    })
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="random seed")
    p.add_argument("--out", default=d(DEFAULT_OUT), help="output directory")
    p.add_argument("--config", default=d(None), help="JSON training config")
    p.add_argument("--threads", type=int, default=d(1),
                   help="worker processes for sweep trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmae", description="Manifold-matching autoencoders.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    _global_flags(g, suppress=True)
    g.add_argument("dataset", choices=["spheres", "linked-tori", "concentric"])
    g.add_argument("--n", type=int, default=None, help="points per component")
    g.add_argument("--n-small", type=int, default=10)
    g.add_argument("--n-big", type=int, default=None)
    g.add_argument("--n-shells", type=int, default=5)
    g.add_argument("--d", type=int, default=None, help="ambient dimension")
    g.add_argument("--ambient-d", type=int, default=100)
    g.add_argument("--noise-sd", type=float, default=0.0)
    g.add_argument("--test-fraction", type=float, default=None,
                   help="also write a stratified train.csv/test.csv split")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train an autoencoder")
    _global_flags(t, suppress=True)
    t.add_argument("--data", required=True)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on test data")
    _global_flags(e, suppress=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--distances", choices=["input", "reference"], default="input")
    e.add_argument("--train-data", default=None)
    e.add_argument("--ks", type=int, nargs="+", default=[5, 10, 50, 100])
    e.add_argument("--sigmas", type=float, nargs="+", default=[0.1])
    e.add_argument("--n-triplets", type=int, default=20000)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("mds", help="classical MDS embedding")
    _global_flags(m, suppress=True)
    m.add_argument("--data", required=True)
    m.add_argument("--d", type=int, default=2)
    m.set_defaults(func=cmd_mds)

    s = sub.add_parser("sweep", help="random hyperparameter search minimizing KL(0.1)")
    _global_flags(s, suppress=True)
    s.add_argument("--data", required=True)
    s.add_argument("--spec", default=None, help="JSON sweep spec")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"mmae: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"mmae: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"mmae: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"mmae: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
