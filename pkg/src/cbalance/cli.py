"""Command-line entry point: gen-data, train, eval, oracle-check, grad-check.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .checks import CSV_HEADER, GRAD_TOL, grad_checks, oracle_checks
from .data import ConfigError, DatasetError, gen_synthetic, load_dataset, save_dataset
from .game import representation
from .metrics import ItePredictor, balance_report, fit_outcome_predictor, pehe
from .nn import CheckpointError, load_network, save_network
from .trainer import (
    CHECKPOINT_FILES,
    Players,
    RunLog,
    TrainConfig,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("cbalance")

SEED_ENV = "CBALANCE_SEED"
REPORT_SAMPLES = 2000


class UsageFailure(Exception):
    """Bad flags or config; maps to exit code 2."""


class RunFailure(Exception):
    """I/O, parse, divergence or verification failure; maps to exit code 1."""


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageFailure(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- config handling --------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def parse_value(key: str, raw: str):
    kind = str(_FIELD_TYPES[key])
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise UsageFailure(f"bad value for {key}: {raw!r}") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageFailure(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageFailure(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise UsageFailure(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = parse_value(key, raw)
    return values


def build_config(args) -> TrainConfig:
    values = read_config_file(args.config) if args.config else {}
    for name in _FIELD_TYPES:
        raw = getattr(args, name, None)
        if raw is not None:
            values[name] = parse_value(name, raw)
    values.setdefault("seed", default_seed())
    cfg = TrainConfig(**values)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None
    return cfg


def config_from_manifest(manifest: dict) -> TrainConfig:
    raw = dict(manifest["config"])
    for key, val in raw.items():
        if isinstance(val, list):
            raw[key] = tuple(val)
    return TrainConfig(**raw)


# --- commands ---------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    try:
        ds = gen_synthetic(args.n_treat, args.n_con, args.dim, args.shift, args.outcome, args.noise_sd, seed)
    except ConfigError as exc:
        raise UsageFailure(str(exc)) from None
    try:
        save_dataset(ds, args.out)
    except OSError as exc:
        raise RunFailure(f"cannot write {args.out}: {exc}") from None
    fmt = lambda v: "[" + ", ".join(f"{x:.4f}" for x in v) + "]"  # noqa: E731
    print(
        f"wrote {ds.n} rows to {args.out}: treated={len(ds.treat_pool)} control={len(ds.control_pool)} "
        f"treated_mean={fmt(ds.treat_pool.mean(axis=0))} control_mean={fmt(ds.control_pool.mean(axis=0))}"
    )
    return 0


def _load_data(path):
    try:
        return load_dataset(path)
    except (OSError, DatasetError) as exc:
        raise RunFailure(str(exc)) from None


def _report(players: Players, cfg: TrainConfig, ds, pred: ItePredictor) -> dict:
    rng = np.random.default_rng([cfg.seed, 3])
    report = balance_report(
        players.d, players.g, players.phi, ds, cfg.noise_dim, REPORT_SAMPLES, rng, cfg.conditional, cfg.jsd_bins
    ).to_dict()
    report["pehe"] = pehe(pred, ds, players.phi)
    return report


def _fit_predictor(players: Players, cfg: TrainConfig, ds) -> ItePredictor:
    reprs = representation(players.phi, ds.covariates)
    return fit_outcome_predictor(
        reprs, ds.treatment, ds.y_factual, epochs=cfg.pred_epochs, lr=cfg.pred_lr, seed=cfg.seed
    )


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = _load_data(args.data)
    data_hash = file_sha256(args.data)
    try:
        cfg = cfg.resolved(ds.dim)
    except ValueError as exc:
        raise UsageFailure(str(exc)) from None
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RunFailure(f"cannot create {out}: {exc}") from None
    started = datetime.now(timezone.utc).isoformat()
    try:
        result = train(cfg, ds)
    except TrainingDiverged as exc:
        raise RunFailure(f"training diverged: {exc}") from None
    players = result.players
    pred = _fit_predictor(players, cfg, ds)
    report = _report(players, cfg, ds, pred)

    result.runlog.write(out / "runlog.jsonl")
    save_checkpoint(players, out)
    save_network(pred.net, out / "pred.ckpt")
    write_atomic(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    if file_sha256(args.data) != data_hash:
        raise RunFailure(f"{args.data} changed during the run")
    manifest = {
        "tool": "cbalance",
        "version": __version__,
        "config": asdict(cfg),
        "dataset": {"path": str(Path(args.data).resolve()), "sha256": data_hash},
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "artifacts": {
            "runlog": "runlog.jsonl",
            "checkpoints": list(CHECKPOINT_FILES),
            "predictor": "pred.ckpt",
            "report": "report.json",
        },
        "disc_updates": result.disc_updates,
        "gen_updates": result.gen_updates,
    }
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(
        f"trained {cfg.iterations} iterations -> {out}: value_fn={report['value_fn_estimate']:.4f} "
        f"mean_d_real={report['mean_d_real']:.3f} mean_d_fake={report['mean_d_fake']:.3f} "
        f"emp_jsd={report['emp_jsd']:.4f} pehe={report['pehe']:.4f}"
    )
    return 0


def write_curves(runlog: RunLog, path: Path) -> None:
    lines = ["iteration,value_fn,emp_jsd"]
    for rec in runlog.records:
        jsd = "" if rec.get("emp_jsd") is None else repr(rec["emp_jsd"])
        lines.append(f"{rec['iter']},{rec['value_fn']!r},{jsd}")
    write_atomic(path, "\n".join(lines) + "\n")


def cmd_eval(args) -> int:
    run = Path(args.run_dir)
    manifest_path = run / "manifest.json"
    if not manifest_path.is_file():
        raise RunFailure(f"missing {manifest_path}")
    for name in (*CHECKPOINT_FILES, "pred.ckpt"):
        if not (run / name).is_file():
            raise RunFailure(f"missing checkpoint {run / name}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        cfg = config_from_manifest(manifest)
        players = load_checkpoint(run)
        pred = ItePredictor(load_network(run / "pred.ckpt"))
    except (CheckpointError, ValueError, KeyError, TypeError) as exc:
        raise RunFailure(f"cannot load run {run}: {exc}") from None
    ds = _load_data(args.data)
    try:
        report = _report(players, cfg, ds, pred)
    except ValueError as exc:
        raise RunFailure(f"checkpoints do not fit {args.data}: {exc}") from None
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    out = Path(args.out) if args.out else run / "eval_report.json"
    write_atomic(out, text)
    runlog_path = run / "runlog.jsonl"
    if runlog_path.is_file():
        write_curves(RunLog.read(runlog_path), run / "curves.csv")
    sys.stdout.write(text)
    return 0


def cmd_oracle_check(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.trials < 0 or args.support_max < 2 or args.grid_steps < 10:
        raise UsageFailure("need --trials >= 0, --support-max >= 2, --grid-steps >= 10")
    rows = oracle_checks(args.trials, args.support_max, seed, args.grid_steps)
    lines = [CSV_HEADER] + [r.csv_row() for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        write_atomic(Path(args.out), text)
    sys.stdout.write(text)
    for r in rows:
        if not r.passed and r.detail:
            print(f"{r.check}: {r.detail}", file=sys.stderr)
    return 0 if all(r.passed for r in rows) else 1


def cmd_grad_check(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.trials < 1:
        raise UsageFailure("--trials must be >= 1")
    outcomes = grad_checks(args.trials, seed, corrupt=args.inject_gradient_bug)
    worst = max(outcomes, key=lambda o: o.error)
    failed = [o for o in outcomes if not o.error < GRAD_TOL]
    for o in failed:
        print(f"FAIL {o.case}: relative error {o.error:.3e} at {o.param}", file=sys.stderr)
    verdict = "pass" if not failed else "fail"
    print(f"grad-check {verdict}: {len(outcomes)} trials, max relative error {worst.error:.3e} ({worst.case})")
    return 0 if not failed else 1


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbalance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic treatment/control dataset")
    p.add_argument("--n-treat", type=int, required=True)
    p.add_argument("--n-con", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--outcome", choices=("linear", "quadratic"), default="linear")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run adversarial training on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="flat key = value file; flags override it")
    for f in fields(TrainConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar=f.name.upper(), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="recompute the balance report for a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="report path (default <run-dir>/eval_report.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-check", help="verify the equilibrium identities exactly")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--support-max", type=int, default=16)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-steps", type=int, default=100)
    p.add_argument("--out", help="also write the CSV table here")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("grad-check", help="backprop vs finite differences on random nets")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--inject-gradient-bug", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageFailure as exc:
        parser.print_usage(sys.stderr)
        print(f"cbalance: error: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"cbalance: {exc}", file=sys.stderr)
        return 1
