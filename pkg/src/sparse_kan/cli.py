"""Command-line front end: ``gen``, ``train``, ``eval``, ``experiment`` and ``report``.

Exit codes: 0 success, 1 a run failed, 2 invalid usage or input.
Outputs default to ``$SPARSE_KAN_OUT`` (or ``./runs``) when no directory is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import CONDITIONS, ConfigError, RunConfig, load_config, preset
from .data import DYNAMICAL, PROBLEMS, GenerationError, Problem, make_problem
from .evaluation import ReportRow, UndefinedMetricError, format_table, read_records, write_records
from .network import CheckpointError, GatedKan, NumericalError
from .spline import InvalidInputError
from .trainer import ConditionSpec, TrainingError, evaluate_condition, evaluate_network

log = logging.getLogger("sparse_kan")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ConfigError, InvalidInputError, FileNotFoundError, CheckpointError, UndefinedMetricError)
RUN_ERRORS = (TrainingError, NumericalError, GenerationError)
PHI_SAMPLES = 101


def default_out() -> Path:
    return Path(os.environ.get("SPARSE_KAN_OUT", "runs"))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_params(items: list[str] | None) -> dict:
    """``key=value`` pairs; values are parsed as JSON when possible."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def load_problem(cfg: RunConfig) -> Problem:
    if cfg.data_dir:
        prob = Problem.load(cfg.data_dir, name=cfg.problem)
        prov = Path(cfg.data_dir) / "provenance.json"
        if prov.exists() and json.loads(prov.read_text()).get("kind") == DYNAMICAL:
            prob.kind = DYNAMICAL
        return prob
    return make_problem(cfg.problem, seed=cfg.data_seed, csv_path=cfg.csv, **cfg.problem_params)


# -- gen ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    params = _parse_params(args.param)
    prob = make_problem(args.problem, seed=args.seed, csv_path=args.csv, **params)
    out = Path(args.out) if args.out else default_out() / "data" / f"{args.problem}-s{args.seed}"
    try:
        prob.save(out)
    except OSError as exc:
        raise ConfigError(f"cannot write to {out}: {exc}") from exc
    prov = {"generator": args.problem, "params": params, "seed": args.seed, "kind": prob.kind,
            "n_train": len(prob.train_x), "n_test": len(prob.test_x)}
    if args.csv:
        prov["source_csv"] = str(args.csv)
    prov["config_hash"] = RunConfig(args.problem, [1, 1], problem_params=params, data_seed=args.seed).hash()
    _write_json(out / "provenance.json", prov)
    print(out)
    return EXIT_OK


# -- train ----------------------------------------------------------------------

def _train_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else preset(args.problem)
    if args.problem and args.problem != cfg.problem:
        cfg = replace(cfg, problem=args.problem)
    if args.data:
        cfg.data_dir = args.data
    if args.csv:
        cfg.csv = args.csv
    if args.widths:
        cfg.widths = [int(w) for w in args.widths.split(",")]
    if args.gate_init is not None:
        cfg.gate_init_logit = args.gate_init
    if args.horizon is not None:
        cfg.horizon = args.horizon or None
    overrides = {k: v for k, v in {
        "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr,
        "warmup_epochs": args.warmup, "fc_warmup_epochs": args.fc_warmup,
        "grid_update_count": args.grid_updates, "early_stop": args.early_stop,
    }.items() if v is not None}
    if overrides:
        cfg.train = replace(cfg.train, **{"patience": None, **overrides})
    cfg.train = replace(cfg.train, seed=args.seed)
    return cfg.validate()


def run_cell(cfg: RunConfig, condition: str, beta: float | None, seed: int, cell_dir: Path) -> ReportRow:
    """Train and score one cell, writing its checkpoint, history and record into ``cell_dir``."""
    cell_dir.mkdir(parents=True, exist_ok=True)
    chash = cfg.hash()
    spec = ConditionSpec.from_name(condition, beta or 0.0, cfg.gate_init_logit)
    tcfg = replace(cfg.train, seed=seed)
    try:
        prob = load_problem(cfg)
        row, net, _ = evaluate_condition(
            spec, prob, tcfg, cfg.widths, horizon=cfg.horizon,
            history_path=cell_dir / "history.jsonl", config_hash=chash, net_kwargs={"init": cfg.init})
        net.save(cell_dir / "checkpoint.json",
                 meta={"config_hash": chash, "problem": cfg.problem, "condition": condition, "beta": beta,
                       "seed": seed})
    except (*RUN_ERRORS, *USAGE_ERRORS) as exc:
        log.error("cell %s beta=%s seed=%s failed: %s", condition, beta, seed, exc)
        row = ReportRow(cfg.problem, condition, beta if condition in ("gates", "full") else None,
                        float("nan"), float("nan"), None, 0, None, float("nan"), 0, seed,
                        status="failed", config_hash=chash, error=f"{type(exc).__name__}: {exc}")
    _write_json(cell_dir / "record.json", asdict(row))
    return row


def cmd_train(args) -> int:
    cfg = _train_config(args)
    load_problem(cfg)  # fail on missing or malformed data before any training
    out = Path(args.out) if args.out else default_out() / "train" / f"{cfg.problem}-{args.condition}-s{args.seed}"
    if args.condition in ("gates", "full") and args.beta is None:
        beta = cfg.betas[0]
    else:
        beta = args.beta
    row = run_cell(cfg, args.condition, beta if args.condition in ("gates", "full") else None, args.seed, out)
    _write_json(out / "config.json", {"config": asdict(cfg), "config_hash": cfg.hash()})
    print(format_table([row]))
    if row.status != "ok":
        print(f"error: {row.error}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# -- eval -----------------------------------------------------------------------

def dump_activations(net: GatedKan, path: Path, samples: int = PHI_SAMPLES) -> int:
    """Write (x, phi(x)) over each open edge's grid domain; returns the number of edges written."""
    gates = net.threshold_gates()
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "source", "target", "fc", "x", "phi"])
        for l, layer in enumerate(net.layers):
            for i, j in zip(*np.nonzero(gates[l].edge > 0)):
                act = net.edge_activation(l, int(i), int(j))
                xs = np.linspace(act.grid.domain_lo, act.grid.domain_hi, samples)
                for x, y in zip(xs, act(xs)):
                    w.writerow([l, int(i), int(j), int(not layer.trunk[i, j]), repr(float(x)), repr(float(y))])
                n += 1
    return n


def cmd_eval(args) -> int:
    net = GatedKan.load(args.checkpoint)
    if args.data:
        prob = load_problem(RunConfig(args.problem or "anecdote", [1, 1], data_dir=args.data))
    elif args.problem:
        prob = make_problem(args.problem, seed=args.data_seed, csv_path=args.csv, **_parse_params(args.param))
    else:
        raise ConfigError("eval needs --data or --problem")
    if args.multistep and prob.kind != DYNAMICAL:
        raise ConfigError(f"--multistep needs a dynamical problem; {prob.name!r} is {prob.kind}")
    expected = (net.shape.input_dim, net.shape.output_dim)
    actual = (prob.input_dim, prob.output_dim)
    if expected != actual:
        raise ConfigError(f"dimension mismatch: checkpoint expects (in, out) = {expected}, data has {actual}")
    metrics = evaluate_network(net, prob, args.multistep or None)
    meta = json.loads(Path(args.checkpoint).read_text()).get("meta", {})
    metrics["config_hash"] = meta.get("config_hash", "")
    print(json.dumps(metrics, indent=2, sort_keys=True))
    if args.out:
        _write_json(Path(args.out), metrics)
    if args.dump_phi:
        n = dump_activations(net, Path(args.dump_phi))
        log.info("wrote %d activation curves to %s", n, args.dump_phi)
    return EXIT_OK


# -- experiment -------------------------------------------------------------------

def _cell_name(condition: str, beta: float | None, seed: int) -> str:
    return f"{condition}" + (f"-b{beta:g}" if beta is not None else "") + f"-s{seed}"


def _finished(cell_dir: Path, chash: str) -> ReportRow | None:
    rec = cell_dir / "record.json"
    if not rec.exists():
        return None
    d = json.loads(rec.read_text())
    if d.get("status") != "ok" or d.get("config_hash") != chash:
        return None
    return ReportRow(**d)


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.seeds:
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
        cfg.validate()
    out = Path(args.out or cfg.out_dir or default_out() / Path(args.config).stem)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.hash()
    _write_json(out / "config.json", {"config": asdict(cfg), "config_hash": chash})
    load_problem(cfg)

    cells = cfg.cells()
    rows: dict[int, ReportRow] = {}
    todo = []
    for k, (cond, beta, seed) in enumerate(cells):
        done = None if args.force else _finished(out / "cells" / _cell_name(cond, beta, seed), chash)
        if done is not None:
            rows[k] = done
            log.info("skipping finished cell %s", _cell_name(cond, beta, seed))
        else:
            todo.append(k)

    def flush():
        ordered = [rows[k] for k in sorted(rows)]
        write_records(ordered, out / "report.jsonl")
        (out / "report.txt").write_text(format_table(ordered) + "\n")

    if args.jobs <= 1:
        for k in todo:
            cond, beta, seed = cells[k]
            log.info("running %s", _cell_name(cond, beta, seed))
            rows[k] = run_cell(cfg, cond, beta, seed, out / "cells" / _cell_name(cond, beta, seed))
            flush()
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(run_cell, cfg, *cells[k], out / "cells" / _cell_name(*cells[k])): k
                       for k in todo}
            for fut in as_completed(futures):
                rows[futures[fut]] = fut.result()
                flush()
    flush()
    ordered = [rows[k] for k in sorted(rows)]
    print(format_table(ordered))
    return EXIT_FAILED if any(r.status != "ok" for r in ordered) else EXIT_OK


# -- report -----------------------------------------------------------------------

def cmd_report(args) -> int:
    rows = []
    for src in args.paths:
        p = Path(src)
        if p.is_dir():
            if (p / "report.jsonl").exists():
                rows += read_records(p / "report.jsonl")
            else:
                rows += [ReportRow(**json.loads(r.read_text())) for r in sorted(p.glob("cells/*/record.json"))]
        elif p.exists():
            rows += read_records(p)
        else:
            raise FileNotFoundError(p)
    if args.format == "jsonl":
        for r in rows:
            print(json.dumps(asdict(r)))
    else:
        print(format_table(rows))
    return EXIT_FAILED if any(r.status != "ok" for r in rows) else EXIT_OK


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparse-kan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate or ingest a dataset as CSV")
    g.add_argument("--problem", required=True, choices=PROBLEMS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--csv", help="source CSV for the tabular datasets")
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="generator parameter (repeatable)")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one condition")
    t.add_argument("--config", help="TOML run config supplying defaults")
    t.add_argument("--problem", choices=PROBLEMS)
    t.add_argument("--data", help="directory written by `gen`")
    t.add_argument("--csv")
    t.add_argument("--condition", choices=CONDITIONS, default="full")
    t.add_argument("--beta", type=float)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--widths", help="comma-separated layer widths")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--warmup", type=int)
    t.add_argument("--fc-warmup", type=int)
    t.add_argument("--grid-updates", type=int)
    t.add_argument("--early-stop", action=argparse.BooleanOptionalAction, default=None)
    t.add_argument("--gate-init", type=float)
    t.add_argument("--horizon", type=int, help="multi-step horizon for dynamical problems (0 disables)")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--data")
    e.add_argument("--problem", choices=PROBLEMS)
    e.add_argument("--data-seed", type=int, default=0)
    e.add_argument("--csv")
    e.add_argument("--param", action="append", metavar="KEY=VALUE")
    e.add_argument("--multistep", type=int, default=0, metavar="STEPS")
    e.add_argument("--dump-phi", metavar="CSV", help="write (x, phi(x)) samples of every open edge")
    e.add_argument("--out", help="write metrics JSON here")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("experiment", help="run the condition grid of a config")
    x.add_argument("config")
    x.add_argument("--out")
    x.add_argument("--jobs", type=int, default=1)
    x.add_argument("--force", action="store_true", help="rerun cells that already have records")
    x.add_argument("--seeds", help="comma-separated seeds overriding the config")
    x.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="print the table for experiment outputs")
    r.add_argument("paths", nargs="+", help="experiment directories or report.jsonl files")
    r.add_argument("--format", choices=["table", "jsonl"], default="table")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train" and not (args.problem or args.config):
        parser.error("train needs --problem or --config")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
