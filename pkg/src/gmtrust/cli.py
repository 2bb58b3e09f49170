"""Command-line pipeline: simulate, snapshot, train, evaluate, select."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import decision
from .config import RunConfig, load_config
from .model import GmModel
from .simnet import generate_network, read_dataset, simulate, write_dataset
from .snapshot import WindowSpec, build_snapshots, write_snapshots
from .spatial import HistoryGraph
from .tensor import Tensor
from .trainer import (EVAL_HEADER, METRICS_HEADER, evaluate_slots, label_pairs, model_predictor, model_scorer,
                      prepare, split_pairs, train, write_csv)

log = logging.getLogger("gmtrust")


class CliError(Exception):
    pass


def _window(cfg: RunConfig, dataset) -> WindowSpec:
    return WindowSpec(cfg.window.n_slots, dataset.horizon_s)


def _load_dataset(path):
    if not Path(path).is_file():
        raise CliError(f"dataset file not found: {path}")
    return read_dataset(path)


def _load_model(cfg: RunConfig, path, n_devices: int) -> GmModel:
    if not Path(path).is_file():
        raise CliError(f"model file not found: {path}")
    table = Tensor(np.zeros((n_devices, cfg.model.d_a)))
    model = GmModel.create(cfg.model, table, cfg.window.n_slots, seed=0)
    try:
        model.load(path)
    except ValueError as exc:
        raise CliError(f"{path}: model does not match the dataset/config ({exc})") from exc
    return model


def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = cfg.sim
    n_devices = args.devices if args.devices is not None else sim.n_devices
    n_tasks = args.tasks if args.tasks is not None else sim.n_tasks
    ds = simulate(generate_network(n_devices, cfg.seed, sim), n_tasks, sim)
    write_dataset(args.out, ds)
    print(f"wrote {len(ds.records)} records for {ds.n_devices} devices (seed {ds.seed}) to {args.out}")
    return 0


def cmd_snapshot(args, cfg: RunConfig) -> int:
    ds = _load_dataset(args.data)
    snaps = build_snapshots(ds, _window(cfg, ds), cfg.alpha.alpha1, cfg.alpha.alpha2)
    write_snapshots(args.out, snaps)
    print(f"wrote {len(snaps)} snapshots ({sum(len(s.edges) for s in snaps)} edges) to {args.out}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    ds = _load_dataset(args.data)
    tcfg = replace(cfg.train, seed=cfg.seed)
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs_max=args.epochs)
    n2v = replace(cfg.node2vec, dim=cfg.model.d_a, seed=cfg.seed)
    res = train(ds, _window(cfg, ds), tcfg, cfg.model, n2v, cfg.alpha.alpha1, cfg.alpha.alpha2)
    res.model.save(args.out_model)
    write_csv(args.metrics, METRICS_HEADER, res.rows)
    print(f"selected {res.selected_epochs} epochs; test rmse {res.test.rmse:.6f} mae {res.test.mae:.6f}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    ds = _load_dataset(args.data)
    window = _window(cfg, ds)
    model = _load_model(cfg, args.model, ds.n_devices)
    snaps, _, last = prepare(ds, window, cfg.alpha.alpha1, cfg.alpha.alpha2)
    _, test_pairs = split_pairs(label_pairs(last, cfg.model.n_bins), cfg.train.test_frac, cfg.seed)
    rows = evaluate_slots(model_predictor(model, ds.n_devices), snaps, cfg.model.n_bins, test_pairs)
    write_csv(args.metrics, EVAL_HEADER, rows)
    overall = rows[-1]
    print(f"overall rmse {overall[3]:.6f} mae {overall[4]:.6f} over {overall[2]} pairs")
    return 0


def _parse_task(args) -> decision.TaskSpec:
    if args.task:
        try:
            size, density, deadline = (float(x) for x in args.task.split(","))
        except ValueError as exc:
            raise CliError(f"--task expects size_mb,density,deadline_s, got {args.task!r}") from exc
        return decision.TaskSpec.from_mb(size, density, deadline)
    density, deadline = decision.PRESETS[args.preset]
    if args.deadline is not None:
        deadline = args.deadline
    return decision.TaskSpec.from_mb(args.size_mb, density, deadline)


def cmd_select(args, cfg: RunConfig) -> int:
    ds = _load_dataset(args.data)
    if not 0 <= args.owner < ds.n_devices:
        raise CliError(f"unknown owner id {args.owner} (network has {ds.n_devices} devices)")
    task = _parse_task(args)
    window = _window(cfg, ds)
    model = _load_model(cfg, args.model, ds.n_devices)
    # Historical trust for the next window: the model sees every snapshot.
    snaps = build_snapshots(ds, window, cfg.alpha.alpha1, cfg.alpha.alpha2)
    graph = HistoryGraph.from_snapshots(snaps[1:], ds.n_devices, cfg.model.d_t)
    owner = ds.devices[args.owner]
    sel = decision.select_collaborator(owner, ds.devices, task, model_scorer(model, graph), cfg.channel)
    print(sel.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmtrust", description="Trust evaluation pipeline for collaborative devices.")
    p.add_argument("--config", help="JSON run configuration (defaults when omitted)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a collaboration-record dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--devices", type=int)
    s.add_argument("--tasks", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("snapshot", help="aggregate records into per-window trust graphs")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_snapshot)

    s = sub.add_parser("train", help="train the trust model with cross-validated early stopping")
    s.add_argument("--data", required=True)
    s.add_argument("--out-model", required=True)
    s.add_argument("--metrics", required=True)
    s.add_argument("--epochs", type=int, help="override epochs_max")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="per-slot RMSE/MAE of a trained model")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--metrics", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("select", help="pick a collaborator for a task")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--owner", type=int, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--task", help="size_mb,density,deadline_s")
    g.add_argument("--preset", choices=sorted(decision.PRESETS))
    s.add_argument("--size-mb", type=float, default=10.0, help="task size for --preset")
    s.add_argument("--deadline", type=float, help="deadline override for --preset")
    s.set_defaults(func=cmd_select)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        return args.func(args, cfg)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
