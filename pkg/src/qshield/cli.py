"""Command-line interface.

Subcommands: train, eval, sweep, inspect, replay-trace. Configuration comes
from an optional JSON file plus repeatable --set section.key=value overrides;
all randomness hangs off the single --seed flag. Any invariant violation
surfaces as a nonzero exit.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, config_from_dict, config_to_dict, load_config
from .counts import CountIndex
from .evaluation import (POLICIES, POLICY_BASELINE, EvalReport, PolicyRunner,
                         evaluate, inspect_uncertainty, sweep, sweep_csv)
from .network import EnsembleNet
from .training import EVAL_EPISODE_STREAM, RunManifest, Trainer, episode_seed


def _apply_overrides(cfg_dict: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not section.key=value")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg_dict.setdefault(section, {})
        if "." in key:  # nested, e.g. scenario.geometry.lane_width
            head, tail = key.split(".", 1)
            node = node.setdefault(head, {})
            key = tail
        node[key] = value
    return cfg_dict


def _build_config(args) -> Config:
    if getattr(args, "config", None):
        cfg_dict = config_to_dict(load_config(args.config))
    else:
        cfg_dict = config_to_dict(Config())
    cfg_dict = _apply_overrides(cfg_dict, getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        cfg_dict["scenario"]["seed"] = args.seed
    return config_from_dict(cfg_dict)


def _load_bundle(path: str) -> tuple[Config, EnsembleNet, CountIndex, Trainer]:
    trainer = Trainer.load(path)
    return trainer.cfg, trainer.ensemble, trainer.counts, trainer


def _check_config_match(cfg: Config, args) -> None:
    if not getattr(args, "config", None):
        return
    theirs = config_to_dict(load_config(args.config))
    mine = config_to_dict(cfg)
    for section in ("scenario", "planner", "train"):
        if theirs[section] != mine[section]:
            raise SystemExit(
                f"config {section} section disagrees with the checkpoint; "
                "refusing to evaluate a model under a different world")


def cmd_train(args) -> int:
    if args.resume:
        trainer = Trainer.load(args.resume)
    else:
        cfg = _build_config(args)
        trainer = Trainer(cfg, master_seed=cfg.scenario.seed)

    def log(record: dict) -> None:
        if not args.quiet:
            print(json.dumps(record, sort_keys=True))

    manifest = trainer.run(args.out, total_steps=args.total_steps,
                           checkpoint_every=args.checkpoint_every, log=log)
    print(f"wrote {len(manifest.checkpoints)} checkpoints to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if args.policy != POLICY_BASELINE and not args.checkpoint:
        raise SystemExit(f"policy {args.policy!r} requires --checkpoint")
    if args.checkpoint:
        cfg, ensemble, counts, _ = _load_bundle(args.checkpoint)
        _check_config_match(cfg, args)
    else:
        cfg, ensemble, counts = _build_config(args), None, None
    if args.p_thres is not None:
        cfg.gate.p_thres = args.p_thres
    if args.n_thres is not None:
        cfg.gate.n_thres = args.n_thres
    seed = args.seed if args.seed is not None else cfg.scenario.seed
    sink = None
    log_fh = None
    if args.decision_log:
        log_fh = open(args.decision_log, "w")

        def sink(record: dict) -> None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

    try:
        report = evaluate(cfg, args.policy, seed, args.episodes,
                          ensemble=ensemble, counts=counts,
                          gate_cfg=cfg.gate, decision_sink=sink)
    finally:
        if log_fh is not None:
            log_fh.close()
    if args.out:
        report.to_json(args.out)
    print(EvalReport.CSV_HEADER)
    print(report.csv_row())
    return 0


def cmd_sweep(args) -> int:
    cfg, ensemble, counts, _ = _load_bundle(args.checkpoint)
    _check_config_match(cfg, args)
    seed = args.seed if args.seed is not None else cfg.scenario.seed
    values = [float(v) for v in args.values.split(",")]
    rows = sweep(cfg, args.parameter, values, seed, args.episodes,
                 ensemble, counts)
    text = sweep_csv(args.parameter, rows)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_inspect(args) -> int:
    cfg, ensemble, counts, trainer = _load_bundle(args.checkpoint)
    buf = trainer.buffer
    probes = []
    for slot in range(len(buf)):
        if len(probes) >= args.probes:
            break
        if buf.terminals[slot]:
            probes.append((buf.states[slot], int(buf.actions[slot]),
                           float(buf.rewards[slot])))
    rows = inspect_uncertainty(ensemble, counts, probes)
    top, bottom = counts.extremes(args.count_extremes)
    out = {"terminal_probes": rows,
           "most_visited": [{"bins": bins, "count": c} for bins, c in top],
           "least_visited": [{"bins": bins, "count": c} for bins, c in bottom]}
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_replay_trace(args) -> int:
    if args.policy != POLICY_BASELINE and not args.checkpoint:
        raise SystemExit(f"policy {args.policy!r} requires --checkpoint")
    if args.checkpoint:
        cfg, ensemble, counts, _ = _load_bundle(args.checkpoint)
    else:
        cfg, ensemble, counts = _build_config(args), None, None
    seed = args.seed if args.seed is not None else cfg.scenario.seed
    runner = PolicyRunner(cfg, ensemble, counts, cfg.gate)
    result = runner.run_episode(
        args.policy, episode_seed(seed, EVAL_EPISODE_STREAM, args.episode),
        collect_trace=True)
    lines = [json.dumps(row, sort_keys=True) for row in result["trace"]]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    print(f"# terminal={result['terminal']} steps={result['steps']}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qshield",
        description="Train and evaluate an uncertainty-gated driving policy "
                    "in a seeded T-junction simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("--config", help="JSON config file")
            p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                           help="override one config value (repeatable)")
        p.add_argument("--seed", type=int, help="master seed")

    p = sub.add_parser("train", help="run a training session with checkpoints")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--total-steps", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy over seeded episodes")
    common(p)
    p.add_argument("--policy", choices=POLICIES, required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--p-thres", type=float, default=None)
    p.add_argument("--n-thres", type=int, default=None)
    p.add_argument("--out", help="write the report as JSON here")
    p.add_argument("--decision-log", help="write per-step gate records (JSONL)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate across gate-threshold values")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--parameter", choices=("p_thres", "n_thres"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--out", help="write the CSV here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="probe head spread and visit counts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--probes", type=int, default=20,
                   help="terminal-state probes to report")
    p.add_argument("--count-extremes", type=int, default=10,
                   help="most/least visited boxes to list")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("replay-trace", help="dump one episode as JSONL records")
    common(p)
    p.add_argument("--policy", choices=POLICIES, default=POLICY_BASELINE)
    p.add_argument("--checkpoint")
    p.add_argument("--episode", type=int, default=0,
                   help="episode index within the seed stream")
    p.add_argument("--out", help="write the trace here instead of stdout")
    p.set_defaults(func=cmd_replay_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
