"""Command line: train, eval, trace and inspect-stg over a run directory.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data or checkpoint.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from . import checkpoint
from .artifacts import load_stack, read_manifest, register_policy
from .checkpoint import CheckpointError
from .config import RunConfig, dump_config, load_config, parse_config
from .env import ConfigError
from .evaluation import VARIANTS, success_rate, trace_plan, variant_config
from .stg import format_table, from_kv, to_kv
from .tasks import TaskParseError, parse_task, task_set
from .trainer import DataCorruptionError, StageTrainer

log = logging.getLogger("hrlstg")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA = 0, 2, 3, 4
SNAPSHOT = "config.ini"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def metrics_path(run_dir: Path, stage: int) -> Path:
    return run_dir / f"metrics_k{stage}.csv"


def state_path(run_dir: Path, stage: int) -> Path:
    return run_dir / f"train_k{stage}.state"


def stg_paths(run_dir: Path, stage: int) -> tuple[Path, Path]:
    return run_dir / f"stg_k{stage}.txt", run_dir / f"stg_k{stage}.kv"


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.stage is not None:
        over["stage"] = args.stage
    if args.run_dir is not None:
        over["run_dir"] = args.run_dir
    return replace(cfg, **over) if over else cfg


def _save_state(trainer: StageTrainer, path: Path) -> None:
    arrays, meta = trainer.state_arrays()
    checkpoint.save(path, arrays, meta)


def _truncate_metrics(path: Path, episodes: int) -> None:
    """Drop metrics rows at or past ``episodes`` so a resumed run continues without duplicates."""
    lines = path.read_text().splitlines(keepends=True)
    kept = []
    for line in lines:
        if line.startswith("#") or line.startswith("episode_id"):
            kept.append(line)
        elif int(line.split(",", 1)[0]) < episodes:
            kept.append(line)
    path.write_text("".join(kept))


def _write_stg(run_dir: Path, stage: int, trainer: StageTrainer) -> None:
    if trainer.stg is None:
        return
    text_path, kv_path = stg_paths(run_dir, stage)
    header = f"hrlstg {__version__} stage {stage}"
    text_path.write_text(f"# {header}\n" + format_table(trainer.stg))
    kv_path.write_text(to_kv(trainer.stg, header=header))


def _train_one(cfg: RunConfig, stage: int, run_dir: Path, resume: Optional[Path], stop_after: Optional[int]) -> bool:
    """Train one stage; return False when stopped early by ``stop_after``."""
    base = None
    if stage > 0:
        try:
            base = load_stack(run_dir, stage - 1)
        except CheckpointError as exc:
            raise DataError(f"stage {stage} needs the stage-{stage - 1} checkpoint(s) first "
                            f"(train them or pass --bootstrap): {exc}") from exc
    mpath = metrics_path(run_dir, stage)
    trainer = StageTrainer(stage, cfg.env_for(stage), cfg.train_for(stage), cfg.seed, base)
    if resume is not None:
        arrays, meta = checkpoint.load(resume)
        try:
            trainer.load_state_arrays(arrays, meta)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"{resume}: {exc}") from exc
        if mpath.exists():
            _truncate_metrics(mpath, trainer.episode)
        trainer._header_written = True
        fh = open(mpath, "a", newline="")
    else:
        fh = open(mpath, "w", newline="")
    spath = state_path(run_dir, stage)
    with fh:
        trainer.metrics = fh
        trainer.write_header()
        finished = True
        while not trainer.done():
            if stop_after is not None and trainer.episode >= stop_after:
                finished = False
                break
            target = trainer.episode + cfg.checkpoint_every - trainer.episode % cfg.checkpoint_every
            if stop_after is not None:
                target = min(target, stop_after)
            trainer.train(stop_after_episodes=target)
            fh.flush()
            _save_state(trainer, spath)
    _save_state(trainer, spath)
    _write_stg(run_dir, stage, trainer)
    if finished:
        register_policy(run_dir, stage, trainer.net, trainer.stg)
        log.info("stage %d finished after %d episodes and %d updates", stage, trainer.episode, trainer.i)
    return finished


def cmd_train(args) -> int:
    cfg = _run_config(args)
    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / SNAPSHOT).write_text(f"# hrlstg {__version__}\n" + dump_config(cfg))
    stages = list(range(cfg.stage + 1)) if args.bootstrap else [cfg.stage]
    if args.resume is not None and not Path(args.resume).exists():
        raise CheckpointError(f"resume checkpoint {args.resume} does not exist")
    for stage in stages:
        resume = None
        if args.resume is not None:
            _, meta = checkpoint.load(args.resume)
            if meta.get("stage") == stage:
                resume = Path(args.resume)
            elif meta.get("stage", -1) > stage:
                continue
        if not _train_one(cfg, stage, run_dir, resume, args.stop_after):
            print(f"stopped after {args.stop_after} episodes; resume with --resume {state_path(run_dir, stage)}")
            return EXIT_OK
    return EXIT_OK


def _snapshot(run_dir: Path) -> RunConfig:
    path = run_dir / SNAPSHOT
    if not path.exists():
        raise DataError(f"no config snapshot in {run_dir}")
    return load_config(path)


def _stack_and_env(args):
    run_dir = Path(args.run_dir)
    cfg = _snapshot(run_dir)
    stack = load_stack(run_dir, args.stage)
    return cfg, stack, cfg.env_for(stack.nets[-1].stage)


def cmd_eval(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    variants = args.variant or None
    for v in variants or []:
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r}; valid variants: {', '.join(VARIANTS)}")
    cfg, stack, env = _stack_and_env(args)
    variants = variants or list(cfg.eval_variants)
    seeds = (args.seed,) if args.seed is not None else cfg.eval_seeds
    tasks = [t for t in stack.top_tasks if t.item in env.colors_in_play]
    if args.task:
        tasks = [parse_task(t) for t in args.task]
    out_dir = Path(args.run_dir)
    for variant in variants:
        report = success_rate(stack, tasks, variant_config(env, variant), n=args.n, seeds=seeds, variant=variant)
        (out_dir / f"eval_{variant}.csv").write_text(f"# hrlstg {__version__}\n" + report.to_csv())
        table = report.table()
        (out_dir / f"eval_{variant}.txt").write_text(f"# hrlstg {__version__}\n" + table)
        print(table)
    return EXIT_OK


def cmd_trace(args) -> int:
    task = parse_task(args.task)
    cfg, stack, env = _stack_and_env(args)
    if task not in stack.top_tasks:
        raise UsageError(f"{task} is not solvable by the stage-{stack.top} stack")
    plan = trace_plan(stack, task, env, args.seed, maps=args.maps)
    text = f"# hrlstg {__version__} seed={args.seed}\n" + plan.render(maps=args.maps)
    out = Path(args.out) if args.out else Path(args.run_dir) / f"trace_{str(task).replace(' ', '_')}_s{args.seed}.txt"
    out.write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_inspect_stg(args) -> int:
    run_dir = Path(args.run_dir)
    stage = args.stage
    if stage is None:
        policies = read_manifest(run_dir)["policies"]
        candidates = [int(k) for k in policies if int(k) > 0]
        candidates += [int(p.stem[len("stg_k"):]) for p in run_dir.glob("stg_k*.kv")]
        if not candidates:
            raise DataError(f"no STG export in {run_dir}")
        stage = max(candidates)
    text_path, kv_path = stg_paths(run_dir, stage)
    if not kv_path.exists():
        raise DataError(f"no STG export for stage {stage} in {run_dir} (expected {kv_path.name})")
    table = from_kv(kv_path.read_text())
    goals = [parse_task(t) for t in args.task] if args.task else None
    if goals:
        bad = [g for g in goals if g not in task_set(stage)]
        if bad:
            raise UsageError(f"{bad[0]} is not a stage-{stage} task")
    if args.format == "kv":
        print(to_kv(table, goals, header=f"hrlstg {__version__} stage {stage}"), end="")
    else:
        print(format_table(table, goals), end="")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hrlstg", description="Train and inspect hierarchical multi-task policies.")
    p.add_argument("--version", action="version", version=f"hrlstg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one stage, or every stage up to --stage with --bootstrap")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--stage", type=int)
    t.add_argument("--run-dir")
    t.add_argument("--bootstrap", action="store_true")
    t.add_argument("--resume", help="training-state checkpoint to continue from")
    t.add_argument("--stop-after", type=int, metavar="EPISODES",
                   help="stop (resumably) once this many episodes of the stage have run")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy success rates per environment variant")
    e.add_argument("--run-dir", required=True)
    e.add_argument("--stage", type=int)
    e.add_argument("--variant", action="append", help=f"one of {', '.join(VARIANTS)}; repeatable")
    e.add_argument("--n", type=int, default=200)
    e.add_argument("--seed", type=int)
    e.add_argument("--task", action="append")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("trace", help="record one greedy episode as a plan tree")
    r.add_argument("task")
    r.add_argument("--run-dir", required=True)
    r.add_argument("--stage", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--maps", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_trace)

    s = sub.add_parser("inspect-stg", help="print the learned grammar tables")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--stage", type=int)
    s.add_argument("--task", action="append")
    s.add_argument("--format", choices=("text", "kv"), default="text")
    s.set_defaults(func=cmd_inspect_stg)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, TaskParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, DataError, DataCorruptionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
