"""Command-line entry point: ``motvla collect|train|eval|bench``."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bench import VARIANTS, bench_forward_backward, write_bench
from .config import ConfigError, RunConfig, dump_config, load_config
from .data import EpisodeFormatError, NormStats, StaticEpisodeError, load_dataset
from .env import collect_demonstrations, episode_seeds, resolve_task
from .env.toy import ExpertFailure
from .evaluation import evaluate, write_report
from .model import CheckpointError, load_checkpoint
from .policy import ExpertPolicy, FlowPolicy, RandomPolicy, ZeroPolicy
from .tensor import NumericalError
from .training import TrainingAborted, train

EXIT_OK, EXIT_USER, EXIT_MISMATCH, EXIT_NUMERICAL = 0, 2, 3, 4


class UserError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> Path:
    """Record the config and a digest of every file under ``out``."""
    files = {
        str(p.relative_to(out)): {"bytes": p.stat().st_size, "sha256": _sha256(p)}
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name not in ("manifest.json", "config.txt")
    }
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    manifest = {"command": command, "config": cfg.to_dict(), "files": files, **(extra or {})}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _tasks(cfg: RunConfig):
    names = cfg.task_list()
    if not names:
        raise UserError("no tasks configured")
    try:
        return [resolve_task(n) for n in names]
    except (KeyError, ValueError) as exc:
        raise UserError(str(exc.args[0]) if exc.args else str(exc)) from None


def cmd_collect(cfg: RunConfig, out: Path) -> dict:
    tasks = _tasks(cfg)
    counts = {}
    for task in tasks:
        eps = collect_demonstrations(task, cfg.num_demos, cfg.seed, cfg.image_size, out_dir=out)
        counts[task.name] = {"requested": cfg.num_demos, "kept": len(eps),
                             "seeds": episode_seeds(cfg.seed, cfg.num_demos)}
    write_manifest(out, "collect", cfg, {"episodes": counts})
    return counts


def cmd_train(cfg: RunConfig, out: Path, resume: Path | None = None):
    data = Path(cfg.data_dir)
    if not data.is_dir():
        raise UserError(f"data directory {data} does not exist; run 'motvla collect' first")
    wanted = {t.name for t in _tasks(cfg)}
    episodes = [ep for ep in load_dataset(data) if ep.task_id in wanted]
    if not episodes:
        raise UserError(f"no episodes for tasks {sorted(wanted)} under {data}")
    result = train(episodes, cfg, out, resume=resume)
    write_manifest(out, "train", cfg, {"episodes": len(episodes), "final_step": result.step,
                                        "resumed_from": str(resume) if resume else None})
    return result


def build_policy(cfg: RunConfig, checkpoint: Path | None):
    if cfg.policy == "expert":
        return ExpertPolicy()
    if cfg.policy == "zero":
        return ZeroPolicy()
    if cfg.policy == "random":
        return RandomPolicy(cfg.seed)
    if checkpoint is None:
        raise UserError("policy 'model' needs --checkpoint")
    params, _, extra = load_checkpoint(checkpoint, expect=cfg.model())
    if "norm.state_mean" not in extra:
        raise CheckpointError(f"checkpoint {checkpoint} carries no normalisation statistics")
    return FlowPolicy(params, NormStats.from_arrays(extra), cfg.horizon, cfg.euler_steps, cfg.seed)


def cmd_eval(cfg: RunConfig, out: Path, checkpoint: Path | None = None):
    tasks = _tasks(cfg)
    policy = build_policy(cfg, checkpoint)
    seeds = list(range(cfg.eval_seed, cfg.eval_seed + cfg.trials_per_task))
    report = evaluate(policy, tasks, seeds, cfg.image_size, cfg.window)
    write_report(report, out)
    write_manifest(out, "eval", cfg, {"checkpoint": str(checkpoint) if checkpoint else None,
                                       "SR": report.sr, "PS": report.ps})
    return report


def cmd_bench(cfg: RunConfig, out: Path):
    variants = VARIANTS if cfg.bench_variant == "both" else (cfg.bench_variant,)
    report = bench_forward_backward(cfg.model(), cfg.bench_batch_size, cfg.bench_warmup, cfg.bench_iters,
                                    variants, cfg.bench_replicas, cfg.seed)
    write_bench(report, out)
    # timings vary run to run, so the manifest skips file digests here
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps({"command": "bench", "config": cfg.to_dict(),
                                                   "files": ["bench.json", "bench.txt"]},
                                                  indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motvla", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("collect", "record scripted-expert demonstrations"),
                            ("train", "train the policy on collected demonstrations"),
                            ("eval", "run seeded trials and write SR/PS reports"),
                            ("bench", "time training steps per attention variant")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, help="output directory (default: config out_dir)")
        p.add_argument("--data-fraction", type=float)
        p.add_argument("--checkpoint", type=Path, help="eval: model to load; train: checkpoint to resume")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if overrides:
        cfg = cfg.with_overrides(overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.data_fraction is not None:
        cfg = replace(cfg, data_fraction=args.data_fraction)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = args.out or Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "collect":
            counts = cmd_collect(cfg, out)
            for task, c in counts.items():
                print(f"{task}: kept {c['kept']}/{c['requested']} episodes -> {out / task}")
        elif args.command == "train":
            result = cmd_train(cfg, out, args.checkpoint)
            last = result.log[-1] if result.log else {}
            print(f"trained to step {result.step}; last logged {last}; checkpoint {result.final_path}")
        elif args.command == "eval":
            report = cmd_eval(cfg, out, args.checkpoint)
            for row in report.rows:
                print(f"{row.task_id}: SR {row.sr:.3f} PS {row.ps:.3f} over {row.n_trials} trials")
            print(f"overall: SR {report.sr:.3f} PS {report.ps:.3f}")
        else:
            print(cmd_bench(cfg, out).to_table(), end="")
    except CheckpointError as exc:
        print(f"motvla: checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (TrainingAborted, NumericalError) as exc:
        print(f"motvla: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UserError, ConfigError, ExpertFailure, StaticEpisodeError, EpisodeFormatError,
            FileNotFoundError) as exc:
        print(f"motvla: {exc}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
