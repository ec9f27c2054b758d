"""Command-line entry point: ``graphdive <command> [options]``."""
from __future__ import annotations

import argparse
import contextlib
import sys
import time
from pathlib import Path

from graphdive import io
from graphdive.checks import gradient_suite
from graphdive.config import ConfigError, TrainConfig, load_config, parse_float_list, parse_int_list, parse_kv
from graphdive.synth import SynthSpec, synth_generate
from graphdive.training import TrainingError, evaluate, expert_usage, sweep, train

GRADCHECK_TOL = 1e-4


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled

    @contextlib.contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            if self.enabled:
                print(f"[time] {name}: {time.perf_counter() - t0:.3f}s", file=sys.stderr)


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="override the seed in the config or spec")
    p.add_argument("--threads", type=int, default=d if suppress else 1, help="parallel workers for sweeps")
    p.add_argument("--time", action="store_true", default=d if suppress else False, help="print wall-clock per phase")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphdive", description=__doc__)
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        return p

    p = command("synth", "generate the synthetic imbalanced benchmark")
    p.add_argument("--spec", required=True, help="key = value generator spec")
    p.add_argument("--out", required=True)

    p = command("train", "train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")

    p = command("eval", "write a per-task evaluation report")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test", "all"))
    p.add_argument("--out", required=True)

    p = command("sweep", "grid over expert count and KL weight")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--grid-m", help="e.g. 2..8")
    p.add_argument("--grid-lambda", help="e.g. 0.01,0.1,1")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="AUC-vs-M table (default: <out stem>.curve.tsv)")

    p = command("analyze-experts", "mean gate weight per class and expert")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test", "all"))
    p.add_argument("--out", required=True)

    p = command("gradcheck", "compare tape gradients with central differences")
    p.add_argument("--config", help="key = value overrides (d, K, seeds, tau, ...)")
    return parser


def _seeded(cfg: TrainConfig, seed: int | None) -> TrainConfig:
    return cfg if seed is None else cfg.replace(seed=seed, seeds=())


def _cmd_synth(args, clock) -> int:
    spec = SynthSpec.load(args.spec)
    if args.seed is not None:
        spec = SynthSpec.from_dict({**parse_kv(Path(args.spec).read_text()), "seed": args.seed})
    with clock.phase("generate"):
        ds = synth_generate(spec)
    with clock.phase("write"):
        io.save_dataset(ds, args.out)
    print(f"wrote {len(ds)} graphs ({int(ds.labels.values[:, 0].sum())} positive) to {args.out}")
    return 0


def _cmd_train(args, clock) -> int:
    cfg = _seeded(load_config(args.config), args.seed)
    with clock.phase("load"):
        ds = io.load_dataset(args.data)
        resume = io.load_checkpoint(args.resume) if args.resume else None

    def report(epoch, loss, auc):
        print(f"epoch {epoch + 1}/{cfg.epochs}\tloss {loss:.6f}\tvalid_auc {auc:.4f}", flush=True)

    with clock.phase("train"):
        ckpt, hist = train(cfg, ds, resume=resume, on_epoch=report)
    with clock.phase("write"):
        io.save_checkpoint(ckpt, args.out)
    print(f"best epoch {hist.best_epoch + 1} valid_auc {hist.best_valid_auc:.4f}; checkpoint {args.out}")
    return 0


def _cmd_eval(args, clock) -> int:
    with clock.phase("load"):
        ds = io.load_dataset(args.data)
        ckpt = io.load_checkpoint(args.ckpt)
    with clock.phase("evaluate"):
        text = evaluate(ckpt, ds, args.split).to_tsv()
    io.atomic_write(args.out, text)
    sys.stdout.write(text)
    return 0


def _cmd_sweep(args, clock) -> int:
    cfg = _seeded(load_config(args.config), args.seed)
    if args.grid_m:
        cfg = cfg.replace(grid_m=parse_int_list(args.grid_m))
    if args.grid_lambda:
        cfg = cfg.replace(grid_lambda=parse_float_list(args.grid_lambda))
    ds = io.load_dataset(args.data)
    with clock.phase("sweep"):
        res = sweep(cfg, ds, workers=max(1, args.threads))
    out = Path(args.out)
    curve = Path(args.curve) if args.curve else out.with_name(out.stem + ".curve.tsv")
    io.atomic_write(out, res.to_tsv())
    io.atomic_write(curve, res.curve_tsv())
    sys.stdout.write(res.to_tsv())
    print(f"curve written to {curve}")
    return 0


def _cmd_analyze(args, clock) -> int:
    ds = io.load_dataset(args.data)
    ckpt = io.load_checkpoint(args.ckpt)
    with clock.phase("analyze"):
        usage = expert_usage(ds, ckpt, args.split)
    io.atomic_write(args.out, usage.to_tsv())
    for t in range(len(usage.weights)):
        tops = [usage.top_expert(t, c) if usage.counts[t][c] else "-" for c in (0, 1)]
        print(f"task {t}: top expert class0={tops[0]} class1={tops[1]} specialized={usage.specialized(t)}")
    return 0


def _cmd_gradcheck(args, clock) -> int:
    overrides = parse_kv(Path(args.config).read_text()) if args.config else {}
    base = TrainConfig.from_dict({"d": 8, "K": 2, **overrides})
    seeds = (args.seed,) if args.seed is not None else base.seed_list
    with clock.phase("gradcheck"):
        results = gradient_suite(seeds=seeds, base=base)
    worst = max(r.error for r in results)
    for r in results:
        flag = "ok" if r.error < GRADCHECK_TOL else "FAIL"
        print(f"{flag}\t{r.error:.3e}\t{r.label()}")
    print(f"max relative error {worst:.3e} over {len(results)} checks (tolerance {GRADCHECK_TOL:g})")
    return 0 if worst < GRADCHECK_TOL else 1


COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "analyze-experts": _cmd_analyze,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    clock = _Clock(args.time)
    try:
        with clock.phase("total"):
            return COMMANDS[args.command](args, clock)
    except (ConfigError, TrainingError, ValueError, OSError) as exc:
        print(f"graphdive: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
