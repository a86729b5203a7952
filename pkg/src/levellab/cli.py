"""Command-line entry points.

Subcommands: gen-dataset, pretrain-vae, train, evaluate, report. Every
run persists its full configuration, so any artifact is reproducible
from config.json plus the master seed. Input datasets are only ever
read.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import DATASET_PRESETS, PRESETS, build_config
from .designers import METHODS
from .driver import train as run_train
from .env import load_levels, save_levels
from .wfc import GenConfig, generate_dataset


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return parse


def cmd_gen_dataset(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset = DATASET_PRESETS[args.preset]
    n = args.n or preset["train_n"]
    test_n = args.test_n or preset["test_n"]
    size = args.size or preset["size"]

    base = dict(size=size, moss_density=args.moss_density,
                lava_density=args.lava_density)
    train_cfg = GenConfig(seed=args.seed, **base)
    save_levels(out / "train.json", generate_dataset(train_cfg, n))
    print(f"train.json: {n} levels, size {size}")

    test_cfg = GenConfig(seed=args.seed + 1, **base)
    save_levels(out / "test.json", generate_dataset(test_cfg, test_n))
    print(f"test.json: {test_n} levels, size {size}")

    # held-out base patterns with sparser moss and triple lava
    from .wfc import EDGE_PATTERN_NAMES, get_pattern

    fitting = tuple(n for n in EDGE_PATTERN_NAMES
                    if max(get_pattern(n).template_shape) <= size)
    skipped = sorted(set(EDGE_PATTERN_NAMES) - set(fitting))
    if skipped:
        print(f"edge patterns too large for size {size}, skipped: "
              f"{', '.join(skipped)}")
    if not fitting:
        raise ValueError(f"no edge pattern fits size {size}")
    edge_cfg = GenConfig(
        seed=args.seed + 2, size=size, patterns=fitting,
        moss_density=args.moss_density / 3.0,
        lava_density=min(args.lava_density * 3.0, 0.9))
    save_levels(out / "edge.json", generate_dataset(edge_cfg, test_n))
    print(f"edge.json: {test_n} levels, {len(fitting)} held-out patterns")

    large_cfg = GenConfig(seed=args.seed + 3, size=size * args.area_scale_root,
                          moss_density=args.moss_density,
                          lava_density=args.lava_density)
    save_levels(out / "large.json", generate_dataset(large_cfg, test_n))
    print(f"large.json: {test_n} levels, size {size * args.area_scale_root} "
          f"({args.area_scale_root ** 2}x area)")
    return 0


def cmd_pretrain_vae(args) -> int:
    from .vae import VaeConfig, desk_vae_config, pretrain, save_vae

    levels = load_levels(args.levels)
    overrides = {}
    if args.epochs:
        overrides["epochs"] = args.epochs
    if args.latent:
        overrides["latent_dim"] = args.latent
    if args.preset == "desk":
        cfg = desk_vae_config(**overrides)
    else:
        cfg = VaeConfig(**overrides)
    model, report = pretrain(levels, cfg, seed=args.seed)
    save_vae(args.out, model)
    summary = {k: report[k] for k in
               ("final_loss", "recon_solvable_rate", "interp_solvable_rate")}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_train(args) -> int:
    flags = {
        "method": args.method,
        "seed": args.seed,
        "total_updates": args.updates,
        "workers": args.workers,
        "smi_sign": args.smi_sign,
        "dump_buffer_every": args.dump_buffer_every,
        "scoring": args.scoring,
        "out_dir": args.out_dir,
    }
    cfg = build_config(args.preset, args.config, flags)

    train_levels = load_levels(args.levels)
    test_levels = load_levels(args.test_levels) if args.test_levels else None
    vae_model = None
    if args.vae:
        from .vae import load_vae

        vae_model = load_vae(args.vae)

    result = run_train(cfg, train_levels, test_levels=test_levels,
                       vae_model=vae_model)
    print(json.dumps(result.report, indent=2, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    from .agent import evaluate, make_agent
    from .nn.checkpoint import load_tensors

    run_cfg = json.loads(Path(args.config).read_text())
    model = make_agent(run_cfg["hidden_size"], run_cfg.get("core", "lstm"))
    model.load_state_dict(load_tensors(args.checkpoint))

    results = {}
    for item in args.eval_sets:
        name, _, path = item.partition("=")
        if not path:
            name, path = Path(item).stem, item
        levels = load_levels(path)
        returns, solved = evaluate(model, levels, args.episodes, args.seed,
                                   max_steps=run_cfg["max_steps"])
        results[name] = {
            "mean_return": float(np.mean(returns)),
            "solved_rate": float(np.mean(solved)),
            "levels": len(levels),
        }
        print(f"{name}: return {results[name]['mean_return']:.4f} "
              f"solved {results[name]['solved_rate']:.4f}")

    payload = {"checkpoint": str(args.checkpoint), "seed": args.seed,
               "episodes": args.episodes, "sets": results}
    out = Path(args.out) if args.out \
        else Path(args.checkpoint).parent / "eval.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    rows = []
    for run in args.runs:
        run = Path(run)
        cfg_path = run / "config.json"
        if not cfg_path.exists():
            raise FileNotFoundError(f"no config.json under {run}")
        cfg = json.loads(cfg_path.read_text())
        method, seed = cfg["method"], cfg["seed"]
        eval_path = run / "eval.json"
        if eval_path.exists():
            sets = json.loads(eval_path.read_text())["sets"]
            for name, r in sorted(sets.items()):
                rows.append((method, seed, name, r["mean_return"],
                             r["solved_rate"]))
        else:
            rep = json.loads((run / "report.json").read_text())
            rows.append((method, seed, "train",
                         rep["final_train_return"], float("nan")))

    lines = ["method,seed,eval_set,mean_return,solved_rate"]
    for method, seed, name, ret, solved in rows:
        lines.append(f"{method},{seed},{name},{ret:.6f},{solved:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levellab",
        description="adaptive level sampling experiments on gridworlds")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="write train/test/edge/large sets")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=_positive(int), default=None,
                   help="training levels (preset default if omitted)")
    g.add_argument("--test-n", type=_positive(int), default=None)
    g.add_argument("--size", type=_positive(int), default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--preset", choices=sorted(DATASET_PRESETS), default="desk")
    g.add_argument("--moss-density", type=float, default=0.3)
    g.add_argument("--lava-density", type=float, default=0.2)
    g.add_argument("--area-scale-root", type=_positive(int), default=3,
                   help="side multiplier for the large set (3 -> 9x area)")
    g.set_defaults(func=cmd_gen_dataset)

    v = sub.add_parser("pretrain-vae", help="fit the level generator")
    v.add_argument("--levels", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--epochs", type=_positive(int), default=None)
    v.add_argument("--latent", type=_positive(int), default=None)
    v.add_argument("--preset", choices=("desk", "full"), default="desk")
    v.set_defaults(func=cmd_pretrain_vae)

    t = sub.add_parser("train", help="run one method end to end")
    t.add_argument("--method", choices=METHODS, required=True)
    t.add_argument("--levels", required=True)
    t.add_argument("--test-levels", default=None)
    t.add_argument("--vae", default=None, help="checkpoint from pretrain-vae")
    t.add_argument("--updates", type=_positive(int), default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--workers", type=_positive(int), default=None)
    t.add_argument("--eval-sets", nargs="*", default=None,
                   help="unused during training; see evaluate")
    t.add_argument("--dump-buffer-every", type=int, default=None)
    t.add_argument("--smi-sign", type=float, default=None,
                   choices=(1.0, -1.0))
    t.add_argument("--scoring", default=None,
                   choices=("none", "value_loss", "positive_value_loss", "mi"))
    t.add_argument("--out-dir", default=None)
    t.add_argument("--config", default=None, help="key = value file")
    t.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on level sets")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True,
                   help="config.json from the training run")
    e.add_argument("--eval-sets", nargs="+", required=True,
                   metavar="NAME=PATH")
    e.add_argument("--episodes", type=_positive(int), default=3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="merge runs into a comparison CSV")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
