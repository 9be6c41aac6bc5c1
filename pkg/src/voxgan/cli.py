"""Command-line surface: batch runs that leave artifacts on disk.

Subcommands: train, generate, interpolate, scan, complete, evaluate.
Every run is a pure function of (config file, flags, seed, input files);
each writes a resolved-config snapshot next to its outputs. Exit codes:
0 ok, 2 config error, 3 data error, 4 numeric guard trip.
"""

import argparse
import os
import sys

import numpy as np

from .errors import ConfigError, ContainerError, DataError, NonFiniteError, VoxganError
from .metrics import evaluate_completion
from .models import CompletionModel, decode_latents, interpolate_latents
from .rng import Rng
from .training import (
    TrainConfig,
    checkpoint_load,
    checkpoint_save,
    make_specs,
    init_state,
    train_iwgan,
    train_vae_iwgan,
    write_telemetry,
)
from .voxel import (
    VoxelGrid,
    depth_scan,
    occlude_to_grid,
    read_grid,
    toy_dataset,
    write_binvox,
    write_pgm,
    write_vxg,
)
from .metrics import iou

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GUARD = 4

# keys accepted in a `key = value` config file (flags override)
CONFIG_KEYS = {
    "mode": str,
    "data": str,
    "res": int,
    "epochs": int,
    "batch": int,
    "seed": int,
    "out": str,
    "lambda": float,
    "delta": float,
    "gen_interval": int,
    "latent": int,
    "lr_g": float,
    "lr_d": float,
    "lr_e": float,
    "beta1": float,
    "beta2": float,
    "checkpoint_every": int,
    "adversarial_on": str,
    "threads": int,
}

DEFAULTS = {
    "mode": "iwgan",
    "data": None,
    "res": 8,
    "epochs": 100,
    "batch": 16,
    "seed": 0,
    "out": "run",
    "lambda": 10.0,
    "delta": 100.0,
    "gen_interval": 5,
    "latent": 200,
    "lr_g": 1e-4,
    "lr_d": 1e-4,
    "lr_e": 1e-4,
    "beta1": 0.5,
    "beta2": 0.9,
    "checkpoint_every": 0,
    "adversarial_on": "prior",
    "threads": None,
}


def parse_config_file(path):
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](val)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {e}") from e
    return values


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    flag_map = {
        "mode": "mode", "data": "data", "res": "res", "epochs": "epochs",
        "batch": "batch", "seed": "seed", "out": "out", "lam": "lambda",
        "delta": "delta", "gen_interval": "gen_interval", "latent": "latent",
    }
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = v
    env_threads = os.environ.get("VOXGAN_THREADS")
    if env_threads:
        cfg["threads"] = int(env_threads)
    return cfg


def write_resolved(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resolved.cfg")
    with open(path, "w") as fh:
        for key in sorted(cfg):
            if cfg[key] is not None:
                fh.write(f"{key} = {cfg[key]}\n")
    return path


def load_dataset(spec, res, seed):
    """toy:<kind>[:count=N][:orients=K] or a directory of .vxg/.binvox files."""
    if spec is None:
        raise DataError("no dataset given; pass --data")
    if spec.startswith("toy:"):
        parts = spec.split(":")
        kind = parts[1]
        opts = {"count": 6, "orients": 4}
        for p in parts[2:]:
            k, _, v = p.partition("=")
            if k not in opts:
                raise DataError(f"unknown toy dataset option {k!r}")
            opts[k] = int(v)
        rng = Rng(seed).child(1000)
        if kind in ("boxes", "spheres", "ells", "mixed"):
            return toy_dataset(kind, res, opts["count"], opts["orients"], rng)
        raise DataError(f"unknown toy dataset kind {kind!r}")
    if not os.path.isdir(spec):
        raise DataError(f"dataset path {spec!r} is not a directory")
    files = sorted(
        f for f in os.listdir(spec) if f.endswith(".vxg") or f.endswith(".binvox")
    )
    if not files:
        raise DataError(f"no .vxg or .binvox files under {spec!r}")
    grids = [read_grid(os.path.join(spec, f)) for f in files]
    for g in grids:
        if g.extent != res:
            raise DataError(f"grid extent {g.extent} does not match --res {res}")
    return grids


def occlusion_pairs(grids, view="+x"):
    return [(occlude_to_grid(depth_scan(g, view), g.extent), g) for g in grids]


# -- subcommands -------------------------------------------------------------------


def cmd_train(args):
    cfg = resolve_config(args)
    out_dir = cfg["out"]
    write_resolved(cfg, out_dir)
    config = TrainConfig(
        mode=cfg["mode"],
        batch_size=cfg["batch"],
        epochs=cfg["epochs"],
        gen_interval=cfg["gen_interval"],
        lam=cfg["lambda"],
        delta=cfg["delta"],
        lr_g=cfg["lr_g"],
        lr_d=cfg["lr_d"],
        lr_e=cfg["lr_e"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        seed=cfg["seed"],
        checkpoint_every=cfg["checkpoint_every"],
        adversarial_on=cfg["adversarial_on"],
    )
    grids = load_dataset(cfg["data"], cfg["res"], cfg["seed"])

    def on_epoch(state):
        if config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
            checkpoint_save(state, os.path.join(out_dir, f"checkpoint_epoch{state.epoch:05d}.vxgn"))
            write_telemetry(state.history, os.path.join(out_dir, "telemetry.csv"))

    specs = make_specs(config.mode, cfg["res"], latent_dim=cfg["latent"])
    state = init_state(config, specs)
    try:
        if config.mode == "vae-iwgan":
            pairs = occlusion_pairs(grids)
            state = train_vae_iwgan(config, pairs, state=state, on_epoch=on_epoch)
        else:
            state = train_iwgan(config, grids, state=state, on_epoch=on_epoch)
    except NonFiniteError as e:
        checkpoint_save(state, os.path.join(out_dir, "checkpoint_abort.vxgn"))
        write_telemetry(state.history, os.path.join(out_dir, "telemetry.csv"))
        print(f"numeric guard tripped: {e}", file=sys.stderr)
        return EXIT_GUARD
    checkpoint_save(state, os.path.join(out_dir, "checkpoint_final.vxgn"))
    write_telemetry(state.history, os.path.join(out_dir, "telemetry.csv"))
    return EXIT_OK


def cmd_generate(args):
    state = checkpoint_load(args.checkpoint)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    write_resolved({"checkpoint": args.checkpoint, "count": args.count,
                    "seed": args.seed, "out": out_dir}, out_dir)
    rng = Rng(args.seed)
    latent = state.specs["g"].latent_dim
    zs = [rng.normal((latent,)) for _ in range(args.count)]
    grids = decode_latents(state.nets["g"], zs)
    for i, g in enumerate(grids):
        write_vxg(g, os.path.join(out_dir, f"sample_{i:04d}.vxg"))
        if args.binvox:
            write_binvox(g.binarize(), os.path.join(out_dir, f"sample_{i:04d}.binvox"))
    return EXIT_OK


def cmd_interpolate(args):
    state = checkpoint_load(args.checkpoint)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    write_resolved({"checkpoint": args.checkpoint, "seed_a": args.seed_a,
                    "seed_b": args.seed_b, "steps": args.steps, "out": out_dir}, out_dir)
    if args.steps < 2:
        raise ConfigError("--steps must be >= 2")
    latent = state.specs["g"].latent_dim
    z_a = Rng(args.seed_a).normal((latent,))
    z_b = Rng(args.seed_b).normal((latent,))
    grids = decode_latents(state.nets["g"], interpolate_latents(z_a, z_b, args.steps))
    for i, g in enumerate(grids):
        write_vxg(g, os.path.join(out_dir, f"interp_{i:04d}.vxg"))
    adjacent = [iou(grids[i].binarize(), grids[i + 1].binarize()) for i in range(len(grids) - 1)]
    endpoints = iou(grids[0].binarize(), grids[-1].binarize())
    print(f"adjacent-step IoU mean {np.mean(adjacent):.4f}, endpoint IoU {endpoints:.4f}")
    return EXIT_OK


def cmd_scan(args):
    grid = read_grid(args.grid)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    write_resolved({"grid": args.grid, "view": args.view, "out": out_dir}, out_dir)
    dm = depth_scan(grid.binarize(), args.view)
    shell = occlude_to_grid(dm, grid.extent)
    write_pgm(dm, os.path.join(out_dir, "depth.pgm"))
    write_vxg(shell, os.path.join(out_dir, "shell.vxg"))
    return EXIT_OK


def cmd_complete(args):
    state = checkpoint_load(args.checkpoint)
    if "e" not in state.nets:
        raise DataError("checkpoint has no encoder; train with --mode vae-iwgan")
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    write_resolved({"checkpoint": args.checkpoint, "grid": args.grid, "out": out_dir}, out_dir)
    cond = read_grid(args.grid).binarize()
    model = CompletionModel(state.nets["e"], state.nets["g"])
    pred = model(cond)
    write_vxg(pred, os.path.join(out_dir, "completed.vxg"))
    write_vxg(pred.binarize(), os.path.join(out_dir, "completed_binary.vxg"))
    return EXIT_OK


def cmd_evaluate(args):
    state = checkpoint_load(args.checkpoint)
    if "e" not in state.nets:
        raise DataError("checkpoint has no encoder; train with --mode vae-iwgan")
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    write_resolved({"checkpoint": args.checkpoint, "data": args.data,
                    "seed": args.seed, "out": out_dir}, out_dir)
    res = state.specs["g"].resolution
    grids = load_dataset(args.data, res, args.seed)
    pairs = occlusion_pairs(grids)
    model = CompletionModel(state.nets["e"], state.nets["g"])
    report = evaluate_completion(model, pairs)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    report.write_iou_csv(os.path.join(out_dir, "per_sample_iou.csv"))
    print(f"mean AP {report.mean_ap:.4f}, mean IoU {report.mean_iou:.4f}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="voxgan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write checkpoints + telemetry")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--mode", choices=("iwgan", "vae-iwgan", "vanilla-gan-baseline"))
    t.add_argument("--data", help="toy:<kind>[:count=N][:orients=K] or grid directory")
    t.add_argument("--res", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--delta", type=float)
    t.add_argument("--gen-interval", dest="gen_interval", type=int)
    t.add_argument("--latent", type=int)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample grids from a trained generator")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="generated")
    g.add_argument("--binvox", action="store_true", help="also write binvox files")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("interpolate", help="decode a straight line between two latents")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--seed-a", dest="seed_a", type=int, required=True)
    i.add_argument("--seed-b", dest="seed_b", type=int, required=True)
    i.add_argument("--steps", type=int, default=5)
    i.add_argument("--out", default="interpolated")
    i.set_defaults(func=cmd_interpolate)

    s = sub.add_parser("scan", help="depth-scan a grid and write the occluded shell")
    s.add_argument("--grid", required=True)
    s.add_argument("--view", default="+x", choices=("+x", "-x", "+y", "-y", "+z", "-z"))
    s.add_argument("--out", default="scanned")
    s.set_defaults(func=cmd_scan)

    c = sub.add_parser("complete", help="complete an occluded grid with a trained encoder")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--grid", required=True)
    c.add_argument("--out", default="completed")
    c.set_defaults(func=cmd_complete)

    e = sub.add_parser("evaluate", help="evaluate completion on a test set")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="evaluated")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ContainerError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as e:
        print(f"numeric guard: {e}", file=sys.stderr)
        return EXIT_GUARD
    except VoxganError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
