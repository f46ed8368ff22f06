"""``lstnet`` command line: train, transform, sweep, predict, eval, gen-data.

Every command writes its outputs plus a ``manifest.json`` (config hash,
seed, package versions, output digests) into one output directory, chosen
by ``--out``, else ``$LSTNET_OUTPUT_DIR``, else ``./lstnet-output/<command>``.
Exit codes: 0 success, 1 runtime failure, 2 usage or data error. Failures
print a one-line JSON object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from types import SimpleNamespace

import numpy as np

from . import __version__
from .autograd import Tensor, no_grad
from .checkpoint import CheckpointFormatError
from .controller import CONTROL_RANGES, ControlSpec
from .data import pools
from .data.idx import FormatError, save_idx, to_bytes, write_idx
from .data.mnist import load_mnist
from .data.sequences import save_sequences
from .experiments import evaluate_sequence, evaluate_spatial
from .imageio import panel_grid, read_pgm, write_pgm, write_png
from .training import (
    TASK_CONTROLLERS,
    TaskData,
    TrainConfig,
    TrainingDiverged,
    load_models,
    predict,
    run_schedule,
    sequence_splits,
)

ENV_OUTPUT = "LSTNET_OUTPUT_DIR"
KIND_ALIASES = {"rotation": "rotation", "rotate": "rotation", "dilation": "dilation", "dilate": "dilation"}


class UsageError(ValueError):
    pass


# ----------------------------------------------------------------- helpers

def output_dir(args) -> str:
    return args.out or os.environ.get(ENV_OUTPUT) or os.path.join("lstnet-output", args.command)


def prepare_output(path: str, force: bool, allow_existing: bool = False) -> str:
    if os.path.isdir(path) and os.listdir(path) and not (force or allow_existing):
        raise UsageError(f"output directory {path} is not empty; pass --force to overwrite")
    os.makedirs(path, exist_ok=True)
    return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: str, command: str, params: dict, seed, config: dict | None = None,
                   warnings=None) -> dict:
    outputs = {}
    for root, _, files in os.walk(out):
        for name in sorted(files):
            if name == "manifest.json":
                continue
            p = os.path.join(root, name)
            outputs[os.path.relpath(p, out)] = _sha256(p)
    cfg = config if config is not None else params
    manifest = {
        "command": command,
        "parameters": params,
        "config": config,
        "config_hash": hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16],
        "seed": seed,
        "versions": {"lstnet": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": dict(sorted(outputs.items())),
        "warnings": list(warnings or []),
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def _params(args, skip=("out", "force", "func", "command")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _save_image(out: str, name: str, image, png: bool) -> None:
    write_pgm(os.path.join(out, name + ".pgm"), image)
    if png:
        write_png(os.path.join(out, name + ".png"), image)


def _require_dir(path, what: str) -> None:
    if not os.path.isdir(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _input_image(args, models) -> np.ndarray:
    shape = tuple(models.meta["image_shape"])
    if args.image:
        img = read_pgm(args.image)
    else:
        cfg = models.cfg
        _, test = pools.split_dataset(load_mnist(cfg.data_dir), cfg.test_per_class, cfg.seed)
        if not 0 <= args.index < len(test):
            raise UsageError(f"--index must be in [0, {len(test)}), got {args.index}")
        img = test.images[args.index]
    if img.shape != shape:
        raise UsageError(f"input image has shape {img.shape}, the model expects {shape}")
    return img.astype(np.float32)


def _transform_one(vae, ctrls, image, thetas) -> np.ndarray:
    """Encode one image, apply controllers in order, decode; batch of one."""
    with no_grad():
        z = vae.encode(Tensor(image[None]))[0]
        for c, th in zip(ctrls, thetas):
            z = c(z, np.float32(th))
        return vae.decode(z).data[0]


def _load_train_config(args) -> TrainConfig:
    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
        if not isinstance(base, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
    overrides = {
        "task": args.task, "iterations": args.iterations, "batch_size": args.batch_size, "ratio": args.ratio,
        "seed": args.seed, "controller": args.controller, "mode": args.mode, "data_dir": args.data_dir,
        "sequence_dir": args.sequence_dir, "eval_every": args.eval_every,
        "checkpoint_every": args.checkpoint_every,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.baseline:
        base["baseline"] = True
    return TrainConfig.from_dict(base)


# ----------------------------------------------------------------- commands

def cmd_train(args) -> int:
    cfg = _load_train_config(args)
    if cfg.data_dir:
        _require_dir(cfg.data_dir, "data directory")
    if cfg.sequence_dir:
        _require_dir(cfg.sequence_dir, "sequence directory")
    out = prepare_output(output_dir(args), args.force, allow_existing=bool(args.resume))

    def log(row):
        if not args.quiet:
            print(json.dumps(row), flush=True)

    trainer = run_schedule(cfg, out, resume=args.resume, log=log)
    write_manifest(out, "train", _params(args), cfg.seed, cfg.to_dict())
    if not args.quiet:
        print(json.dumps({"checkpoint": os.path.join(out, "checkpoint.lstn"), "iterations": trainer.iteration}))
    return 0


def cmd_sweep(args) -> int:
    models = load_models(args.checkpoint)
    kind = KIND_ALIASES.get(args.kind, args.kind)
    if kind not in models.controllers:
        raise UsageError(f"checkpoint has controllers {sorted(models.controllers)}, not {kind!r}")
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    out = prepare_output(output_dir(args), args.force)
    image = _input_image(args, models)
    lo, hi = args.range if args.range else CONTROL_RANGES[kind]
    thetas = np.linspace(lo, hi, args.steps)
    ctrl = models.controllers[kind]
    panels = [_transform_one(models.vae, [ctrl], image, [th]) for th in thetas]
    grid = panel_grid([image] + panels, separator_after=0)
    _save_image(out, "sweep", grid, args.png)
    warnings = [f"theta {th:.4f} is outside the trained range {CONTROL_RANGES[kind]}"
                for th in thetas if not ControlSpec(kind, float(th)).in_distribution()]
    params = _params(args)
    params["thetas"] = [float(t) for t in thetas]
    write_manifest(out, "sweep", params, models.cfg.seed, models.cfg.to_dict(), warnings)
    return 0


def _parse_spec(text: str) -> tuple:
    if "=" not in text:
        raise UsageError(f"control spec must look like kind=value, got {text!r}")
    kind, value = text.split("=", 1)
    kind = KIND_ALIASES.get(kind.strip(), kind.strip())
    try:
        return kind, float(value)
    except ValueError as exc:
        raise UsageError(f"control value in {text!r} is not a number") from exc


def cmd_transform(args) -> int:
    loaded = [load_models(p) for p in args.checkpoint]
    dims = {m.cfg.latent_dim for m in loaded}
    if len(dims) > 1:
        raise UsageError(f"checkpoints disagree on latent dimension: {sorted(dims)}")
    primary = loaded[0]
    available = {}
    for m in loaded:
        for k, c in m.controllers.items():
            available.setdefault(k, c)
    specs = [_parse_spec(s) for s in (args.spec or [])]
    for kind, _ in specs:
        if kind not in available:
            raise UsageError(f"no controller for {kind!r} in the given checkpoints (have {sorted(available)})")
    out = prepare_output(output_dir(args), args.force)
    image = _input_image(args, primary)
    result = _transform_one(primary.vae, [available[k] for k, _ in specs], image, [v for _, v in specs])
    _save_image(out, "input", image, args.png)
    _save_image(out, "transform", result, args.png)
    warnings = [f"{k}={v} is outside the trained range {CONTROL_RANGES[k]}"
                for k, v in specs if not ControlSpec(k, v).in_distribution()]
    write_manifest(out, "transform", _params(args), primary.cfg.seed, primary.cfg.to_dict(), warnings)
    return 0


def _sequence_test(cfg: TrainConfig):
    if cfg.sequence_dir:
        from .data.sequences import load_sequences

        frames, headings, moving, _ = load_sequences(os.path.join(cfg.sequence_dir, "test"))
        return frames, headings, moving
    from .data.sequences import stack

    return stack(sequence_splits(cfg)[1])


def cmd_predict(args) -> int:
    models = load_models(args.checkpoint)
    cfg = models.cfg
    if cfg.task != "sequence":
        raise UsageError("predict needs a sequence checkpoint; use transform or sweep for spatial tasks")
    frames, _, _ = _sequence_test(cfg)
    n = cfg.history
    t = args.frame if args.frame is not None else n - 1
    if not 0 <= args.sequence < len(frames):
        raise UsageError(f"--sequence must be in [0, {len(frames)})")
    if not n - 1 <= t < frames.shape[1] - 1:
        raise UsageError(f"--frame must be in [{n - 1}, {frames.shape[1] - 1})")
    out = prepare_output(output_dir(args), args.force)
    seq = frames[args.sequence]
    history = seq[t - n + 1:t + 1][None]
    horizons = [h for h in range(1, cfg.max_horizon + 1) if t + h < len(seq)]
    preds = [predict(models.vae, models.controllers["timestep"], history, float(h))[0] for h in horizons]
    truth = [seq[t + h] for h in horizons]
    _save_image(out, "prediction", panel_grid([seq[t]] + preds, separator_after=0), args.png)
    _save_image(out, "ground_truth", panel_grid([seq[t]] + truth, separator_after=0), args.png)
    write_manifest(out, "predict", _params(args), cfg.seed, cfg.to_dict())
    return 0


def _row_hashes(images: np.ndarray) -> set:
    flat = to_bytes(images.reshape(len(images), -1))
    return {hashlib.sha256(r.tobytes()).hexdigest() for r in flat}


def cmd_eval(args) -> int:
    models = load_models(args.checkpoint)
    cfg = models.cfg
    out = prepare_output(output_dir(args), args.force)
    ns = SimpleNamespace(cfg=cfg, vae=models.vae, controllers=models.controllers, baselines=models.baselines)
    rows = []
    if cfg.spatial:
        train, test = pools.split_dataset(load_mnist(cfg.data_dir), cfg.test_per_class, cfg.seed)
        stored = models.meta.get("digests", {}).get("test")
        if stored and stored != pools.array_digest(test.images):
            raise UsageError("held-out split differs from the one recorded at training time")
        if _row_hashes(train.images) & _row_hashes(test.images):
            raise UsageError("held-out split overlaps the training split")
        ns.data = TaskData(tuple(test.images.shape[1:]), test.images[:0], test=test)
        res = evaluate_spatial(ns, args.count)
        for task in ("rotation", "dilation", "combined"):
            for model, value in sorted(res.get(task, {}).items()):
                rows.append({"section": "table", "task": task, "model": model, "key": "mse", "value": value})
    else:
        frames, headings, moving = _sequence_test(cfg)
        train_frames = (sequence_splits(cfg)[0] if not cfg.sequence_dir else None)
        if train_frames is not None:
            from .data.sequences import stack

            tr = stack(train_frames)[0]
            if _row_hashes(tr.reshape(-1, *tr.shape[2:])) & _row_hashes(frames.reshape(-1, *frames.shape[2:])):
                raise UsageError("held-out sequences overlap the training sequences")
        ns.data = TaskData(tuple(frames.shape[2:]), frames[:0, 0], test_frames=frames,
                           test_headings=headings, test_moving=moving)
        res = evaluate_sequence(ns, args.count)
        for r in res["horizons"]:
            for model in ("lstnet", "copy_last"):
                for key in ("mse", "ssim"):
                    rows.append({"section": "horizon", "task": f"h={r['horizon']}", "model": model,
                                 "key": key, "value": r[f"{model}_{key}"]})
        for model, cats in res["patches"].items():
            for cat, v in cats.items():
                rows.append({"section": "patch", "task": cat, "model": model, "key": "mse", "value": v})
    with open(os.path.join(out, "eval.csv"), "w") as f:
        w = csv.DictWriter(f, ["section", "task", "model", "key", "value"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": repr(float(r["value"]))})
    with open(os.path.join(out, "eval.json"), "w") as f:
        json.dump(res, f, indent=1, sort_keys=True)
    if not args.quiet:
        print(f"{'section':<8} {'task':<10} {'model':<15} {'key':<5} value")
        for r in rows:
            print(f"{r['section']:<8} {r['task']:<10} {r['model']:<15} {r['key']:<5} {r['value']:.6f}")
        print(f"(MSE: {res['mse_convention']})")
    write_manifest(out, "eval", _params(args), cfg.seed, cfg.to_dict())
    return 0


def cmd_gen_data(args) -> int:
    if args.data_dir:
        _require_dir(args.data_dir, "data directory")
    out = prepare_output(output_dir(args), args.force)
    summary = {"kind": args.kind, "seed": args.seed}
    if args.kind == "sequence":
        overrides = {}
        if args.config:
            with open(args.config) as f:
                overrides = json.load(f)
        cfg = TrainConfig.from_dict({**overrides, "task": "sequence", "seed": args.seed})
        train, test = sequence_splits(cfg)
        summary["train"] = save_sequences(os.path.join(out, "train"), cfg.sequence_config(), 2 * args.seed, train)
        summary["test"] = save_sequences(os.path.join(out, "test"), cfg.sequence_config(), 2 * args.seed + 1, test)
        for split in ("train", "test"):
            summary[split] = {k: summary[split][k] for k in ("count", "shape", "digest")}
    else:
        cfg = TrainConfig(task=args.kind, seed=args.seed, data_dir=args.data_dir,
                          dilation_samples=args.dilation_samples)
        train, test = pools.split_dataset(load_mnist(cfg.data_dir), cfg.test_per_class, cfg.seed)
        if args.kind == "rotation":
            pool = pools.make_rotation_set(train, cfg.seed + 11, cfg.rotation_per_class, cfg.rotation_count)
        else:
            pool = pools.make_dilation_set(train, cfg.seed + 13, cfg.dilation_samples)
        k, m = pool.augmented.shape[:2]
        write_idx(os.path.join(out, "augmented.idx"), to_bytes(pool.augmented.reshape(k * m, *pool.augmented.shape[-2:])))
        save_idx(os.path.join(out, "originals"), pool.base.subset(pool.source_index))
        save_idx(os.path.join(out, "test"), test)
        summary.update({"originals": int(k), "augmentations_per_original": int(m),
                        "augmentation_count": pool.augmentation_count, "controls": pool.controls.tolist(),
                        "digest": pool.digest(),
                        "per_class": np.bincount(pool.base.labels[pool.source_index]).tolist(),
                        "layout": "augmented.idx holds original-major rows: row k*M+m is original k under control m"})
    with open(os.path.join(out, "pool.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    write_manifest(out, "gen-data", _params(args), args.seed, summary)
    if not args.quiet:
        print(json.dumps({k: v for k, v in summary.items() if k != "controls"}))
    return 0


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lstnet", description="Latent-space traversal with fern controllers.")
    p.add_argument("--version", action="version", version=f"lstnet {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT} or ./lstnet-output/<command>)")
    common.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    common.add_argument("--quiet", action="store_true")
    image = argparse.ArgumentParser(add_help=False)
    src = image.add_mutually_exclusive_group()
    src.add_argument("--image", help="8-bit binary PGM input image")
    src.add_argument("--index", type=int, default=0, help="index into the held-out MNIST split")
    image.add_argument("--png", action="store_true", help="also write PNG copies (needs Pillow)")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a VAE and controller(s)")
    t.add_argument("--config", help="JSON file with training config keys")
    t.add_argument("--task", choices=["rotation", "dilation", "combined", "sequence"])
    t.add_argument("--iterations", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--ratio", type=int, help="VAE steps per controller step")
    t.add_argument("--seed", type=int)
    t.add_argument("--controller", choices=["fern", "linear"])
    t.add_argument("--mode", choices=["alternate", "summed"])
    t.add_argument("--baseline", action="store_true", help="train CNN baselines on the same batches")
    t.add_argument("--data-dir", help="MNIST IDX directory (default: bundled 5000-digit subset)")
    t.add_argument("--sequence-dir", help="directory written by gen-data --kind sequence")
    t.add_argument("--eval-every", type=int)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", parents=[common, image], help="decode a sweep of control values")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--kind", default="rotation")
    s.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--steps", type=int, default=9)
    s.set_defaults(func=cmd_sweep)

    tr = sub.add_parser("transform", parents=[common, image], help="apply controllers in sequence")
    tr.add_argument("--checkpoint", required=True, nargs="+")
    tr.add_argument("--spec", action="append", help="kind=value, applied in the order given")
    tr.set_defaults(func=cmd_transform)

    pr = sub.add_parser("predict", parents=[common], help="predict future frames of a test sequence")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--sequence", type=int, default=0)
    pr.add_argument("--frame", type=int, help="index of the current frame")
    pr.add_argument("--png", action="store_true")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on held-out data")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--count", type=int, default=1000)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen-data", parents=[common], help="write augmentation pools or synthetic sequences")
    g.add_argument("--kind", choices=["rotation", "dilation", "sequence"], required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--data-dir")
    g.add_argument("--dilation-samples", type=int, default=5000)
    g.add_argument("--config", help="JSON training config whose 'sequence' entry configures the generator")
    g.set_defaults(func=cmd_gen_data)
    return p


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    path = getattr(exc, "filename", None) or getattr(exc, "path", None)
    if path:
        payload["path"] = str(path)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (UsageError, FileNotFoundError, FormatError, CheckpointFormatError, pools.DataError) as exc:
        return _fail(exc, 2)
    except TrainingDiverged as exc:
        return _fail(exc, 1)
    except ValueError as exc:
        return _fail(exc, 2)
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
