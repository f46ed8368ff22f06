"""Comparison experiments and their cached results.

Each experiment trains the models it compares, evaluates them on held-out
data and writes ``results.json`` next to the run's checkpoint and metric
log. Results carry the config hash so a cache built from a different
configuration is never reused.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from .autograd import Adam, Tensor, no_grad
from .baselines import copy_last_frame
from .controller import ScalarHead
from .data import pools
from .data.sequences import sample_sequence_triplets
from .metrics import MSE_CONVENTION, PATCH_SIZE, horizon_table, patch_mse, pixel_mse

# patch edge length relative to a 64-pixel frame; smaller frames use proportionally smaller patches
PATCH_REFERENCE_SIZE = 64
from .training import (
    TrainConfig,
    Trainer,
    build_data,
    predict,
    predict_composed,
    predict_cnn,
    reconstruct,
)

RESULTS_FILE = "results.json"


# ----------------------------------------------------------------- spatial

def evaluate_spatial(trainer: Trainer, count: int = 1000, seed: int = 2024) -> dict:
    """Held-out MSE of every trained controller, its CNN baseline and their composition."""
    d, cfg = trainer.data, trainer.cfg
    out = {"mse_convention": MSE_CONVENTION, "eval_count": count}
    for kind, ctrl in trainer.controllers.items():
        e = pools.make_eval_triplets(d.test, kind, count, seed)
        row = {"lstnet": pixel_mse(predict(trainer.vae, ctrl, e.source, e.theta), e.target),
               "reconstruction": pixel_mse(reconstruct(trainer.vae, e.target), e.target)}
        if kind in trainer.baselines:
            row["cnn"] = pixel_mse(predict_cnn([trainer.baselines[kind]], e.source, [e.theta]), e.target)
        out[kind] = row
    if cfg.task == "combined":
        e = pools.make_combined_eval(d.test, count, seed + 1)
        ctrls = [trainer.controllers["rotation"], trainer.controllers["dilation"]]
        row = {"lstnet": pixel_mse(predict_composed(trainer.vae, ctrls, e.source, [e.angle, e.level]), e.target)}
        if trainer.baselines:
            cnns = [trainer.baselines["rotation"], trainer.baselines["dilation"]]
            row["cnn"] = pixel_mse(predict_cnn(cnns, e.source, [e.angle, e.level]), e.target)
        out["combined"] = row
    return out


# ----------------------------------------------------------------- sequences

def patch_size_for(frame_size: int) -> int:
    return max(4, round(PATCH_SIZE * frame_size / PATCH_REFERENCE_SIZE))


def evaluate_sequence(trainer: Trainer, count: int = 256, seed: int = 2024, patch_size: int | None = None) -> dict:
    """Per-horizon MSE/SSIM against copy-last-frame, plus moving/static patch MSE."""
    d, cfg = trainer.data, trainer.cfg
    patch_size = patch_size or patch_size_for(d.test_frames.shape[-1])
    ctrl = trainer.controllers["timestep"]
    preds, copies, targets = {}, {}, {}
    patches = {"lstnet": {"moving": [], "static": []}, "copy_last": {"moving": [], "static": []}}
    for h in range(1, cfg.max_horizon + 1):
        rng = np.random.default_rng([seed, h])
        b = sample_sequence_triplets(d.test_frames, count, rng, cfg.history, cfg.max_horizon, theta=h)
        preds[h] = predict(trainer.vae, ctrl, b.history, b.theta)
        copies[h] = copy_last_frame(b.history)
        targets[h] = b.target
        masks = d.test_moving[b.seq, b.t] | d.test_moving[b.seq, b.t + h]
        for name, p in (("lstnet", preds[h]), ("copy_last", copies[h])):
            # same seed for both predictors so they are scored on the same patches
            r = patch_mse(p, b.target, masks, np.random.default_rng([seed, h, 7]), size=patch_size)
            for cat in ("moving", "static"):
                if r[f"n_{cat}"]:
                    patches[name][cat].append((r[cat], r[f"n_{cat}"]))
    rows_l = horizon_table(preds, targets)
    rows_c = horizon_table(copies, targets)
    patch = {}
    for name, cats in patches.items():
        patch[name] = {cat: (float(sum(v * n for v, n in vals) / sum(n for _, n in vals)) if vals else float("nan"))
                       for cat, vals in cats.items()}
    return {
        "mse_convention": MSE_CONVENTION,
        "eval_count": count,
        "horizons": [{"horizon": a["horizon"], "lstnet_mse": a["mse"], "lstnet_ssim": a["ssim"],
                      "copy_last_mse": c["mse"], "copy_last_ssim": c["ssim"]} for a, c in zip(rows_l, rows_c)],
        "mean_mse": float(np.mean([r["mse"] for r in rows_l])),
        "copy_last_mean_mse": float(np.mean([r["mse"] for r in rows_c])),
        "patches": patch,
        "patch_size": patch_size,
        "patch_improvement": {cat: patch["copy_last"][cat] - patch["lstnet"][cat] for cat in ("moving", "static")},
    }


def _heading_batch(frames, headings, batch, rng, cfg: TrainConfig, theta=None):
    b = sample_sequence_triplets(frames, batch, rng, cfg.history, cfg.max_horizon, theta)
    target = headings[b.seq, b.t + b.theta.astype(int)]
    current = headings[b.seq, b.t]
    return b, target, current


def finetune_scalar_head(trainer: Trainer, iterations: int = 2000, batch: int = 64, seed: int = 5,
                         eval_count: int = 512, log=None) -> dict:
    """Fit a scalar readout on the controller features to the tracked sprite's heading.

    The head and the controller are finetuned together; the VAE stays frozen.
    Labels are the heading at the target frame, standardized for training
    and reported in squared degrees. The baseline repeats the current
    frame's heading.
    """
    d, cfg = trainer.data, trainer.cfg
    ctrl = trainer.controllers["timestep"]
    rng = np.random.default_rng(seed)
    head = ScalarHead(ctrl.feature_width, rng)
    mean, std = float(d.train_headings.mean()), float(d.train_headings.std())
    opt = Adam(head.parameters() + ctrl.parameters(), lr=cfg.learning_rate,
               betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)
    trainer.vae.eval()

    def latents(history):
        bsz, n = history.shape[:2]
        with no_grad():
            mu = trainer.vae.encode(Tensor(history.reshape((-1,) + history.shape[2:])))[0].data
        return Tensor(mu.reshape(bsz, n, -1))

    ctrl.train()
    for it in range(iterations):
        b, y, _ = _heading_batch(d.train_frames, d.train_headings, batch, rng, cfg)
        _, feats = ctrl.step_and_features(latents(b.history), b.theta)
        pred = head(feats)
        err = pred - Tensor(((y - mean) / std).astype(np.float32)[:, None])
        loss = (err * err).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log and (it + 1) % 500 == 0:
            log({"iter": it + 1, "head_loss": loss.item()})

    ctrl.eval()
    erng = np.random.default_rng(seed + 1)
    b, y, current = _heading_batch(d.test_frames, d.test_headings, eval_count, erng, cfg)
    with no_grad():
        _, feats = ctrl.step_and_features(latents(b.history), b.theta)
        pred = head(feats).data[:, 0] * std + mean
    ctrl.train()
    trainer.vae.train()
    return {"head_mse": float(np.mean((pred - y) ** 2)),
            "copy_last_mse": float(np.mean((current - y) ** 2)),
            "units": "degrees^2", "iterations": iterations, "eval_count": eval_count}


# ----------------------------------------------------------------- runners

def _write(path, payload) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
    os.replace(tmp, path)


def load_results(out_dir, cfg: TrainConfig | None = None):
    """Cached results for ``cfg`` or None when absent or built from another config."""
    path = os.path.join(out_dir, RESULTS_FILE)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        res = json.load(f)
    if cfg is not None and res.get("config_hash") != cfg.config_hash():
        return None
    return res


def run_spatial_experiment(cfg: TrainConfig, out_dir, eval_count: int = 1000, log=None) -> dict:
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    trainer = Trainer(cfg, build_data(cfg))
    trainer.run(out_dir, log=log)
    res = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "task": cfg.task,
           "iterations": cfg.iterations, "seed": cfg.seed,
           "metrics": evaluate_spatial(trainer, eval_count),
           "baseline_final_loss": {k: float(np.mean(v[-100:])) for k, v in trainer.baseline_losses.items() if v},
           "seconds": time.time() - t0}
    _write(os.path.join(out_dir, RESULTS_FILE), res)
    return res


def run_sequence_experiment(cfg: TrainConfig, out_dir, eval_count: int = 256, head_iterations: int = 2000,
                            log=None) -> dict:
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    trainer = Trainer(cfg, build_data(cfg))
    trainer.run(out_dir, log=log)
    res = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "task": cfg.task,
           "controller": cfg.controller, "iterations": cfg.iterations, "seed": cfg.seed,
           "controller_parameters": trainer.controllers["timestep"].num_parameters(),
           "metrics": evaluate_sequence(trainer, eval_count)}
    if head_iterations:
        res["scalar_head"] = finetune_scalar_head(trainer, head_iterations, log=log)
    res["seconds"] = time.time() - t0
    _write(os.path.join(out_dir, RESULTS_FILE), res)
    return res
