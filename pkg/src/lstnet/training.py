"""Training schedules, metric logging and resumable runs.

A run interleaves VAE steps (reconstruction + KL) with controller steps
(latent loss + image loss). One *iteration* is one optimizer step of either
kind, so ``ratio`` VAE steps are followed by one controller step. With
several controllers (the combined task) they take turns, each preceded by
its own ``ratio`` VAE steps. Optional CNN baselines are stepped on exactly
the batch each controller step consumed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autograd import Adam, Tensor, no_grad
from .baselines import CnnBaseline, CnnConfig, LinearController
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .controller import ControllerConfig, ControllerModule, image_loss, latent_loss
from .data import pools
from .data.idx import IdxDataset
from .data.mnist import load_mnist
from .data.sequences import SequenceConfig, gen_sequences, load_sequences, sample_sequence_triplets, stack
from .metrics import pixel_mse
from .vae import VaeConfig, VaeModel

CSV_HEADER = ["iter", "loss_vae_rec", "loss_kl", "loss_z", "loss_img", "eval_mse"]
TASKS = ("rotation", "dilation", "combined", "sequence")
TASK_CONTROLLERS = {
    "rotation": ("rotation",),
    "dilation": ("dilation",),
    "combined": ("rotation", "dilation"),
    "sequence": ("timestep",),
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "rotation"
    iterations: int | None = None          # 20000 spatial, 30000 sequence
    batch_size: int = 64
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    ratio: int | None = None               # 1 spatial, 5 sequence
    seed: int = 0
    mode: str = "alternate"                # or "summed"
    controller: str = "fern"               # or "linear"
    latent_dim: int | None = None          # 100 spatial, 256 sequence
    channels: list | None = None
    hidden: int = 256
    decision_width: int = 256
    n_blocks: int | None = None            # 1 spatial, 2 sequence
    history: int | None = None             # 1 spatial, 6 sequence
    max_horizon: int = 5
    eval_every: int = 500
    eval_count: int = 256
    checkpoint_every: int = 0
    baseline: bool = False                 # train CNN baselines on the same batches
    baseline_channels: int = 128
    data_dir: str | None = None            # MNIST IDX directory; bundled subset when None
    test_per_class: int = 50
    rotation_per_class: int = 60
    rotation_count: int = 45
    dilation_samples: int = 5000
    sequence: dict = field(default_factory=dict)
    sequence_test_count: int = 64
    sequence_dir: str | None = None        # persisted train/ and test/ sequences; generated when None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.mode not in ("alternate", "summed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.controller not in ("fern", "linear"):
            raise ValueError(f"unknown controller kind {self.controller!r}")
        spatial = self.task != "sequence"
        defaults = {
            "iterations": 20000 if spatial else 30000,
            "ratio": 1 if spatial else 5,
            "latent_dim": 100 if spatial else 256,
            "channels": [32, 64] if spatial else [64, 128, 256],
            "n_blocks": 1 if spatial else 2,
            "history": 1 if spatial else 6,
        }
        for k, v in defaults.items():
            if getattr(self, k) is None:
                setattr(self, k, v)
        self.channels = list(self.channels)
        if self.ratio < 1 or self.iterations <= 0:
            raise ValueError("ratio must be >= 1 and iterations > 0")

    @property
    def spatial(self) -> bool:
        return self.task != "sequence"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def sequence_config(self) -> SequenceConfig:
        return SequenceConfig.from_dict(self.sequence)

    def vae_config(self, image_shape) -> VaeConfig:
        return VaeConfig(tuple(image_shape), self.latent_dim, tuple(self.channels))

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(latent_dim=self.latent_dim, history_len=self.history, hidden=self.hidden,
                                decision_width=self.decision_width, n_blocks=self.n_blocks,
                                kind=self.controller)


# ----------------------------------------------------------------- data

@dataclass
class TaskData:
    image_shape: tuple
    vae_images: np.ndarray                       # pool the VAE samples from
    pools: dict = field(default_factory=dict)    # kind -> AugmentedPool
    eval_sets: dict = field(default_factory=dict)
    test: IdxDataset | None = None
    train_frames: np.ndarray | None = None
    test_frames: np.ndarray | None = None
    train_headings: np.ndarray | None = None
    test_headings: np.ndarray | None = None
    test_moving: np.ndarray | None = None
    digests: dict = field(default_factory=dict)


def build_data(cfg: TrainConfig, dataset: IdxDataset | None = None) -> TaskData:
    if cfg.spatial:
        return _spatial_data(cfg, dataset)
    return _sequence_data(cfg)


def _spatial_data(cfg: TrainConfig, dataset) -> TaskData:
    dataset = dataset if dataset is not None else load_mnist(cfg.data_dir)
    train, test = pools.split_dataset(dataset, cfg.test_per_class, cfg.seed)
    built, digests = {}, {}
    for kind in TASK_CONTROLLERS[cfg.task]:
        if kind == "rotation":
            built[kind] = pools.make_rotation_set(train, cfg.seed + 11, cfg.rotation_per_class, cfg.rotation_count)
        else:
            built[kind] = pools.make_dilation_set(train, cfg.seed + 13, cfg.dilation_samples)
        digests[kind] = built[kind].digest()
    flat = [p.augmented.reshape((-1,) + p.augmented.shape[2:]) for p in built.values()]
    vae_images = np.concatenate([train.images] + flat, axis=0)
    evals = {kind: pools.make_eval_triplets(test, kind, cfg.eval_count, cfg.seed + 101) for kind in built}
    if cfg.task == "combined":
        evals["combined"] = pools.make_combined_eval(test, cfg.eval_count, cfg.seed + 103)
    digests["test"] = pools.array_digest(test.images)
    return TaskData(tuple(dataset.images.shape[1:]), vae_images, built, evals, test, digests=digests)


def sequence_splits(cfg: TrainConfig) -> tuple:
    """Train and test sequence lists; the two seed ranges never overlap."""
    scfg = cfg.sequence_config()
    return (gen_sequences(scfg, 2 * cfg.seed),
            gen_sequences(scfg, 2 * cfg.seed + 1, cfg.sequence_test_count))


def _sequence_data(cfg: TrainConfig) -> TaskData:
    if cfg.sequence_dir:
        for split in ("train", "test"):
            if not os.path.exists(os.path.join(cfg.sequence_dir, split, "manifest.json")):
                raise FileNotFoundError(f"no sequence dataset at {os.path.join(cfg.sequence_dir, split)}")
        tr_frames, tr_head, _, _ = load_sequences(os.path.join(cfg.sequence_dir, "train"))
        te_frames, te_head, te_moving, _ = load_sequences(os.path.join(cfg.sequence_dir, "test"))
    else:
        train, test = sequence_splits(cfg)
        tr_frames, tr_head, _ = stack(train)
        te_frames, te_head, te_moving = stack(test)
    vae_images = tr_frames.reshape((-1,) + tr_frames.shape[2:])
    digests = {"train": pools.array_digest(tr_frames), "test": pools.array_digest(te_frames)}
    return TaskData(tuple(tr_frames.shape[2:]), vae_images, train_frames=tr_frames, test_frames=te_frames,
                    train_headings=tr_head, test_headings=te_head, test_moving=te_moving, digests=digests)


# ----------------------------------------------------------------- models

def build_controller(cfg: TrainConfig, rng: np.random.Generator):
    ccfg = cfg.controller_config()
    if cfg.controller == "linear":
        return LinearController(ccfg, rng)
    return ControllerModule(ccfg, rng)


def build_models(cfg: TrainConfig, image_shape) -> tuple:
    """Freshly initialized (vae, controllers, baselines) for ``cfg``."""
    init_rng = np.random.default_rng([cfg.seed, 1])
    vae = VaeModel(cfg.vae_config(image_shape), init_rng)
    controllers = {k: build_controller(cfg, init_rng) for k in TASK_CONTROLLERS[cfg.task]}
    baselines = {}
    if cfg.baseline and cfg.spatial:
        cnn_rng = np.random.default_rng([cfg.seed, 3])
        ccfg = CnnConfig(tuple(image_shape), cfg.baseline_channels, cfg.baseline_channels)
        baselines = {k: CnnBaseline(ccfg, cnn_rng) for k in controllers}
    return vae, controllers, baselines


@dataclass
class TrainedModels:
    cfg: TrainConfig
    vae: VaeModel
    controllers: dict
    baselines: dict
    meta: dict


def load_models(path) -> TrainedModels:
    """Models stored in a run checkpoint, without rebuilding its datasets."""
    ckpt = load_checkpoint(path)
    cfg = TrainConfig.from_dict(ckpt.meta["config"])
    vae, ctrls, cnns = build_models(cfg, ckpt.meta["image_shape"])
    mods = {"vae": vae, **{f"ctrl.{k}": c for k, c in ctrls.items()}, **{f"cnn.{k}": m for k, m in cnns.items()}}
    for prefix, mod in mods.items():
        mod.load_state_dict({name: ckpt.arrays[f"{prefix}.{name}"] for name in mod.state_dict()})
    for m in mods.values():
        m.eval()
    return TrainedModels(cfg, vae, ctrls, cnns, ckpt.meta)


def _params(*modules) -> list:
    out, seen = [], set()
    for m in modules:
        for p in m.parameters():
            if id(p) not in seen:
                seen.add(id(p))
                out.append(p)
    return out


def _check_finite(iteration: int, values: dict, last_good) -> None:
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise TrainingDiverged(
            f"non-finite loss at iteration {iteration}: {bad}; all losses {values}; "
            f"last good checkpoint: {last_good or 'none written yet'}")


# ----------------------------------------------------------------- steps

def train_step_vae(vae: VaeModel, images: np.ndarray, opt: Adam, eps: np.ndarray) -> dict:
    vae.train()
    out = vae.loss(Tensor(images), eps)
    opt.zero_grad()
    out["total"].backward()
    opt.step()
    return {"loss_vae_rec": out["recon"].item(), "loss_kl": out["kl"].item()}


def encode_means(vae: VaeModel, images: np.ndarray) -> np.ndarray:
    """Latent means with the encoder in inference mode; no graph is recorded."""
    was = vae.encoder.training
    vae.encoder.eval()
    with no_grad():
        mu = vae.encode(Tensor(images))[0].data
    vae.encoder.train(was)
    return mu


def controller_losses(vae: VaeModel, ctrl, history: np.ndarray, target: np.ndarray, theta) -> tuple:
    """Latent and image losses for one batch.

    ``history`` is [B, C, H, W] for single-image controllers or
    [B, n, C, H, W] with a latent history. The encoder sees no gradient: its
    means enter the controller as constants.
    """
    b = len(target)
    if history.ndim == 4:
        history = history[:, None]
    n = history.shape[1]
    mu = encode_means(vae, np.concatenate([history.reshape((-1,) + history.shape[2:]), target]))
    z_hist = Tensor(mu[:b * n].reshape(b, n, -1))
    z_target = Tensor(mu[b * n:])
    z_hat = ctrl(z_hist if n > 1 else z_hist[:, 0, :], theta)
    vae.decoder.train()
    i_hat = vae.decode(z_hat)
    return latent_loss(z_target, z_hat), image_loss(Tensor(target), i_hat)


def train_step_controller(vae: VaeModel, ctrl, history, target, theta, opt: Adam) -> dict:
    ctrl.train()
    lz, li = controller_losses(vae, ctrl, history, target, theta)
    opt.zero_grad()
    (lz + li).backward()
    opt.step()
    return {"loss_z": lz.item(), "loss_img": li.item()}


def train_step_cnn(cnn: CnnBaseline, source, target, theta, opt: Adam) -> float:
    cnn.train()
    loss = image_loss(Tensor(target), cnn(Tensor(source), theta))
    opt.zero_grad()
    loss.backward()
    opt.step()
    return loss.item()


# ----------------------------------------------------------------- prediction

def predict(vae: VaeModel, ctrl, history: np.ndarray, theta, chunk: int = 256) -> np.ndarray:
    """Decoded controller prediction in inference mode."""
    vae.eval()
    ctrl.eval()
    out = []
    theta = np.broadcast_to(np.asarray(theta, np.float32), (len(history),))
    for s in range(0, len(history), chunk):
        h = history[s:s + chunk]
        hh = h if h.ndim == 5 else h[:, None]
        b, n = hh.shape[:2]
        with no_grad():
            mu = vae.encode(Tensor(hh.reshape((-1,) + hh.shape[2:])))[0].data.reshape(b, n, -1)
            z = Tensor(mu) if n > 1 else Tensor(mu[:, 0])
            out.append(vae.decode(ctrl(z, theta[s:s + chunk])).data)
    vae.train()
    ctrl.train()
    return np.concatenate(out)


def predict_composed(vae: VaeModel, ctrls: list, images: np.ndarray, thetas: list, chunk: int = 256) -> np.ndarray:
    """Apply controllers one after another in latent space, then decode."""
    vae.eval()
    out = []
    for c in ctrls:
        c.eval()
    for s in range(0, len(images), chunk):
        with no_grad():
            z = vae.encode(Tensor(images[s:s + chunk]))[0]
            for c, th in zip(ctrls, thetas):
                th = np.broadcast_to(np.asarray(th, np.float32), (len(images),))[s:s + chunk]
                z = c(z, th)
            out.append(vae.decode(z).data)
    vae.train()
    for c in ctrls:
        c.train()
    return np.concatenate(out)


def predict_cnn(cnns: list, images: np.ndarray, thetas: list, chunk: int = 256) -> np.ndarray:
    out = []
    for m in cnns:
        m.eval()
    for s in range(0, len(images), chunk):
        x = images[s:s + chunk]
        with no_grad():
            for m, th in zip(cnns, thetas):
                th = np.broadcast_to(np.asarray(th, np.float32), (len(images),))[s:s + chunk]
                x = m(Tensor(x), th).data
        out.append(x)
    for m in cnns:
        m.train()
    return np.concatenate(out)


def reconstruct(vae: VaeModel, images: np.ndarray, chunk: int = 256) -> np.ndarray:
    vae.eval()
    out = []
    for s in range(0, len(images), chunk):
        with no_grad():
            out.append(vae.decode(vae.encode(Tensor(images[s:s + chunk]))[0]).data)
    vae.train()
    return np.concatenate(out)


# ----------------------------------------------------------------- runs

def schedule(cfg: TrainConfig) -> list:
    """One cycle of step kinds, e.g. ['V', 'rotation', 'V', 'dilation']."""
    cycle = []
    for kind in TASK_CONTROLLERS[cfg.task]:
        cycle += ["V"] * cfg.ratio + [kind]
    return cycle


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


class Trainer:
    """Models, optimizers and the data RNG of one run, plus its metric log."""

    def __init__(self, cfg: TrainConfig, data: TaskData | None = None):
        self.cfg = cfg
        self.data = data if data is not None else build_data(cfg)
        self.vae, self.controllers, self.baselines = build_models(cfg, self.data.image_shape)
        adam = dict(lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2), eps=cfg.epsilon)
        if cfg.mode == "summed":
            self.optimizers = {"all": Adam(_params(self.vae, *self.controllers.values()), **adam)}
        else:
            self.optimizers = {"vae": Adam(_params(self.vae), **adam)}
            for k, c in self.controllers.items():
                self.optimizers[f"ctrl.{k}"] = Adam(_params(c, self.vae.decoder), **adam)
        for k, m in self.baselines.items():
            self.optimizers[f"cnn.{k}"] = Adam(m.parameters(), **adam)
        self.rng = np.random.default_rng([cfg.seed, 2])
        self.iteration = 0
        self.rows: list = []
        self.window: dict = {}
        self.baseline_losses: dict = {k: [] for k in self.baselines}
        self.last_checkpoint = None

    # -- batches
    def vae_batch(self) -> tuple:
        idx = self.rng.integers(0, len(self.data.vae_images), self.cfg.batch_size)
        eps = self.rng.standard_normal((self.cfg.batch_size, self.cfg.latent_dim)).astype(np.float32)
        return self.data.vae_images[idx], eps

    def controller_batch(self, kind: str) -> tuple:
        if self.cfg.spatial:
            b = pools.sample_triplets(self.data.pools[kind], self.cfg.batch_size, self.rng)
            return b.source, b.target, b.theta
        b = sample_sequence_triplets(self.data.train_frames, self.cfg.batch_size, self.rng,
                                     self.cfg.history, self.cfg.max_horizon)
        return b.history, b.target, b.theta

    # -- stepping
    def _record(self, values: dict) -> None:
        _check_finite(self.iteration, values, self.last_checkpoint)
        for k, v in values.items():
            s, n = self.window.get(k, (0.0, 0))
            self.window[k] = (s + v, n + 1)

    def step(self) -> str:
        cyc = schedule(self.cfg)
        kind = cyc[self.iteration % len(cyc)]
        if self.cfg.mode == "summed":
            self._summed_step(cyc)
            kind = "summed"
        elif kind == "V":
            images, eps = self.vae_batch()
            self._record(train_step_vae(self.vae, images, self.optimizers["vae"], eps))
        else:
            src, tgt, theta = self.controller_batch(kind)
            self._record(train_step_controller(self.vae, self.controllers[kind], src, tgt, theta,
                                               self.optimizers[f"ctrl.{kind}"]))
            if kind in self.baselines:
                loss = train_step_cnn(self.baselines[kind], src, tgt, theta, self.optimizers[f"cnn.{kind}"])
                _check_finite(self.iteration, {f"cnn_{kind}": loss}, self.last_checkpoint)
                self.baseline_losses[kind].append(loss)
        self.iteration += 1
        return kind

    def _summed_step(self, cyc) -> None:
        kinds = [k for k in cyc if k != "V"]
        kind = kinds[self.iteration % len(kinds)]
        images, eps = self.vae_batch()
        src, tgt, theta = self.controller_batch(kind)
        self.vae.train()
        out = self.vae.loss(Tensor(images), eps)
        lz, li = controller_losses(self.vae, self.controllers[kind], src, tgt, theta)
        opt = self.optimizers["all"]
        opt.zero_grad()
        (out["total"] + lz + li).backward()
        opt.step()
        self._record({"loss_vae_rec": out["recon"].item(), "loss_kl": out["kl"].item(),
                      "loss_z": lz.item(), "loss_img": li.item()})
        if kind in self.baselines:
            self.baseline_losses[kind].append(
                train_step_cnn(self.baselines[kind], src, tgt, theta, self.optimizers[f"cnn.{kind}"]))

    # -- evaluation
    def evaluate(self) -> float:
        """Held-out per-pixel MSE of the task's main prediction."""
        d = self.data
        if not self.cfg.spatial:
            frames = d.test_frames
            rng = np.random.default_rng(self.cfg.seed + 7)
            b = sample_sequence_triplets(frames, self.cfg.eval_count, rng, self.cfg.history, self.cfg.max_horizon)
            return pixel_mse(predict(self.vae, self.controllers["timestep"], b.history, b.theta), b.target)
        if self.cfg.task == "combined":
            e = d.eval_sets["combined"]
            pred = predict_composed(self.vae, [self.controllers["rotation"], self.controllers["dilation"]],
                                    e.source, [e.angle, e.level])
            return pixel_mse(pred, e.target)
        kind = self.cfg.task
        e = d.eval_sets[kind]
        return pixel_mse(predict(self.vae, self.controllers[kind], e.source, e.theta), e.target)

    def _flush_row(self) -> dict:
        row = {"iter": self.iteration}
        for k in CSV_HEADER[1:-1]:
            s, n = self.window.get(k, (0.0, 0))
            row[k] = s / n if n else float("nan")
        row["eval_mse"] = self.evaluate()
        self.rows.append(row)
        self.window = {}
        return row

    def run(self, out_dir=None, until: int | None = None, log=None) -> list:
        until = self.cfg.iterations if until is None else min(until, self.cfg.iterations)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        while self.iteration < until:
            self.step()
            if self.iteration % self.cfg.eval_every == 0 or self.iteration == self.cfg.iterations:
                row = self._flush_row()
                if log:
                    log(row)
                if out_dir:
                    self.write_csv(os.path.join(out_dir, "metrics.csv"))
            if out_dir and self.cfg.checkpoint_every and self.iteration % self.cfg.checkpoint_every == 0:
                self.save(os.path.join(out_dir, "checkpoint.lstn"))
        if out_dir:
            self.write_csv(os.path.join(out_dir, "metrics.csv"))
            self.save(os.path.join(out_dir, "checkpoint.lstn"))
        return self.rows

    # -- persistence
    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r["iter"]] + [repr(float(r[k])) for k in CSV_HEADER[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.csv_text())

    def modules(self) -> dict:
        out = {"vae": self.vae}
        out.update({f"ctrl.{k}": c for k, c in self.controllers.items()})
        out.update({f"cnn.{k}": m for k, m in self.baselines.items()})
        return out

    def to_checkpoint(self) -> Checkpoint:
        arrays = {}
        for prefix, mod in self.modules().items():
            for name, arr in mod.state_dict().items():
                arrays[f"{prefix}.{name}"] = arr
        steps = {}
        for oname, opt in self.optimizers.items():
            for i, (m, v) in enumerate(zip(opt.state.m, opt.state.v)):
                arrays[f"opt.{oname}.m.{i}"] = m
                arrays[f"opt.{oname}.v.{i}"] = v
            steps[oname] = opt.state.step
        meta = {
            "config": self.cfg.to_dict(),
            "iteration": self.iteration,
            "rng_state": _rng_state(self.rng),
            "adam_steps": steps,
            "rows": self.rows,
            "window": {k: list(v) for k, v in self.window.items()},
            "baseline_losses": self.baseline_losses,
            "image_shape": list(self.data.image_shape),
            "digests": self.data.digests,
        }
        return Checkpoint(arrays, json.loads(json.dumps(meta, default=float)))

    def load(self, ckpt: Checkpoint) -> None:
        a = ckpt.arrays
        for prefix, mod in self.modules().items():
            mod.load_state_dict({name: a[f"{prefix}.{name}"] for name in mod.state_dict()})
        for oname, opt in self.optimizers.items():
            opt.state.m = [a[f"opt.{oname}.m.{i}"].copy() for i in range(len(opt.params))]
            opt.state.v = [a[f"opt.{oname}.v.{i}"].copy() for i in range(len(opt.params))]
            opt.state.step = int(ckpt.meta["adam_steps"][oname])
        meta = ckpt.meta
        self.iteration = int(meta["iteration"])
        self.rng.bit_generator.state = meta["rng_state"]
        self.rows = [dict(r) for r in meta["rows"]]
        self.window = {k: tuple(v) for k, v in meta["window"].items()}
        self.baseline_losses = {k: list(v) for k, v in meta.get("baseline_losses", {}).items()}

    def save(self, path) -> None:
        save_checkpoint(path, self.to_checkpoint())
        self.last_checkpoint = str(path)


def trainer_from_checkpoint(path, data: TaskData | None = None) -> Trainer:
    ckpt = load_checkpoint(path)
    cfg = TrainConfig.from_dict(ckpt.meta["config"])
    t = Trainer(cfg, data)
    t.load(ckpt)
    t.last_checkpoint = str(path)
    return t


def run_schedule(cfg: TrainConfig, out_dir=None, resume=None, data: TaskData | None = None, log=None) -> Trainer:
    """Train per ``cfg``; continue from the checkpoint ``resume`` when given."""
    trainer = trainer_from_checkpoint(resume, data) if resume else Trainer(cfg, data)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    trainer.run(out_dir, log=log)
    return trainer
