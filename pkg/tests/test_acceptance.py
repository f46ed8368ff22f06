"""Acceptance criteria, one test and one printed PASS/FAIL line each.

Criteria 5-10 read the results written by ``scripts/run_experiments.py``
(default ``./results``, override with ``$LSTNET_RESULTS_DIR``) and check that
each one was produced by the configuration pinned in that script.
"""

import importlib.util
import json
import os

import numpy as np
import pytest

from lstnet.autograd import Tensor, check_gradients
from lstnet.autograd import functional as F
from lstnet.controller import ControllerConfig, ControllerModule, image_loss, latent_loss
from lstnet.fern import FernEnsemble, fern_coefficients, fern_enumerate, fern_reparam
from lstnet.training import TrainConfig, Trainer, build_data, trainer_from_checkpoint
from lstnet.vae import VaeConfig, VaeModel, kl_to_standard_normal

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RESULTS_DIR = os.environ.get("LSTNET_RESULTS_DIR", os.path.join(ROOT, "results"))

# published reference MSE values the desk-scale runs are compared against
ROTATION_REFERENCE = 0.02380177
DILATION_REFERENCE = 0.00835836


def report(capsys, number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def _pinned_runs() -> dict:
    spec = importlib.util.spec_from_file_location("run_experiments", os.path.join(ROOT, "scripts", "run_experiments.py"))
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod.RUNS


def results(name: str) -> dict:
    path = os.path.join(RESULTS_DIR, name, "results.json")
    if not os.path.exists(path):
        pytest.fail(f"{path} is missing; run scripts/run_experiments.py first")
    with open(path) as f:
        res = json.load(f)
    pinned = TrainConfig(**_pinned_runs()[name][1])
    assert res["config_hash"] == pinned.config_hash(), f"{name} results come from a different config"
    return res


# ----------------------------------------------------------------- 1

def test_criterion_01_fern_equivalence(capsys):
    rng = np.random.default_rng(2024)
    leaves = rng.uniform(-5, 5, (1000, 4))
    d = rng.uniform(-1, 1, (1000, 2))
    enumerated = fern_enumerate(leaves, (1 + d[:, 0]) / 2, (1 + d[:, 1]) / 2)
    b, x, y, z = fern_coefficients(leaves).T
    err = float(np.max(np.abs(fern_reparam(b, x, y, z, d[:, 0], d[:, 1]) - enumerated)))
    report(capsys, 1, err < 1e-6, f"1000 random depth-2 ferns, max abs error {err:.2e} (< 1e-6)")


# ----------------------------------------------------------------- 2

def _op_cases(rng):
    def t(*shape, lo=-1.0, hi=1.0):
        return Tensor(rng.uniform(lo, hi, shape), requires_grad=True, dtype=np.float64)

    a, b = t(3, 4), t(4, 5)
    c, d = t(3, 4), t(1, 4)
    pos = t(3, 4, lo=0.5, hi=2.0)
    away = Tensor(np.sign(rng.uniform(-1, 1, (3, 4))) * rng.uniform(0.2, 1, (3, 4)), requires_grad=True, dtype=np.float64)
    img, w = t(2, 3, 6, 6), t(4, 3, 3, 3)
    wt = t(4, 3, 3, 3)          # maps 4 channels to 3
    bias3, bias4 = t(3), t(4)
    gamma, beta = t(4, lo=0.5, hi=1.5), t(4)
    feat = t(2, 4, 3, 3)
    ens = FernEnsemble(3, 2, rng).astype(np.float64)
    first, second = t(5, 3), t(5, 3)
    proj = lambda shape: Tensor(rng.standard_normal(shape))
    p34, p35, p_img, p_ct, p_bn, p_ens = proj((3, 4)), proj((3, 5)), proj((2, 4, 3, 3)), proj((2, 3, 5, 5)), proj((2, 4, 3, 3)), proj((5, 2))
    return {
        "matmul": (lambda: (F.matmul(a, b) * p35).sum(), {"a": a, "b": b}),
        "add/mul broadcast": (lambda: ((c + d) * c * p34).sum(), {"c": c, "d": d}),
        "div/power": (lambda: ((c / pos) ** 2 * p34).sum(), {"c": c, "pos": pos}),
        "exp/log": (lambda: (F.exp(c) * F.log(pos) * p34).sum(), {"c": c, "pos": pos}),
        "relu": (lambda: (F.relu(away) * p34).sum(), {"x": away}),
        "tanh/sigmoid": (lambda: ((F.tanh(c) + F.sigmoid(c * 2.0)) * p34).sum(), {"c": c}),
        "reshape/concat/split": (lambda: (F.concat(F.split(F.reshape(c, (2, 6)), 2, axis=1)[::-1], axis=1)
                                         * Tensor(p34.data.reshape(2, 6))).sum(), {"c": c}),
        "mean/sum": (lambda: F.mean(c * c, axis=0).sum() + F.sum(c, axis=1).sum(), {"c": c}),
        "conv2d": (lambda: (F.conv2d(img, w, bias4, stride=2, padding=1) * p_img).sum(),
                   {"x": img, "w": w, "b": bias4}),
        "conv2d_transpose": (lambda: (F.conv2d_transpose(feat, wt, bias3, stride=2, padding=1) * p_ct).sum(),
                             {"x": feat, "w": wt, "b": bias3}),
        "batch_norm": (lambda: (F.batch_norm(feat, gamma, beta, None, None, True) * p_bn).sum(),
                       {"x": feat, "gamma": gamma, "beta": beta}),
        "mse": (lambda: F.mse(c, Tensor(p34.data)), {"c": c}),
        "fern ensemble": (lambda: (ens(first, second) * p_ens).sum(),
                          {"first": first, "second": second, **dict(ens.named_parameters())}),
    }


def test_criterion_02_gradient_suite(capsys):
    rng = np.random.default_rng(7)
    cases = _op_cases(rng)
    worst_op = {}
    for name, (fn, tensors) in cases.items():
        reps = check_gradients(fn, tensors, h=1e-3)
        worst_op[name] = max(r.rel_error for r in reps)
    op_name, op_err = max(worst_op.items(), key=lambda kv: kv[1])

    # end to end: VAE loss plus both controller losses on one tiny graph
    vae = VaeModel(VaeConfig((1, 8, 8), 4, (2, 4)), rng).astype(np.float64)
    ctrl = ControllerModule(ControllerConfig(latent_dim=4, hidden=6, decision_width=4), rng).astype(np.float64)
    ctrl.transformer.output_map.weight.data[...] = rng.uniform(-0.5, 0.5, (6, 4))
    for mod in (vae, ctrl):
        for pname, p in mod.named_parameters():
            if pname.endswith("bias"):
                p.data[...] = rng.uniform(-0.3, 0.3, p.shape)   # keep pre-activations off the ReLU kink
    x = Tensor(rng.uniform(-1, 1, (4, 1, 8, 8)), dtype=np.float64)
    target = Tensor(rng.uniform(-1, 1, (4, 1, 8, 8)), dtype=np.float64)
    eps = rng.standard_normal((4, 4))
    theta = rng.uniform(-0.7, 0.7, 4)

    def graph():
        out = vae.loss(x, eps)
        z_hat = ctrl([out["sample"].mu], theta)
        z_target = vae.encode(target)[0]
        return out["total"] + latent_loss(z_target, z_hat) + image_loss(target, vae.decode(z_hat))

    params = {f"vae.{k}": v for k, v in vae.named_parameters()}
    params.update({f"ctrl.{k}": v for k, v in ctrl.named_parameters()})
    # conv biases feeding a batch norm have zero true gradient, so relative
    # error is measured against a floor tied to the largest gradient entry
    for t in params.values():
        t.grad = None
    graph().backward()
    grad_scale = max(np.abs(t.grad).max() for t in params.values() if t.grad is not None)
    e2e = check_gradients(graph, params, h=1e-5, max_entries=12, rng=np.random.default_rng(0),
                          floor=1e-6 * grad_scale)
    e2e_worst = max(e2e, key=lambda r: r.rel_error)
    ok = op_err <= 1e-4 and e2e_worst.rel_error <= 1e-3
    report(capsys, 2, ok, f"{len(cases)} ops worst {op_name} {op_err:.1e} (<= 1e-4); "
                          f"end-to-end {len(params)} tensors worst {e2e_worst.name} {e2e_worst.rel_error:.1e} (<= 1e-3)")


# ----------------------------------------------------------------- 3

def test_criterion_03_residual_identity(capsys):
    rng = np.random.default_rng(3)
    ctrl = ControllerModule(ControllerConfig(latent_dim=16, history_len=1, hidden=32, decision_width=16, n_blocks=2), rng)
    # scramble everything except the interpretation maps, which are zeroed
    for name, p in ctrl.named_parameters():
        p.data[...] = rng.standard_normal(p.shape)
    ctrl.transformer.zero_interpretation()
    z = Tensor(rng.standard_normal((32, 16)).astype(np.float32))
    thetas = np.concatenate([np.linspace(-3, 3, 49), [-1e3, 1e3]])
    exact = all(np.array_equal(ctrl([z], th).data, z.data) for th in thetas)
    report(capsys, 3, exact, f"control_step(z, theta) == z bit for bit for {len(thetas)} theta values")


# ----------------------------------------------------------------- 4

def test_criterion_04_kl_matches_monte_carlo(capsys):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        mu = rng.normal(0, 1, 6)
        log_var = rng.uniform(-1.5, 1.0, 6)
        closed = kl_to_standard_normal(Tensor(mu[None], dtype=np.float64), Tensor(log_var[None], dtype=np.float64)).item()
        std = np.exp(log_var / 2)
        z = mu + std * rng.standard_normal((200_000, 6))
        log_q = -0.5 * (((z - mu) / std) ** 2 + log_var + np.log(2 * np.pi)).sum(axis=1)
        log_p = -0.5 * (z ** 2 + np.log(2 * np.pi)).sum(axis=1)
        mc = float(np.mean(log_q - log_p))
        worst = max(worst, abs(mc - closed) / closed)
    report(capsys, 4, worst < 0.02, f"20 diagonal Gaussians, worst relative gap {worst:.2%} (< 2%)")


# ----------------------------------------------------------------- 5-7

def _bound(res) -> float:
    return 2.0 if res["iterations"] >= 20000 else 3.0


def test_criterion_05_rotation(capsys):
    res = results("rotation")
    m = res["metrics"]["rotation"]
    factor = _bound(res)
    ok = res["iterations"] >= 10000 and m["lstnet"] < m["cnn"] and m["lstnet"] <= factor * ROTATION_REFERENCE
    report(capsys, 5, ok, f"{res['iterations']} iterations: lstnet {m['lstnet']:.5f} vs cnn {m['cnn']:.5f}; "
                          f"bound {factor:g}x{ROTATION_REFERENCE} = {factor * ROTATION_REFERENCE:.5f}")


def test_criterion_06_dilation(capsys):
    res = results("dilation")
    m = res["metrics"]["dilation"]
    ok = m["lstnet"] <= m["cnn"] and m["lstnet"] <= 3 * DILATION_REFERENCE
    report(capsys, 6, ok, f"{res['iterations']} iterations: lstnet {m['lstnet']:.5f} vs cnn {m['cnn']:.5f}; "
                          f"bound 3x{DILATION_REFERENCE} = {3 * DILATION_REFERENCE:.5f}")


def test_criterion_07_combined_margin(capsys):
    res = results("combined")
    m = res["metrics"]
    margin = {k: m[k]["cnn"] - m[k]["lstnet"] for k in ("rotation", "dilation", "combined")}
    ok = margin["combined"] > max(margin["rotation"], margin["dilation"])
    report(capsys, 7, ok, "cnn - lstnet margins: " + ", ".join(f"{k} {v:.5f}" for k, v in margin.items())
           + f" (combined lstnet {m['combined']['lstnet']:.5f} vs cnn {m['combined']['cnn']:.5f})")


# ----------------------------------------------------------------- 8-10

def test_criterion_08_sequence_ablation(capsys):
    fern, lin = results("sequence_fern"), results("sequence_linear")
    fm, lm = fern["metrics"], lin["metrics"]
    beats = all(r["lstnet_mse"] < r["copy_last_mse"] for res in (fm, lm) for r in res["horizons"] if r["horizon"] >= 2)
    ok = fm["mean_mse"] <= lm["mean_mse"] and beats
    report(capsys, 8, ok, f"mean 5-horizon MSE fern {fm['mean_mse']:.5f}, linear {lm['mean_mse']:.5f}, "
                          f"copy-last {fm['copy_last_mean_mse']:.5f}; both beat copy-last for h>=2: {beats}")


def test_criterion_09_moving_patches(capsys):
    res = results("sequence_fern")["metrics"]
    gain = res["patch_improvement"]
    ok = gain["moving"] > gain["static"]
    report(capsys, 9, ok, f"improvement over copy-last: moving {gain['moving']:.5f} vs static {gain['static']:.5f} "
                          f"({res['patch_size']}px patches)")


def test_criterion_10_scalar_head(capsys):
    head = results("sequence_fern")["scalar_head"]
    ok = head["head_mse"] < head["copy_last_mse"]
    report(capsys, 10, ok, f"heading MSE head {head['head_mse']:.3f} vs copy-last {head['copy_last_mse']:.3f} "
                           f"({head['units']})")


# ----------------------------------------------------------------- 11

def test_criterion_11_determinism(capsys, tmp_path, mnist):
    cfg = TrainConfig(task="rotation", iterations=200, eval_every=50, eval_count=64)
    data = build_data(cfg, mnist)
    a, b = Trainer(cfg, data), Trainer(cfg, data)
    a.run(), b.run()
    same_csv = a.csv_text() == b.csv_text()
    half = Trainer(cfg, data)
    half.run(tmp_path, until=100)
    resumed = trainer_from_checkpoint(tmp_path / "checkpoint.lstn", data)
    resumed.run()
    resume_csv = resumed.csv_text() == a.csv_text()
    resume_params = all(np.array_equal(v, resumed.modules()[m].state_dict()[k])
                        for m, mod in a.modules().items() for k, v in mod.state_dict().items())
    ok = same_csv and resume_csv and resume_params
    report(capsys, 11, ok, f"two 200-step rotation runs identical CSV: {same_csv}; "
                           f"100+100 resume identical CSV: {resume_csv}, identical weights: {resume_params}")
