import json

import numpy as np
import pytest

from lstnet.cli import main
from lstnet.imageio import read_pgm, write_pgm

from .conftest import TINY_SEQUENCE, TINY_SPATIAL


def _config(tmp_path, name, **kw):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(kw))
    return str(path)


@pytest.fixture(scope="module")
def spatial_ckpt(tmp_path_factory):
    d = tmp_path_factory.mktemp("spatial")
    cfg = _config(d, "cfg", **{**TINY_SPATIAL, "task": "combined", "iterations": 8, "eval_every": 4})
    assert main(["train", "--config", cfg, "--out", str(d / "run"), "--quiet"]) == 0
    return d / "run" / "checkpoint.lstn"


@pytest.fixture(scope="module")
def sequence_ckpt(tmp_path_factory):
    d = tmp_path_factory.mktemp("sequence")
    cfg = _config(d, "cfg", **{**TINY_SEQUENCE, "iterations": 6})
    assert main(["train", "--config", cfg, "--out", str(d / "run"), "--quiet"]) == 0
    return d / "run" / "checkpoint.lstn"


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_train_outputs_and_manifest(spatial_ckpt):
    run = spatial_ckpt.parent
    manifest = json.loads((run / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"metrics.csv", "checkpoint.lstn"}
    assert manifest["command"] == "train" and manifest["seed"] == 0
    assert manifest["config"]["task"] == "combined"
    assert "out" not in manifest["parameters"] and "timestamp" not in json.dumps(manifest)
    header = (run / "metrics.csv").read_text().splitlines()[0]
    assert header == "iter,loss_vae_rec,loss_kl,loss_z,loss_img,eval_mse"


def test_rerun_reproduces_manifest(tmp_path, spatial_ckpt):
    cfg = _config(tmp_path, "cfg", **{**TINY_SPATIAL, "task": "combined", "iterations": 8, "eval_every": 4})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "again"), "--quiet"]) == 0
    a = json.loads((spatial_ckpt.parent / "manifest.json").read_text())
    b = json.loads((tmp_path / "again" / "manifest.json").read_text())
    a["parameters"].pop("config"), b["parameters"].pop("config")
    assert a == b


def test_non_empty_output_needs_force(tmp_path, capsys):
    cfg = _config(tmp_path, "cfg", **{**TINY_SPATIAL, "iterations": 2, "eval_every": 2})
    out = str(tmp_path / "run")
    assert main(["train", "--config", cfg, "--out", out, "--quiet"]) == 0
    assert main(["train", "--config", cfg, "--out", out, "--quiet"]) == 2
    assert "--force" in _error(capsys)["message"]
    assert main(["train", "--config", cfg, "--out", out, "--quiet", "--force"]) == 0


def test_environment_variable_sets_output_dir(tmp_path, monkeypatch, spatial_ckpt):
    monkeypatch.setenv("LSTNET_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["transform", "--checkpoint", str(spatial_ckpt), "--spec", "rotation=0.2", "--quiet"]) == 0
    assert (tmp_path / "env" / "transform.pgm").exists()


def test_missing_inputs_exit_2(tmp_path, capsys, spatial_ckpt):
    assert main(["train", "--task", "rotation", "--data-dir", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    err = _error(capsys)
    assert err["exit_code"] == 2 and "nope" in err["message"]
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.lstn"), "--out", str(tmp_path / "e")]) == 2
    assert _error(capsys)["path"].endswith("missing.lstn")
    bad = tmp_path / "bad.lstn"
    bad.write_bytes(b"not a checkpoint")
    assert main(["sweep", "--checkpoint", str(bad), "--out", str(tmp_path / "s")]) == 2
    assert _error(capsys)["error"] == "CheckpointFormatError"


def test_usage_errors_exit_2(tmp_path, capsys, spatial_ckpt):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--task", "shear"])
    assert exc.value.code == 2
    assert main(["transform", "--checkpoint", str(spatial_ckpt), "--spec", "shear=1", "--out", str(tmp_path / "a")]) == 2
    assert main(["transform", "--checkpoint", str(spatial_ckpt), "--spec", "rotation", "--out", str(tmp_path / "b")]) == 2
    bad_cfg = _config(tmp_path, "bad", task="rotation", learning_rate_typo=1)
    assert main(["train", "--config", bad_cfg, "--out", str(tmp_path / "c")]) == 2
    assert "unknown config keys" in _error(capsys)["message"]


def test_transform_reads_pgm_and_warns_out_of_range(tmp_path, spatial_ckpt, mnist):
    img = tmp_path / "digit.pgm"
    write_pgm(img, mnist.images[3])
    np.testing.assert_allclose(read_pgm(img), mnist.images[3], atol=1 / 127.5)
    out = tmp_path / "t"
    assert main(["transform", "--checkpoint", str(spatial_ckpt), "--image", str(img),
                 "--spec", "rotate=1.2", "--spec", "dilation=-1", "--out", str(out), "--quiet"]) == 0
    result = read_pgm(out / "transform.pgm")
    assert result.shape == (1, 28, 28)
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["warnings"]) == 1 and "rotation=1.2" in manifest["warnings"][0]


def test_sweep_panels_match_single_transforms(tmp_path, spatial_ckpt):
    sweep = tmp_path / "sweep"
    assert main(["sweep", "--checkpoint", str(spatial_ckpt), "--kind", "rotation", "--steps", "3",
                 "--index", "2", "--out", str(sweep), "--quiet"]) == 0
    grid = read_pgm(sweep / "sweep.pgm")[0]
    assert grid.shape == (28, 4 * 28 + 3 * 2)
    thetas = json.loads((sweep / "manifest.json").read_text())["parameters"]["thetas"]
    assert thetas == pytest.approx([-np.pi / 4, 0.0, np.pi / 4])
    single = tmp_path / "single"
    assert main(["transform", "--checkpoint", str(spatial_ckpt), "--index", "2",
                 "--spec", f"rotation={thetas[2]!r}", "--out", str(single), "--quiet"]) == 0
    panel = grid[:, 3 * 30:3 * 30 + 28]
    np.testing.assert_array_equal(panel, read_pgm(single / "transform.pgm")[0])


def test_eval_writes_table(tmp_path, spatial_ckpt, capsys):
    out = tmp_path / "ev"
    assert main(["eval", "--checkpoint", str(spatial_ckpt), "--count", "8", "--out", str(out)]) == 0
    lines = (out / "eval.csv").read_text().splitlines()
    assert lines[0] == "section,task,model,key,value"
    tasks = {l.split(",")[1] for l in lines[1:]}
    assert tasks == {"rotation", "dilation", "combined"}
    assert "per-pixel" in capsys.readouterr().out


def test_predict_and_eval_on_sequences(tmp_path, sequence_ckpt):
    out = tmp_path / "pred"
    assert main(["predict", "--checkpoint", str(sequence_ckpt), "--sequence", "1", "--out", str(out), "--quiet"]) == 0
    pred, truth = read_pgm(out / "prediction.pgm"), read_pgm(out / "ground_truth.pgm")
    assert pred.shape == truth.shape == (1, 16, 6 * 16 + 5 * 2)
    np.testing.assert_array_equal(pred[..., :16], truth[..., :16])
    assert main(["eval", "--checkpoint", str(sequence_ckpt), "--count", "4", "--out", str(tmp_path / "ev"), "--quiet"]) == 0
    res = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert [r["horizon"] for r in res["horizons"]] == [1, 2, 3, 4, 5]


def test_predict_rejects_spatial_checkpoint(tmp_path, spatial_ckpt):
    assert main(["predict", "--checkpoint", str(spatial_ckpt), "--out", str(tmp_path / "p")]) == 2


def test_gen_data_pools_and_sequences(tmp_path):
    out = tmp_path / "dil"
    assert main(["gen-data", "--kind", "dilation", "--dilation-samples", "20", "--out", str(out), "--quiet"]) == 0
    pool = json.loads((out / "pool.json").read_text())
    assert pool["augmentation_count"] == 80 and pool["per_class"] == [2] * 10
    assert (out / "augmented.idx").stat().st_size == 16 + 80 * 28 * 28
    again = tmp_path / "dil2"
    assert main(["gen-data", "--kind", "dilation", "--dilation-samples", "20", "--out", str(again), "--quiet"]) == 0
    assert json.loads((again / "pool.json").read_text())["digest"] == pool["digest"]

    cfg = _config(tmp_path, "seq", sequence=TINY_SEQUENCE["sequence"], sequence_test_count=3)
    seq = tmp_path / "seq"
    assert main(["gen-data", "--kind", "sequence", "--config", cfg, "--out", str(seq), "--quiet"]) == 0
    assert json.loads((seq / "pool.json").read_text())["test"]["count"] == 3
    train_cfg = _config(tmp_path, "train", **{**TINY_SEQUENCE, "iterations": 2, "eval_every": 2})
    assert main(["train", "--config", train_cfg, "--sequence-dir", str(seq), "--out", str(tmp_path / "r"), "--quiet"]) == 0


def test_resume_continues_run(tmp_path):
    cfg = _config(tmp_path, "cfg", **{**TINY_SPATIAL, "iterations": 8, "eval_every": 4})
    full, part = tmp_path / "full", tmp_path / "part"
    assert main(["train", "--config", cfg, "--out", str(full), "--quiet"]) == 0
    short = _config(tmp_path, "short", **{**TINY_SPATIAL, "iterations": 8, "eval_every": 4, "checkpoint_every": 4})
    from lstnet.training import Trainer, TrainConfig
    t = Trainer(TrainConfig.from_dict(json.loads(open(short).read())))
    t.run(part, until=4)
    assert main(["train", "--config", short, "--resume", str(part / "checkpoint.lstn"), "--out", str(part), "--quiet"]) == 0
    assert (part / "metrics.csv").read_text() == (full / "metrics.csv").read_text()
