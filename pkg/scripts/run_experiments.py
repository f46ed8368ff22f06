"""Train and evaluate every comparison run, writing results.json per run.

Usage: python3 scripts/run_experiments.py RUN_DIR [RESULTS_DIR]

Runs already finished with the same config are skipped, so the script can
be restarted. Small artefacts (results.json, metrics.csv) are copied into
RESULTS_DIR (default: ./results) for the acceptance suite.
"""

import json
import os
import shutil
import sys
import time

from lstnet.experiments import load_results, run_sequence_experiment, run_spatial_experiment
from lstnet.training import TrainConfig

SEQUENCE = dict(count=256, size=32, length=12, radius=[3, 6], speed=[1.5, 3.0], curvature=[-0.15, 0.15])
SEQUENCE_RUN = dict(task="sequence", sequence=SEQUENCE, channels=[16, 32, 64], latent_dim=64, batch_size=32,
                    iterations=15000, eval_every=500, eval_count=256, sequence_test_count=64)
# the bundled digit subset has 450 training digits per class after the held-out split
SPATIAL_RUN = dict(iterations=10000, baseline=True, dilation_samples=4500, eval_every=500, eval_count=256)

RUNS = {
    "sequence_fern": ("sequence", dict(SEQUENCE_RUN, controller="fern"), dict(head_iterations=2000)),
    "sequence_linear": ("sequence", dict(SEQUENCE_RUN, controller="linear"), dict(head_iterations=0)),
    "rotation": ("spatial", dict(SPATIAL_RUN, task="rotation"), {}),
    "dilation": ("spatial", dict(SPATIAL_RUN, task="dilation"), {}),
    "combined": ("spatial", dict(SPATIAL_RUN, task="combined"), {}),
}


def main(run_dir, results_dir="results", only=None):
    for name, (kind, overrides, extra) in RUNS.items():
        if only and name not in only:
            continue
        cfg = TrainConfig(**overrides)
        out = os.path.join(run_dir, name)
        res = load_results(out, cfg)
        if res is None:
            t0 = time.time()

            def log(row, name=name, t0=t0):
                print(json.dumps({"run": name, "seconds": round(time.time() - t0), **row}), flush=True)

            if kind == "spatial":
                res = run_spatial_experiment(cfg, out, eval_count=1000, log=log)
            else:
                res = run_sequence_experiment(cfg, out, log=log, **extra)
        dest = os.path.join(results_dir, name)
        os.makedirs(dest, exist_ok=True)
        for f in ("results.json", "metrics.csv"):
            shutil.copyfile(os.path.join(out, f), os.path.join(dest, f))
        print(json.dumps({"run": name, "done": True, "metrics": res["metrics"]}), flush=True)


if __name__ == "__main__":
    main(sys.argv[1], *(sys.argv[2:3] or ["results"]), only=sys.argv[3:] or None)
