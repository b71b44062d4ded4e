"""Running experiment configs from Python (the same engine as ``dpm-latent run``).

Every report embeds its config and a hash of it; replaying the embedded
config reproduces the metric rows bit for bit, whatever the thread count.
"""

import json
import os
import tempfile
from pathlib import Path

from dpm_latent.cli import report_body, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        report = run_experiment(CONFIGS / "translate_mixture.toml", tmp / "first")
        for rid, name, value in report["rows"]:
            if name == "mean_l2":
                print(f"{rid:10s} mean distance to input {value:.4f}")

        os.environ["DPM_LATENT_THREADS"] = "4"
        replay = run_experiment(report["config"], tmp / "replay")
        same = json.dumps(report_body(report)) == json.dumps(report_body(replay))
        print(f"replay with 4 threads identical: {same}")
        print("files:", sorted(p.relative_to(tmp / "first").as_posix() for p in (tmp / "first").rglob("*") if p.is_file()))


if __name__ == "__main__":
    main()
