"""Run the full command-line pipeline twice and confirm identical manifests."""

import json
import tempfile
import warnings
from pathlib import Path

from l2congestion import cli

warnings.filterwarnings("ignore", message="shock")

commands = ["synth", "validate", "diagnose", "estimate", "lp", "iv", "power", "counterfactual", "placebo"]
with tempfile.TemporaryDirectory() as tmp:
    cfg = Path(tmp) / "run.yaml"
    cfg.write_text("seed: 42\nplacebo_reps: 50\n")
    blobs = []
    for run in ("a", "b"):
        out = Path(tmp) / run
        assert cli.main(commands + ["--config", str(cfg), "--out", str(out)]) == 0
        blobs.append((out / "manifest.json").read_bytes())
    manifest = json.loads(blobs[0])
    print(f"{len(manifest['files'])} files, config {manifest['config_hash']}")
    print("identical manifests:", blobs[0] == blobs[1])
    print((Path(tmp) / "a" / "ecm.csv").read_text())
    print(json.loads((Path(tmp) / "a" / "placebo_summary.json").read_text()))
