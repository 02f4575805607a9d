"""
Saving, loading and auditing from the command line
==================================================
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from gecko import MlpModel, TrainConfig, load_model, make_splits, save_model, sgd_train, synth_blobs

data = synth_blobs(n=600, d=8, num_classes=3, spread=0.8, seed=0)
train, _ = make_splits(data, 0.5, seed=0).apply(data)
model = sgd_train(MlpModel.init([8, 32, 3], seed=0), train, TrainConfig(epochs=10))

out = Path(tempfile.mkdtemp())
save_model(model, out / "demo.gecko")
print((out / "demo.gecko.json").read_text())

back = load_model(out / "demo.gecko")
print("architecture after reload:", back.sizes)

# the report subcommand reads model files and writes efficiency.json / .csv
subprocess.run([sys.executable, "-m", "gecko", "report", "--model", str(out / "demo.gecko"), "--out", str(out)],
               check=True)
print(json.loads((out / "efficiency.json").read_text())["models"][0]["param_count"])
