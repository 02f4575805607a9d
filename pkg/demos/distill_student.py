"""
Distilling a binarized student
==============================

Phase I trains the binarized model on hard labels. Phase II trains the
same starting point against a float teacher's posteriors.

These are the preset-gecko settings for a single seed. On much smaller
splits the teacher's posteriors carry less information and the gain can
vanish or reverse.
"""

from gecko import TrainConfig, make_splits, run_phase1_phase2, synth_blobs

data = synth_blobs(n=10000, d=100, num_classes=10, spread=1.0, seed=0)
splits = make_splits(data, 0.5, seed=0).apply(data)

cfgs = {
    # a moderately trained teacher gives softer, more useful targets than an overfit one
    "teacher": TrainConfig(epochs=20, learning_rate=0.01, seed=0),
    "phase1": TrainConfig(epochs=30, seed=0),
    "phase2": TrainConfig(epochs=30, seed=0),
}
report = run_phase1_phase2([256, 256], [512, 512], splits, cfgs, seed=0)

print(f"{'model':22s} {'phase':18s} train  test   attack  bytes")
for r in report.rows:
    print(f"{r.name:22s} {r.phase:18s} {r.train_acc:.3f}  {r.test_acc:.3f}  {r.attack_acc:.3f}   {r.memory_bytes}")
