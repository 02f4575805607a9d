"""
Does pruning change membership leakage?
=======================================

Train an overfit MLP, zero every weight below a magnitude threshold and
audit the result, once as-is and once after masked retraining.
"""

from gecko import MlpModel, TrainConfig, evaluate, make_splits, sgd_train, synth_blobs
from gecko.compress import prune_sweep, std_scaled_taus

data = synth_blobs(n=4000, d=50, num_classes=10, spread=1.0, seed=0)
train, test = make_splits(data, 0.5, seed=0).apply(data)

model = sgd_train(MlpModel.init([50, 128, 128, 10], seed=0), train, TrainConfig(epochs=40))
print("train / test accuracy: %.3f / %.3f" % (evaluate(model, train)[0], evaluate(model, test)[0]))

# thresholds in units of the weight standard deviation
taus = std_scaled_taus(model, [0, 0.25, 0.5, 1, 2, 4])

for retrain in (False, True):
    print("\nretrain =", retrain)
    print("   tau  sparsity  test_acc  attack_acc")
    for p in prune_sweep(model, (train, test), taus, retrain=retrain, cfg=TrainConfig(epochs=5)):
        print(f"{p.tau:6.3f}  {p.sparsity:8.3f}  {p.test_acc:8.3f}  {p.attack_acc:10.3f}")
