"""
Full precision vs binarized: accuracy, leakage, memory
======================================================

The binarized model keeps its first and last layers in float and packs
every hidden-to-hidden layer into sign bits.
"""

from gecko import (
    BinarizedModel,
    MlpModel,
    TrainConfig,
    audit_model,
    evaluate,
    make_splits,
    measure,
    sgd_train,
    ste_train,
    synth_blobs,
)

data = synth_blobs(n=4000, d=50, num_classes=10, spread=1.0, seed=1)
train, test = make_splits(data, 0.5, seed=1).apply(data)

init = MlpModel.init([50, 256, 256, 10], seed=1)
cfg = TrainConfig(epochs=40, seed=1)
fp = sgd_train(init, train, cfg)
xnor = ste_train(init, train, cfg)

for name, m in (("full precision", fp), ("binarized", xnor)):
    acc = evaluate(m, test)[0]
    attack = audit_model(m, train, test, seed=1)
    print(f"{name:15s} test {acc:.3f}  gap {attack.generalization_error:.3f}  attack {attack.attack_accuracy:.3f}"
          f"  bytes {measure(m).memory_bytes_actual}")

# inference on the binarized model never multiplies inside the hidden stack
rep = measure(xnor)
print("\nMACs per sample:", rep.mac_count, " XNORs per sample:", rep.xnor_count)
print("packing of the hidden layer:", [round(c.weight_bytes_fp / c.weight_bytes_actual, 1)
                                       for c in rep.layers if c.kind == "binary"])

# a model built straight from the float weights, without STE training
naive = BinarizedModel.from_mlp(fp)
print("sign() of trained float weights, test acc: %.3f" % evaluate(naive, test)[0])
