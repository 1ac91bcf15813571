"""Part attention on person activities.

Person sprites carry their class texture in one band: the phone patch sits
in the upper half, the crouch patch in the lower half, and likewise for the
flicker classes. Global average pooling sees the same texture either way;
the part-attention head adds max-pooled scores per horizontal part, so it
can tell the upper band from the lower one.

Trains both heads on the same data (about 20 s) and prints the confusion
matrices.

    python3 demos/part_attention.py
"""
import numpy as np

from actdet.clipnet import predict
from actdet.datasets import ClipGeometry
from actdet.experiments import person_ablation, split_datasets
from actdet.motionenc import RGB_CHANNELS
from actdet.synthgen import PERSON_CLASSES

results = person_ablation(seed=0, n_videos=300, epochs=10)
_, test, _ = split_datasets(PERSON_CLASSES, 300, 0, ClipGeometry())
test = test.select_channels(RGB_CHANNELS)
short = [c.removeprefix("person_")[:7] for c in test.class_names]

for mode, r in results.items():
    pred = predict(test, r.params, mode).argmax(axis=1)
    cm = np.zeros((len(short), len(short)), int)
    np.add.at(cm, (test.labels, pred), 1)
    print(f"{mode}: accuracy {r.accuracy:.3f}")
    print(" " * 9 + "".join(f"{c:>9}" for c in short))
    for name, row in zip(short, cm):
        print(f"{name:>9}" + "".join(f"{v:>9}" for v in row))
    print()

lam = results["part_attention"].params.arrays
print("learned part weights per class (lambda2 = upper part, lambda3 = lower part)")
for c, l2, l3 in zip(short, lam["lambda2"], lam["lambda3"]):
    print(f"  {c:<9} {l2:+.3f} {l3:+.3f}")
