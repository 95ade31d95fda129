"""Scoring segmentations: IoU/Dice families and the 95th percentile
Hausdorff distance.

    python3 demos/04_metrics.py
"""

import numpy as np

from segtta import LabelMask, Spacing, evaluate, make_phantom, surface_voxels

_, gt = make_phantom(dims=(40, 40, 28), spacing=(0.8, 0.8, 1.5),
                     num_classes=3, seed=12)
spacing = Spacing(0.8, 0.8, 1.5)


def jittered(mask, shift):
    rolled = np.roll(np.asarray(mask.labels), shift, axis=0)
    return LabelMask(rolled, mask.num_classes)


print("prediction = ground truth:")
perfect = evaluate(gt, gt, spacing)
print(f"  mIoU={perfect.miou:.3f} aIoU={perfect.aiou:.3f} "
      f"HD95={perfect.hd95_mm:.2f} mm\n")

print("prediction shifted along x (boundary error grows with the shift):")
print(f"{'shift':>6} {'mIoU':>7} {'aIoU':>7} {'mDice':>7} {'aDice':>7} {'HD95 mm':>8}")
for shift in (1, 2, 4, 8):
    report = evaluate(jittered(gt, shift), gt, spacing)
    print(f"{shift:>6} {report.miou:7.3f} {report.aiou:7.3f} "
          f"{report.mdice:7.3f} {report.adice:7.3f} {report.hd95_mm:8.2f}")

print()

# HD95 pools directed surface distances from both masks, so it is exactly
# symmetric, and distances are physical: doubling the spacing doubles it.
a = jittered(gt, 3)
forward = evaluate(a, gt, spacing).hd95_mm
backward = evaluate(gt, a, spacing).hd95_mm
doubled = evaluate(a, gt, Spacing(1.6, 1.6, 3.0)).hd95_mm
print(f"symmetry: {forward:.4f} == {backward:.4f} -> {forward == backward}")
print(f"spacing x2 doubles HD95: {doubled:.4f} == {2 * forward:.4f} "
      f"-> {doubled == 2 * forward}\n")

# Per-class and agnostic views differ on multi-class masks: the agnostic
# scores merge all foreground classes before comparing.
report = evaluate(jittered(gt, 2), gt, spacing)
for c, iou in sorted(report.per_class_iou.items()):
    print(f"class {c}: IoU={iou:.3f} Dice={report.per_class_dice[c]:.3f}")
print(f"mean over classes: mIoU={report.miou:.3f}")
print(f"class-agnostic:    aIoU={report.aiou:.3f}\n")

# Surfaces are 6-connectivity boundaries; an empty prediction makes HD95
# undefined rather than some misleading number.
print(f"gt surface voxels: {len(surface_voxels(gt))}")
empty = LabelMask(np.zeros(gt.dims, dtype=np.uint8), gt.num_classes)
report = evaluate(empty, gt, spacing)
print(f"empty prediction: HD95={report.hd95_mm} ({report.undefined_reason})")
