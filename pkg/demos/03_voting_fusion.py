"""Fusing probability maps: majority, confidence-weighted, and
threshold-weighted voting.

    python3 demos/03_voting_fusion.py
"""

import numpy as np

from segtta import (
    FusionInput,
    ProbabilityMap,
    Spacing,
    foreground_volume,
    fuse,
)


def single_voxel_map(p_background, tag):
    probs = np.array([[[[p_background, 1.0 - p_background]]]])
    return ProbabilityMap(probs, source_tag=tag)


# Three voters at one voxel: two lean foreground, one is a confident
# background vote.
maps = (
    single_voxel_map(0.40, "model-a"),   # foreground at 0.60
    single_voxel_map(0.45, "model-b"),   # foreground at 0.55
    single_voxel_map(0.95, "model-c"),   # background at 0.95
)

for mode in ("majority", "confidence_weighted", "threshold_weighted"):
    mask = fuse(FusionInput(maps, mode=mode, tau=0.6))
    print(f"{mode:<22} -> class {int(mask.labels[0, 0, 0])}")

# Majority counts argmax votes (2 foreground vs 1 background) and keeps
# the voxel. The weighted modes let the confident background voter pull
# the score down, so the same voxel lands in background.
print()

# The threshold trades coverage for precision. Watch foreground volume
# shrink as tau rises on a random ensemble.
rng = np.random.default_rng(0)
dims = (24, 24, 16)
ensemble = []
for i in range(5):
    noise = rng.random((*dims, 1))
    fg = np.clip(0.25 + 0.6 * (rng.random(dims)[..., None] > 0.55) + 0.2 * noise,
                 0.0, 1.0)
    probs = np.concatenate([1.0 - fg, fg], axis=-1)
    ensemble.append(ProbabilityMap(probs, source_tag=f"m{i}"))

spacing = Spacing(1.0, 1.0, 1.0)
print(f"{'tau':>5}  foreground mm^3")
for tau in (0.3, 0.45, 0.6, 0.75, 0.9):
    mask = fuse(FusionInput(tuple(ensemble), mode="threshold_weighted", tau=tau))
    print(f"{tau:>5}  {foreground_volume(mask, spacing):10.0f}")

print()

# Fusion is order-independent: maps are sorted by source tag internally.
shuffled = tuple(reversed(ensemble))
a = fuse(FusionInput(tuple(ensemble), mode="threshold_weighted", tau=0.6))
b = fuse(FusionInput(shuffled, mode="threshold_weighted", tau=0.6))
print(f"permutation invariant: {np.array_equal(a.labels, b.labels)}")
