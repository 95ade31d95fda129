"""Shared fixtures and independent oracle implementations.

The oracles here deliberately re-derive results from first principles
(plain loops, all-pairs distances, dense kernels) so the fast library
paths are checked against straightforward re-implementations rather than
against themselves.
"""

import math

import numpy as np
import pytest

from segtta import LabelMask, ProbabilityMap, Spacing, Volume


# --- randomized instances -----------------------------------------------------


def random_dims(rng, max_voxels=64):
    """Random small (nx, ny, nz) with at most ``max_voxels`` voxels."""
    while True:
        dims = tuple(int(rng.integers(1, 9)) for _ in range(3))
        if dims[0] * dims[1] * dims[2] <= max_voxels:
            return dims


def dyadic_prob_maps(rng, n_maps, dims, num_classes, denominator=16):
    """Probability maps on the k/16 grid, so per-voxel sums are exactly 1
    and every fusion sum/product is exact in float64. Exactness makes
    'voxel-exact equality with an independent implementation' well posed
    even at ties."""
    maps = []
    for i in range(n_maps):
        counts = rng.multinomial(
            denominator, [1.0 / num_classes] * num_classes, size=dims
        )
        probs = counts.astype(np.float64) / denominator
        maps.append(ProbabilityMap(probs, source_tag=f"m{i}"))
    return maps


# --- independent fusion oracle -------------------------------------------------


def _argmax_lowest(values):
    best, best_v = 0, values[0]
    for i in range(1, len(values)):
        if values[i] > best_v:
            best, best_v = i, values[i]
    return best


def brute_force_vote(maps, mode, tau=0.6):
    """Per-voxel re-implementation of the three voting rules, plain loops."""
    arrays = [np.asarray(m.probs) for m in maps]
    dims = arrays[0].shape[:3]
    num_classes = arrays[0].shape[3]
    out = np.zeros(dims, dtype=np.int64)
    for x in range(dims[0]):
        for y in range(dims[1]):
            for z in range(dims[2]):
                vectors = [a[x, y, z].tolist() for a in arrays]
                if mode == "majority":
                    counts = [0] * num_classes
                    for vec in vectors:
                        counts[_argmax_lowest(vec)] += 1
                    out[x, y, z] = _argmax_lowest(counts)
                    continue
                weights = [max(vec) for vec in vectors]
                scores = [
                    sum(w * vec[c] for w, vec in zip(weights, vectors))
                    for c in range(num_classes)
                ]
                if mode == "confidence_weighted":
                    out[x, y, z] = _argmax_lowest(scores)
                else:
                    total = sum(weights)
                    normalized = [s / total for s in scores]
                    winner = _argmax_lowest(normalized)
                    out[x, y, z] = (
                        winner if normalized[winner] >= tau else 0
                    )
    return out


# --- independent surface-distance oracle ---------------------------------------


def oracle_surface(fg):
    """Surface voxels via zero padding, written independently of the
    library's shift-based implementation."""
    padded = np.pad(fg, 1)
    core = np.ones_like(fg)
    for axis in range(3):
        for step in (-1, 1):
            core = core & np.roll(padded, step, axis=axis)[1:-1, 1:-1, 1:-1]
    return fg & ~core


def _percentile95(values):
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    h = (len(ordered) - 1) * 0.95
    lo = math.floor(h)
    if lo + 1 >= len(ordered):
        return float(ordered[-1])
    frac = h - lo
    return float(ordered[lo] + frac * (ordered[lo + 1] - ordered[lo]))


def brute_force_hd95(pred, gt, spacing):
    """Quadratic all-pairs pooled-symmetric HD95."""
    ps = np.argwhere(oracle_surface(np.asarray(pred.labels) > 0))
    gs = np.argwhere(oracle_surface(np.asarray(gt.labels) > 0))
    if len(ps) == 0 and len(gs) == 0:
        return 0.0
    if len(ps) == 0 or len(gs) == 0:
        return None
    scale = np.asarray(spacing.as_tuple(), dtype=np.float64)

    def directed(a, b):
        dists = np.empty(len(a))
        for start in range(0, len(a), 256):
            block = a[start : start + 256]
            diff = (block[:, None, :] - b[None, :, :]) * scale
            dists[start : start + len(block)] = np.sqrt(
                (diff * diff).sum(axis=2)
            ).min(axis=1)
        return dists

    pooled = np.concatenate([directed(ps, gs), directed(gs, ps)])
    return _percentile95(pooled)


# --- assorted helpers -----------------------------------------------------------


def random_volume(rng, dims=(16, 16, 16), spacing=(1.0, 1.0, 1.0), vol_id="v"):
    return Volume(rng.random(dims), Spacing(*spacing), vol_id=vol_id)


def random_mask(rng, dims, num_classes=2):
    return LabelMask(
        rng.integers(0, num_classes, size=dims).astype(np.uint8), num_classes
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
