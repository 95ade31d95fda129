"""Voting fusion of probability maps into a single label mask.

Three per-voxel rules are provided:

* majority: each map casts one vote for its argmax class,
      y(x) = argmax_c  #{i : argmax_c' P_i(x, c') = c}
* confidence-weighted: class scores weighted by each map's confidence,
      y(x) = argmax_c  sum_i w_i(x) P_i(x, c),   w_i(x) = max_c P_i(x, c)
* threshold-weighted: the confidence-weighted score is normalized by the
  total weight, and a voxel is labeled only when the winning normalized
  score reaches the threshold tau; otherwise it falls back to background,
      S(x, c) = sum_k w_k(x) P_k(x, c)
      y(x)    = argmax_c S_hat(x, c)  if max_c S_hat >= tau else 0,
  with S_hat = S / sum_k w_k(x). The normalization keeps a fixed tau
  meaningful for any ensemble size.

All ties break toward the lower class index. Fusion inputs are sorted by
source tag, so results do not depend on the order maps were supplied in.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .core import LabelMask, ProbabilityMap, Spacing
from .errors import InconsistentMaps, InvalidTau

VOTING_MODES = ("majority", "confidence_weighted", "threshold_weighted")


def _check_tau(tau) -> float:
    if not (isinstance(tau, (int, float)) and math.isfinite(tau) and 0 < tau <= 1):
        raise InvalidTau(f"tau={tau!r} must be in (0, 1]")
    return float(tau)


@dataclass(frozen=True)
class FusionInput:
    """A consistent, deterministically ordered set of maps to fuse."""

    maps: tuple[ProbabilityMap, ...]
    mode: str = "threshold_weighted"
    tau: float = 0.6

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise InconsistentMaps("fusion input needs at least one probability map")
        dims, classes = maps[0].dims, maps[0].num_classes
        for m in maps[1:]:
            if m.dims != dims:
                raise InconsistentMaps(
                    f"map {m.source_tag!r} dims {m.dims} != {dims} "
                    f"of {maps[0].source_tag!r}"
                )
            if m.num_classes != classes:
                raise InconsistentMaps(
                    f"map {m.source_tag!r} has {m.num_classes} classes, "
                    f"expected {classes}"
                )
        if self.mode not in VOTING_MODES:
            raise ValueError(f"voting mode {self.mode!r} not in {VOTING_MODES}")
        _check_tau(self.tau)
        object.__setattr__(
            self, "maps", tuple(sorted(maps, key=lambda m: m.source_tag))
        )

    @property
    def dims(self):
        return self.maps[0].dims

    @property
    def num_classes(self) -> int:
        return self.maps[0].num_classes

    def stacked(self) -> np.ndarray:
        """Probabilities stacked to shape (N, nx, ny, nz, C), sorted order."""
        return np.stack([m.probs for m in self.maps])


def _require_mode(input: FusionInput, mode: str):
    if input.mode != mode:
        raise ValueError(f"fusion input has mode {input.mode!r}, expected {mode!r}")


def majority_vote(input: FusionInput) -> LabelMask:
    """Most frequent per-map argmax wins; ties go to the lower class index."""
    _require_mode(input, "majority")
    stacked = input.stacked()
    votes = np.argmax(stacked, axis=-1)  # (N, nx, ny, nz), lower index on ties
    counts = (votes[..., None] == np.arange(input.num_classes)).sum(axis=0)
    return LabelMask(np.argmax(counts, axis=-1), input.num_classes)


def _weighted_scores(stacked: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (scores, total_weight): S(x,c) = sum_k w_k(x) P_k(x,c)."""
    weights = stacked.max(axis=-1)  # (N, nx, ny, nz)
    scores = np.einsum("nxyzc,nxyz->xyzc", stacked, weights)
    return scores, weights.sum(axis=0)


def confidence_weighted_vote(input: FusionInput) -> LabelMask:
    """Argmax of confidence-weighted class scores."""
    _require_mode(input, "confidence_weighted")
    scores, _ = _weighted_scores(input.stacked())
    return LabelMask(np.argmax(scores, axis=-1), input.num_classes)


def threshold_weighted_vote(input: FusionInput) -> LabelMask:
    """Confidence-weighted vote gated by the normalized-score threshold.

    The total weight is always positive (each map's per-voxel max is at
    least 1/C), so the normalized score is well defined and lies in [0, 1].
    """
    _require_mode(input, "threshold_weighted")
    tau = _check_tau(input.tau)
    scores, total_weight = _weighted_scores(input.stacked())
    normalized = scores / total_weight[..., None]
    best = np.argmax(normalized, axis=-1)
    confident = np.max(normalized, axis=-1) >= tau
    return LabelMask(np.where(confident, best, 0), input.num_classes)


_VOTE_FOR_MODE = {
    "majority": majority_vote,
    "confidence_weighted": confidence_weighted_vote,
    "threshold_weighted": threshold_weighted_vote,
}


def fuse(input: FusionInput) -> LabelMask:
    """Dispatch to the voting rule selected by the input's mode."""
    return _VOTE_FOR_MODE[input.mode](input)


def foreground_volume(mask: LabelMask, spacing: Spacing) -> float:
    """Physical volume of all non-background voxels, in mm^3."""
    return float(np.count_nonzero(mask.labels)) * spacing.voxel_volume
