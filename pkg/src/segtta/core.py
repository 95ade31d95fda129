"""Shared domain objects: volumes, masks, probability maps, and specs.

All types are immutable after construction (frozen dataclasses over
read-only numpy arrays), so they are safe to share across worker threads.
Arrays are indexed ``[x, y, z]`` throughout; file readers convert whatever
layout is on disk into this convention.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidAlpha,
    InvalidGamma,
    InvalidSigma,
    NotProbabilistic,
)

#: Tolerance accepted from backends before a map is rejected as
#: non-probabilistic. Values within this band are clamped/renormalized.
PROB_TOL = 1e-3

#: Renormalization skips voxels already summing to 1 within this bound,
#: which makes renormalization exactly idempotent.
RENORM_TOL = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Spacing:
    """Physical voxel size in millimeters along each axis."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"spacing {name}={v!r} must be finite and > 0")

    @property
    def voxel_volume(self) -> float:
        """Volume of one voxel in mm^3."""
        return self.dx * self.dy * self.dz

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    def scaled(self, s: float) -> "Spacing":
        return Spacing(self.dx * s, self.dy * s, self.dz * s)


@dataclass(frozen=True)
class Volume:
    """A 3D scalar intensity grid with physical voxel spacing.

    ``data`` has shape ``(nx, ny, nz)`` and dtype float64; every element
    must be finite. ``vol_id`` identifies the volume in RNG stream keys and
    run logs, so two volumes with equal data but different ids are distinct
    for reproducibility purposes.
    """

    data: np.ndarray
    spacing: Spacing
    vol_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatch(f"volume data must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionMismatch(f"volume dims must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError(f"volume {self.vol_id!r} contains NaN or Inf values")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        """New volume with the same spacing and id but different voxels."""
        return Volume(data, self.spacing, self.vol_id)


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-voxel class probabilities produced by one backend on one view.

    ``probs`` has shape ``(nx, ny, nz, C)`` with C >= 2 classes (class 0 is
    background). Per voxel the probabilities must sum to 1 within
    ``PROB_TOL``; on construction they are clamped to [0, 1] and
    renormalized to sum exactly. Values further out than the tolerance are
    an error, not silently fixed, because they indicate a broken backend.

    ``source_tag`` records (backend, view) provenance and defines the
    deterministic fusion order.
    """

    probs: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 4:
            raise DimensionMismatch(f"probability map must be 4D, got shape {arr.shape}")
        if arr.shape[3] < 2:
            raise DimensionMismatch(f"need >= 2 classes, got num_classes={arr.shape[3]}")
        if not np.isfinite(arr).all():
            raise NotProbabilistic(f"map {self.source_tag!r}: probs contain NaN or Inf")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < -PROB_TOL or hi > 1.0 + PROB_TOL:
            raise NotProbabilistic(
                f"map {self.source_tag!r}: probs range [{lo:g}, {hi:g}] "
                f"outside [0, 1] by more than {PROB_TOL:g}"
            )
        arr = np.clip(arr, 0.0, 1.0)
        sums = arr.sum(axis=3)
        dev = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
        if dev > PROB_TOL:
            raise NotProbabilistic(
                f"map {self.source_tag!r}: per-voxel sum deviates from 1 "
                f"by {dev:g} > {PROB_TOL:g}"
            )
        if dev > RENORM_TOL:
            arr = arr / sums[..., None]
        object.__setattr__(self, "probs", _freeze(arr))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.probs.shape[:3]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[3]

    def retagged(self, source_tag: str) -> "ProbabilityMap":
        m = object.__new__(ProbabilityMap)
        object.__setattr__(m, "probs", self.probs)
        object.__setattr__(m, "source_tag", source_tag)
        return m


@dataclass(frozen=True)
class LabelMask:
    """Per-voxel integer class assignment, 0 = background."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 3:
            raise DimensionMismatch(f"label mask must be 3D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
        if not 2 <= self.num_classes <= 256:
            raise ValueError(f"num_classes={self.num_classes} outside [2, 256]")
        if arr.size and (arr.min() < 0 or arr.max() >= self.num_classes):
            raise ValueError(
                f"labels range [{arr.min()}, {arr.max()}] outside "
                f"[0, {self.num_classes})"
            )
        object.__setattr__(self, "labels", _freeze(arr.astype(np.uint8)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape


AUGMENTATION_KINDS = (
    "identity",
    "gaussian_blur",
    "gaussian_noise",
    "gamma_correction",
    "contrast_enhancement",
)


@dataclass(frozen=True)
class AugmentationSpec:
    """A tagged, parameterized description of one intensity transform.

    Parameters are kind-specific: ``sigma`` for blur (voxels) and noise
    (normalized intensity units), ``gamma`` for gamma correction, ``alpha``
    and ``beta`` for contrast enhancement. ``slice_axis`` selects per-slice
    2D application for the blur (slices perpendicular to that axis); None
    requests full 3D smoothing.
    """

    kind: str
    sigma: float | None = None
    gamma: float | None = None
    alpha: float | None = None
    beta: float | None = None
    slice_axis: int | None = 2

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if self.slice_axis is not None and self.slice_axis not in (0, 1, 2):
            raise ValueError(f"slice_axis={self.slice_axis!r} not in (0, 1, 2) or None")
        if self.kind == "gaussian_blur":
            if self.sigma is None or not (math.isfinite(self.sigma) and self.sigma > 0):
                raise InvalidSigma(f"blur sigma={self.sigma!r} must be finite and > 0")
        elif self.kind == "gaussian_noise":
            if self.sigma is None or not (math.isfinite(self.sigma) and self.sigma >= 0):
                raise InvalidSigma(f"noise sigma={self.sigma!r} must be finite and >= 0")
        elif self.kind == "gamma_correction":
            if self.gamma is None or not (math.isfinite(self.gamma) and self.gamma > 0):
                raise InvalidGamma(f"gamma={self.gamma!r} must be finite and > 0")
        elif self.kind == "contrast_enhancement":
            if self.alpha is None or not (math.isfinite(self.alpha) and self.alpha > 0):
                raise InvalidAlpha(f"alpha={self.alpha!r} must be finite and > 0")
            if self.beta is None:
                object.__setattr__(self, "beta", 0.0)
            elif not math.isfinite(self.beta):
                raise ValueError(f"beta={self.beta!r} must be finite")

    def label(self) -> str:
        """Canonical content-derived name, used for source tags and RNG keys."""
        if self.kind == "identity":
            return "identity"
        if self.kind == "gaussian_blur":
            return f"gaussian_blur(sigma={self.sigma!r},axis={self.slice_axis})"
        if self.kind == "gaussian_noise":
            return f"gaussian_noise(sigma={self.sigma!r})"
        if self.kind == "gamma_correction":
            return f"gamma_correction(gamma={self.gamma!r})"
        return f"contrast_enhancement(alpha={self.alpha!r},beta={self.beta!r})"

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        for key in ("sigma", "gamma", "alpha", "beta"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        if self.kind == "gaussian_blur":
            d["slice_axis"] = self.slice_axis
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationSpec":
        known = {"kind", "sigma", "gamma", "alpha", "beta", "slice_axis"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown augmentation fields {sorted(extra)}")
        return cls(**d)


def default_augmentations() -> tuple[AugmentationSpec, ...]:
    """The standard four-transform set with mild default magnitudes.

    The magnitudes are configurable placeholders (see README); they are
    chosen to perturb without destroying anatomy.
    """
    return (
        AugmentationSpec("gamma_correction", gamma=0.8),
        AugmentationSpec("contrast_enhancement", alpha=1.3, beta=0.0),
        AugmentationSpec("gaussian_blur", sigma=1.0),
        AugmentationSpec("gaussian_noise", sigma=0.05),
    )


def normalize_intensity(v: Volume) -> tuple[Volume, float, float]:
    """Affinely map a volume's intensities onto [0, 1].

    Returns ``(normalized, original_min, original_max)``; the recorded range
    inverts the map via :func:`denormalize_intensity`. Constant volumes map
    to all zeros with recorded range ``(min, min + 1)`` so the inverse is
    still well defined.
    """
    mn = float(v.data.min())
    mx = float(v.data.max())
    if mx > mn:
        out = (v.data - mn) / (mx - mn)
    else:
        out = np.zeros_like(v.data)
        mx = mn + 1.0
    return v.with_data(out), mn, mx


def denormalize_intensity(v: Volume, original_min: float, original_max: float) -> Volume:
    """Invert :func:`normalize_intensity` using its recorded range."""
    return v.with_data(v.data * (original_max - original_min) + original_min)
