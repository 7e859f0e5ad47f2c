"""Pre-training cost estimates as a function of subset size, epochs and resolution.

    hours = fixed_overhead_hours
            + images * epochs * (per_image_overhead + throughput_coeff * (resolution / 224)**2)

Convolution FLOPs scale with pixel count, hence the quadratic term.
``per_image_overhead`` covers work that is paid per image but does not shrink
with resolution (decoding, augmentation, host-device transfer).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

REFERENCE_RESOLUTION = 224
TARGET_RESOLUTION = 224
CALIBRATED_RESOLUTIONS = (112, 224)
OVERHEAD_MODES = ("per_image", "fixed")


class ResolutionWarning(UserWarning):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CostProfile:
    throughput_coeff: float
    fixed_overhead_hours: float = 0.0
    per_image_overhead: float = 0.0
    reference_resolution: int = REFERENCE_RESOLUTION

    def __post_init__(self):
        if not self.throughput_coeff > 0:
            raise ValueError("throughput_coeff must be positive")
        if self.fixed_overhead_hours < 0 or self.per_image_overhead < 0:
            raise ValueError("overheads must be nonnegative")

    def to_text(self):
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_text(cls, text):
        return cls(**json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")


def compute_hours(images, epochs, resolution, profile):
    """Resolution-dependent part of the estimate."""
    scale = (resolution / profile.reference_resolution) ** 2
    return profile.throughput_coeff * images * epochs * scale


def estimate_cost(images, epochs, resolution, profile):
    _check_positive(images=images, epochs=epochs, resolution=resolution)
    if resolution not in CALIBRATED_RESOLUTIONS:
        warnings.warn(
            f"resolution {resolution} outside calibrated set {CALIBRATED_RESOLUTIONS}",
            ResolutionWarning,
            stacklevel=2,
        )
    return (
        profile.fixed_overhead_hours
        + profile.per_image_overhead * images * epochs
        + compute_hours(images, epochs, resolution, profile)
    )


@dataclass(frozen=True)
class Calibration:
    profile: CostProfile
    residuals: np.ndarray


def calibrate(observations, overhead="per_image"):
    """Least-squares fit of a two-parameter profile on relative residuals.

    Timing noise is roughly proportional to run length, so each observation
    is weighted by ``1 / hours``.

    ``observations`` holds ``(images, epochs, resolution, hours)`` tuples.
    ``overhead`` selects the second parameter: ``"per_image"`` fits
    ``per_image_overhead``, ``"fixed"`` fits ``fixed_overhead_hours``.
    """
    if overhead not in OVERHEAD_MODES:
        raise ValueError(f"overhead must be one of {OVERHEAD_MODES}")
    obs = np.asarray(observations, dtype=float).reshape(-1, 4)
    if obs.shape[0] < 2:
        raise CalibrationError("calibration needs at least two observations")
    images, epochs, res, hours = obs.T
    if (obs <= 0).any():
        raise CalibrationError("images, epochs, resolution and hours must be positive")
    work = images * epochs
    compute = work * (res / REFERENCE_RESOLUTION) ** 2
    other = work if overhead == "per_image" else np.ones_like(work)
    A = np.column_stack([compute, other]) / hours[:, None]
    # column scaling keeps the rank test meaningful across units
    norms = np.linalg.norm(A, axis=0)
    An = A / norms
    if np.linalg.matrix_rank(An, tol=1e-10) < 2:
        raise CalibrationError(
            "observations do not separate the two parameters "
            "(vary resolution, or images for a fixed overhead)"
        )
    coef = np.linalg.lstsq(An, np.ones_like(hours), rcond=None)[0] / norms
    throughput, extra = (float(c) for c in coef)
    if throughput <= 0:
        raise CalibrationError(f"fitted throughput_coeff {throughput:g} is not positive")
    if extra < 0:
        warnings.warn(f"fitted overhead {extra:g} < 0, clamped to 0", stacklevel=2)
        extra = 0.0
    if overhead == "per_image":
        profile = CostProfile(throughput, per_image_overhead=extra)
    else:
        profile = CostProfile(throughput, fixed_overhead_hours=extra)
    predicted = np.array([estimate_cost(i, e, r, profile) for i, e, r in obs[:, :3]])
    return Calibration(profile, hours - predicted)


# Cost midpoints for supervised pre-training on the full 1.28M-image set for
# 90 epochs on one GPU: 170 h at 224 px, 100 h at 112 px.
IMAGENET_IMAGES = 1_281_167
SUPERVISED_EPOCHS = 90
SUPERVISED_FULL_COSTS = ((IMAGENET_IMAGES, SUPERVISED_EPOCHS, 224, 170.0), (IMAGENET_IMAGES, SUPERVISED_EPOCHS, 112, 100.0))


def default_profile():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return calibrate(SUPERVISED_FULL_COSTS).profile


def estimate_grid(images_list, epochs, resolutions, profile):
    """Rows of ``(images, resolution, hours)`` for every combination."""
    rows = []
    for images in images_list:
        for res in resolutions:
            rows.append((images, res, estimate_cost(images, epochs, res, profile)))
    return rows
