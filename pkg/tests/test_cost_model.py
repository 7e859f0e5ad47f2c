import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condfilter.cost_model import (
    IMAGENET_IMAGES,
    SUPERVISED_FULL_COSTS,
    CalibrationError,
    CostProfile,
    ResolutionWarning,
    calibrate,
    compute_hours,
    default_profile,
    estimate_cost,
)


def test_half_resolution_quarters_compute():
    prof = CostProfile(1e-6)
    assert compute_hours(1000, 10, 112, prof) == 0.25 * compute_hours(1000, 10, 224, prof)


def test_default_profile_hits_reference_points():
    prof = default_profile()
    assert estimate_cost(IMAGENET_IMAGES, 90, 224, prof) == pytest.approx(170.0, rel=1e-9)
    assert 90 <= estimate_cost(IMAGENET_IMAGES, 90, 112, prof) <= 110


def test_twelve_percent_subset_ratio():
    prof = default_profile()
    ratio = estimate_cost(150_000, 90, 224, prof) / estimate_cost(IMAGENET_IMAGES, 90, 224, prof)
    assert ratio <= 0.15


@pytest.mark.parametrize("overhead", ["per_image", "fixed"])
def test_exact_recovery(overhead):
    truth = (CostProfile(2e-6, per_image_overhead=5e-7) if overhead == "per_image"
             else CostProfile(2e-6, fixed_overhead_hours=12.0))
    obs = [(i, e, r, estimate_cost(i, e, r, truth)) for i, e, r in [(1e5, 10, 224), (3e5, 20, 112)]]
    fit = calibrate(obs, overhead).profile
    assert fit.throughput_coeff == pytest.approx(truth.throughput_coeff, rel=1e-9)
    assert fit.per_image_overhead == pytest.approx(truth.per_image_overhead, rel=1e-9)
    assert fit.fixed_overhead_hours == pytest.approx(truth.fixed_overhead_hours, rel=1e-9)


def test_noisy_recovery_within_15_percent():
    truth = CostProfile(1.2e-6, per_image_overhead=4e-7)
    design = [(n, e, r) for n in (2e5, 6e5, 1.2e6) for e in (30, 90) for r in (112, 224)]
    for trial in range(20):
        g = np.random.default_rng(trial)
        obs = [(n, e, r, estimate_cost(n, e, r, truth) * (1 + 0.05 * g.standard_normal())) for n, e, r in design]
        fit = calibrate(obs).profile
        assert fit.throughput_coeff == pytest.approx(truth.throughput_coeff, rel=0.15)
        assert fit.per_image_overhead == pytest.approx(truth.per_image_overhead, rel=0.15)


def test_residuals_reproduce_calibration_points():
    cal = calibrate(SUPERVISED_FULL_COSTS)
    for (i, e, r, h), res in zip(SUPERVISED_FULL_COSTS, cal.residuals):
        assert estimate_cost(i, e, r, cal.profile) + res == pytest.approx(h, rel=1e-12)


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate([(1e5, 10, 224, 5.0)])
    # same resolution leaves compute and per-image work collinear
    with pytest.raises(CalibrationError):
        calibrate([(1e5, 10, 224, 5.0), (2e5, 10, 224, 10.0)])
    with pytest.raises(CalibrationError):
        calibrate([(1e5, 10, 224, 5.0), (1e5, 10, 224, 5.0)], overhead="fixed")


def test_argument_errors():
    prof = default_profile()
    for bad in [(0, 1, 224), (1, -1, 224), (1, 1, 0)]:
        with pytest.raises(ValueError):
            estimate_cost(*bad, prof)
    with pytest.warns(ResolutionWarning):
        estimate_cost(10, 1, 160, prof)


def test_profile_roundtrip(tmp_path):
    prof = default_profile()
    prof.save(tmp_path / "p.json")
    assert CostProfile.load(tmp_path / "p.json") == prof


positive = st.integers(1, 2_000_000)


@settings(max_examples=100, deadline=None)
@given(positive, st.integers(1, 300), st.sampled_from([112, 224]))
def test_monotone(images, epochs, res):
    prof = CostProfile(1e-6, fixed_overhead_hours=3.0, per_image_overhead=1e-7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        base = estimate_cost(images, epochs, res, prof)
        assert estimate_cost(images + 1, epochs, res, prof) > base
        assert estimate_cost(images, epochs + 1, res, prof) > base
        assert estimate_cost(images, epochs, res + 1, prof) > base


@settings(max_examples=100, deadline=None)
@given(positive, st.integers(1, 150))
def test_homogeneous(images, half_epochs):
    prof = CostProfile(1e-6)
    a = compute_hours(images, 2 * half_epochs, 224, prof)
    b = compute_hours(2 * images, half_epochs, 224, prof)
    assert a == pytest.approx(b, rel=1e-12)
