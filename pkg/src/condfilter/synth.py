"""Seeded synthetic mixtures and brute-force oracles.

Gaussian draws use Box-Muller on uniforms from a Philox (counter-based)
bit generator, so a given ``(spec, seed)`` yields the same stream on every
platform and numpy build.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingSet


@dataclass(frozen=True)
class Component:
    mean: tuple
    std: float
    weight: float


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple
    dim: int
    n: int
    seed: int = 0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(tuple(c[0]), float(c[1]), float(c[2]))
                      for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        if self.dim < 1 or self.n < 1:
            raise ValueError("dim and n must be positive")
        weights = np.array([c.weight for c in comps])
        if (weights < 0).any() or not weights.any():
            raise ValueError("weights must be nonnegative with at least one positive")
        if not math.isclose(weights.sum(), 1.0, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"weights must sum to 1, got {weights.sum()}")
        for c in comps:
            if len(c.mean) != self.dim:
                raise ValueError(f"component mean has dim {len(c.mean)}, expected {self.dim}")
            if not c.std > 0:
                raise ValueError("component stddev must be positive")

    @classmethod
    def gaussian(cls, mean, std=1.0, n=1, seed=0):
        mean = tuple(np.atleast_1d(np.asarray(mean, dtype=float)).tolist())
        return cls((Component(mean, std, 1.0),), len(mean), n, seed)

    @classmethod
    def from_dict(cls, doc):
        comps = tuple(Component(tuple(c["mean"]), c["std"], c["weight"]) for c in doc["components"])
        return cls(comps, doc["dim"], doc["n"], doc.get("seed", 0))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_seed(self, seed, n=None):
        return MixtureSpec(self.components, self.dim, self.n if n is None else n, seed)


def _box_muller(rng, size):
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:size]


def generate_mixture(spec):
    """Draw ``spec.n`` rows; returns ``(EmbeddingSet, component_labels)``."""
    rng = np.random.Generator(np.random.Philox(spec.seed))
    weights = np.array([c.weight for c in spec.components])
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    comp = np.searchsorted(cum, rng.random(spec.n), side="right")
    noise = _box_muller(rng, spec.n * spec.dim).reshape(spec.n, spec.dim)
    means = np.array([c.mean for c in spec.components], dtype=float)
    stds = np.array([c.std for c in spec.components])
    rows = means[comp] + stds[comp, None] * noise
    comp = comp.astype(np.int32)
    return EmbeddingSet(rows, comp), comp


def _log_density(spec, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    terms = []
    for c in spec.components:
        if c.weight == 0:
            continue
        d2 = float(np.sum((x - np.asarray(c.mean)) ** 2))
        terms.append(
            math.log(c.weight) - 0.5 * d2 / c.std**2 - spec.dim * math.log(c.std * math.sqrt(2 * math.pi))
        )
    return terms


def bayes_probability(spec_s, spec_t, x):
    """Bayes-optimal target probability p_t(x) / (p_s(x) + p_t(x)).

    Returns ``(probability, underflow)``. When both densities underflow to
    zero in double precision the ratio is undefined and 0.5 is returned with
    ``underflow=True``.
    """
    if spec_s.dim != spec_t.dim:
        raise ValueError("source and target specs differ in dim")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec_s.dim:
        raise ValueError(f"x has dim {x.shape[0]}, expected {spec_s.dim}")
    ps = sum(math.exp(t) for t in _log_density(spec_s, x))
    pt = sum(math.exp(t) for t in _log_density(spec_t, x))
    if ps == 0.0 and pt == 0.0:
        return 0.5, True
    return pt / (ps + pt), False


def brute_force_kmeans(rows, k):
    """Optimal K-means inertia by enumerating every assignment of rows to k labels."""
    X = np.asarray(getattr(rows, "data", rows), dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if n > 10 or k > 3:
        raise ValueError("brute force limited to count <= 10 and k <= 3")
    if k < 1 or k > n:
        raise ValueError("need 1 <= k <= count")
    assignments = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64)
    total = np.zeros(assignments.shape[0])
    for c in range(k):
        mask = (assignments == c).astype(float)  # (A, n)
        counts = mask.sum(axis=1)
        safe = np.where(counts > 0, counts, 1.0)
        means = (mask @ X) / safe[:, None]  # (A, d)
        dev = X[None, :, :] - means[:, None, :]
        total += np.einsum("an,and->a", mask, dev * dev)
    return float(total.min())


# -- benchmark generators ---------------------------------------------------


def component_benchmark(seed, dim=1, n_source=2000, n_target=500, separation=5.0):
    """Balanced source mixture at -sep/+sep (first axis) and a target from +sep.

    Returns ``(source, source_component, target)`` where component 1 is the
    target-like one.
    """
    mean_pos = np.zeros(dim)
    mean_pos[0] = separation
    source_spec = MixtureSpec(
        (Component(tuple(-mean_pos), 1.0, 0.5), Component(tuple(mean_pos), 1.0, 0.5)), dim, n_source, seed
    )
    target_spec = MixtureSpec.gaussian(mean_pos, 1.0, n_target, seed + 1_000_003)
    source, comp = generate_mixture(source_spec)
    target, _ = generate_mixture(target_spec)
    return EmbeddingSet(source.data), comp, EmbeddingSet(target.data)


def shift_benchmark(seed, n_source=2000, n_target=300, n_classes=4, spacing=3.0, separation=5.0):
    """Two-region source where each class looks different in each region.

    Class ``c`` sits at ``(+sep, spacing*c)`` in region A and at
    ``(-sep, spacing*(C-1-c))`` in region B, so a class centroid pooled over
    both regions is uninformative. Returns ``(source, region, targets)`` with
    ``targets = {"A": labeled target from region A, "B": labeled target from B}``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    offset = spacing * (n_classes - 1) / 2

    def draw(n, region_of_row):
        labels = rng.integers(n_classes, size=n)
        x = np.where(region_of_row == 0, separation, -separation)
        y_pos = np.where(region_of_row == 0, labels, n_classes - 1 - labels) * spacing - offset
        noise = _box_muller(rng, 2 * n).reshape(n, 2)
        rows = np.column_stack([x, y_pos]) + noise
        return EmbeddingSet(rows, labels)

    region = (np.arange(n_source) % 2).astype(np.int32)
    source = draw(n_source, region)
    targets = {
        "A": draw(n_target, np.zeros(n_target, dtype=np.int32)),
        "B": draw(n_target, np.ones(n_target, dtype=np.int32)),
    }
    return source, region, targets
