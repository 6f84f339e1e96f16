"""Scenario registry: scaled workloads preserving a constant compute product
(points x clusters) and a 1:10:100 point ratio across the i/ii/iii family,
plus a tiny CI-sized family with the same constant product."""

from __future__ import annotations

from .dataset import ScenarioSpec


def _spec(n: int, k: int, seed: int = 42) -> ScenarioSpec:
    return ScenarioSpec(n_points=n, k_clusters=k, dims=3, seed=seed,
                        max_iter=10, epsilon=1e-4)


SCENARIOS: dict[str, ScenarioSpec] = {
    "i-small": _spec(100_000, 5_000),
    "ii-small": _spec(1_000_000, 500),
    "iii-small": _spec(10_000_000, 50),
    "i-tiny": _spec(10_000, 500),
    "i-tiny-x10": _spec(100_000, 50),
    "i-tiny-x100": _spec(1_000_000, 5),
}

# The tiny family: same n*k product, points growing 1:10:100.
TINY_FAMILY = ("i-tiny", "i-tiny-x10", "i-tiny-x100")


def lookup(name: str, seed: int | None = None) -> ScenarioSpec:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    spec = SCENARIOS[name]
    if seed is not None and seed != spec.seed:
        spec = ScenarioSpec(spec.n_points, spec.k_clusters, spec.dims, seed,
                            spec.max_iter, spec.epsilon)
    return spec
