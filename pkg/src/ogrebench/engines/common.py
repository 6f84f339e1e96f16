"""Shared engine plumbing: the execution context handed to every engine and
helpers for centroid persistence and deterministic partial-sum folding."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import reduce

from .. import wire
from ..blockstore import BlockStore
from ..dataset import Block, ScenarioSpec
from ..fabric import Cluster
from ..kernel import CentroidSet, KMeansResult, PartialSums, converged, finalize, merge


class EngineFailure(RuntimeError):
    """A task or worker failed; the run aborts (no retry)."""


@dataclass
class EngineContext:
    cluster: Cluster
    store: BlockStore
    scheduler: object
    spec: ScenarioSpec
    blocks: list[Block]
    initial: CentroidSet
    deterministic: bool = True
    collective: str = "tree"
    compress: bool = False
    combine: bool = False
    reducers: int | None = None
    spill_threshold: int = 1 << 20
    workdir: str = "."
    # perf_counter stamps per completed iteration, for per-iteration times
    iteration_stamps: list[float] = field(default_factory=list)

    @property
    def reducer_count(self) -> int:
        return self.reducers or self.cluster.topology.node_count

    def stamp_iteration(self) -> None:
        self.iteration_stamps.append(time.perf_counter())


def assign_blocks_contiguous(blocks: list[Block], workers: int) -> list[list[Block]]:
    """Contiguous runs of blocks per worker, so folding local results in
    ascending worker rank equals ascending global block order."""
    per = -(-len(blocks) // workers)
    return [blocks[w * per : (w + 1) * per] for w in range(workers)]


def fold_partials(partials: list[PartialSums], k: int, dims: int) -> PartialSums:
    if not partials:
        return PartialSums.zero(k, dims)
    return reduce(merge, partials)


def centroid_object(iteration: int) -> str:
    return f"centroids/{iteration}"


def persist_centroids(store: BlockStore, node: int, centroids: CentroidSet) -> None:
    store.write(node, centroid_object(centroids.iteration), wire.encode(centroids))


def load_centroids(store: BlockStore, node: int, iteration: int) -> CentroidSet:
    return wire.decode(store.read_object(node, centroid_object(iteration)))


def drive_iterations(ctx: EngineContext, step) -> KMeansResult:
    """Run the shared driver loop: ``step(current)`` produces the next
    CentroidSet; stop at convergence or max_iter."""
    current = ctx.initial
    trajectory = [current]
    done = False
    iterations = 0
    for _ in range(ctx.spec.max_iter):
        nxt = step(current)
        trajectory.append(nxt)
        iterations += 1
        ctx.stamp_iteration()
        done = converged(current, nxt, ctx.spec.epsilon)
        current = nxt
        if done:
            break
    return KMeansResult(final=current, iterations=iterations,
                        trajectory=trajectory, converged=done)


def apply_update(partials: PartialSums, current: CentroidSet) -> CentroidSet:
    return finalize(partials, current)
