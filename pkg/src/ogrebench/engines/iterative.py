"""Iterative-collective K-means: long-running containers from the multi-level
scheduler, data loaded once into immutable in-memory partitions, and per
iteration two derived intermediate partition generations (the copy cost of
immutability) before an allreduce of partial sums.  No sorting, no
per-iteration job launch, no per-iteration store round-trip."""

from __future__ import annotations

import queue
from dataclasses import dataclass

import numpy as np

from ..collectives import CollectiveGroup
from ..kernel import (KMeansResult, PartialSums, assign_block, converged,
                      finalize, partial_sums_from_assignment)
from ..schedulers import MultilevelScheduler, ResourceRequest
from .common import EngineContext, EngineFailure, assign_blocks_contiguous, fold_partials


@dataclass(frozen=True)
class InMemoryPartition:
    """Immutable slice of points resident on a node, tagged by generation."""

    points: np.ndarray
    generation: int

    def __post_init__(self):
        self.points.setflags(write=False)


def run_iterative_collective(ctx: EngineContext) -> KMeansResult:
    scheduler = ctx.scheduler
    if not isinstance(scheduler, MultilevelScheduler):
        raise EngineFailure("iterative-collective needs the multi-level scheduler")
    cluster = ctx.cluster
    topo = cluster.topology
    p = topo.node_count
    # One long-running whole-node container per node; a single job submission
    # for the entire run.
    session = scheduler.submit_job("iterative-kmeans")
    session.request_containers(ResourceRequest(
        "iterative-kmeans", count=p, cores=topo.cores_per_node,
        memory=topo.memory_per_node))
    containers = session.wait_for_grants(p)
    worker_nodes = sorted(c.node for c in containers)
    group = CollectiveGroup(cluster, worker_nodes, algorithm=ctx.collective,
                            deterministic=ctx.deterministic, compress=ctx.compress)
    per_worker = assign_blocks_contiguous(ctx.blocks, p)
    results: queue.Queue = queue.Queue()
    k, dims = ctx.initial.k, ctx.initial.dims

    def worker(rank: int):
        node = worker_nodes[rank]
        member = group.member(rank)
        with cluster.metrics.phase("load"):
            base = [InMemoryPartition(ctx.store.read_block(node, b.index).copy(), 0)
                    for b in per_worker[rank]]
        cluster.metrics.note_generations(1)
        current = ctx.initial
        for it in range(ctx.spec.max_iter):
            # Previous iteration's intermediates are dropped before new ones
            # are derived, so the peak is base + two derived generations.
            with cluster.metrics.phase("compute"):
                assigned = []
                for part in base:
                    cluster.charge_task_launch("thread")
                    codes = assign_block(part.points, current)
                    assigned.append((InMemoryPartition(part.points.copy(),
                                                       2 * it + 1), codes))
                cluster.metrics.note_generations(2)
                partials = []
                for part, codes in assigned:
                    cluster.charge_task_launch("thread")
                    partials.append(partial_sums_from_assignment(
                        part.points, codes, k))
                cluster.metrics.note_generations(3)
                local = fold_partials(partials, k, dims)
            with cluster.metrics.phase("collective"):
                reduced = member.allreduce(local)
            del assigned, partials
            nxt = finalize(reduced, current)
            if rank == 0:
                results.put(nxt)
                ctx.stamp_iteration()
            done = converged(current, nxt, ctx.spec.epsilon)
            current = nxt
            if done:
                break
        return current

    futures = [cluster.run_task(worker_nodes[r], worker, r, kind="worker")
               for r in range(p)]
    try:
        for fut in futures:
            fut.result()
    except Exception as exc:
        raise EngineFailure(f"container worker failed: {exc}") from exc
    finally:
        session.deregister()

    trajectory = [ctx.initial]
    while not results.empty():
        trajectory.append(results.get())
    iterations = len(trajectory) - 1
    return KMeansResult(
        final=trajectory[-1], iterations=iterations, trajectory=trajectory,
        converged=converged(trajectory[-2], trajectory[-1], ctx.spec.epsilon)
        if iterations else False,
    )
