"""MapReduce K-means: one fresh job per iteration.  Map tasks read their
block (locality-preferred), emit one shuffle record per point keyed by the
closest centroid; the shuffle partitions records by key modulo the reducer
count, sorts by key within each reducer input (spilling sorted runs to local
temporary files past the buffer threshold), and reduce tasks average their
key groups.  New centroids are persisted to the store and re-read at the next
iteration's job start."""

from __future__ import annotations

import os

import numpy as np

from .. import wire
from ..kernel import (CentroidSet, KMeansResult, assign_block, merge,
                      partial_sums_from_assignment)
from ..schedulers import (CentralizedScheduler, DecentralizedScheduler,
                          JobRequest, MultilevelScheduler, ResourceRequest)
from .common import (EngineContext, EngineFailure, centroid_object,
                     drive_iterations, load_centroids, persist_centroids)


def _emit_map_outputs(ctx: EngineContext, node: int, block, iteration: int,
                      reducer_nodes: list[int]) -> None:
    """Map task body: assignment plus per-reducer shuffle record emission."""
    cluster = ctx.cluster
    centroids = load_centroids(ctx.store, node, iteration)
    with cluster.metrics.phase("map"):
        pts = ctx.store.read_block(node, block.index)
        codes = assign_block(pts, centroids)
    with cluster.metrics.phase("shuffle"):
        r_count = len(reducer_nodes)
        owner = codes % r_count
        for r in range(r_count):
            mask = owner == r
            if ctx.combine:
                sub = partial_sums_from_assignment(pts[mask], codes[mask],
                                                   centroids.k)
                payload = wire.encode(sub)
                cluster.metrics.add("shuffle_bytes", len(payload))
                cluster.metrics.add("shuffle_records", int(mask.sum()))
                body = ("combined", block.index, payload)
            else:
                payload = wire.encode_shuffle_records(codes[mask], pts[mask])
                cluster.metrics.add("shuffle_bytes", len(payload))
                cluster.metrics.add("shuffle_records", int(mask.sum()))
                body = ("records", block.index, payload)
            cluster.send(node, reducer_nodes[r], body,
                         tag=f"sh{iteration}:b{block.index}>r{r}")


def _sorted_run(batches: list[np.ndarray]) -> np.ndarray:
    recs = np.concatenate(batches) if len(batches) > 1 else batches[0]
    order = np.argsort(recs["key"], kind="stable")
    return recs[order]


def _reduce_task(ctx: EngineContext, node: int, r: int, iteration: int,
                 source_blocks: list[tuple[int, int]]) -> None:
    """Reduce task body: collect sorted map outputs, merge, average groups."""
    cluster = ctx.cluster
    dims = ctx.initial.dims
    k = ctx.initial.k
    spill_dir = os.path.join(ctx.workdir, "spill")
    os.makedirs(spill_dir, exist_ok=True)

    with cluster.metrics.phase("shuffle"):
        runs: list[str] = []
        buffered: list[np.ndarray] = []
        buffered_bytes = 0
        combined = None
        for src_node, block_index in sorted(source_blocks, key=lambda s: s[1]):
            kind_, _, payload = cluster.recv(src_node, node,
                                             tag=f"sh{iteration}:b{block_index}>r{r}")
            if kind_ == "combined":
                sub = wire.decode(payload)
                combined = sub if combined is None else merge(combined, sub)
                continue
            recs = wire.decode_shuffle_records(payload, dims)
            buffered.append(recs)
            buffered_bytes += recs.nbytes
            if buffered_bytes > ctx.spill_threshold:
                path = os.path.join(
                    spill_dir, f"it{iteration}_r{r}_{len(runs)}.spill")
                _sorted_run(buffered).tofile(path)
                cluster.metrics.add("shuffle_spills")
                runs.append(path)
                buffered = []
                buffered_bytes = 0
        if combined is not None:
            partial = combined
        else:
            parts = [np.fromfile(path, dtype=wire.shuffle_dtype(dims))
                     for path in runs]
            for path in runs:
                os.unlink(path)
            if buffered:
                parts.append(_sorted_run(buffered))
            if parts:
                # Merge of key-sorted runs; stable, so within a key the
                # original (block, point) order is preserved.
                merged = _sorted_run(parts)
            else:
                merged = np.empty(0, dtype=wire.shuffle_dtype(dims))
            partial = partial_sums_from_assignment(
                merged["coords"].astype(np.float64), merged["key"].astype(np.int64), k
            ) if len(merged) else None

    with cluster.metrics.phase("reduce"):
        if partial is None:
            keys = np.empty(0, dtype=np.int64)
            means = np.empty((0, dims))
        else:
            keys = np.flatnonzero(partial.counts)
            means = partial.sums[keys] / partial.counts[keys, None]
        out = wire.encode(("reduced", keys, means))
        ctx.store.write(node, f"reduce/{iteration}/r{r}", out)


def _run_map_wave(ctx: EngineContext, iteration: int,
                  reducer_nodes: list[int]) -> dict[int, int]:
    """Submit one fresh job, place every map task (locality-preferred where
    the scheduler supports it), run the wave, free the resources.  Returns
    block index -> node the map ran on."""
    cluster = ctx.cluster
    scheduler = ctx.scheduler
    blocks = {b.index: b for b in ctx.blocks}
    placements: dict[int, int] = {}

    if isinstance(scheduler, MultilevelScheduler):
        from ..schedulers import GrantEvent

        session = scheduler.submit_job(f"mr-{iteration}")
        try:
            for b in ctx.blocks:
                session.request_containers(ResourceRequest(
                    session.app_id, count=1,
                    preferred_nodes=tuple(ctx.store.locate(b.index)),
                    tag=str(b.index)))
            futures = []
            granted = 0
            while granted < len(ctx.blocks):
                ev = session.next_event()
                if not isinstance(ev, GrantEvent):
                    continue
                container = ev.container
                block = blocks[int(container.request_tag)]
                placements[block.index] = container.node
                fut = cluster.run_task(container.node, _emit_map_outputs, ctx,
                                       container.node, block, iteration,
                                       reducer_nodes, kind="process")
                # Elastic usage: the container goes back as soon as the map
                # task completes, letting pending requests be granted.
                fut.add_done_callback(
                    lambda _f, c=container: session.release([c]))
                futures.append(fut)
                granted += 1
            for fut in futures:
                fut.result()
        finally:
            session.deregister()
        return placements

    if isinstance(scheduler, CentralizedScheduler):
        allocation = scheduler.submit_job(
            JobRequest(f"mr-{iteration}", cluster.topology.node_count))
        try:
            # Job-level scheduling: no task visibility, no locality awareness.
            placements = {b.index: allocation.nodes[b.index % len(allocation.nodes)]
                          for b in ctx.blocks}
            futures = [cluster.run_task(placements[b.index], _emit_map_outputs,
                                        ctx, placements[b.index], b, iteration,
                                        reducer_nodes, kind="process")
                       for b in ctx.blocks]
            for fut in futures:
                fut.result()
        finally:
            scheduler.release(allocation)
        return placements

    if isinstance(scheduler, DecentralizedScheduler):
        cluster.metrics.add("jobs_launched")
        cluster.costs.sleep_ms(cluster.costs.job_launch_ms)
        try:
            placements = {b.index: scheduler.place() for b in ctx.blocks}
            futures = [cluster.run_task(placements[b.index], _emit_map_outputs,
                                        ctx, placements[b.index], b, iteration,
                                        reducer_nodes, kind="process")
                       for b in ctx.blocks]
            for fut in futures:
                fut.result()
        finally:
            for node in placements.values():
                scheduler.complete(node)
        return placements

    raise EngineFailure(f"mapreduce cannot run under {type(scheduler).__name__}")


def run_mapreduce(ctx: EngineContext) -> KMeansResult:
    cluster = ctx.cluster
    r_count = ctx.reducer_count
    node_count = cluster.topology.node_count
    reducer_nodes = [r % node_count for r in range(r_count)]
    persist_centroids(ctx.store, 0, ctx.initial)

    def step(current: CentroidSet) -> CentroidSet:
        iteration = current.iteration
        try:
            placements = _run_map_wave(ctx, iteration, reducer_nodes)
            sources = [(placements[b.index], b.index) for b in ctx.blocks]
            red_futs = [
                cluster.run_task(reducer_nodes[r], _reduce_task, ctx,
                                 reducer_nodes[r], r, iteration, sources,
                                 kind="process")
                for r in range(r_count)
            ]
            for fut in red_futs:
                fut.result()
        except EngineFailure:
            raise
        except Exception as exc:
            raise EngineFailure(f"task failed: {exc}") from exc

        with cluster.metrics.phase("update"):
            coords = current.coords.copy()
            for r in range(r_count):
                _, keys, means = wire.decode(
                    ctx.store.read_object(0, f"reduce/{iteration}/r{r}"))
                coords[keys] = means
            nxt = CentroidSet(coords, iteration + 1)
            persist_centroids(ctx.store, 0, nxt)
        return nxt

    return drive_iterations(ctx, step)
