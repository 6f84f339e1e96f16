"""Run configuration and the machine-readable run report."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .costs import CostModel
from .dataset import ScenarioSpec
from .fabric import ClusterTopology
from .metrics import MetricsRecord

SCHEMA_VERSION = 1

ENGINE_NAMES = ("mapreduce", "iterative", "mpi-like", "pilot")
SCHEDULER_NAMES = ("centralized", "multilevel", "decentral")
STORE_NAMES = ("colocated", "shared")
COLLECTIVE_NAMES = ("tree", "rdouble")

# Which schedulers can host which engine: message passing needs a gang, the
# iterative runtime needs long-running containers, the pilot needs either.
COMPATIBLE_SCHEDULERS = {
    "mapreduce": {"centralized", "multilevel", "decentral"},
    "iterative": {"multilevel"},
    "mpi-like": {"centralized"},
    "pilot": {"centralized", "multilevel"},
}

DEFAULT_SCHEDULER = {
    "mapreduce": "multilevel",
    "iterative": "multilevel",
    "mpi-like": "centralized",
    "pilot": "centralized",
}


class IncompatibleConfig(ValueError):
    """Engine/scheduler/store combination the harness refuses to run."""


@dataclass
class RunConfig:
    spec: ScenarioSpec
    engine: str
    scheduler: str | None = None
    store_mode: str = "colocated"
    collective: str = "tree"
    deterministic: bool = True
    compress: bool = False
    combine: bool = False
    reducers: int | None = None
    spill_threshold: int = 1 << 20
    replication: int = 3
    block_points: int | None = None
    topology: ClusterTopology = field(default_factory=ClusterTopology)
    costs: CostModel = field(default_factory=CostModel)
    scenario_name: str | None = None
    compute_objective: bool = True

    def __post_init__(self):
        if self.scheduler is None:
            self.scheduler = DEFAULT_SCHEDULER.get(self.engine)
        self.validate()

    def validate(self) -> None:
        if self.engine not in ENGINE_NAMES:
            raise IncompatibleConfig(f"unknown engine {self.engine!r}")
        if self.scheduler not in SCHEDULER_NAMES:
            raise IncompatibleConfig(f"unknown scheduler {self.scheduler!r}")
        if self.store_mode not in STORE_NAMES:
            raise IncompatibleConfig(f"unknown store mode {self.store_mode!r}")
        if self.collective not in COLLECTIVE_NAMES:
            raise IncompatibleConfig(f"unknown collective {self.collective!r}")
        if self.scheduler not in COMPATIBLE_SCHEDULERS[self.engine]:
            raise IncompatibleConfig(
                f"engine {self.engine!r} cannot run under scheduler "
                f"{self.scheduler!r} (compatible: "
                f"{sorted(COMPATIBLE_SCHEDULERS[self.engine])})"
            )
        if self.replication < 1:
            raise IncompatibleConfig("replication must be >= 1")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["spec"] = dataclasses.asdict(self.spec)
        out["topology"] = dataclasses.asdict(self.topology)
        out["costs"] = dataclasses.asdict(self.costs)
        return out


@dataclass
class RunReport:
    config: dict
    iterations: int
    converged: bool
    objective: float | None
    metrics: dict
    wall_seconds: float
    iteration_seconds: list[float]
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def build(cls, config: RunConfig, result, metrics: MetricsRecord,
              wall: float, iteration_seconds: list[float],
              objective: float | None) -> "RunReport":
        return cls(
            config=config.to_dict(),
            iterations=result.iterations,
            converged=result.converged,
            objective=objective,
            metrics=metrics.to_dict(),
            wall_seconds=wall,
            iteration_seconds=list(iteration_seconds),
        )

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(dataclasses.asdict(self), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"report schema {data.get('schema_version')} != {SCHEMA_VERSION}")
        return cls(**data)
