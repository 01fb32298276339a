from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Any, List, Literal, Optional, Tuple

from app.config.settings import DEFAULT_DEPTH, DEFAULT_SAMPLES, DEFAULT_SEED
from app.models.family import FamilySpec, QuotientSpec

ExperimentKind = Literal[
    "sample_ust",
    "sample_interlacement",
    "dynamics",
    "hitting",
    "capacity",
    "counterexample",
    "verify",
]

_NEEDS_FAMILY = {"sample_ust", "sample_interlacement", "dynamics", "hitting", "capacity"}


class ExperimentConfig(BaseModel):
    """One reproducible experiment: what to build, what to run, where to write."""

    kind: ExperimentKind
    family: Optional[FamilySpec] = None
    quotient: QuotientSpec = Field(default_factory=QuotientSpec)
    samples: int = Field(default=DEFAULT_SAMPLES, ge=0)
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    threads: int = Field(default=1, ge=1)
    output: Optional[str] = None
    format: Literal["json", "csv", "dot"] = "json"

    # sampling
    sampler: Literal["aldous_broder", "wilson", "interlacement"] = "interlacement"
    window: Tuple[float, float] = (0.0, 1.0)
    emit: Literal["forest", "process", "stats"] = "stats"
    t_grid: Optional[List[float]] = None

    # potential queries
    K: Optional[List[Any]] = None
    query: Literal["capacity", "treecount", "edgeprob"] = "capacity"
    edge: Optional[int] = Field(default=None, ge=0)

    # counterexample
    k: int = Field(default=4, ge=1)
    m: int = Field(default=1, ge=1)
    depth: int = Field(default=DEFAULT_DEPTH, ge=2)
    stretch: Literal["explicit", "reduced"] = "reduced"

    # verify
    scale: Literal["quick", "full"] = "quick"

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "kind": "hitting",
            "family": {"family": "grid_box", "d": 3, "radius": 8},
            "K": [[0, 0, 0]],
            "window": [0.0, 0.1],
            "samples": 100000,
            "seed": 7,
        }
    })

    @model_validator(mode="after")
    def check_kind_requirements(self) -> "ExperimentConfig":
        if self.kind in _NEEDS_FAMILY and self.family is None:
            raise ValueError(f"Experiment kind {self.kind} needs a family")
        if self.window[1] < self.window[0]:
            raise ValueError("Window end precedes its start")
        if self.kind == "dynamics":
            if not self.t_grid:
                raise ValueError("Dynamics needs a t_grid")
            if any(b > a for a, b in zip(self.t_grid, self.t_grid[1:])):
                raise ValueError("t_grid must be nonincreasing")
        if self.kind == "hitting" and not self.K:
            raise ValueError("Hitting needs a nonempty K")
        if self.kind == "capacity" and self.query == "capacity" and not self.K:
            raise ValueError("Capacity query needs a nonempty K")
        return self
