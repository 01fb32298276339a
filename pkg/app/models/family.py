from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Any, List, Literal, Optional

from app.config.settings import DEFAULT_DEPTH, VERTEX_BUDGET

FamilyName = Literal[
    "grid_box",
    "complete",
    "cycle",
    "path",
    "regular_tree",
    "stretched_tree",
    "counterexample_gkm",
    "joined_grids",
    "grid_with_paths",
    "network_file",
]


class FamilySpec(BaseModel):
    """Parameters of one generated graph family."""

    family: FamilyName
    d: int = Field(default=2, ge=1)
    radius: int = Field(default=1, ge=0)
    size: Optional[int] = Field(default=None, ge=1)
    k: int = Field(default=1, ge=1)
    m: int = Field(default=1, ge=1)
    branching: int = Field(default=2, ge=1)
    depth: int = Field(default=DEFAULT_DEPTH, ge=1)
    path_length: int = Field(default=10, ge=1)
    conductance: float = Field(default=1.0, gt=0)
    boundary: Literal["wired", "free"] = "wired"
    stretch: Literal["explicit", "reduced"] = "explicit"
    vertex_budget: int = Field(default=VERTEX_BUDGET, ge=1)
    path: Optional[str] = Field(default=None, description="Edge-list text or JSON network record for network_file")

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "family": "counterexample_gkm",
            "k": 4,
            "m": 1,
            "depth": 5,
            "stretch": "reduced",
        }
    })

    @model_validator(mode="after")
    def check_family_parameters(self) -> "FamilySpec":
        if self.family == "network_file" and not self.path:
            raise ValueError("Family network_file needs a path")
        if self.family in ("complete", "cycle", "path") and self.size is None:
            raise ValueError(f"Family {self.family} needs a size")
        if self.family == "cycle" and self.size is not None and self.size < 3:
            raise ValueError("A cycle needs at least 3 vertices")
        if self.family == "complete" and self.size is not None and self.size < 2:
            raise ValueError("A complete graph needs at least 2 vertices")
        if self.family == "grid_with_paths" and self.radius < 2:
            raise ValueError("grid_with_paths attaches a path at distance 2 from the origin; radius must be >= 2")
        return self


class QuotientSpec(BaseModel):
    """
    Which vertices to wire into the boundary.

    `frontier` wires the family's own frontier; `retain` keeps exactly the
    listed labels; `complement` wires exactly the listed labels.
    """

    mode: Literal["frontier", "retain", "complement"] = "frontier"
    vertices: Optional[List[Any]] = None

    @model_validator(mode="after")
    def check_vertices(self) -> "QuotientSpec":
        if self.mode != "frontier" and not self.vertices:
            raise ValueError(f"Quotient mode {self.mode} needs a vertex list")
        return self
