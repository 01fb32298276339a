from pydantic import BaseModel, ConfigDict, Field
from typing import Any, List, Optional


class StepRecord(BaseModel):
    """One walk step: the edge used and the vertex reached."""
    edge_id: int
    to: int


class WalkRecord(BaseModel):
    """Serialized walk."""

    start: int
    steps: List[StepRecord] = Field(default_factory=list)
    cause: str

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "start": 4,
            "steps": [{"edge_id": 0, "to": 0}, {"edge_id": 1, "to": 4}],
            "cause": "returned_to_boundary",
        }
    })


class EdgeRecord(BaseModel):
    a: int
    b: int
    c: float = Field(gt=0)
    id: int


class NetworkRecord(BaseModel):
    """JSON network schema: {vertices, edges:[{a,b,c,id}]}."""

    vertices: int = Field(ge=1)
    edges: List[EdgeRecord]
    labels: Optional[List[Any]] = None


class ParentRecord(BaseModel):
    v: int
    edge_id: int
    head: int


class ForestRecord(BaseModel):
    """Serialized oriented forest: roots plus one parent edge per non-root vertex."""

    roots: List[int]
    parents: List[ParentRecord]

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "roots": [3],
            "parents": [{"v": 0, "edge_id": 2, "head": 3}, {"v": 1, "edge_id": 0, "head": 0}],
        }
    })


class StatReport(BaseModel):
    """Outcome of one statistical or exact check: {test, statistic, p_value, pass}."""

    test: str
    statistic: Optional[float] = None
    p_value: Optional[float] = None
    passed: bool = Field(alias="pass")
    details: dict = Field(default_factory=dict)

    model_config = ConfigDict(populate_by_name=True)

    def to_json_line(self) -> str:
        return self.model_dump_json(by_alias=True)


class ArrivalRecord(BaseModel):
    """One point of the excursion process: arrival time plus the boundary excursion."""

    time: float
    id: int
    walk: WalkRecord


class ProcessRecord(BaseModel):
    start: float
    end: float
    rate: float = Field(gt=0)
    arrivals: List[ArrivalRecord] = Field(default_factory=list)
