"""Request/response schemas for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ScoreRequest(BaseModel):
    id: int = 0
    obs: list[int]
    actions: list[str]


class ScoreResponse(BaseModel):
    id: int
    valid: bool
    reward: float
    size: int
    err: str | None = None


class ParseRequest(BaseModel):
    actions: list[str]


class ParseResponse(BaseModel):
    valid: bool
    pattern: str | None = None
    hypothesis: dict | None = None
    error: str | None = None


class ConclusionRequest(BaseModel):
    hypothesis: dict
    graph: str = "train"


class ConclusionResponse(BaseModel):
    entities: list[int]
    size: int
    graph: str


class SmatchRequest(BaseModel):
    pred: dict
    gold: dict
    seed: int = 0


class SmatchResponse(BaseModel):
    score: float


class SearchRequest(BaseModel):
    observation: list[int]
    eval_graph: str = "test"


class SearchResponse(BaseModel):
    found: bool
    hypothesis: dict | None = None
    actions: list[str] | None = None
    jaccard: float | None = None


class SampleRequest(BaseModel):
    pattern: str
    count: int = Field(default=1, ge=1, le=1024)
    seed: int = 0
    split: str = "train"
    max_obs: int = Field(default=32, ge=1)


class SampleResponse(BaseModel):
    pairs: list[dict]


class GraphInfo(BaseModel):
    entities: int
    relations: int
    edges: dict[str, int]
