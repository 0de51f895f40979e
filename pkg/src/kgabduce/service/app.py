"""HTTP wrapper around the core library.

The app is bound to one graph split at construction time. Rewards are scored
against the training graph (the convention the reward environment uses);
conclusion queries may pick any cumulative split graph explicitly.
"""

from __future__ import annotations

import random

from fastapi import FastAPI, HTTPException

from ..errors import ActionParseError, InvalidHypothesisError, KgabduceError, SamplingError
from ..executor import conclusion_set, jaccard
from ..graph import GraphSplit, KnowledgeGraph
from ..hypothesis import from_dict, to_dict
from ..env import RewardRequest, RewardScorer
from ..sampler import sample_pair
from ..search import one_hop_search
from ..smatch import smatch_score
from ..tokenizer import actions_to_hypothesis, build_vocabulary, hypothesis_to_actions
from .models import (
    ConclusionRequest,
    ConclusionResponse,
    GraphInfo,
    ParseRequest,
    ParseResponse,
    SampleRequest,
    SampleResponse,
    ScoreRequest,
    ScoreResponse,
    SearchRequest,
    SearchResponse,
    SmatchRequest,
    SmatchResponse,
)


def as_split(graph: GraphSplit | KnowledgeGraph) -> GraphSplit:
    if isinstance(graph, GraphSplit):
        return graph
    g = graph
    return GraphSplit(g.with_tag("train"), g.with_tag("valid"), g.with_tag("test"), seed=0)


def create_app(graph: GraphSplit | KnowledgeGraph) -> FastAPI:
    split = as_split(graph)
    vocab = build_vocabulary(split.train)
    scorer = RewardScorer(split.train, vocab)
    app = FastAPI(title="kgabduce", version="0.1.0")

    def pick_graph(name: str) -> KnowledgeGraph:
        try:
            return split.graph(name)
        except KgabduceError as exc:
            raise HTTPException(status_code=400, detail=exc.to_json()) from None

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/graph", response_model=GraphInfo)
    def graph_info() -> GraphInfo:
        return GraphInfo(
            entities=split.test.num_entities,
            relations=split.test.num_relations,
            edges={name: split.graph(name).num_edges for name in ("train", "valid", "test")},
        )

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        result = scorer.score(RewardRequest(req.id, tuple(req.obs), tuple(req.actions)))
        return ScoreResponse(
            id=result.request_id,
            valid=result.valid,
            reward=result.reward,
            size=result.conclusion_size,
            err=result.error_kind,
        )

    @app.post("/score/batch", response_model=list[ScoreResponse])
    def score_batch(reqs: list[ScoreRequest]) -> list[ScoreResponse]:
        return [score(r) for r in reqs]

    @app.post("/parse", response_model=ParseResponse)
    def parse(req: ParseRequest) -> ParseResponse:
        try:
            h = actions_to_hypothesis(req.actions, vocab)
        except ActionParseError as exc:
            return ParseResponse(valid=False, error=exc.reason)
        return ParseResponse(valid=True, pattern=h.pattern, hypothesis=to_dict(h))

    @app.post("/conclusion", response_model=ConclusionResponse)
    def conclusion_route(req: ConclusionRequest) -> ConclusionResponse:
        g = pick_graph(req.graph)
        try:
            h = from_dict(req.hypothesis)
            entities = sorted(conclusion_set(h, g))
        except KgabduceError as exc:
            raise HTTPException(status_code=400, detail=exc.to_json()) from None
        return ConclusionResponse(entities=entities, size=len(entities), graph=req.graph)

    @app.post("/smatch", response_model=SmatchResponse)
    def smatch_route(req: SmatchRequest) -> SmatchResponse:
        try:
            score_value = smatch_score(from_dict(req.pred), from_dict(req.gold), seed=req.seed)
        except InvalidHypothesisError as exc:
            raise HTTPException(status_code=400, detail=exc.to_json()) from None
        return SmatchResponse(score=score_value)

    @app.post("/search", response_model=SearchResponse)
    def search_route(req: SearchRequest) -> SearchResponse:
        found = one_hop_search(req.observation, split.train)
        if found is None:
            return SearchResponse(found=False)
        g = pick_graph(req.eval_graph)
        return SearchResponse(
            found=True,
            hypothesis=to_dict(found),
            actions=hypothesis_to_actions(found, vocab),
            jaccard=jaccard(conclusion_set(found, g), set(req.observation)),
        )

    @app.post("/sample", response_model=SampleResponse)
    def sample_route(req: SampleRequest) -> SampleResponse:
        g = pick_graph(req.split)
        rng = random.Random(req.seed)
        pairs = []
        try:
            for _ in range(req.count):
                pair = sample_pair(g, req.pattern, rng, max_obs=req.max_obs)
                pairs.append(pair.to_record(vocab, req.split))
        except SamplingError as exc:
            raise HTTPException(status_code=400, detail=exc.to_json()) from None
        return SampleResponse(pairs=pairs)

    return app
