"""Reward environment: pure scoring plus an NDJSON socket service.

One request carries an observation (entity ids) and a candidate action
sequence; the response carries the Jaccard reward between the decoded
hypothesis' conclusion and the observation. Requests that do not decode to a
valid hypothesis are not errors at the protocol level: they come back with
``valid: false``, ``reward: 0.0`` and a machine-readable ``err`` tag, because
a policy emitting garbage is a fact to report, not a reason to drop the
connection.

Wire format, one JSON object per line:
  request   {"id": int, "obs": [int, ...], "actions": [str, ...]}
  response  {"id": int, "valid": bool, "reward": float, "size": int, "err": str | null}

Scoring never mutates the graph; identical requests always produce identical
responses.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import ActionParseError
from .executor import conclusion_set, jaccard
from .graph import KnowledgeGraph
from .tokenizer import Vocabulary, actions_to_hypothesis, build_vocabulary

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardRequest:
    request_id: int
    observation: tuple[int, ...]
    actions: tuple[str, ...]


@dataclass(frozen=True)
class RewardResponse:
    request_id: int
    valid: bool
    reward: float
    conclusion_size: int
    error_kind: str | None

    def to_wire(self) -> dict:
        return {
            "id": self.request_id,
            "valid": self.valid,
            "reward": self.reward,
            "size": self.conclusion_size,
            "err": self.error_kind,
        }


def _invalid(request_id: int, kind: str) -> RewardResponse:
    return RewardResponse(request_id, False, 0.0, 0, kind)


class RewardScorer:
    """Stateless scoring of reward requests against one fixed graph."""

    def __init__(self, graph: KnowledgeGraph, vocab: Vocabulary | None = None) -> None:
        self.graph = graph
        self.vocab = vocab if vocab is not None else build_vocabulary(graph)

    def score(self, request: RewardRequest) -> RewardResponse:
        obs = set(request.observation)
        if not obs:
            return _invalid(request.request_id, "bad-observation")
        for e in obs:
            if not (isinstance(e, int) and 0 <= e < self.graph.num_entities):
                return _invalid(request.request_id, "bad-observation")
        try:
            h = actions_to_hypothesis(request.actions, self.vocab)
        except ActionParseError as exc:
            return _invalid(request.request_id, exc.reason)
        entities = conclusion_set(h, self.graph)
        return RewardResponse(
            request_id=request.request_id,
            valid=True,
            reward=jaccard(entities, obs),
            conclusion_size=len(entities),
            error_kind=None,
        )

    def score_batch(self, requests: Iterable[RewardRequest]) -> list[RewardResponse]:
        return [self.score(r) for r in requests]

    def score_wire(self, line: str) -> dict:
        """Score one NDJSON request line; malformed lines get a bad-request reply."""
        request_id = -1
        try:
            payload = json.loads(line)
            request_id = int(payload.get("id", -1))
            obs = tuple(int(e) for e in payload["obs"])
            actions = tuple(str(a) for a in payload["actions"])
        except (ValueError, TypeError, KeyError, AttributeError):
            return _invalid(request_id, "bad-request").to_wire()
        return self.score(RewardRequest(request_id, obs, actions)).to_wire()


def parse_listen_address(listen: str) -> tuple[str, object]:
    """``host:port`` -> ('tcp', (host, port)); ``unix:/path`` -> ('unix', path)."""
    if listen.startswith("unix:"):
        return "unix", listen[len("unix:"):]
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"listen address {listen!r} is neither host:port nor unix:PATH")
    return "tcp", (host, int(port))


class EnvServer:
    """NDJSON reward service over TCP or a unix socket.

    Runs its own asyncio loop; ``start()``/``stop()`` make it embeddable in
    tests, ``serve_forever()`` is the CLI entry. Responses on one connection
    are written in request order.
    """

    def __init__(self, scorer: RewardScorer, listen: str = "127.0.0.1:0") -> None:
        self.scorer = scorer
        self.listen = listen
        self._loop: asyncio.AbstractEventLoop | None = None
        self._server: asyncio.AbstractServer | None = None
        self._thread: threading.Thread | None = None
        self.bound_address: str | None = None

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                text = line.decode("utf-8", errors="replace").strip()
                if not text:
                    continue
                response = self.scorer.score_wire(text)
                writer.write((json.dumps(response, sort_keys=True) + "\n").encode("utf-8"))
                await writer.drain()
        except (ConnectionResetError, asyncio.IncompleteReadError):
            pass
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except Exception:
                pass

    async def _start_server(self) -> asyncio.AbstractServer:
        mode, target = parse_listen_address(self.listen)
        if mode == "unix":
            server = await asyncio.start_unix_server(self._handle, path=target)
            self.bound_address = f"unix:{target}"
        else:
            host, port = target
            server = await asyncio.start_server(self._handle, host=host, port=port)
            sock = server.sockets[0].getsockname()
            self.bound_address = f"{sock[0]}:{sock[1]}"
        return server

    def serve_forever(self, on_bound: Callable[[str], None] | None = None) -> None:
        async def run() -> None:
            server = await self._start_server()
            log.info("reward service listening on %s", self.bound_address)
            if on_bound is not None:
                on_bound(self.bound_address)
            async with server:
                await server.serve_forever()

        asyncio.run(run())

    def start(self) -> str:
        """Start in a background thread; returns the bound address."""
        ready = threading.Event()

        def run() -> None:
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            self._server = self._loop.run_until_complete(self._start_server())
            ready.set()
            try:
                self._loop.run_forever()
            finally:
                self._server.close()
                self._loop.run_until_complete(self._server.wait_closed())
                self._loop.close()

        self._thread = threading.Thread(target=run, name="kgabduce-env", daemon=True)
        self._thread.start()
        if not ready.wait(timeout=10):
            raise RuntimeError("reward service failed to start")
        assert self.bound_address is not None
        return self.bound_address

    def stop(self) -> None:
        loop = self._loop
        if loop is not None and not loop.is_closed():

            async def shutdown() -> None:
                current = asyncio.current_task()
                tasks = [t for t in asyncio.all_tasks() if t is not current]
                for task in tasks:
                    task.cancel()
                await asyncio.gather(*tasks, return_exceptions=True)
                asyncio.get_running_loop().stop()

            asyncio.run_coroutine_threadsafe(shutdown(), loop)
        if self._thread is not None:
            self._thread.join(timeout=10)
            self._thread = None
        self._loop = None


def score_requests_file(scorer: RewardScorer, lines: Iterable[str]) -> list[dict]:
    """Batch helper for the CLI: NDJSON lines in, wire dicts out."""
    return [scorer.score_wire(line) for line in lines if line.strip()]
