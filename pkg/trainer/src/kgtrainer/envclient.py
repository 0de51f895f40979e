"""Clients for the reward environment and the structural-score CLI.

The trainer never imports the reasoning engine. Rewards come over the
NDJSON socket protocol (one JSON request per line, one response per line,
same order per connection) and structural scores come from the ``kgabduce
smatch`` subprocess. Both sides are pinned by the engine's CLI contract.
"""

from __future__ import annotations

import json
import select
import socket
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from .errors import EnvConnectionError, TrainerError

# Responses arrive in request order, so a bounded number of requests in
# flight keeps both socket buffers from filling and deadlocking.
_WINDOW = 256


def _connect(address: str) -> socket.socket:
    try:
        if address.startswith("unix:"):
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            sock.connect(address[len("unix:"):])
            return sock
        host, _, port = address.rpartition(":")
        sock = socket.create_connection((host, int(port)), timeout=30.0)
        sock.settimeout(None)
        return sock
    except (OSError, ValueError) as exc:
        raise EnvConnectionError(f"cannot connect to environment at {address}: {exc}") from exc


class EnvClient:
    """Blocking NDJSON client; ``score`` pipelines a batch of episodes."""

    def __init__(self, address: str) -> None:
        self.address = address
        self._sock = _connect(address)
        self._reader = self._sock.makefile("r", encoding="utf-8")
        self._writer = self._sock.makefile("w", encoding="utf-8")
        self._next_id = 0

    def close(self) -> None:
        for part in (self._reader, self._writer, self._sock):
            try:
                part.close()
            except OSError:
                pass

    def __enter__(self) -> "EnvClient":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    def _read_one(self) -> dict:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise EnvConnectionError(f"environment read failed: {exc}") from exc
        if not line:
            raise EnvConnectionError("environment closed the connection")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise EnvConnectionError(f"environment sent a malformed line: {line!r}") from exc

    def score(self, episodes: list[tuple[list[int], list[str]]]) -> list[dict]:
        """One response dict per (observation entities, action tokens) pair."""
        out: list[dict] = [None] * len(episodes)  # type: ignore[list-item]
        by_id: dict[int, int] = {}
        sent = received = 0
        try:
            while received < len(episodes):
                while sent < len(episodes) and sent - received < _WINDOW:
                    request_id = self._next_id
                    self._next_id += 1
                    by_id[request_id] = sent
                    obs, actions = episodes[sent]
                    self._writer.write(
                        json.dumps({"id": request_id, "obs": list(obs), "actions": list(actions)}) + "\n"
                    )
                    sent += 1
                self._writer.flush()
                response = self._read_one()
                index = by_id.pop(int(response.get("id", -1)), None)
                if index is None:
                    raise EnvConnectionError(f"environment answered an unknown request id: {response!r}")
                out[index] = response
                received += 1
        except EnvConnectionError:
            raise
        except OSError as exc:
            raise EnvConnectionError(f"environment connection failed: {exc}") from exc
        return out


class EnvProcess:
    """Spawn ``kgabduce serve-env`` on an ephemeral port and wait for it to bind."""

    def __init__(self, graph_path: str | Path, listen: str = "127.0.0.1:0", timeout: float = 30.0) -> None:
        self.proc = subprocess.Popen(
            ["kgabduce", "serve-env", "--graph", str(graph_path), "--listen", listen],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.PIPE,
            text=True,
        )
        self.address = self._wait_for_bind(timeout)

    def _wait_for_bind(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        stderr = self.proc.stderr
        assert stderr is not None
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                rest = stderr.read()
                raise EnvConnectionError(f"environment process exited at startup: {rest.strip()}")
            ready, _, _ = select.select([stderr], [], [], 0.2)
            if not ready:
                continue
            line = stderr.readline()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError:
                print(line, end="", file=sys.stderr)
                continue
            if "listening" in payload:
                return payload["listening"]
        self.proc.terminate()
        raise EnvConnectionError(f"environment process did not bind within {timeout:.0f}s")

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self.proc.stderr is not None:
            self.proc.stderr.close()

    def __enter__(self) -> "EnvProcess":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()


def make_smatch_scorer(graph_path: str | Path):
    """Callable scoring generated action strings against reference hypotheses.

    Takes parallel lists (action token lists, reference hypothesis dicts) and
    returns one structural score per pair; unparseable generations score 0.0.
    """

    def scorer(generated: list[list[str]], references: list[dict]) -> list[float]:
        if len(generated) != len(references):
            raise TrainerError("generated and reference lists differ in length")
        if not generated:
            return []
        with tempfile.TemporaryDirectory(prefix="kgtrainer-smatch-") as tmp:
            pred = Path(tmp) / "pred.jsonl"
            gold = Path(tmp) / "gold.jsonl"
            pred.write_text("".join(json.dumps({"actions": actions}) + "\n" for actions in generated))
            gold.write_text("".join(json.dumps(ref) + "\n" for ref in references))
            result = subprocess.run(
                ["kgabduce", "smatch", "--pred", str(pred), "--gold", str(gold), "--graph", str(graph_path)],
                capture_output=True,
                text=True,
            )
        if result.returncode != 0:
            raise TrainerError(f"smatch scoring failed: {result.stderr.strip()}")
        return [float(s) for s in json.loads(result.stdout)["scores"]]

    return scorer
