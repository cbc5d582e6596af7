"""Clients for external scoring processes and HTTP scoring endpoints.

Line protocol (newline-delimited JSON, UTF-8), version "scorer/1":

  handshake (scorer -> client, first line):
    {"protocol": "scorer/1", "name": str, "needs_source": bool,
     "needs_reference": bool, "batch": int}
  request (client -> scorer), one per line:
    {"id": int, "hyp": str, "src"?: str, "ref"?: str}
  response, one per line, any order within a batch:
    {"id": int, "score": float}    or    {"id": ..., "error": str}

The client chunks requests to the scorer's advertised batch size, restores
request order by id, and treats any line outside the contract as a
ProtocolError carrying the offending line. A crashed or unresponsive
process is respawned once per score_batch call and the failing chunk is
replayed; a second failure surfaces to the caller.

HTTP transport mirrors the same contract: GET /handshake returns the
handshake object, POST /score takes {"items": [{"hyp", "src"?, "ref"?}]}
and returns {"scores": [...]} aligned to items, and POST /surprisal takes
{"texts": [...]} and returns {"tokens": [[str]], "surprisals": [[float]],
"unit": "nats"|"bits"}.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import socket
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Sequence

from .errors import (
    HandshakeMismatch,
    ProtocolError,
    SchemaError,
    ScorerCrashed,
    SpawnFailure,
    Timeout,
)
from .surprisal_measures import SurprisalSequence, bits_to_nats

PROTOCOL_VERSION = "scorer/1"
DEFAULT_TIMEOUT = 120.0

_EOF = object()


@dataclass(frozen=True)
class ScorerHandle:
    """Identity and capabilities of a connected scorer."""

    id: str
    transport: str  # "cmd" or "http"
    name: str
    needs_source: bool
    needs_reference: bool
    batch_limit: int


@dataclass(frozen=True)
class ScoreRequest:
    id: int
    hyp: str
    src: str | None = None
    ref: str | None = None


@dataclass(frozen=True)
class ScoreResponse:
    id: int
    score: float


def encode_request(request: ScoreRequest) -> str:
    obj: dict = {"id": request.id, "hyp": request.hyp}
    if request.src is not None:
        obj["src"] = request.src
    if request.ref is not None:
        obj["ref"] = request.ref
    return json.dumps(obj, ensure_ascii=False)


def decode_request(line: str) -> ScoreRequest:
    obj = json.loads(line)
    return ScoreRequest(
        id=int(obj["id"]),
        hyp=str(obj["hyp"]),
        src=obj.get("src"),
        ref=obj.get("ref"),
    )


def encode_response(response: ScoreResponse) -> str:
    return json.dumps({"id": response.id, "score": response.score})


def decode_response(line: str) -> ScoreResponse:
    """Parse one response line; anything off-contract is a ProtocolError."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError("response line is not valid JSON", line=line)
    if not isinstance(obj, dict):
        raise ProtocolError("response line is not a JSON object", line=line)
    if "error" in obj:
        raise ProtocolError(f"scorer error for id {obj.get('id')}: {obj['error']}")
    if "id" not in obj or "score" not in obj:
        raise ProtocolError("response missing id or score", line=line)
    try:
        rid = int(obj["id"])
        score = float(obj["score"])
    except (TypeError, ValueError):
        raise ProtocolError("response id/score have wrong types", line=line)
    if not math.isfinite(score):
        raise ProtocolError("response score is not finite", line=line)
    return ScoreResponse(id=rid, score=score)


def parse_scorer_spec(spec: str) -> tuple[str | None, str, str]:
    """Split '[tag=]cmd:<command>' or '[tag=]http:<url>' into parts."""
    tag = None
    head = spec
    eq = spec.find("=")
    colon = spec.find(":")
    if eq != -1 and (colon == -1 or eq < colon):
        candidate = spec[:eq]
        if candidate and all(c.isalnum() or c in "_-" for c in candidate):
            tag = candidate
            head = spec[eq + 1 :]
    if head.startswith("cmd:"):
        return tag, "cmd", head[len("cmd:") :]
    if head.startswith("http://") or head.startswith("https://"):
        return tag, "http", head
    if head.startswith("http:"):
        return tag, "http", "http://" + head[len("http:") :]
    raise ValueError(f"scorer spec must start with cmd: or http:, got {spec!r}")


def _parse_handshake(raw: str) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError:
        raise HandshakeMismatch(f"handshake is not valid JSON: {raw!r}")
    if not isinstance(obj, dict) or obj.get("protocol") != PROTOCOL_VERSION:
        raise HandshakeMismatch(
            f"expected protocol {PROTOCOL_VERSION!r}, got {obj.get('protocol')!r}"
            if isinstance(obj, dict)
            else f"handshake is not a JSON object: {raw!r}"
        )
    try:
        name = str(obj["name"])
        needs_source = bool(obj["needs_source"])
        needs_reference = bool(obj["needs_reference"])
        batch = int(obj["batch"])
    except (KeyError, TypeError, ValueError):
        raise HandshakeMismatch(f"handshake missing required fields: {raw!r}")
    if batch < 1:
        raise HandshakeMismatch(f"handshake batch limit must be >= 1, got {batch}")
    return {
        "name": name,
        "needs_source": needs_source,
        "needs_reference": needs_reference,
        "batch": batch,
    }


def _http_json(
    url: str,
    payload: dict | None,
    timeout: float,
    token: str | None,
    error_cls=ProtocolError,
) -> object:
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    data = None if payload is None else json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(url, data=data, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            body = response.read().decode("utf-8")
    except (socket.timeout, TimeoutError) as exc:
        raise Timeout(f"no answer from {url} within {timeout}s") from exc
    except urllib.error.URLError as exc:
        if isinstance(getattr(exc, "reason", None), (socket.timeout, TimeoutError)):
            raise Timeout(f"no answer from {url} within {timeout}s") from exc
        raise SpawnFailure(f"cannot reach {url}: {exc}") from exc
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise error_cls(f"{url} returned invalid JSON") from exc


class ScorerClient:
    """One connected scorer; see connect() for construction."""

    def __init__(
        self,
        handle: ScorerHandle,
        *,
        command: list[str] | None = None,
        process: subprocess.Popen | None = None,
        lines: "queue.Queue | None" = None,
        base_url: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        token: str | None = None,
    ):
        self.handle = handle
        self._command = command
        self._process = process
        self._lines = lines
        self._base_url = base_url
        self._timeout = timeout
        self._token = token

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        if self._process is not None:
            try:
                if self._process.stdin:
                    self._process.stdin.close()
                # A well-behaved scorer exits promptly once stdin closes;
                # anything still alive after the grace period is killed.
                self._process.wait(timeout=1.0)
            except Exception:
                self._process.kill()
            self._process = None

    def __enter__(self) -> "ScorerClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- scoring -----------------------------------------------------------

    def score_batch(
        self, requests: Sequence[ScoreRequest], timeout: float | None = None
    ) -> list[ScoreResponse]:
        """Score requests, preserving request order in the returned list.

        Requests are validated against the handle's capabilities up front and
        sent in chunks of at most batch_limit. One transport failure per call
        is retried (after a respawn for subprocess scorers); the second
        failure propagates.
        """
        if not requests:
            return []
        ids = [r.id for r in requests]
        if len(set(ids)) != len(ids):
            raise ValueError("request ids must be unique within a batch")
        for r in requests:
            if self.handle.needs_source and r.src is None:
                raise ValueError(f"scorer {self.handle.id!r} requires src (id {r.id})")
            if self.handle.needs_reference and r.ref is None:
                raise ValueError(f"scorer {self.handle.id!r} requires ref (id {r.id})")
        deadline = self._timeout if timeout is None else timeout
        out: list[ScoreResponse] = []
        retried = False
        limit = self.handle.batch_limit
        for start in range(0, len(requests), limit):
            chunk = requests[start : start + limit]
            try:
                out.extend(self._score_chunk(chunk, deadline))
            except (ScorerCrashed, Timeout):
                if retried:
                    raise
                retried = True
                self._revive()
                out.extend(self._score_chunk(chunk, deadline))
        return out

    def _score_chunk(
        self, chunk: Sequence[ScoreRequest], timeout: float
    ) -> list[ScoreResponse]:
        if self._base_url is not None:
            return self._score_chunk_http(chunk, timeout)
        return self._score_chunk_cmd(chunk, timeout)

    def _score_chunk_cmd(
        self, chunk: Sequence[ScoreRequest], timeout: float
    ) -> list[ScoreResponse]:
        process = self._process
        if process is None or process.poll() is not None:
            raise ScorerCrashed(f"scorer {self.handle.id!r} is not running")
        payload = "".join(encode_request(r) + "\n" for r in chunk)
        try:
            process.stdin.write(payload)
            process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerCrashed(f"scorer {self.handle.id!r} closed its stdin") from exc
        pending = {r.id for r in chunk}
        by_id: dict[int, ScoreResponse] = {}
        while pending:
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty:
                raise Timeout(
                    f"scorer {self.handle.id!r} sent no response within {timeout}s"
                )
            if line is _EOF:
                raise ScorerCrashed(
                    f"scorer {self.handle.id!r} exited with {len(pending)} "
                    "responses outstanding"
                )
            response = decode_response(line.rstrip("\n"))
            if response.id not in pending:
                raise ProtocolError(
                    f"unexpected response id {response.id}", line=line.rstrip("\n")
                )
            pending.discard(response.id)
            by_id[response.id] = response
        return [by_id[r.id] for r in chunk]

    def _score_chunk_http(
        self, chunk: Sequence[ScoreRequest], timeout: float
    ) -> list[ScoreResponse]:
        items = []
        for r in chunk:
            item: dict = {"hyp": r.hyp}
            if r.src is not None:
                item["src"] = r.src
            if r.ref is not None:
                item["ref"] = r.ref
            items.append(item)
        body = _http_json(
            self._base_url.rstrip("/") + "/score",
            {"items": items},
            timeout,
            self._token,
        )
        if not isinstance(body, dict) or "scores" not in body:
            raise ProtocolError("/score response missing 'scores'")
        scores = body["scores"]
        if not isinstance(scores, list) or len(scores) != len(chunk):
            raise ProtocolError(
                f"/score returned {len(scores) if isinstance(scores, list) else '?'} "
                f"scores for {len(chunk)} items"
            )
        out = []
        for r, value in zip(chunk, scores):
            try:
                score = float(value)
            except (TypeError, ValueError):
                raise ProtocolError(f"non-numeric score for id {r.id}")
            if not math.isfinite(score):
                raise ProtocolError(f"non-finite score for id {r.id}")
            out.append(ScoreResponse(id=r.id, score=score))
        return out

    def _revive(self) -> None:
        """Respawn a subprocess scorer; HTTP endpoints just get the retry."""
        if self._command is None:
            return
        self.close()
        process, lines, handshake = _spawn(self._command, self._timeout)
        self._process = process
        self._lines = lines
        # Capabilities could legitimately differ across restarts only if the
        # scorer is misconfigured; insist they match.
        if (
            handshake["needs_source"] != self.handle.needs_source
            or handshake["needs_reference"] != self.handle.needs_reference
        ):
            raise HandshakeMismatch(
                f"scorer {self.handle.id!r} changed capabilities on respawn"
            )


def _reader(stream, lines: "queue.Queue") -> None:
    try:
        for line in stream:
            lines.put(line)
    except Exception:
        pass
    finally:
        lines.put(_EOF)


def _spawn(command: list[str], timeout: float):
    try:
        process = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
    except (FileNotFoundError, PermissionError, OSError) as exc:
        raise SpawnFailure(f"cannot start {' '.join(command)!r}: {exc}") from exc
    lines: "queue.Queue" = queue.Queue()
    thread = threading.Thread(target=_reader, args=(process.stdout, lines), daemon=True)
    thread.start()
    try:
        first = lines.get(timeout=timeout)
    except queue.Empty:
        process.kill()
        raise SpawnFailure(f"{command[0]!r} sent no handshake within {timeout}s")
    if first is _EOF:
        process.wait()
        raise SpawnFailure(
            f"{command[0]!r} exited (code {process.returncode}) before the handshake"
        )
    handshake = _parse_handshake(first.rstrip("\n"))
    return process, lines, handshake


def connect(
    spec: str,
    *,
    metric_id: str | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    token: str | None = None,
) -> ScorerClient:
    """Start or reach a scorer and exchange the handshake.

    spec is '[tag=]cmd:<command line>' or '[tag=]http:<url>'. The metric id
    under which the scorer is registered defaults to the explicit tag, then
    to the handshake name.
    """
    tag, transport, address = parse_scorer_spec(spec)
    if metric_id is None:
        metric_id = tag
    if transport == "cmd":
        command = shlex.split(address)
        if not command:
            raise ValueError("empty scorer command")
        process, lines, handshake = _spawn(command, timeout)
        handle = ScorerHandle(
            id=metric_id or handshake["name"],
            transport="cmd",
            name=handshake["name"],
            needs_source=handshake["needs_source"],
            needs_reference=handshake["needs_reference"],
            batch_limit=handshake["batch"],
        )
        return ScorerClient(
            handle,
            command=command,
            process=process,
            lines=lines,
            timeout=timeout,
            token=token,
        )
    base = address.rstrip("/")
    body = _http_json(
        base + "/handshake", None, timeout, token, error_cls=HandshakeMismatch
    )
    handshake = _parse_handshake(json.dumps(body))
    handle = ScorerHandle(
        id=metric_id or handshake["name"],
        transport="http",
        name=handshake["name"],
        needs_source=handshake["needs_source"],
        needs_reference=handshake["needs_reference"],
        batch_limit=handshake["batch"],
    )
    return ScorerClient(handle, base_url=base, timeout=timeout, token=token)


def fetch_surprisals(
    endpoint: str,
    texts: Sequence[str],
    *,
    ids: Sequence[str] | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    token: str | None = None,
) -> list[SurprisalSequence]:
    """Ask a language-model endpoint for per-token surprisals.

    POSTs {"texts": [...]} to <endpoint>/surprisal and converts the answer
    to SurprisalSequence objects, rescaling to nats when the endpoint
    declares bits. An empty text list short-circuits to [].
    """
    if not texts:
        return []
    if ids is not None and len(ids) != len(texts):
        raise ValueError("ids and texts must have equal lengths")
    body = _http_json(
        endpoint.rstrip("/") + "/surprisal",
        {"texts": list(texts)},
        timeout,
        token,
        error_cls=SchemaError,
    )
    if not isinstance(body, dict):
        raise SchemaError("/surprisal response is not a JSON object")
    try:
        tokens_rows = body["tokens"]
        surprisal_rows = body["surprisals"]
        unit = body["unit"]
    except KeyError as exc:
        raise SchemaError(f"/surprisal response missing {exc}") from exc
    if unit not in ("nats", "bits"):
        raise SchemaError(f"unknown surprisal unit {unit!r}")
    if not (
        isinstance(tokens_rows, list)
        and isinstance(surprisal_rows, list)
        and len(tokens_rows) == len(surprisal_rows) == len(texts)
    ):
        raise SchemaError("/surprisal rows do not align with the request texts")
    sequences = []
    for i, (tokens, values) in enumerate(zip(tokens_rows, surprisal_rows)):
        if len(tokens) != len(values):
            raise SchemaError(f"row {i}: {len(tokens)} tokens, {len(values)} surprisals")
        if unit == "bits":
            values = [bits_to_nats(float(v)) for v in values]
        seq_id = ids[i] if ids is not None else f"text-{i}"
        try:
            sequences.append(
                SurprisalSequence(id=seq_id, tokens=tuple(tokens), surprisals=tuple(values))
            )
        except ValueError as exc:
            raise SchemaError(f"row {i}: {exc}") from exc
    return sequences
