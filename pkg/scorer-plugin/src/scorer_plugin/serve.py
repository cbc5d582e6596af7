"""Stdio scorer process implementing the scorer/1 line protocol.

The process writes one JSON handshake line on startup::

    {"protocol": "scorer/1", "name": ..., "needs_source": ...,
     "needs_reference": ..., "batch": ...}

then answers every request line ``{"id", "hyp", "src"?, "ref"?}`` with either
``{"id", "score"}`` or ``{"id", "error"}``. Responses are flushed per line and
emitted in request order (the protocol also permits out-of-order responses;
the driving adapter matches on id). The process exits 0 when stdin closes,
and exits nonzero when it cannot reach the point of serving at all: unusable
command-line arguments, a neural backend that is not installed or cannot
load the requested model, or stdout closing mid-serve.

Two modes:

* ``stub`` — a dependency-free deterministic metric for CI and protocol
  tests. The score is the share of the reference's distinct whitespace
  tokens that also occur in the hypothesis::

      score = |types(hyp) & types(ref)| / |types(ref)|

  with the empty-reference convention that an empty reference scores 1.0
  against an empty hypothesis and 0.0 otherwise. The closed form is public
  API: callers may assert exact values against their own implementation.
  It is also deliberately easy to game — padding a hypothesis with extra
  reference tokens only ever raises the score — which makes it a good
  known exploit surface for metric-robustness experiments.

* ``neural`` — an optional wrapper that loads a trained MT-evaluation model
  through the ``comet`` package and scores each request with it. Requires
  ``--model`` plus the ``neural`` extra; nothing neural is imported in stub
  mode.
"""

import argparse
import json
import sys
from dataclasses import dataclass


PROTOCOL = "scorer/1"


class PluginSetupError(Exception):
    """The process cannot start serving (bad config, missing backend)."""


class RequestError(Exception):
    """One request cannot be scored; reported as an error line."""


@dataclass(frozen=True)
class PluginConfig:
    """Serving configuration: which metric to expose and how."""

    mode: str = "stub"
    model: str | None = None
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.mode not in ("stub", "neural"):
            raise PluginSetupError(f"unknown mode {self.mode!r}")
        if self.batch_size < 1:
            raise PluginSetupError("batch size must be >= 1")
        if self.mode == "neural" and not self.model:
            raise PluginSetupError("neural mode requires --model")


def overlap_score(hypothesis: str, reference: str) -> float:
    """Share of the reference's distinct tokens present in the hypothesis."""
    hyp_types = set(hypothesis.split())
    ref_types = set(reference.split())
    if not ref_types:
        return 1.0 if not hyp_types else 0.0
    return len(hyp_types & ref_types) / len(ref_types)


@dataclass(frozen=True)
class Scorer:
    """A named scoring function plus the request fields it requires."""

    name: str
    needs_source: bool
    needs_reference: bool
    score: "callable"


def _field(request: dict, key: str) -> str:
    value = request.get(key)
    if not isinstance(value, str):
        raise RequestError(f"request needs a string {key!r} field")
    return value


def stub_scorer() -> Scorer:
    def score(request: dict) -> float:
        return overlap_score(_field(request, "hyp"), _field(request, "ref"))

    return Scorer(
        name="token-overlap-stub",
        needs_source=False,
        needs_reference=True,
        score=score,
    )


def neural_scorer(config: PluginConfig) -> Scorer:
    """Load an MT-evaluation model and wrap it as a per-request scorer.

    Imported lazily so stub mode stays dependency-free; any load failure is
    fatal before the handshake.
    """
    try:
        from comet import download_model, load_from_checkpoint
    except ImportError as exc:
        raise PluginSetupError(
            f"neural mode needs the 'neural' extra (unbabel-comet): {exc}"
        ) from exc
    try:
        model = load_from_checkpoint(download_model(config.model))
    except Exception as exc:  # checkpoint download/parsing failures
        raise PluginSetupError(f"cannot load model {config.model!r}: {exc}") from exc

    def score(request: dict) -> float:
        item = {"src": _field(request, "src"), "mt": _field(request, "hyp")}
        if isinstance(request.get("ref"), str):
            item["ref"] = request["ref"]
        output = model.predict(
            [item], batch_size=config.batch_size, gpus=0, progress_bar=False
        )
        return float(output.scores[0])

    return Scorer(
        name=f"neural-{config.model}",
        needs_source=True,
        needs_reference=False,
        score=score,
    )


def make_scorer(config: PluginConfig) -> Scorer:
    if config.mode == "stub":
        return stub_scorer()
    return neural_scorer(config)


def _emit(stream, obj: dict) -> None:
    stream.write(json.dumps(obj, ensure_ascii=False) + "\n")
    stream.flush()


def serve(config: PluginConfig, stdin=None, stdout=None) -> int:
    """Handshake, then answer request lines until stdin closes."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    scorer = make_scorer(config)
    _emit(
        stdout,
        {
            "protocol": PROTOCOL,
            "name": scorer.name,
            "needs_source": scorer.needs_source,
            "needs_reference": scorer.needs_reference,
            "batch": config.batch_size,
        },
    )
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(stdout, {"id": None, "error": f"request is not valid JSON: {exc}"})
            continue
        if not isinstance(request, dict):
            _emit(stdout, {"id": None, "error": "request is not a JSON object"})
            continue
        request_id = request.get("id")
        try:
            score = scorer.score(request)
        except RequestError as exc:
            _emit(stdout, {"id": request_id, "error": str(exc)})
            continue
        _emit(stdout, {"id": request_id, "score": score})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorer-plugin",
        description="Serve a scorer/1 metric over stdin/stdout.",
    )
    parser.add_argument(
        "--mode", choices=("stub", "neural"), default="stub",
        help="deterministic token-overlap stub or a neural model wrapper",
    )
    parser.add_argument("--model", help="model identifier (neural mode only)")
    parser.add_argument(
        "--batch", type=int, default=64,
        help="batch limit advertised in the handshake",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = PluginConfig(mode=args.mode, model=args.model, batch_size=args.batch)
        return serve(config)
    except PluginSetupError as exc:
        print(f"scorer-plugin: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
