# Copyright (c) 2026, The vetgate Authors.
#
# SPDX-License-Identifier: Apache-2.0
"""Python interface to the vetgate node vetting toolkit."""

import json
import os
from typing import Iterable, Mapping, Optional, Sequence, Tuple

from . import _core
from ._core import VetgateError, __version__

__all__ = [
    "VetgateError",
    "__version__",
    "canonical_protocol",
    "compress_hostlist",
    "decide_verdict",
    "error_kind",
    "expand_hostlist",
    "load_protocol",
    "parse_protocol",
    "replay_rules",
    "run_cli",
    "score",
    "simulate",
]


def error_kind(error: VetgateError) -> str:
    """Machine-readable kind of a VetgateError, e.g. "MalformedHostlist"."""
    return error.args[0] if error.args else "Error"


def expand_hostlist(expression: str) -> list:
    return _core.expand_hostlist(expression)


def compress_hostlist(names: Iterable[str]) -> str:
    return _core.compress_hostlist(list(names))


def parse_protocol(document: str) -> dict:
    return json.loads(_core.parse_protocol(document))


def load_protocol(path: "os.PathLike[str] | str") -> dict:
    return json.loads(_core.load_protocol(os.fspath(path)))


def canonical_protocol(document: str) -> str:
    return _core.canonical_protocol(document)


def decide_verdict(reports: Sequence[Mapping], context: Mapping, policy: Optional[Mapping] = None) -> dict:
    policy = policy or {"max_exclusion_fraction": 0.1, "treat_unknown_as": "fail-if-strict", "strict": False}
    return json.loads(_core.decide_verdict(json.dumps(list(reports)), json.dumps(dict(context)), json.dumps(dict(policy))))


def score(
    fixtures_dir: "os.PathLike[str] | str",
    fixture: str,
    gpus: Optional[int] = None,
    interval_ms: int = 1000,
    duration_ms: int = 60000,
    weights: Tuple[float, float, float] = (0.5, 0.3, 0.2),
    link_peak_gbps: float = 100.0,
    seed: int = 0,
) -> dict:
    return json.loads(
        _core.score(os.fspath(fixtures_dir), fixture, gpus, interval_ms, duration_ms, tuple(weights), link_peak_gbps, seed)
    )


def simulate(profile: "os.PathLike[str] | str", protocol: "os.PathLike[str] | str", repeat: int = 1, seed: Optional[int] = None) -> dict:
    return json.loads(_core.simulate(os.fspath(profile), os.fspath(protocol), repeat, seed))


def replay_rules(events: Iterable[Mapping], catalog: "Optional[os.PathLike[str] | str]" = None) -> dict:
    lines = [json.dumps(dict(e)) for e in events]
    return json.loads(_core.replay_rules(lines, None if catalog is None else os.fspath(catalog)))


def run_cli(args: Sequence[str], env: Optional[Mapping[str, str]] = None, program: str = "vetgate") -> Tuple[int, str, str]:
    """Run a vetgate command in-process; returns (exit code, stdout, stderr)."""
    return _core.run_cli([program, *args], dict(os.environ if env is None else env))
