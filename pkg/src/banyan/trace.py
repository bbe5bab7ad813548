"""Trace records: the only thing checkers and metrics ever look at.

A trace is an ordered list of 9-tuples

    (time, kind, from, to, round, block, vote, path, parent)

serialized as line-delimited JSON with exactly those keys.  Kinds:

    send         a broadcast or unicast leaving a replica
    deliver      a message arriving at a replica
    timer        a timer tick firing at a replica
    enter_round  a replica initializing a round
    propose      block creation (from = proposer; parent filled)
    notarized    a block gaining notarized status at a replica
    unlocked     a block gaining unlocked status at a replica
    output       a finalized payload emitted at a replica (path filled)

``vote`` labels vote and aggregate message kinds on send/deliver records.
The trace digest is sha256 over the serialized record lines; a run's trace
file carries a header line with the scenario, seed, and digest so it can be
replayed standalone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

FIELDS = ("time", "kind", "from", "to", "round", "block", "vote", "path", "parent")

T_TIME, T_KIND, T_FROM, T_TO, T_ROUND, T_BLOCK, T_VOTE, T_PATH, T_PARENT = range(9)

HEADER_SCHEMA = "banyan-trace-v1"


def record_line(rec) -> str:
    """Canonical JSON for one record; key order fixed, floats via repr."""
    parts = []
    for name, value in zip(FIELDS, rec):
        if value is None:
            parts.append(f'"{name}":null')
        elif isinstance(value, str):
            parts.append(f'"{name}":"{value}"')
        else:
            parts.append(f'"{name}":{value!r}')
    return "{" + ",".join(parts) + "}"


def digest(records) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(record_line(rec).encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class Trace:
    """A complete run: ordered records plus the inputs that produced them."""

    records: list
    scenario: dict  # raw scenario document (JSON-compatible)
    seed: int
    mode: str

    _digest: str | None = None

    def digest(self) -> str:
        if self._digest is None:
            self._digest = digest(self.records)
        return self._digest


def write_trace(trace: Trace, path) -> str:
    """Write header + records; returns the record digest."""
    d = trace.digest()
    header = {
        "schema": HEADER_SCHEMA,
        "scenario": trace.scenario,
        "seed": trace.seed,
        "mode": trace.mode,
        "digest": d,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for rec in trace.records:
            fh.write(record_line(rec))
            fh.write("\n")
    return d


class TraceFileError(ValueError):
    pass


def read_trace(path) -> tuple[Trace, str]:
    """Load a trace file; returns (trace, digest claimed by the header)."""
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise TraceFileError("empty trace file")
        header = json.loads(first)
        if header.get("schema") != HEADER_SCHEMA:
            raise TraceFileError("not a banyan trace file")
        records = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(tuple(obj.get(name) for name in FIELDS))
    trace = Trace(
        records=records,
        scenario=header["scenario"],
        seed=header["seed"],
        mode=header["mode"],
    )
    return trace, header["digest"]
