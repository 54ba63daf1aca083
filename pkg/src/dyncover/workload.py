"""Random instances, update streams, and their on-disk formats.

Instances are single JSON documents, streams are JSON lines (one update per
line) and run reports are single JSON documents.  Every document format
carries a ``version`` field that is checked on load.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Iterable, Mapping

from .core import (
    CapacityExceeded,
    DuplicateElement,
    DynCoverError,
    Instance,
    MissingElement,
    Update,
    resolve_update_sets,
    validate_instance,
)

INSTANCE_VERSION = "instance-v1"
REPORT_VERSION = "report-v1"
COST_MARGIN = 1e-6


class Unsatisfiable(DynCoverError, ValueError):
    """Generator parameters that no instance can meet."""


class ParseError(DynCoverError, ValueError):
    """Malformed input; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


class SchemaVersionMismatch(DynCoverError, ValueError):
    """A document whose ``version`` this package does not read."""


@dataclass(frozen=True)
class GenParams:
    """Knobs for :func:`gen_instance` and :func:`gen_stream`.

    ``n_max`` is the live-element capacity recorded in the instance and
    respected by streams; ``n_initial`` elements exist before the first
    update.  ``insert_fraction`` is the chance that a step inserts (when both
    moves are legal).  ``delete_burst`` is the per-step chance of emitting a
    run of ``ceil(epsilon * live)`` deletions, enough to fire a rebuild
    trigger.  ``close_out`` appends deletions until nothing is live.
    """

    m: int
    n_max: int
    f: int
    C: float = 2.0
    epsilon: float = 0.1
    n_initial: int | None = None
    t: int = 100
    insert_fraction: float = 0.5
    delete_burst: float = 0.0
    close_out: bool = False
    seed: int = 0

    @property
    def initial_count(self) -> int:
        return self.n_max // 2 if self.n_initial is None else self.n_initial


def _cost(rng: random.Random, C: float) -> float:
    low = 1.0 / C + COST_MARGIN
    high = 1.0 - COST_MARGIN
    return rng.uniform(low, high)


def _pick_sets(rng: random.Random, set_ids: tuple[str, ...], f: int) -> list[str]:
    k = rng.randint(1, min(f, len(set_ids)))
    return rng.sample(set_ids, k)


def gen_instance(params: GenParams) -> Instance:
    """Random instance: uniform costs inside (1/C, 1), each element in 1..f sets."""
    if params.m < 1 or params.f < 1:
        raise Unsatisfiable(f"need m >= 1 and f >= 1, got m={params.m}, f={params.f}")
    if params.f > params.m:
        raise Unsatisfiable(f"frequency {params.f} exceeds the {params.m} available sets")
    if params.initial_count > params.n_max:
        raise Unsatisfiable(f"{params.initial_count} initial elements exceed n_max={params.n_max}")
    rng = random.Random(params.seed)
    set_ids = tuple(f"s{j}" for j in range(params.m))
    sets = [{"id": sid, "cost": _cost(rng, params.C)} for sid in set_ids]
    elements = [
        {"id": f"e{j}", "sets": _pick_sets(rng, set_ids, params.f)}
        for j in range(params.initial_count)
    ]
    return validate_instance({
        "epsilon": params.epsilon,
        "C": params.C,
        "f": params.f,
        "n": max(1, params.n_max),
        "sets": sets,
        "elements": elements,
    })


def gen_stream(instance: Instance, params: GenParams) -> list[Update]:
    """Presence-legal random stream of ``params.t`` updates (plus close-out deletions)."""
    rng = random.Random(params.seed ^ 0x5EED)
    live = list(instance.element_ids)
    initial = set(live)
    capacity = instance.n
    stream: list[Update] = []
    fresh = 0

    def delete_one() -> None:
        idx = rng.randrange(len(live))
        live[idx], live[-1] = live[-1], live[idx]
        stream.append(Update.delete(live.pop()))

    while len(stream) < params.t:
        if live and params.delete_burst and rng.random() < params.delete_burst:
            run = math.ceil(instance.epsilon * len(live))
            for _ in range(min(run, len(live), params.t - len(stream))):
                delete_one()
            continue
        can_insert = len(live) < capacity
        if can_insert and (not live or rng.random() < params.insert_fraction):
            eid = f"u{fresh}"
            fresh += 1
            while eid in initial:
                eid = f"u{fresh}"
                fresh += 1
            live.append(eid)
            stream.append(Update.insert(eid, _pick_sets(rng, instance.set_ids, instance.f)))
        else:
            delete_one()
    if params.close_out:
        while live:
            delete_one()
    return stream


def replay_live(instance: Instance, stream: Iterable[Update]) -> dict[str, tuple[str, ...]]:
    """Replay ``stream`` on the initial elements and return what stays live.

    Raises the engines' own update errors on the first illegal update.
    """
    live = dict(instance.element_sets())
    for update in stream:
        if update.op == "insert":
            if update.element in live:
                raise DuplicateElement(f"element {update.element!r} is already live")
            resolve_update_sets(instance, update)
            if len(live) >= instance.n:
                raise CapacityExceeded(f"more than n = {instance.n} live elements")
            live[update.element] = tuple(update.sets)
        elif update.op == "delete":
            if live.pop(update.element, None) is None:
                raise MissingElement(f"element {update.element!r} is not live")
        else:
            raise ValueError(f"unknown update op {update.op!r}")
    return live


# -- codecs --------------------------------------------------------------------


def _as_text(source: str | bytes) -> str:
    return source.decode("utf-8") if isinstance(source, (bytes, bytearray)) else source


def _check_version(doc: Mapping, expected: str) -> None:
    version = doc.get("version")
    if version != expected:
        raise SchemaVersionMismatch(f"expected version {expected!r}, found {version!r}")


def _load_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None


def dump_instance(instance: Instance) -> str:
    doc = {"version": INSTANCE_VERSION, **instance.to_raw()}
    return json.dumps(doc, indent=1) + "\n"


def load_instance(source: str | bytes) -> Instance:
    doc = _load_json(_as_text(source))
    if not isinstance(doc, dict):
        raise ParseError("instance must be a JSON object", line=1)
    _check_version(doc, INSTANCE_VERSION)
    for key in ("epsilon", "C", "f", "sets", "elements"):
        if key not in doc:
            raise ParseError("missing", field=key)
    return validate_instance(doc)


def _update_record(update: Update) -> dict:
    if update.op == "insert":
        return {"op": "insert", "element": update.element, "sets": list(update.sets)}
    return {"op": "delete", "element": update.element}


def dump_stream(stream: Iterable[Update]) -> str:
    return "".join(json.dumps(_update_record(u)) + "\n" for u in stream)


def _parse_update(record, lineno: int) -> Update:
    if not isinstance(record, dict):
        raise ParseError("expected a JSON object", line=lineno)
    op = record.get("op")
    if op not in ("insert", "delete"):
        raise ParseError(f"op must be 'insert' or 'delete', got {op!r}", line=lineno, field="op")
    element = record.get("element")
    if not isinstance(element, str) or not element:
        raise ParseError("missing element id", line=lineno, field="element")
    if op == "delete":
        return Update.delete(element)
    sets = record.get("sets")
    if not isinstance(sets, list) or not sets or not all(isinstance(s, str) for s in sets):
        raise ParseError("insert needs a non-empty list of set ids", line=lineno, field="sets")
    return Update.insert(element, sets)


def load_stream(source: str | bytes) -> list[Update]:
    stream = []
    for lineno, line in enumerate(_as_text(source).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=lineno) from None
        stream.append(_parse_update(record, lineno))
    return stream


def dump_report(report: Mapping) -> str:
    return json.dumps({"version": REPORT_VERSION, **report}, indent=1, sort_keys=True) + "\n"


def load_report(source: str | bytes) -> dict:
    doc = _load_json(_as_text(source))
    if not isinstance(doc, dict):
        raise ParseError("report must be a JSON object", line=1)
    _check_version(doc, REPORT_VERSION)
    return doc


def _write(path: str | PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _read(path: str | PathLike) -> str:
    return Path(path).read_text(encoding="utf-8")


def write_instance(path: str | PathLike, instance: Instance) -> None:
    _write(path, dump_instance(instance))


def read_instance(path: str | PathLike) -> Instance:
    return load_instance(_read(path))


def write_stream(path: str | PathLike, stream: Iterable[Update]) -> None:
    _write(path, dump_stream(stream))


def read_stream(path: str | PathLike) -> list[Update]:
    return load_stream(_read(path))


def write_report(path: str | PathLike, report: Mapping) -> None:
    _write(path, dump_report(report))


def read_report(path: str | PathLike) -> dict:
    return load_report(_read(path))
