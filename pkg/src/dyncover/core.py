"""Instance model, level arithmetic and the shared numeric policy."""

from __future__ import annotations

import functools
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

TOLERANCE = 1e-9
_LOG_GUARD = 1e-12


class DynCoverError(Exception):
    """Base class for every error raised by this package."""


class InstanceError(DynCoverError, ValueError):
    pass


class CostOutOfRange(InstanceError):
    pass


class FrequencyExceeded(InstanceError):
    pass


class DuplicateId(InstanceError):
    pass


class OrphanElement(InstanceError):
    pass


class EpsilonOutOfRange(InstanceError):
    pass


class UpdateError(DynCoverError, ValueError):
    pass


class UnknownSet(UpdateError):
    pass


class DuplicateElement(UpdateError):
    pass


class MissingElement(UpdateError):
    pass


class EmptySetList(UpdateError):
    pass


class CapacityExceeded(UpdateError):
    """More live elements than the instance's declared universe bound ``n``."""


class PreconditionViolated(DynCoverError, AssertionError):
    pass


class ContractViolation(DynCoverError, AssertionError):
    pass


# --- tolerant comparisons -------------------------------------------------


def _slack(a: float, b: float) -> float:
    return TOLERANCE * max(1.0, abs(a), abs(b))


def gt(a: float, b: float) -> bool:
    """``a`` clearly exceeds ``b``."""
    return a > b + _slack(a, b)


def lt(a: float, b: float) -> bool:
    return b > a + _slack(a, b)


def ge(a: float, b: float) -> bool:
    """``a >= b`` up to tolerance (the negation of ``lt``)."""
    return not lt(a, b)


def le(a: float, b: float) -> bool:
    return not gt(a, b)


# --- level arithmetic -----------------------------------------------------


def check_epsilon(epsilon: float) -> float:
    # 0.1 itself is admitted: every worked example in the design uses it.
    if not (isinstance(epsilon, (int, float)) and 0.0 < epsilon <= 0.1):
        raise EpsilonOutOfRange(f"epsilon must lie in (0, 0.1], got {epsilon!r}")
    return float(epsilon)


def level_cap(C: float, n: int, epsilon: float) -> int:
    """Highest level of the hierarchy: ceil(log_{1+eps}(C*n)) + 1."""
    raw = math.log(C * n) / math.log1p(epsilon)
    return max(0, math.ceil(raw - _LOG_GUARD)) + 1


def base_level(cost: float, epsilon: float) -> int:
    """Lowest level a set of this cost may hold elements at."""
    raw = math.log(1.0 / cost) / math.log1p(epsilon)
    return max(0, math.floor(raw + _LOG_GUARD))


def element_weight(level: int, epsilon: float) -> float:
    return (1.0 + epsilon) ** (-level)


@functools.lru_cache(maxsize=256)
def weight_table(top: int, epsilon: float) -> tuple[float, ...]:
    """Precomputed ``element_weight`` for levels ``0..top`` (shared, immutable)."""
    return tuple(element_weight(i, epsilon) for i in range(top + 1))


def tight_threshold(cost: float, epsilon: float) -> float:
    return cost / (1.0 + epsilon)


def is_tight(weight: float, cost: float, epsilon: float) -> bool:
    return gt(weight, cost / (1.0 + epsilon))


# --- per-set and per-element state ----------------------------------------


@dataclass
class SetState:
    level: int
    cost: float
    weight: float = 0.0
    dead_weight: float = 0.0
    per_level_elements: dict[int, set] = field(default_factory=dict)

    def per_level_counts(self) -> dict[int, int]:
        return {lvl: len(els) for lvl, els in self.per_level_elements.items() if els}

    def members(self) -> Iterable:
        for els in self.per_level_elements.values():
            yield from els

    def elements_at(self, level: int) -> set:
        return self.per_level_elements.get(level, _EMPTY)

    def add(self, element, level: int) -> None:
        self.per_level_elements.setdefault(level, set()).add(element)

    def discard(self, element, level: int) -> None:
        bucket = self.per_level_elements.get(level)
        if bucket is not None:
            bucket.discard(element)
            if not bucket:
                del self.per_level_elements[level]


_EMPTY: frozenset = frozenset()


@dataclass
class ElementState:
    level: int
    weight: float
    containing_sets: tuple


def set_weight_at(s: SetState, i: int, neighbor_levels: Mapping, epsilon: float) -> float:
    """Weight ``s`` would have at level ``i``.

    ``neighbor_levels`` maps each member element to the highest level among
    the *other* sets containing it; exclusive elements may be absent or map
    to ``None``.
    """
    total = 0.0
    for e in s.members():
        other = neighbor_levels.get(e)
        lvl = i if other is None else max(i, other)
        total += element_weight(lvl, epsilon)
    return total


# --- instances ------------------------------------------------------------


@dataclass(frozen=True)
class Update:
    op: str
    element: str
    sets: tuple[str, ...] = ()

    @classmethod
    def insert(cls, element: str, sets: Iterable[str]) -> Update:
        return cls("insert", element, tuple(sets))

    @classmethod
    def delete(cls, element: str) -> Update:
        return cls("delete", element)


@dataclass(frozen=True)
class Instance:
    """A validated set system with interned ids.

    Sets and elements are addressed internally by their position in
    ``set_ids`` / ``element_ids``.
    """

    set_ids: tuple[str, ...]
    costs: tuple[float, ...]
    element_ids: tuple[str, ...]
    memberships: tuple[tuple[int, ...], ...]
    f: int
    C: float
    n: int
    epsilon: float
    set_index: Mapping[str, int] = field(compare=False, repr=False)
    set_elements: tuple[tuple[int, ...], ...] = field(compare=False, repr=False)

    @property
    def m(self) -> int:
        return len(self.set_ids)

    def cost_of(self, set_id: str) -> float:
        return self.costs[self.set_index[set_id]]

    def element_sets(self) -> dict[str, tuple[str, ...]]:
        return {
            eid: tuple(self.set_ids[s] for s in sets)
            for eid, sets in zip(self.element_ids, self.memberships)
        }

    def to_raw(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "C": self.C,
            "f": self.f,
            "n": self.n,
            "sets": [{"id": sid, "cost": c} for sid, c in zip(self.set_ids, self.costs)],
            "elements": [
                {"id": eid, "sets": [self.set_ids[s] for s in sets]}
                for eid, sets in zip(self.element_ids, self.memberships)
            ],
        }


def _iter_sets(raw_sets) -> Iterable[tuple[str, float]]:
    if isinstance(raw_sets, Mapping):
        yield from raw_sets.items()
        return
    for item in raw_sets:
        if isinstance(item, Mapping):
            yield item["id"], item["cost"]
        else:
            sid, cost = item
            yield sid, cost


def _iter_elements(raw_elements) -> Iterable[tuple[str, list]]:
    if isinstance(raw_elements, Mapping):
        yield from raw_elements.items()
        return
    for item in raw_elements:
        if isinstance(item, Mapping):
            yield item["id"], item["sets"]
        else:
            eid, sets = item
            yield eid, sets


def validate_instance(raw: Mapping) -> Instance:
    """Check parameter ranges and build an :class:`Instance`.

    ``raw`` holds ``epsilon``, ``C``, ``f``, optional ``n``, ``sets`` (a list
    of ``{"id", "cost"}`` records, ``(id, cost)`` pairs or an id->cost map)
    and ``elements`` (``{"id", "sets"}`` records, pairs or an id->sets map).
    """
    epsilon = check_epsilon(raw["epsilon"])
    C = float(raw["C"])
    if not C > 1.0:
        raise InstanceError(f"C must exceed 1, got {C!r}")
    f = int(raw["f"])
    if f < 1:
        raise InstanceError(f"f must be positive, got {f!r}")

    set_ids: list[str] = []
    costs: list[float] = []
    set_index: dict[str, int] = {}
    for sid, cost in _iter_sets(raw.get("sets", ())):
        sid = str(sid)
        if sid in set_index:
            raise DuplicateId(f"duplicate set id {sid!r}")
        cost = float(cost)
        if not (1.0 / C < cost < 1.0):
            raise CostOutOfRange(f"set {sid!r}: cost {cost!r} outside (1/C, 1) = ({1.0 / C!r}, 1)")
        set_index[sid] = len(set_ids)
        set_ids.append(sid)
        costs.append(cost)

    element_ids: list[str] = []
    memberships: list[tuple[int, ...]] = []
    seen: set[str] = set()
    for eid, sets in _iter_elements(raw.get("elements", ())):
        eid = str(eid)
        if eid in seen:
            raise DuplicateId(f"duplicate element id {eid!r}")
        seen.add(eid)
        names = [str(s) for s in sets]
        if not names:
            raise OrphanElement(f"element {eid!r} belongs to no set")
        if len(set(names)) != len(names):
            raise DuplicateId(f"element {eid!r} lists a set twice")
        if len(names) > f:
            raise FrequencyExceeded(f"element {eid!r} is in {len(names)} sets, f = {f}")
        try:
            interned = tuple(set_index[s] for s in names)
        except KeyError as exc:
            raise UnknownSet(f"element {eid!r} references unknown set {exc.args[0]!r}") from None
        element_ids.append(eid)
        memberships.append(interned)

    n = int(raw.get("n") or max(1, len(element_ids)))
    if n < max(1, len(element_ids)):
        raise InstanceError(f"n = {n} is smaller than the {len(element_ids)} initial elements")

    inverted: list[list[int]] = [[] for _ in set_ids]
    for idx, sets in enumerate(memberships):
        for s in sets:
            inverted[s].append(idx)

    return Instance(
        set_ids=tuple(set_ids),
        costs=tuple(costs),
        element_ids=tuple(element_ids),
        memberships=tuple(memberships),
        f=f,
        C=C,
        n=n,
        epsilon=epsilon,
        set_index=set_index,
        set_elements=tuple(tuple(x) for x in inverted),
    )


def resolve_update_sets(instance: Instance, update: Update) -> tuple[int, ...]:
    """Intern and validate the set list of an insertion."""
    if not update.sets:
        raise EmptySetList(f"insert of {update.element!r} names no sets")
    if len(set(update.sets)) != len(update.sets):
        raise DuplicateId(f"insert of {update.element!r} lists a set twice")
    if len(update.sets) > instance.f:
        raise FrequencyExceeded(
            f"insert of {update.element!r} names {len(update.sets)} sets, f = {instance.f}"
        )
    try:
        return tuple(instance.set_index[s] for s in update.sets)
    except KeyError as exc:
        raise UnknownSet(f"unknown set {exc.args[0]!r}") from None
