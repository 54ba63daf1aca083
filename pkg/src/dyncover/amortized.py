"""Dynamic set cover with amortized update-time guarantees.

Sets and elements live on levels ``0..L``.  An element's weight is
``(1+eps)^-level`` and its level is the highest level among its sets.  Each
set additionally carries *dead weight*, a bookkeeping credit for element
weight it lost to deletions or promotions of shared elements.  The cover is
the collection of tight sets, those with ``w(s) + dead(s) > c_s/(1+eps)``.
"""

from __future__ import annotations

import bisect
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .core import (
    CapacityExceeded,
    DuplicateElement,
    Instance,
    MissingElement,
    PreconditionViolated,
    Update,
    base_level,
    gt,
    level_cap,
    lt,
    resolve_update_sets,
    weight_table,
)
from .static_hierarchy import fix_level


@dataclass
class UpdateDelta:
    cover_value_after: float
    sets_entering_cover: list[str] = field(default_factory=list)
    sets_leaving_cover: list[str] = field(default_factory=list)
    work_units: int = 0
    lift_ups: int = 0
    rebuilds: list[int] = field(default_factory=list)


def smallest_rebuild_level(rows, epsilon: float, f: int) -> tuple[int | None, int]:
    """First level whose prefix violates the global dead-weight bound.

    ``rows`` yields ``(level, dead_weight, tight_cost, element_weight)`` in
    ascending level order.  Returns the level (or None) and the rows read.
    """
    phi = cost = weight = 0.0
    hops = 0
    for lvl, dead, tight_cost, elem_weight in rows:
        hops += 1
        phi += dead
        cost += tight_cost
        weight += elem_weight
        if gt(phi, epsilon * (cost + f * weight)):
            return lvl, hops
    return None, hops


class AmortizedEngine:
    """Amortized-time dynamic cover over a fixed family of sets.

    Elements of ``instance`` are inserted one by one during construction.
    """

    def __init__(self, instance: Instance, epsilon: float | None = None):
        self.instance = instance
        self.epsilon = instance.epsilon if epsilon is None else epsilon
        self.f = instance.f
        self.C = instance.C
        self.top = level_cap(instance.C, instance.n, self.epsilon)
        size = self.top + 2
        self.q = weight_table(size, self.epsilon)

        m = instance.m
        self.cost = list(instance.costs)
        self.threshold = [c / (1.0 + self.epsilon) for c in self.cost]
        self.base = [base_level(c, self.epsilon) for c in self.cost]
        self.level = [0] * m
        self.weight = [0.0] * m
        self.dead = [0.0] * m
        self.members: list[dict[int, set[int]]] = [{} for _ in range(m)]

        self.handle_of: dict[str, int] = {}
        self.name_of: dict[int, str] = {}
        self.elem_level: dict[int, int] = {}
        self.elem_sets: dict[int, tuple[int, ...]] = {}
        self._next_handle = 0

        self.phi_at = [0.0] * size
        self.tight_at: list[set[int]] = [set() for _ in range(size)]
        self.tight_cost_at = [0.0] * size
        self.elems_at: list[set[int]] = [set() for _ in range(size)]
        self.nonempty: list[int] = []
        self.total_phi = 0.0
        self.total_tight_cost = 0.0
        self.total_elem_weight = 0.0

        # What each set currently contributes to the per-level aggregates.
        self._rec_level = [0] * m
        self._rec_tight = [False] * m
        self._rec_phi = [0.0] * m

        self.work = 0
        self.lift_ups = 0
        self._touched: dict[int, bool] = {}

        for eid, sets in zip(instance.element_ids, instance.memberships):
            self.apply_update(Update.insert(eid, (instance.set_ids[s] for s in sets)))
        self.preprocessing_work = self.work
        self.preprocessing_updates = len(instance.element_ids)

    # -- public API --------------------------------------------------------

    @property
    def cover_value(self) -> float:
        return self.total_tight_cost

    def report_state(self, with_sets: bool = False):
        if not with_sets:
            return self.total_tight_cost, None
        return self.total_tight_cost, self.tight_sets()

    def tight_sets(self) -> list[str]:
        ids = self.instance.set_ids
        return sorted(ids[s] for lvl in self.nonempty for s in self.tight_at[lvl])

    def live_elements(self) -> dict[str, tuple[str, ...]]:
        ids = self.instance.set_ids
        return {
            self.name_of[h]: tuple(ids[s] for s in sets) for h, sets in self.elem_sets.items()
        }

    def apply_update(self, update: Update) -> UpdateDelta:
        work_before, lifts_before = self.work, self.lift_ups
        self._touched = {}
        rebuilds: list[int] = []
        if update.op == "delete":
            self.delete_element(update.element)
        elif update.op == "insert":
            h = self.insert_element(update.element, update.sets)
            self._restore_bounded_weight(self.elem_sets[h])
        else:
            raise ValueError(f"unknown update op {update.op!r}")
        while (k := self.find_rebuild_level()) is not None:
            rebuilds.append(k)
            self.rebuild(k)

        ids = self.instance.set_ids
        entering, leaving = [], []
        for s, was_tight in self._touched.items():
            if self._rec_tight[s] and not was_tight:
                entering.append(ids[s])
            elif was_tight and not self._rec_tight[s]:
                leaving.append(ids[s])
        self._touched = {}
        return UpdateDelta(
            cover_value_after=self.total_tight_cost,
            sets_entering_cover=sorted(entering),
            sets_leaving_cover=sorted(leaving),
            work_units=self.work - work_before,
            lift_ups=self.lift_ups - lifts_before,
            rebuilds=rebuilds,
        )

    # -- aggregate maintenance ------------------------------------------------

    def _refresh(self, s: int) -> None:
        lvl = self.level[s]
        tight = gt(self.weight[s] + self.dead[s], self.threshold[s])
        phi = self.dead[s]
        old_lvl, old_tight, old_phi = self._rec_level[s], self._rec_tight[s], self._rec_phi[s]
        if lvl == old_lvl and tight == old_tight and phi == old_phi:
            return
        if s not in self._touched:
            self._touched[s] = old_tight
        cost = self.cost[s]
        if old_tight:
            bucket = self.tight_at[old_lvl]
            bucket.discard(s)
            self.total_tight_cost -= cost
            if bucket:
                self.tight_cost_at[old_lvl] -= cost
            else:
                self.tight_cost_at[old_lvl] = 0.0
                self._unlink(old_lvl)
        self.phi_at[old_lvl] -= old_phi
        self.total_phi -= old_phi
        if tight:
            bucket = self.tight_at[lvl]
            if not bucket:
                self._link(lvl)
            bucket.add(s)
            self.tight_cost_at[lvl] += cost
            self.total_tight_cost += cost
        self.phi_at[lvl] += phi
        self.total_phi += phi
        if not self.nonempty:
            self.total_tight_cost = 0.0
        self._rec_level[s], self._rec_tight[s], self._rec_phi[s] = lvl, tight, phi

    def _link(self, lvl: int) -> None:
        bisect.insort(self.nonempty, lvl)
        self.work += 1

    def _unlink(self, lvl: int) -> None:
        idx = bisect.bisect_left(self.nonempty, lvl)
        del self.nonempty[idx]
        self.work += 1

    def _clamp_dead(self, s: int) -> None:
        if gt(self.weight[s] + self.dead[s], self.cost[s]):
            self.dead[s] = max(0.0, self.cost[s] - self.weight[s])

    def _move_element(self, h: int, new_level: int) -> None:
        old = self.elem_level[h]
        if old == new_level:
            return
        diff = self.q[new_level] - self.q[old]
        for s in self.elem_sets[h]:
            mem = self.members[s]
            bucket = mem[old]
            bucket.discard(h)
            if not bucket:
                del mem[old]
            mem.setdefault(new_level, set()).add(h)
            self.weight[s] += diff
        self.elems_at[old].discard(h)
        self.elems_at[new_level].add(h)
        self.elem_level[h] = new_level
        self.total_elem_weight += diff

    def _ensure_level(self, lvl: int) -> None:
        if lvl >= len(self.q) - 1:
            raise CapacityExceeded(f"level {lvl} exceeds the hierarchy top {self.top}")

    # -- elementary operations -------------------------------------------------

    def delete_element(self, element: str) -> None:
        try:
            h = self.handle_of.pop(element)
        except KeyError:
            raise MissingElement(f"element {element!r} is not present") from None
        del self.name_of[h]
        lvl = self.elem_level.pop(h)
        sets = self.elem_sets.pop(h)
        w = self.q[lvl]
        for s in sets:
            mem = self.members[s]
            mem[lvl].discard(h)
            if not mem[lvl]:
                del mem[lvl]
            self.weight[s] -= w
            if self.level[s] > 0:
                self.dead[s] += w
                self._clamp_dead(s)
            self._refresh(s)
        self.elems_at[lvl].discard(h)
        self.total_elem_weight -= w
        if not self.elem_level:
            self.total_elem_weight = 0.0
        self.work += 1 + len(sets)

    def _good(self, s: int, k: int) -> bool:
        return not gt(self.weight[s] + self.q[k], self.cost[s]) or self.level[s] in self.members[s]

    def insert_element(self, element: str, sets: Iterable[str]) -> int:
        if element in self.handle_of:
            raise DuplicateElement(f"element {element!r} is already present")
        interned = resolve_update_sets(self.instance, Update.insert(element, sets))
        if len(self.handle_of) >= self.instance.n:
            raise CapacityExceeded(f"more than n = {self.instance.n} live elements")
        h = self._next_handle
        self._next_handle += 1

        k = max(self.level[s] for s in interned)
        self.work += len(interned)
        bad = sorted(
            (s for s in interned if not self._good(s, k)),
            key=lambda s: (self.cost[s] - self.weight[s], s),
        )
        for s in bad:
            while not self._good(s, k):
                self.dead[s] = 0.0
                self.lift_up(s)
                k = max(k, self.level[s])
        self._ensure_level(k)

        self.handle_of[element] = h
        self.name_of[h] = element
        self.elem_level[h] = k
        self.elem_sets[h] = interned
        w = self.q[k]
        for s in interned:
            self.members[s].setdefault(k, set()).add(h)
            self.weight[s] += w
            self._clamp_dead(s)
            self._refresh(s)
        self.elems_at[k].add(h)
        self.total_elem_weight += w
        self.work += 1 + len(interned)
        return h

    def lift_up(self, s: int) -> None:
        if self.level[s] in self.members[s] or self.dead[s] != 0.0:
            raise PreconditionViolated(f"set {self.instance.set_ids[s]!r} cannot be lifted")
        lvl = self.level[s]
        self.level[s] = self.base[s] if lvl < self.base[s] else lvl + 1
        self._ensure_level(self.level[s])
        self._refresh(s)
        self.lift_ups += 1
        self.work += 1

    def weight_one_level_up(self, s: int) -> float:
        lvl = self.level[s]
        count = len(self.members[s].get(lvl, ()))
        return self.weight[s] - count * (self.q[lvl] - self.q[lvl + 1])

    def bounded_weight_holds(self, s: int) -> bool:
        return lt(self.weight_one_level_up(s), self.cost[s])

    def _restore_bounded_weight(self, sets: tuple[int, ...]) -> None:
        changed = True
        while changed:
            changed = False
            for s in sets:
                self.work += 1
                if not self.bounded_weight_holds(s):
                    # Already clamped to ~0 by the insertion; make it exact.
                    self.dead[s] = 0.0
                    self._refresh(s)
                    self.promote(s)
                    changed = True

    def promote(self, s: int) -> None:
        if self.dead[s] != 0.0 or self.bounded_weight_holds(s):
            raise PreconditionViolated(f"set {self.instance.set_ids[s]!r} does not need promotion")
        while self.level[s] not in self.members[s]:
            self.lift_up(s)
        k = self.level[s]
        while not self.bounded_weight_holds(s):
            self._ensure_level(k + 1)
            diff = self.q[k] - self.q[k + 1]
            for h in sorted(self.members[s].get(k, ())):
                sets = self.elem_sets[h]
                self._move_element(h, k + 1)
                for other in sets:
                    if other == s:
                        continue
                    if self.level[other] > 0:
                        self.dead[other] += diff
                        self._clamp_dead(other)
                    self._refresh(other)
                self.work += 1 + len(sets)
            k += 1
            self.level[s] = k
            self._refresh(s)

    # -- rebuilding ------------------------------------------------------------

    def find_rebuild_level(self) -> int | None:
        eps, f = self.epsilon, self.f
        self.work += 1
        if not gt(self.total_phi, eps * (self.total_tight_cost + f * self.total_elem_weight)):
            return None
        rows = (
            (lvl, self.phi_at[lvl], self.tight_cost_at[lvl], len(self.elems_at[lvl]) * self.q[lvl])
            for lvl in self.nonempty
        )
        k, hops = smallest_rebuild_level(rows, eps, f)
        self.work += hops
        return self.nonempty[-1] if k is None else k

    def relocation_level(self, k: int, slack_element_count: int) -> int:
        if slack_element_count == 0:
            return k
        raw = math.log(2.0 * self.C * slack_element_count / self.epsilon) / math.log1p(self.epsilon)
        return min(k, math.ceil(raw - 1e-12))

    def rebuild(self, k: int) -> None:
        low_levels = [lvl for lvl in self.nonempty if lvl <= k]
        affected: set[int] = set()
        low_elements: list[int] = []
        for lvl in low_levels:
            affected.update(self.tight_at[lvl])
            low_elements.extend(self.elems_at[lvl])
        for h in low_elements:
            affected.update(self.elem_sets[h])
        self.work += len(affected)

        for s in affected:
            self.dead[s] = 0.0
            self.level[s] = k
        for h in low_elements:
            self._move_element(h, k)
            self.work += 1 + len(self.elem_sets[h])

        slack = {s for s in affected if not gt(self.weight[s], self.threshold[s])}
        slack_elements = [h for h in low_elements if all(s in slack for s in self.elem_sets[h])]
        k2 = self.relocation_level(k, len(slack_elements))
        self.work += (k - k2) + len(slack)
        for s in slack:
            self.level[s] = k2
        for h in slack_elements:
            self._move_element(h, k2)

        result = fix_level(
            k2,
            {s: (self.cost[s], self.weight[s]) for s in slack},
            {h: self.elem_sets[h] for h in slack_elements},
            self.epsilon,
        )
        self.work += result.work
        for s in slack:
            self.level[s] = result.set_levels[s]
        for h in slack_elements:
            self._move_element(h, result.element_levels[h])
        for s in sorted(affected):
            self._refresh(s)

    # -- state export ----------------------------------------------------------

    def snapshot(self) -> dict:
        """Canonical, JSON-ready description of the full state."""
        ids = self.instance.set_ids
        return {
            "sets": {
                ids[s]: {
                    "level": self.level[s],
                    "weight": self.weight[s],
                    "dead": self.dead[s],
                    "members": {
                        str(lvl): sorted(self.name_of[h] for h in els)
                        for lvl, els in sorted(self.members[s].items())
                    },
                }
                for s in range(len(ids))
            },
            "elements": {
                self.name_of[h]: {"level": self.elem_level[h], "sets": [ids[s] for s in sets]}
                for h, sets in sorted(self.elem_sets.items())
            },
            "totals": [self.total_phi, self.total_tight_cost, self.total_elem_weight],
            "nonempty": list(self.nonempty),
            "work": self.work,
            "lift_ups": self.lift_ups,
        }

    @classmethod
    def from_levels(
        cls,
        instance: Instance,
        set_levels: Mapping[str, int],
        elements: Mapping[str, tuple[Iterable[str], int]],
        dead: Mapping[str, float] | None = None,
        epsilon: float | None = None,
    ) -> AmortizedEngine:
        """Engine placed in an explicit state (levels are taken as given)."""
        empty = Instance(
            set_ids=instance.set_ids, costs=instance.costs, element_ids=(), memberships=(),
            f=instance.f, C=instance.C, n=instance.n, epsilon=instance.epsilon,
            set_index=instance.set_index, set_elements=tuple(() for _ in instance.set_ids),
        )
        eng = cls(empty, epsilon)
        eng.instance = instance
        idx = instance.set_index
        for sid, lvl in set_levels.items():
            eng.level[idx[sid]] = lvl
        for name, (sets, lvl) in elements.items():
            h = eng._next_handle
            eng._next_handle += 1
            interned = tuple(idx[s] for s in sets)
            eng.handle_of[name] = h
            eng.name_of[h] = name
            eng.elem_level[h] = lvl
            eng.elem_sets[h] = interned
            eng.elems_at[lvl].add(h)
            eng.total_elem_weight += eng.q[lvl]
            for s in interned:
                eng.members[s].setdefault(lvl, set()).add(h)
                eng.weight[s] += eng.q[lvl]
        for sid, value in (dead or {}).items():
            eng.dead[idx[sid]] = value
        for s in range(instance.m):
            eng._rec_level[s] = eng.level[s]
            eng._rec_tight[s] = False
            eng._rec_phi[s] = 0.0
            eng._refresh(s)
        eng.work = 0
        eng._touched = {}
        return eng
