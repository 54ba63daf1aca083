"""Dynamic set cover with worst-case update-time guarantees.

The engine keeps one *local view* per level ``k`` in ``1..L``.  View ``k``
owns levels ``0..k`` of a hierarchy and summarises everything above ``k`` as
an extra weight per set.  Updates never move sets: an insertion becomes a
*passive* element (weight 0, or just enough weight at level 0) and a
deletion turns an element *dead* while keeping its weight.  Once passive
and dead elements make up an ``eps`` fraction of a view, a background
scheduler rebuilds that view from scratch a bounded amount of work per
update, and on completion hands the result to every lower view.

Views that agree below their own level share one :class:`Hierarchy`
object; view ``k`` reads it through the window ``0..k``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .core import (
    CapacityExceeded,
    DuplicateElement,
    Instance,
    MissingElement,
    Update,
    ge,
    gt,
    level_cap,
    resolve_update_sets,
    weight_table,
)
from .static_hierarchy import ACTIVE, DEAD, PASSIVE, RebuildWorkspace, build_static

SIMPLE, EFFICIENT = "simple", "efficient"


class Hierarchy:
    """Set and element levels ``0..top`` shared by a contiguous run of views."""

    def __init__(self, top: int):
        self.top = top
        self.set_level: dict[int, int] = {}
        self.extra: dict[int, float] = {}
        self.weight: dict[int, float] = {}
        self.tally: dict[int, dict[int, float]] = {}
        self.elem_level: dict[int, int] = {}
        self.elem_weight: dict[int, float] = {}
        self.elem_status: dict[int, str] = {}
        self.sets_at: list[set[int]] = [set() for _ in range(top + 1)]
        self.elems_at: list[set[int]] = [set() for _ in range(top + 1)]
        self.active_at = [0] * (top + 1)
        self.stale_at = [0] * (top + 1)

    def add_set(self, s: int, level: int, extra: float) -> None:
        self.set_level[s] = level
        self.extra[s] = extra
        self.weight[s] = extra + sum(self.tally.get(s, {}).values())
        self.tally.setdefault(s, {})
        self.sets_at[level].add(s)

    def set_extra(self, s: int, extra: float) -> None:
        self.weight[s] += extra - self.extra[s]
        self.extra[s] = extra

    def add_element(self, h: int, sets, level: int, weight: float, status: str) -> None:
        self.elem_level[h] = level
        self.elem_weight[h] = weight
        self.elem_status[h] = status
        self.elems_at[level].add(h)
        if status == ACTIVE:
            self.active_at[level] += 1
        else:
            self.stale_at[level] += 1
        for s in sets:
            tally = self.tally[s]
            tally[level] = tally.get(level, 0.0) + weight
            self.weight[s] += weight

    def kill(self, h: int) -> None:
        if self.elem_status[h] == ACTIVE:
            lvl = self.elem_level[h]
            self.active_at[lvl] -= 1
            self.stale_at[lvl] += 1
        self.elem_status[h] = DEAD

    def delta(self, s: int, k: int) -> float:
        """Weight ``s`` receives from outside the window ``0..k``."""
        return self.extra[s] + sum(w for lvl, w in self.tally[s].items() if lvl > k)

    def prefix_counts(self) -> tuple[list[int], list[int]]:
        active, stale = [], []
        a = p = 0
        for lvl in range(self.top + 1):
            a += self.active_at[lvl]
            p += self.stale_at[lvl]
            active.append(a)
            stale.append(p)
        return active, stale

    def window_counts(self, k: int) -> tuple[int, int]:
        k = min(k, self.top)
        return sum(self.active_at[: k + 1]), sum(self.stale_at[: k + 1])


@dataclass
class LocalView:
    """Read-only window ``0..k`` of a shared hierarchy."""

    k: int
    hierarchy: Hierarchy

    def sets(self) -> dict[int, int]:
        return {s: lvl for s, lvl in self.hierarchy.set_level.items() if lvl <= self.k}

    def elements(self) -> dict[int, tuple[int, float, str]]:
        h = self.hierarchy
        return {
            e: (lvl, h.elem_weight[e], h.elem_status[e])
            for e, lvl in h.elem_level.items()
            if lvl <= self.k
        }

    def delta(self, s: int) -> float:
        return self.hierarchy.delta(s, self.k)

    def weight(self, s: int) -> float:
        return self.hierarchy.weight[s]

    def counts(self) -> tuple[int, int]:
        return self.hierarchy.window_counts(self.k)


def check_trigger(active: int, stale: int, epsilon: float, idle: bool = True) -> bool:
    """Rebuild trigger: stale (passive or dead) elements reach an eps share."""
    return idle and stale >= 1 and ge(stale, epsilon * active)


# --- scheduler -----------------------------------------------------------------

COPY_SETS, COPY_ELEMENTS, IDENTIFY, DESCEND, RECAP, DRAIN, DONE = (
    "copy_sets", "copy_elements", "identify", "descend", "recap", "drain", "done",
)


class Scheduler:
    """Resumable rebuild of view ``k`` into a fresh hierarchy over levels ``0..k+1``."""

    def __init__(self, engine: WorstCaseEngine, k: int, source: Hierarchy, strategy: str | None = None):
        self.engine = engine
        self.k = k
        self.strategy = strategy or engine.strategy
        self.multiplier = k + 1
        self.source = source
        eff = self.strategy == EFFICIENT
        self.ws = RebuildWorkspace(engine.epsilon, k + 1, inclusive=eff, track_targets=eff)
        self.members = {s for s, lvl in source.set_level.items() if lvl <= k}
        self._set_queue = sorted(self.members)
        stale = []
        active = []
        status = source.elem_status
        for h, lvl in source.elem_level.items():
            if lvl <= k:
                if status[h] == ACTIVE:
                    active.append(h)
                elif status[h] == PASSIVE:
                    stale.append(h)
        active.sort()
        stale.sort()
        self._elem_queue = deque(active + stale)
        self.uncopied = set(self._elem_queue)
        self.phase = COPY_SETS
        self.round = k + 1
        self._cursor: deque = deque()
        self._settle_queue: deque = deque()
        # Undecided sets that committed passive elements were attached to.
        self.anchored: set[int] = set()
        self.consumed = 0
        self.total_work = 0
        self.steps = 0
        self.started_at = engine.updates

    # -- accounting ----------------------------------------------------------

    def _charge(self, units: int) -> None:
        cost = units * self.multiplier
        self.consumed += cost
        self.total_work += cost

    def _ws_call(self, fn, *args, **kwargs):
        before = self.ws.work
        out = fn(*args, **kwargs)
        self._charge(self.ws.work - before)
        return out

    # -- copying -----------------------------------------------------------------

    def _copy_set(self, s: int) -> None:
        if s in self.ws.cost:
            return
        self._ws_call(self.ws.add_set, s, self.engine.cost[s], self.source.delta(s, self.k))

    def _copy_element(self, h: int) -> None:
        sets = self.engine.elem_sets[h]
        for s in sets:
            self._copy_set(s)
        units = 1.0
        if self.source.elem_status[h] == PASSIVE:
            gap = min(self.engine.cost[s] - self.ws.weight_star(s) for s in sets)
            units = max(0.0, min(1.0, gap / self.ws.q[self.k + 1]))
        self._ws_call(self.ws.add_pending, h, sets, units)

    # -- stepping ----------------------------------------------------------------

    def run(self, budget: int) -> None:
        max_step = (self.engine.f + 2) * self.multiplier
        while self.phase != DONE:
            if self.consumed > 0 and self.consumed + max_step > budget:
                break
            self.step()

    def step(self) -> str:
        """Advance by one elementary step and return the resulting phase."""
        self.steps += 1
        if self._settle_queue:
            e, level = self._settle_queue.popleft()
            if self.ws.is_pending(e):
                self._ws_call(self.ws.settle_element, e, level)
            else:
                self._charge(1)
            return self.phase
        phase = self.phase
        if phase == COPY_SETS:
            if self._set_queue:
                self._copy_set_step(self._set_queue.pop())
            else:
                self.phase = COPY_ELEMENTS
        elif phase == COPY_ELEMENTS:
            if self._elem_queue:
                h = self._elem_queue.popleft()
                if h in self.uncopied:
                    self.uncopied.discard(h)
                    self._copy_element(h)
                else:
                    self._charge(1)
            else:
                self._start_identify()
        elif phase == IDENTIFY:
            self._identify_step()
        elif phase == DESCEND:
            self._descend_step()
        elif phase == RECAP:
            s = self.ws.pop_bucket(self.k + 1)
            if s is None:
                self.phase = DRAIN
            else:
                self._charge(1)
                self._ws_call(self.ws.retarget, s)
        elif phase == DRAIN:
            self._drain_step()
        return self.phase

    def _copy_set_step(self, s: int) -> None:
        if s in self.ws.cost:
            self._charge(1)
        else:
            self._copy_set(s)

    def _start_identify(self) -> None:
        self.phase = IDENTIFY
        self._cursor = deque(self.ws.undecided_sets())
        self._charge(1)

    def _settle(self, s: int, level: int) -> None:
        pending = self._ws_call(self.ws.begin_settle, s, level)
        self._settle_queue.extend((e, level) for e in pending)

    def _identify_step(self) -> None:
        if self._cursor:
            s = self._cursor.popleft()
            self._charge(1)
            if not self.ws.is_undecided(s):
                return
            if self.round == 0 or self.ws.tight_now(s):
                self._settle(s, self.round)
            return
        # Round finished.
        if self.round == 0:
            self.phase = DONE
        elif self.strategy == SIMPLE:
            self.phase = DESCEND
            self.round -= 1
            self._ws_call(self.ws.lower_round, self.round)
            self._cursor = deque(sorted(e for e in self.ws.elem_sets if self.ws.is_pending(e)))
            self._charge(1)
        else:
            self.round = self.k
            self.ws.round = self.k
            self.phase = RECAP
            self._charge(1)

    def _descend_step(self) -> None:
        if self._cursor:
            e = self._cursor.popleft()
            # Pending weights are held relative to the round weight, so the
            # rescale by (1+eps) is implicit; only its cost is paid here.
            self._charge(1 + len(self.ws.elem_sets[e]) if self.ws.is_pending(e) else 1)
            return
        self.phase = IDENTIFY
        self._cursor = deque(self.ws.undecided_sets())
        self._charge(1)

    def _drain_step(self) -> None:
        i = self.ws.round
        s = self.ws.pop_bucket(i)
        if s is not None:
            self._settle(s, i)
            return
        self._charge(1)
        if i == 0:
            self.phase = DONE
        else:
            self.ws.round = i - 1
            self.round = i - 1

    # -- committing live updates ---------------------------------------------------

    def commit(self, update: Update, h: int) -> None:
        """Route an update that arrived while this rebuild is in flight."""
        ws = self.ws
        sets = self.engine.elem_sets[h]
        self._charge(1 + len(sets))
        if update.op == "delete":
            if h in self.uncopied:
                self.uncopied.discard(h)
            elif ws.is_pending(h):
                settled = [ws.level[s] for s in sets if s in ws.level]
                if settled:
                    # Its set already counts on this weight: settle, then kill.
                    level = max(settled)
                    self._ws_call(ws.settle_element, h, level)
                    self._ws_call(ws.mark_dead, h)
                elif any(s in self.anchored for s in sets):
                    # Removing it could lower a target that a committed
                    # passive element relies on; keep it as dead weight.
                    self._ws_call(ws.mark_dead, h)
                else:
                    self._ws_call(ws.remove_pending, h)
            elif h in ws.elem_sets:
                self._ws_call(ws.mark_dead, h)
            return
        if not all(s in self.members for s in sets):
            return
        for s in sets:
            self._copy_set(s)
        settled = [ws.level[s] for s in sets if s in ws.level]
        if settled:
            level = max(settled)
            self._ws_call(ws.add_settled, h, sets, level, self._passive_weight(sets, level), PASSIVE)
            return
        if self.phase in (COPY_SETS, COPY_ELEMENTS) or self.round == self.k + 1:
            self._commit_top(h, sets)
        elif self.strategy == SIMPLE:
            self._commit_simple(h, sets)
        else:
            self._commit_efficient(h, sets)

    def _projected_load(self, s: int) -> float:
        """Weight of ``s`` once its pending elements settle at the level in force."""
        ws = self.ws
        level = ws.level.get(s, ws.round)
        return ws.settled_weight[s] + ws.pending_units[s] * ws.q[level]

    def _passive_weight(self, sets, level: int) -> float:
        if level > 0:
            return 0.0
        return max(0.0, min(self.engine.cost[s] - self._projected_load(s) for s in sets))

    def _commit_top(self, h: int, sets) -> None:
        ws = self.ws
        q_top = ws.q[self.k + 1]
        gap = min(self.engine.cost[s] - ws.weight_star(s) for s in sets)
        units = max(0.0, min(1.0, gap / q_top))
        self._ws_call(ws.add_pending, h, sets, units)
        if self.phase == IDENTIFY:
            # Sets scanned earlier this round may have just turned tight.
            attains = ge if ws.inclusive else gt
            if any(ws.is_undecided(s) and attains(ws.weight_star(s), ws.threshold(s)) for s in sets):
                self._settle_tight(h, sets, self.k + 1, inclusive=ws.inclusive)

    def _commit_simple(self, h: int, sets) -> None:
        ws = self.ws
        r = self.round
        q = ws.q[r]
        cost = self.engine.cost
        gap = min(cost[s] - ws.weight_star(s) for s in sets)
        units = max(0.0, min(1.0, gap / q))
        self._ws_call(ws.add_pending, h, sets, units)
        if units < 1.0:
            self._settle_tight(h, sets, r)

    def _settle_tight(self, h: int, sets, level: int, inclusive: bool = False) -> None:
        ws = self.ws
        attains = ge if inclusive else gt
        for s in sets:
            if ws.is_undecided(s) and attains(ws.weight_star(s), ws.threshold(s)):
                self._settle(s, level)
        if ws.is_pending(h):
            # Settle right away so later projections see its true contribution.
            self._ws_call(ws.settle_element, h, level)

    def _commit_efficient(self, h: int, sets) -> None:
        ws = self.ws
        i = ws.round
        eps = ws.epsilon
        cost = self.engine.cost
        q_next = ws.q[i + 1]
        exceeds = any(
            ge(ws.settled_weight[s] + (ws.pending_units[s] + 1) * q_next, ws.threshold(s)) for s in sets
        )
        if not exceeds:
            self._ws_call(ws.add_pending, h, sets)
            return
        self.anchored.update(sets)
        if i == 0 or any(ws.target.get(s) == i for s in sets):
            self._ws_call(ws.add_settled, h, sets, i, self._passive_weight(sets, i), PASSIVE)
            return
        q = ws.q[i]
        gap = min(cost[s] / (1 + eps) - ws.settled_weight[s] - ws.pending_units[s] * q for s in sets)
        self._ws_call(ws.add_settled, h, sets, i, max(0.0, gap), PASSIVE)

    # -- results -------------------------------------------------------------------

    def stale_fraction_ok(self) -> tuple[bool, list[int]]:
        """Completion check: stale elements stay below an eps share at every prefix."""
        ws = self.ws
        top = self.k + 1
        active = [0] * (top + 1)
        stale = [0] * (top + 1)
        for e, lvl in ws.elem_level.items():
            if ws.elem_status[e] == ACTIVE:
                active[lvl] += 1
            else:
                stale[lvl] += 1
        bad = []
        a = p = 0
        for i in range(self.k + 1):
            a += active[i]
            p += stale[i]
            if p > 0 and not p < ws.epsilon * a:
                bad.append(i)
        return not bad, bad

    def target_bound_holds(self) -> tuple[bool, list[int]]:
        """Every undecided set's target level is current and at most the round.

        Until re-capping finishes, the round in force is still ``k+1``.
        """
        if self.strategy != EFFICIENT or self.phase == DONE:
            return True, []
        ws = self.ws
        bound = ws.round if self.phase == DRAIN else self.k + 1
        bad = []
        for s in ws.undecided_sets():
            t = ws.target.get(s)
            if t is None or t > bound or (t <= ws.round and t != ws.compute_target(s)):
                bad.append(s)
        return not bad, bad


# --- engine -----------------------------------------------------------------------


@dataclass
class ConsistentHierarchy:
    set_level: dict[int, int] = field(default_factory=dict)
    element_level: dict[int, int] = field(default_factory=dict)
    element_weight: dict[int, float] = field(default_factory=dict)
    element_status: dict[int, str] = field(default_factory=dict)
    duplicates: list[int] = field(default_factory=list)

    def set_weights(self, elem_sets) -> dict[int, float]:
        out = {s: 0.0 for s in self.set_level}
        for e, w in self.element_weight.items():
            for s in elem_sets[e]:
                if s in out:
                    out[s] += w
        return out


@dataclass
class CompletionRecord:
    k: int
    update_index: int
    started_at: int
    work: int
    stale_ok: bool
    stale_levels: list[int]
    universe: int


class WorstCaseEngine:
    def __init__(
        self,
        instance: Instance,
        epsilon: float | None = None,
        *,
        strategy: str = EFFICIENT,
        budget_constant: float = 20.0,
        budget: int | None = None,
    ):
        if strategy not in (SIMPLE, EFFICIENT):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.instance = instance
        self.epsilon = instance.epsilon if epsilon is None else epsilon
        self.strategy = strategy
        self.f = instance.f
        self.top = level_cap(instance.C, instance.n, self.epsilon)
        self.q = weight_table(self.top + 2, self.epsilon)
        self.cost = list(instance.costs)
        L = self.top
        exponent = L if strategy == EFFICIENT else L * L
        self.budget = budget if budget is not None else math.ceil(
            budget_constant * self.f * exponent / self.epsilon
        )

        self.elem_sets: dict[int, tuple[int, ...]] = {}
        self.handle_of: dict[str, int] = {}
        self.name_of: dict[int, str] = {}
        self.updates = 0
        self.work = 0
        self.last_update_work = 0
        self.max_update_work = 0
        self.completions: list[CompletionRecord] = []
        self.max_concurrent = 0

        snap = build_static(instance, self.epsilon)
        base = Hierarchy(L)
        idx = instance.set_index
        for sid, lvl in snap.set_levels.items():
            base.add_set(idx[sid], lvl, 0.0)
        for h, (eid, sets) in enumerate(zip(instance.element_ids, instance.memberships)):
            self.elem_sets[h] = sets
            self.handle_of[eid] = h
            self.name_of[h] = eid
            base.add_element(h, sets, snap.element_levels[eid], snap.element_weights[eid], ACTIVE)
        self._next_handle = len(instance.element_ids)
        self.preprocessing_work = snap.work
        self.views: list[Hierarchy | None] = [None] + [base] * L
        self.schedulers: dict[int, Scheduler] = {}
        self.total_cost = sum(self.cost)
        self._recompute_slack()

    # -- views -----------------------------------------------------------------------

    def view(self, k: int) -> LocalView:
        return LocalView(k, self.views[k])

    def view_groups(self) -> list[tuple[Hierarchy, int, int]]:
        """Distinct hierarchies with the lowest and highest view index using each."""
        groups: list[tuple[Hierarchy, int, int]] = []
        for k in range(1, self.top + 1):
            H = self.views[k]
            if groups and groups[-1][0] is H:
                groups[-1] = (H, groups[-1][1], k)
            else:
                groups.append((H, k, k))
        return groups

    # -- query ----------------------------------------------------------------------

    def _is_slack0(self, H: Hierarchy, s: int) -> bool:
        return not gt(H.weight[s], self.cost[s] / (1 + self.epsilon))

    def _recompute_slack(self) -> None:
        H = self.views[1]
        self._slack0 = {s for s in H.sets_at[0] if self._is_slack0(H, s)}
        self._slack_cost = sum(self.cost[s] for s in self._slack0)

    def query_value(self) -> float:
        return self.total_cost - self._slack_cost

    cover_value = property(query_value)

    def export_cover(self) -> list[str]:
        ids = self.instance.set_ids
        return sorted(ids[s] for s in range(len(ids)) if s not in self._slack0)

    def live_elements(self) -> dict[str, tuple[str, ...]]:
        ids = self.instance.set_ids
        return {name: tuple(ids[s] for s in self.elem_sets[h]) for name, h in self.handle_of.items()}

    # -- updates -------------------------------------------------------------------

    def apply_update(self, update: Update) -> float:
        work_before = self.work
        if update.op == "insert":
            if update.element in self.handle_of:
                raise DuplicateElement(f"element {update.element!r} is already present")
            sets = resolve_update_sets(self.instance, update)
            if len(self.handle_of) >= self.instance.n:
                raise CapacityExceeded(f"more than n = {self.instance.n} live elements")
            h = self._next_handle
            self._next_handle += 1
            self.elem_sets[h] = sets
            self.handle_of[update.element] = h
            self.name_of[h] = update.element
        elif update.op == "delete":
            try:
                h = self.handle_of.pop(update.element)
            except KeyError:
                raise MissingElement(f"element {update.element!r} is not present") from None
        else:
            raise ValueError(f"unknown update op {update.op!r}")
        self.updates += 1

        for H, lo, hi in self.view_groups():
            self.work += (hi - lo + 1) * (len(self.elem_sets[h]) + 1)
            self.local_view_apply(H, update, h)

        for sch in list(self.schedulers.values()):
            sch.consumed = 0
            sch.commit(update, h)
            self.work += sch.consumed

        for H, lo, hi in self.view_groups():
            active, stale = H.prefix_counts()
            for k in range(lo, hi + 1):
                self.work += 1
                j = min(k, H.top)
                if check_trigger(active[j], stale[j], self.epsilon, k not in self.schedulers):
                    self.schedulers[k] = Scheduler(self, k, H)
        self.max_concurrent = max(self.max_concurrent, len(self.schedulers))

        for k in sorted(self.schedulers, reverse=True):
            sch = self.schedulers.get(k)
            if sch is None:
                continue
            already = sch.consumed
            sch.run(self.budget)
            self.work += sch.consumed - already
            if sch.phase == DONE:
                self.synchronize(k)

        self.last_update_work = self.work - work_before
        self.max_update_work = max(self.max_update_work, self.last_update_work)
        return self.query_value()

    def local_view_apply(self, H: Hierarchy, update: Update, h: int) -> None:
        if update.op == "delete":
            if h in H.elem_level:
                H.kill(h)
            return
        sets = self.elem_sets[h]
        levels = [H.set_level.get(s) for s in sets]
        if any(lvl is None for lvl in levels):
            return
        level = max(levels)
        weight = 0.0
        if level == 0:
            weight = max(0.0, min(self.cost[s] - H.weight[s] for s in sets))
        H.add_element(h, sets, level, weight, PASSIVE)
        if level == 0 and H is self.views[1]:
            for s in sets:
                if s in self._slack0 and not self._is_slack0(H, s):
                    self._slack0.discard(s)
                    self._slack_cost -= self.cost[s]
            if not self._slack0:
                self._slack_cost = 0.0

    # -- synchronisation ---------------------------------------------------------------

    def synchronize(self, k: int) -> None:
        sch = self.schedulers.pop(k)
        ws = sch.ws
        ok, bad_levels = sch.stale_fraction_ok()
        self.completions.append(CompletionRecord(
            k, self.updates, sch.started_at, sch.total_work, ok, bad_levels, len(ws.elem_level),
        ))
        fresh = Hierarchy(k + 1)
        for s in sorted(ws.cost):
            fresh.add_set(s, ws.level[s], ws.extra[s])
        for e in sorted(ws.elem_level):
            fresh.add_element(e, ws.elem_sets[e], ws.elem_level[e], ws.elem_weight[e], ws.elem_status[e])
        if k + 1 <= self.top:
            old = self.views[k + 1]
            if k + 1 <= old.top:
                for s in sorted(old.sets_at[k + 1]):
                    if s not in fresh.set_level:
                        fresh.add_set(s, k + 1, 0.0)
                for e in sorted(old.elems_at[k + 1]):
                    if e not in fresh.elem_level:
                        fresh.add_element(e, self.elem_sets[e], k + 1, old.elem_weight[e], old.elem_status[e])
            for s in fresh.set_level:
                if s in old.set_level:
                    fresh.set_extra(s, old.delta(s, k + 1))
        for i in range(1, min(k + 1, self.top) + 1):
            self.views[i] = fresh
        for j in [j for j in self.schedulers if j < k]:
            del self.schedulers[j]
        self.work += k + 1
        self._recompute_slack()

    # -- inspection --------------------------------------------------------------------

    def consistent_hierarchy(self) -> ConsistentHierarchy:
        ch = ConsistentHierarchy()
        seen: set[int] = set()
        for i in range(0, self.top + 1):
            H = self.views[max(i, 1)]
            if i > H.top:
                continue
            for s in H.sets_at[i]:
                if s in ch.set_level:
                    ch.duplicates.append(s)
                ch.set_level[s] = i
            for e in H.elems_at[i]:
                if e in seen:
                    ch.duplicates.append(e)
                seen.add(e)
                ch.element_level[e] = i
                ch.element_weight[e] = H.elem_weight[e]
                ch.element_status[e] = H.elem_status[e]
        return ch

    def snapshot(self) -> dict:
        """Canonical JSON-ready state (views, schedulers, counters)."""
        ids = self.instance.set_ids
        groups = []
        for H, lo, hi in self.view_groups():
            groups.append({
                "views": [lo, hi],
                "top": H.top,
                "sets": {ids[s]: [H.set_level[s], H.extra[s], H.weight[s]] for s in sorted(H.set_level)},
                "elements": {
                    str(e): [H.elem_level[e], H.elem_weight[e], H.elem_status[e]] for e in sorted(H.elem_level)
                },
            })
        schedulers = {
            str(k): {
                "phase": s.phase,
                "round": s.round,
                "levels": {ids[x]: lvl for x, lvl in sorted(s.ws.level.items())},
                "pending": sorted(e for e in s.ws.elem_sets if s.ws.is_pending(e)),
                "work": s.total_work,
            }
            for k, s in sorted(self.schedulers.items())
        }
        return {
            "groups": groups,
            "schedulers": schedulers,
            "cover": self.query_value(),
            "work": self.work,
            "updates": self.updates,
        }
