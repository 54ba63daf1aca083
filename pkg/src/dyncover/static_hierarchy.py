"""Static level construction and the target-level descent shared by rebuilds.

A descent starts with every set *undecided* and every element *pending* at a
cap level.  Rounds run from the cap down to 0.  In round ``i`` a set settles
once it would be tight with its pending elements placed at level ``i``; its
pending elements settle with it.  Instead of re-weighting every pending
element each round, each undecided set keeps a *target level*, the highest
round at which it would turn tight, and waits in the bucket for that level.
"""

from __future__ import annotations

import heapq
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .core import (
    ContractViolation,
    Instance,
    ge,
    gt,
    level_cap,
    weight_table,
)

ACTIVE, PASSIVE, DEAD = "A", "P", "D"


def target_from_base(
    base: float,
    count: float,
    cost: float,
    epsilon: float,
    cap: int,
    *,
    inclusive: bool = False,
    powers: Sequence[float] | None = None,
) -> int:
    """Highest ``i <= cap`` with ``base + count * (1+eps)^-i`` tight.

    ``base`` is the weight a set already has from decided elements (plus any
    weight from above the workspace); ``count`` is the number of its pending
    elements, fractional when some of them are reduced-weight stand-ins.
    With ``inclusive`` the tightness test accepts equality.  Returns 0 when no
    level qualifies.
    """
    threshold = cost / (1.0 + epsilon)
    attains = ge if inclusive else gt

    def value(i: int) -> float:
        q = powers[i] if powers is not None else (1.0 + epsilon) ** (-i)
        return base + count * q

    if count == 0:
        return cap if attains(base, threshold) else 0
    if attains(value(cap), threshold):
        return cap
    if cap == 0 or not attains(value(0), threshold):
        return 0
    # value(0) attains, value(cap) does not: the answer lies in [0, cap-1].
    ratio = (threshold - base) / count
    guess = math.ceil(math.log(1.0 / ratio) / math.log1p(epsilon)) - 1
    guess = min(max(guess, 0), cap - 1)
    while guess + 1 < cap and attains(value(guess + 1), threshold):
        guess += 1
    while guess > 0 and not attains(value(guess), threshold):
        guess -= 1
    return guess


def target_level(
    weight_star: float,
    cost: float,
    slack_count: int,
    epsilon: float,
    top: int,
    cap: int | None = None,
    *,
    inclusive: bool = False,
) -> int:
    """Target level of an undecided set whose pending members sit at ``top``.

    ``weight_star`` counts each pending member at weight ``(1+eps)^-top``.
    ``cap`` defaults to ``top`` and models the current round.
    """
    base = weight_star - slack_count * (1.0 + epsilon) ** (-top)
    return target_from_base(
        base, slack_count, cost, epsilon, top if cap is None else cap, inclusive=inclusive
    )


class RebuildWorkspace:
    """Mutable state of one descent from ``cap_level`` down to level 0.

    A pending element is held as *units*: the fraction of a canonical element
    it stands for.  At round ``i`` it weighs ``units * (1+eps)^-i``, so a
    whole round of re-weighting is implicit in the round counter.  Set and
    element keys are opaque hashables; ties among sets sharing a target level
    are broken by ascending key.  Every mutation charges work units to
    ``work``.
    """

    def __init__(self, epsilon: float, cap_level: int, *, inclusive: bool = False,
                 track_targets: bool = True):
        self.epsilon = epsilon
        self.cap_level = cap_level
        self.round = cap_level
        self.inclusive = inclusive
        self.track_targets = track_targets
        self.q = weight_table(cap_level + 1, epsilon)
        self.work = 0

        self.cost: dict = {}
        self.extra: dict = {}
        self.settled_weight: dict = {}
        self.pending_units: dict = {}
        self.pending: dict = {}
        self.level: dict = {}
        self.target: dict = {}
        self.gamma: dict[int, list] = {}
        self.gamma_size = [0] * (cap_level + 1)

        self.elem_sets: dict = {}
        self.elem_units: dict = {}
        self.elem_weight: dict = {}
        self.elem_level: dict = {}
        self.elem_status: dict = {}

    # -- queries ----------------------------------------------------------

    def is_undecided(self, s) -> bool:
        return s in self.cost and s not in self.level

    def is_pending(self, e) -> bool:
        return e in self.elem_sets and e not in self.elem_level

    def weight_star(self, s) -> float:
        return self.settled_weight[s] + self.pending_units[s] * self.q[self.round]

    def pending_weight_of(self, e) -> float:
        return self.elem_units[e] * self.q[self.round]

    def threshold(self, s) -> float:
        return self.cost[s] / (1.0 + self.epsilon)

    def tight_now(self, s) -> bool:
        attains = ge if self.inclusive else gt
        return attains(self.weight_star(s), self.threshold(s))

    def compute_target(self, s) -> int:
        return target_from_base(
            self.settled_weight[s], self.pending_units[s], self.cost[s], self.epsilon,
            self.round, inclusive=self.inclusive, powers=self.q,
        )

    def undecided_sets(self) -> list:
        return sorted(s for s in self.cost if s not in self.level)

    def bucket_nonempty(self, i: int) -> bool:
        return self.gamma_size[i] > 0

    # -- target bookkeeping -------------------------------------------------

    def retarget(self, s) -> None:
        if not self.track_targets or s in self.level:
            return
        new = self.compute_target(s)
        old = self.target.get(s)
        if old == new:
            return
        if old is not None:
            self.gamma_size[old] -= 1
        self.gamma_size[new] += 1
        self.target[s] = new
        heapq.heappush(self.gamma.setdefault(new, []), s)

    def _drop_target(self, s) -> None:
        old = self.target.pop(s, None)
        if old is not None:
            self.gamma_size[old] -= 1

    def pop_bucket(self, i: int):
        """Smallest undecided set whose target is ``i``, or None."""
        heap = self.gamma.get(i, ())
        while heap:
            s = heapq.heappop(heap)
            if s not in self.level and self.target.get(s) == i:
                return s
        return None

    def lower_round(self, new_round: int) -> None:
        """Move to a lower round, re-capping targets above it."""
        old_round, self.round = self.round, new_round
        self.work += 1
        if not self.track_targets:
            return
        for i in range(new_round + 1, old_round + 1):
            while self.gamma_size[i]:
                s = self.pop_bucket(i)
                self.work += 1
                self.retarget(s)

    # -- construction -------------------------------------------------------

    def add_set(self, s, cost: float, extra: float = 0.0) -> None:
        self.cost[s] = cost
        self.extra[s] = extra
        self.settled_weight[s] = extra
        self.pending_units[s] = 0.0
        self.pending[s] = set()
        self.work += 1
        self.retarget(s)

    def add_pending(self, e, sets: Iterable, units: float = 1.0, status: str | None = None) -> None:
        """Add an undecided element worth ``units`` canonical elements."""
        sets = tuple(sets)
        self.elem_sets[e] = sets
        self.elem_units[e] = units
        self.elem_status[e] = status or (ACTIVE if units >= 1.0 else PASSIVE)
        for s in sets:
            self.pending[s].add(e)
            self.pending_units[s] += units
            self.retarget(s)
        self.work += 1 + len(sets)

    def add_settled(self, e, sets: Iterable, level: int, weight: float, status: str) -> None:
        sets = tuple(sets)
        self.elem_sets[e] = sets
        self.elem_weight[e] = weight
        self.elem_status[e] = status
        self.elem_level[e] = level
        for s in sets:
            self.settled_weight[s] += weight
            self.retarget(s)
        self.work += 1 + len(sets)

    # -- mutation -----------------------------------------------------------

    def remove_pending(self, e) -> None:
        units = self.elem_units.pop(e)
        sets = self.elem_sets.pop(e)
        del self.elem_status[e]
        for s in sets:
            self.pending[s].discard(e)
            self.pending_units[s] -= units
            self.retarget(s)
        self.work += 1 + len(sets)

    def mark_dead(self, e) -> None:
        self.elem_status[e] = DEAD
        self.work += 1

    def begin_settle(self, s, level: int) -> list:
        """Fix ``s`` at ``level``; returns its pending elements, sorted."""
        self.level[s] = level
        self._drop_target(s)
        self.work += 1
        return sorted(self.pending[s])

    def settle_element(self, e, level: int) -> None:
        """Decide a pending element at ``level`` with weight ``units * (1+eps)^-level``.

        A reduced live element landing at level 0 is topped up to the smallest
        remaining gap among its sets, so one of them covers it.
        """
        units = self.elem_units[e]
        weight = units * self.q[level]
        if level == 0 and units < 1.0 and self.elem_status[e] == PASSIVE:
            gap = min(self.cost[s] - self.weight_star(s) for s in self.elem_sets[e]) + weight
            weight = max(weight, min(1.0, gap))
        del self.elem_units[e]
        self.elem_weight[e] = weight
        self.elem_level[e] = level
        sets = self.elem_sets[e]
        for s in sets:
            self.pending[s].discard(e)
            self.pending_units[s] -= units
            self.settled_weight[s] += weight
            self.retarget(s)
        self.work += 1 + len(sets)

    def settle_set(self, s, level: int) -> None:
        for e in self.begin_settle(s, level):
            if self.is_pending(e):
                self.settle_element(e, level)

    # -- full descent -------------------------------------------------------

    def step(self) -> bool:
        """One elementary step of the target-level drain; False once finished."""
        i = self.round
        s = self.pop_bucket(i)
        if s is not None:
            self.settle_set(s, i)
            return True
        if i == 0:
            return False
        self.lower_round(i - 1)
        return True

    def run(self) -> None:
        while self.step():
            pass

    def set_weights(self) -> dict:
        return {s: self.weight_star(s) for s in self.cost}


@dataclass
class HierarchySnapshot:
    set_levels: dict[str, int]
    element_levels: dict[str, int]
    element_weights: dict[str, float]
    tight_sets: frozenset[str]
    set_weights: dict[str, float] = field(default_factory=dict)
    top_level: int = 0
    work: int = 0


def build_static(instance: Instance, epsilon: float | None = None) -> HierarchySnapshot:
    """Primal-dual hierarchy of the instance's initial elements."""
    eps = instance.epsilon if epsilon is None else epsilon
    top = level_cap(instance.C, instance.n, eps)
    ws = RebuildWorkspace(eps, top)
    for s, cost in enumerate(instance.costs):
        ws.add_set(s, cost)
    for e, sets in enumerate(instance.memberships):
        ws.add_pending(e, sets)
    ws.run()
    weights = ws.set_weights()
    sid = instance.set_ids
    eid = instance.element_ids
    return HierarchySnapshot(
        set_levels={sid[s]: ws.level[s] for s in range(instance.m)},
        element_levels={eid[e]: ws.elem_level[e] for e in range(len(eid))},
        element_weights={eid[e]: ws.elem_weight[e] for e in range(len(eid))},
        tight_sets=frozenset(
            sid[s] for s in range(instance.m) if gt(weights[s], ws.threshold(s))
        ),
        set_weights={sid[s]: weights[s] for s in range(instance.m)},
        top_level=top,
        work=ws.work,
    )


@dataclass
class FixLevelResult:
    set_levels: dict
    element_levels: dict
    element_weights: dict
    set_weights: dict
    work: int


def fix_level(
    k_prime: int,
    slack_sets: Mapping,
    slack_elements: Mapping,
    epsilon: float,
) -> FixLevelResult:
    """Settle slack sets and elements currently parked at ``k_prime``.

    ``slack_sets`` maps a set to ``(cost, weight)``, the weight measured with
    every slack element at level ``k_prime``.  ``slack_elements`` maps an
    element to the slack sets containing it (all of its sets).  Afterwards
    every set has weight below its cost, and sets above level 0 are tight.
    """
    ws = RebuildWorkspace(epsilon, k_prime)
    q_top = ws.q[k_prime]
    counts: dict = {s: 0 for s in slack_sets}
    for sets in slack_elements.values():
        for s in sets:
            counts[s] += 1
    for s, (cost, weight) in sorted(slack_sets.items()):
        if ge(weight, cost):
            raise ContractViolation(f"set {s!r} enters fix_level with weight {weight!r} >= cost {cost!r}")
        ws.add_set(s, cost, extra=weight - counts[s] * q_top)
    for e, sets in slack_elements.items():
        ws.add_pending(e, sets)
    ws.run()
    return FixLevelResult(
        set_levels=dict(ws.level),
        element_levels=dict(ws.elem_level),
        element_weights=dict(ws.elem_weight),
        set_weights=ws.set_weights(),
        work=ws.work,
    )
