"""Exact oracle, certificate checks and from-scratch audits of engine state."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .core import DynCoverError, TOLERANCE, gt, lt

MAX_ORACLE_SETS = 24


class TooLarge(DynCoverError, ValueError):
    pass


class Infeasible(DynCoverError, ValueError):
    pass


# --- exact minimum cover ----------------------------------------------------


def _minimal_patterns(costs: Mapping[str, float], elements: Mapping[str, Iterable[str]]) -> list[frozenset]:
    patterns = set()
    for e, sets in elements.items():
        usable = frozenset(s for s in sets if s in costs)
        if not usable:
            raise Infeasible(f"element {e!r} belongs to no available set")
        patterns.add(usable)
    # Covering a pattern covers every superset of it.
    kept: list[frozenset] = []
    for p in sorted(patterns, key=len):
        if not any(q <= p for q in kept):
            kept.append(p)
    return kept


_cover_cache: dict = {}


def exact_min_cover(costs: Mapping[str, float], elements: Mapping[str, Iterable[str]]) -> tuple[float, list[str]]:
    """Minimum-cost cover of ``elements`` (id -> containing set ids) by branch and bound."""
    if len(costs) > MAX_ORACLE_SETS:
        raise TooLarge(f"{len(costs)} sets exceed the oracle limit of {MAX_ORACLE_SETS}")
    patterns = _minimal_patterns(costs, elements)
    if not patterns:
        return 0.0, []
    key = (tuple(sorted(costs.items())), frozenset(patterns))
    hit = _cover_cache.get(key)
    if hit is not None:
        return hit[0], list(hit[1])

    names = sorted({s for p in patterns for s in p})
    price = [costs[s] for s in names]
    pos = {s: j for j, s in enumerate(names)}
    covers = [0] * len(names)
    for i, p in enumerate(patterns):
        for s in p:
            covers[pos[s]] |= 1 << i
    candidates = [
        sorted((pos[s] for s in p), key=lambda j: (-covers[j].bit_count() / price[j], j))
        for p in patterns
    ]
    cheapest = [min(price[j] for j in cand) for cand in candidates]
    full = (1 << len(patterns)) - 1

    def lower_bound(uncovered: int) -> float:
        single = 0.0
        spread = 0.0
        bits = uncovered
        while bits:
            low = bits & -bits
            i = low.bit_length() - 1
            bits ^= low
            single = max(single, cheapest[i])
            spread += min(price[j] / (covers[j] & uncovered).bit_count() for j in candidates[i])
        return max(single, spread)

    # Greedy cover for an initial incumbent.
    uncovered, greedy_cost, greedy = full, 0.0, []
    while uncovered:
        j = max(range(len(names)), key=lambda j: ((covers[j] & uncovered).bit_count() / price[j], -j))
        greedy.append(j)
        greedy_cost += price[j]
        uncovered &= ~covers[j]
    best = [greedy_cost, greedy]
    seen: dict[int, float] = {}

    def search(uncovered: int, cost: float, chosen: list[int]) -> None:
        if not uncovered:
            if cost < best[0]:
                best[0], best[1] = cost, list(chosen)
            return
        if seen.get(uncovered, math.inf) <= cost:
            return
        seen[uncovered] = cost
        if cost + lower_bound(uncovered) >= best[0] * (1 - 1e-12):
            return
        bits, pick, fewest = uncovered, -1, math.inf
        while bits:
            low = bits & -bits
            i = low.bit_length() - 1
            bits ^= low
            if len(candidates[i]) < fewest:
                pick, fewest = i, len(candidates[i])
        for j in candidates[pick]:
            chosen.append(j)
            search(uncovered & ~covers[j], cost + price[j], chosen)
            chosen.pop()

    search(full, 0.0, [])
    result = (best[0], tuple(sorted(names[j] for j in best[1])))
    if len(_cover_cache) > 50_000:
        _cover_cache.clear()
    _cover_cache[key] = result
    return result[0], list(result[1])


# --- certificate checks -------------------------------------------------------


@dataclass
class Feasibility:
    ok: bool
    uncovered: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def check_feasibility(cover: Iterable[str], elements: Mapping[str, Iterable[str]]) -> Feasibility:
    chosen = set(cover)
    missing = sorted(e for e, sets in elements.items() if chosen.isdisjoint(sets))
    return Feasibility(not missing, missing)


@dataclass
class DualCheck:
    ok: bool
    overweight_sets: list[str] = field(default_factory=list)
    total_weight: float = 0.0
    opt: float | None = None

    def __bool__(self) -> bool:
        return self.ok


def check_primal_dual(
    set_costs: Mapping[str, float],
    set_weights: Mapping[str, float],
    epsilon: float,
    total_weight: float | None = None,
    opt: float | None = None,
) -> DualCheck:
    """Per-set packing bound ``w(s) <= (1+eps)c_s`` and, given OPT, ``w(U) <= (1+eps)OPT``.

    ``set_weights`` may include dead weight; the bound is checked on whatever
    is passed.
    """
    over = sorted(s for s, c in set_costs.items() if gt(set_weights.get(s, 0.0), (1 + epsilon) * c))
    ok = not over
    if opt is not None and total_weight is not None and gt(total_weight, (1 + epsilon) * opt):
        ok = False
    return DualCheck(ok, over, total_weight or 0.0, opt)


# --- audit reports ----------------------------------------------------------


@dataclass
class CheckOutcome:
    passed: bool = True
    offenders: list = field(default_factory=list)
    slack: float = math.inf

    def record(self, ok: bool, offender, margin: float) -> None:
        self.slack = min(self.slack, margin)
        if not ok:
            self.passed = False
            if len(self.offenders) < 20:
                self.offenders.append(offender)


@dataclass
class AuditReport:
    checks: dict[str, CheckOutcome] = field(default_factory=dict)
    feasible: bool | None = None
    uncovered: list = field(default_factory=list)
    dual_ok: bool | None = None
    ratio: float | None = None
    opt: float | None = None

    def check(self, name: str, ok: bool, offender=None, margin: float = math.inf) -> None:
        self.checks.setdefault(name, CheckOutcome()).record(ok, offender, margin)

    def touch(self, name: str) -> None:
        self.checks.setdefault(name, CheckOutcome())

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values()) and self.feasible is not False and self.dual_ok is not False

    def failures(self) -> list[str]:
        out = [f"{name}: {c.offenders}" for name, c in self.checks.items() if not c.passed]
        if self.feasible is False:
            out.append(f"feasibility: {self.uncovered}")
        if self.dual_ok is False:
            out.append("dual bound")
        return out


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 10 * TOLERANCE * max(1.0, abs(a), abs(b))


def attach_oracle(report: AuditReport, costs, elements, cover_cost: float, total_weight: float, epsilon: float) -> None:
    opt, _ = exact_min_cover(costs, elements)
    report.opt = opt
    report.ratio = cover_cost / opt if opt > 0 else (1.0 if cover_cost == 0 else math.inf)
    report.check("dual_vs_opt", not gt(total_weight, (1 + epsilon) * opt), None,
                 (1 + epsilon) * opt - total_weight)
    if report.dual_ok is not False:
        report.dual_ok = report.checks["dual_vs_opt"].passed


# --- amortized engine audit ---------------------------------------------------


def check_amortized_invariants(engine, *, oracle: bool = False) -> AuditReport:
    """Recompute the amortized engine's state from scratch and compare."""
    eng = engine
    eps, f, q = eng.epsilon, eng.f, eng.q
    ids = eng.instance.set_ids
    m = len(ids)
    rep = AuditReport()
    for name in ("inv1_bounded_weight", "inv2_tightness", "inv3_local_dead", "inv4_global_dead",
                 "base_level", "bounded_set_weight", "element_level", "weights", "aggregates"):
        rep.touch(name)

    weight = [0.0] * m
    members: list[dict[int, set[int]]] = [{} for _ in range(m)]
    elems_at: dict[int, set[int]] = {}
    for h, sets in eng.elem_sets.items():
        lvl = eng.elem_level[h]
        expect = max(eng.level[s] for s in sets)
        rep.check("element_level", lvl == expect, eng.name_of[h], 0.0)
        elems_at.setdefault(lvl, set()).add(h)
        for s in sets:
            weight[s] += q[lvl]
            members[s].setdefault(lvl, set()).add(h)

    tight = [False] * m
    phi_at: dict[int, float] = {}
    tight_at: dict[int, set[int]] = {}
    total_phi = total_cost = 0.0
    for s in range(m):
        sid, cost, lvl, dead = ids[s], eng.cost[s], eng.level[s], eng.dead[s]
        rep.check("weights", _close(weight[s], eng.weight[s]), sid, 0.0)
        rep.check("weights", {k: v for k, v in eng.members[s].items() if v} == members[s], sid, 0.0)
        w = weight[s]
        nxt = 0.0
        for e_lvl, els in members[s].items():
            for h in els:
                other = max((eng.level[t] for t in eng.elem_sets[h] if t != s), default=-1)
                nxt += q[max(lvl + 1, other)]
        rep.check("inv1_bounded_weight", not gt(nxt, cost), sid, cost - nxt)
        thr = cost / (1 + eps)
        is_tight = gt(w + dead, thr)
        tight[s] = is_tight
        if lvl >= 1:
            rep.check("inv2_tightness", not lt(w + dead, thr), sid, w + dead - thr)
        rep.check("inv3_local_dead", not (gt(w + dead, cost) and dead > TOLERANCE), sid, 0.0)
        rep.check("inv3_local_dead", dead >= 0.0 and (lvl > 0 or dead == 0.0), sid, dead)
        rep.check("bounded_set_weight", not gt(w + dead, (1 + eps) * cost), sid, (1 + eps) * cost - w - dead)
        low = min(members[s], default=eng.base[s])
        rep.check("base_level", low >= eng.base[s], sid, low - eng.base[s])
        phi_at[lvl] = phi_at.get(lvl, 0.0) + dead
        total_phi += dead
        if is_tight:
            tight_at.setdefault(lvl, set()).add(s)
            total_cost += cost

    total_weight = sum(q[eng.elem_level[h]] for h in eng.elem_sets)
    bound = eps * (total_cost + f * total_weight)
    rep.check("inv4_global_dead", not gt(total_phi, bound), None, bound - total_phi)

    agg = rep.checks["aggregates"]
    agg.record(_close(total_phi, eng.total_phi), "total_phi", 0.0)
    agg.record(_close(total_cost, eng.total_tight_cost), "total_tight_cost", 0.0)
    agg.record(_close(total_weight, eng.total_elem_weight), "total_elem_weight", 0.0)
    agg.record(eng.nonempty == sorted(tight_at), "nonempty_levels", 0.0)
    for lvl in range(len(eng.tight_at)):
        agg.record(eng.tight_at[lvl] == tight_at.get(lvl, set()), ("tight_at", lvl), 0.0)
        agg.record(_close(eng.phi_at[lvl], phi_at.get(lvl, 0.0)), ("phi_at", lvl), 0.0)
        agg.record(_close(eng.tight_cost_at[lvl], sum(eng.cost[s] for s in tight_at.get(lvl, ()))),
                   ("tight_cost_at", lvl), 0.0)
        agg.record(eng.elems_at[lvl] == elems_at.get(lvl, set()), ("elems_at", lvl), 0.0)
        if elems_at.get(lvl):
            agg.record(bool(tight_at.get(lvl)), ("elements_without_tight_set", lvl), 0.0)
    for s in range(m):
        agg.record(eng._rec_tight[s] == tight[s] and eng._rec_level[s] == eng.level[s], ids[s], 0.0)

    live = eng.live_elements()
    feas = check_feasibility(eng.tight_sets(), live)
    rep.feasible, rep.uncovered = feas.ok, feas.uncovered
    dual = check_primal_dual(
        dict(zip(ids, eng.cost)), {ids[s]: weight[s] + eng.dead[s] for s in range(m)}, eps
    )
    rep.dual_ok = dual.ok
    if oracle:
        attach_oracle(rep, dict(zip(ids, eng.cost)), live, total_cost, total_weight, eps)
    return rep


# --- worst-case engine audit ----------------------------------------------------


def _stale_share_ok(active: int, stale: int, share: float) -> bool:
    return stale == 0 or lt(stale, share * active)


def _audit_hierarchy(rep: AuditReport, H, elem_sets, costs, eps: float, label) -> None:
    weight = {s: H.extra[s] for s in H.set_level}
    tally: dict = {s: {} for s in H.set_level}
    active = [0] * (H.top + 1)
    stale = [0] * (H.top + 1)
    for e, lvl in H.elem_level.items():
        w = H.elem_weight[e]
        if H.elem_status[e] == "A":
            active[lvl] += 1
        else:
            stale[lvl] += 1
        present = [s for s in elem_sets[e] if s in H.set_level]
        rep.check("view_membership", len(present) == len(elem_sets[e]), (label, e), 0.0)
        top_set = max((H.set_level[s] for s in present), default=lvl)
        rep.check("element_level", lvl >= top_set, (label, e), lvl - top_set)
        rep.check("element_level", e in H.elems_at[lvl], (label, e), 0.0)
        for s in present:
            weight[s] += w
            tally[s][lvl] = tally[s].get(lvl, 0.0) + w
    for s, lvl in H.set_level.items():
        rep.check("view_weights", _close(weight[s], H.weight[s]), (label, s), 0.0)
        rep.check("view_weights", s in H.sets_at[lvl] and H.extra[s] >= -TOLERANCE, (label, s), H.extra[s])
        thr = costs[s] / (1 + eps)
        if lvl >= 1:
            rep.check("inv5_local_tightness", not lt(weight[s], thr), (label, s), weight[s] - thr)
    rep.check("view_counters", active == H.active_at and stale == H.stale_at, label, 0.0)


def check_worstcase_invariants(engine, *, oracle: bool = False) -> AuditReport:
    """Audit every local view, running scheduler and the stitched hierarchy."""
    eng = engine
    eps = eng.epsilon
    ids = eng.instance.set_ids
    m = len(ids)
    costs = eng.cost
    rep = AuditReport()
    for name in ("view_membership", "element_level", "view_weights", "view_counters",
                 "inv5_local_tightness", "inv6_local_stale", "inv7_view_agreement",
                 "inv8_stale_monotone", "bounded_target_level", "partition",
                 "global_tightness", "element_fraction", "query_value"):
        rep.touch(name)

    groups = eng.view_groups()
    for H, lo, hi in groups:
        label = f"views {lo}-{hi}"
        _audit_hierarchy(rep, H, eng.elem_sets, costs, eps, label)
        active, stale = H.prefix_counts()
        for k in range(lo, hi + 1):
            j = min(k, H.top)
            rep.check("inv6_local_stale", _stale_share_ok(active[j], stale[j], 2 * eps), k,
                      2 * eps * active[j] - stale[j])

    for i in range(1, eng.top):
        low, up = eng.views[i], eng.views[i + 1]
        if low is up:
            continue
        below_low = {s for s, lvl in low.set_level.items() if lvl <= i}
        below_up = {s for s, lvl in up.set_level.items() if lvl <= i}
        rep.check("inv7_view_agreement", below_low == below_up, i, 0.0)
        for e, lvl in low.elem_level.items():
            if lvl <= i and low.elem_status[e] != "A":
                rep.check("inv8_stale_monotone", up.elem_status.get(e, "D") != "A", (i, e), 0.0)

    for k, sch in eng.schedulers.items():
        ok, bad = sch.target_bound_holds()
        rep.check("bounded_target_level", ok, (k, bad[:5]), 0.0)

    ch = eng.consistent_hierarchy()
    rep.check("partition", not ch.duplicates, ch.duplicates[:5], 0.0)
    rep.check("partition", sorted(ch.set_level) == list(range(m)), "missing sets", 0.0)
    live = set(eng.handle_of.values())
    for h in live:
        rep.check("partition", ch.element_status.get(h, "D") != "D", ("live element", h), 0.0)
    set_weight = ch.set_weights(eng.elem_sets)
    for s, lvl in ch.set_level.items():
        thr = costs[s] / (1 + eps)
        if lvl >= 1:
            rep.check("global_tightness", not lt(set_weight[s], thr), s, set_weight[s] - thr)
    active = [0] * (eng.top + 2)
    stale = [0] * (eng.top + 2)
    for e, lvl in ch.element_level.items():
        if ch.element_status[e] == "A":
            active[lvl] += 1
        else:
            stale[lvl] += 1
    a = p = 0
    for i in range(eng.top + 1):
        a += active[i]
        p += stale[i]
        rep.check("element_fraction", p <= 2 * eps * a + TOLERANCE, i, 2 * eps * a - p)

    base = eng.views[1]
    slack = [s for s in base.sets_at[0] if not gt(base.weight[s], costs[s] / (1 + eps))]
    expect = sum(costs) - sum(costs[s] for s in slack)
    cover = eng.export_cover()
    cover_cost = sum(costs[eng.instance.set_index[s]] for s in cover)
    rep.check("query_value", _close(expect, eng.query_value()), "incremental", expect - eng.query_value())
    rep.check("query_value", _close(cover_cost, eng.query_value()), "export", cover_cost - eng.query_value())

    live_sets = eng.live_elements()
    feas = check_feasibility(cover, live_sets)
    rep.feasible, rep.uncovered = feas.ok, feas.uncovered
    live_weight = {ids[s]: 0.0 for s in range(m)}
    total_weight = 0.0
    for h in live:
        w = ch.element_weight.get(h, 0.0)
        total_weight += w
        for s in eng.elem_sets[h]:
            live_weight[ids[s]] += w
    dual = check_primal_dual(dict(zip(ids, costs)), live_weight, eps)
    rep.dual_ok = dual.ok
    if oracle:
        attach_oracle(rep, dict(zip(ids, costs)), live_sets, eng.query_value(), total_weight, eps)
    return rep
