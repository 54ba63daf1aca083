import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncover.core import ContractViolation, gt, lt, validate_instance
from dyncover.static_hierarchy import (
    RebuildWorkspace,
    build_static,
    fix_level,
    target_from_base,
    target_level,
)
from oracles import brute_target, literal_rounds, random_raw_instance


def single(cost):
    return validate_instance({"epsilon": 0.1, "C": 10, "f": 1, "sets": {"s1": cost}, "elements": {"e1": ["s1"]}})


class TestBuildStatic:
    @pytest.mark.parametrize("cost,level", [(0.5, 8), (0.9, 2)])
    def test_single_set(self, cost, level):
        snap = build_static(single(cost))
        assert snap.set_levels == {"s1": level}
        assert snap.element_levels == {"e1": level}
        assert snap.tight_sets == {"s1"}

    def test_empty_universe(self):
        inst = validate_instance({"epsilon": 0.1, "C": 10, "f": 1, "sets": {"a": 0.5, "b": 0.7}, "elements": {}})
        snap = build_static(inst)
        assert snap.set_levels == {"a": 0, "b": 0}
        assert snap.tight_sets == frozenset()

    def test_matches_literal_rounds(self):
        rng = random.Random(20240611)
        for trial in range(1000):
            m = rng.randint(1, 8)
            n = rng.randint(0, 12)
            f = rng.randint(1, 3)
            eps = rng.choice([0.05, 0.1])
            C = rng.choice([2.0, 10.0])
            inst = validate_instance(random_raw_instance(rng, m, n, f, C, eps))
            snap = build_static(inst)
            set_lv, elem_lv = literal_rounds(inst.costs, inst.memberships, eps, snap.top_level)
            assert [snap.set_levels[s] for s in inst.set_ids] == set_lv, trial
            assert [snap.element_levels[e] for e in inst.element_ids] == elem_lv, trial

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_snapshot_invariants(self, seed):
        rng = random.Random(seed)
        inst = validate_instance(random_raw_instance(rng, rng.randint(1, 10), rng.randint(0, 25), 3))
        snap = build_static(inst)
        eps = inst.epsilon
        for e, sets in zip(inst.element_ids, inst.memberships):
            lv = max(snap.set_levels[inst.set_ids[s]] for s in sets)
            assert snap.element_levels[e] == lv
            assert snap.element_weights[e] == pytest.approx((1 + eps) ** -lv, rel=1e-12)
        for sid, cost in zip(inst.set_ids, inst.costs):
            w = snap.set_weights[sid]
            if snap.set_levels[sid] >= 1:
                assert gt(w, cost / (1 + eps))
            assert not gt(w, (1 + eps) * cost)
        for sets in inst.memberships:
            assert any(inst.set_ids[s] in snap.tight_sets for s in sets)


class TestTargetLevel:
    def test_example(self):
        assert target_level(0.5, 0.99, 2, 0.1, top=10) == 5

    def test_no_pending_slack(self):
        assert target_level(0.4, 0.5, 0, 0.1, top=10) == 0

    def test_already_tight_is_capped_at_round(self):
        # 0.485543 > 0.5/1.1 with the pending element still at level 10.
        assert target_level(0.485543, 0.5, 1, 0.1, top=10, cap=7) == 7
        assert target_level(0.485543, 0.5, 0, 0.1, top=10, cap=7) == 7

    @settings(max_examples=400, deadline=None)
    @given(
        st.floats(0.0, 1.2), st.floats(0.02, 0.99), st.integers(0, 6),
        st.integers(1, 60), st.sampled_from([0.01, 0.05, 0.1]),
    )
    def test_matches_brute_force(self, w_star, cost, count, top, eps):
        expected = brute_target(w_star, cost, count, top, top, eps)
        got = target_level(w_star, cost, count, eps, top=top)
        if got != expected:
            # Only a value within tolerance of the threshold may disagree.
            for i in (got, expected):
                v = w_star + ((1 + eps) ** -i - (1 + eps) ** -top) * count
                assert abs(v - cost / (1 + eps)) < 1e-8
        assert 0 <= got <= top

    def test_inclusive_attains_at_equality(self):
        thr = 0.99 / 1.1
        base = thr - 2 * 1.1 ** -5
        assert target_from_base(base, 2, 0.99, 0.1, 9, inclusive=True) == 5
        assert target_from_base(base, 2, 0.99, 0.1, 9, inclusive=False) == 4


class TestFixLevel:
    def test_example(self):
        res = fix_level(10, {"s": (0.5, 0.45)}, {"e": ("s",)}, 0.1)
        assert res.set_levels == {"s": 9}
        assert res.element_weights["e"] == pytest.approx(0.424098, abs=1e-6)
        assert res.set_weights["s"] == pytest.approx(0.488555, abs=1e-6)

    def test_no_elements(self):
        res = fix_level(10, {"a": (0.5, 0.1), "b": (0.9, 0.0)}, {}, 0.1)
        assert res.set_levels == {"a": 0, "b": 0}

    def test_independent_sets(self):
        both = fix_level(20, {"a": (0.5, 0.2), "b": (0.8, 0.1)}, {"x": ("a",), "y": ("b",)}, 0.1)
        alone_a = fix_level(20, {"a": (0.5, 0.2)}, {"x": ("a",)}, 0.1)
        alone_b = fix_level(20, {"b": (0.8, 0.1)}, {"y": ("b",)}, 0.1)
        assert both.set_levels == {**alone_a.set_levels, **alone_b.set_levels}

    def test_contract_violation(self):
        with pytest.raises(ContractViolation):
            fix_level(5, {"a": (0.5, 0.5)}, {}, 0.1)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_contract(self, seed):
        rng = random.Random(seed)
        eps = 0.1
        k = rng.randint(0, 40)
        q = (1 + eps) ** -k
        sets, counts = {}, {}
        names = [f"s{i}" for i in range(rng.randint(1, 6))]
        elements = {f"e{j}": tuple(rng.sample(names, rng.randint(1, min(3, len(names))))) for j in range(rng.randint(0, 10))}
        for s in names:
            counts[s] = sum(s in v for v in elements.values())
        for s in names:
            cost = rng.uniform(0.15, 0.95)
            settled = rng.uniform(0, 0.5) * cost
            w = settled + counts[s] * q
            if not lt(w, cost):
                continue
            sets[s] = (cost, w)
        elements = {e: v for e, v in elements.items() if all(s in sets for s in v)}
        res = fix_level(k, sets, elements, eps)
        for s, (cost, _) in sets.items():
            w = res.set_weights[s]
            assert lt(w, cost)
            assert 0 <= res.set_levels[s] <= k
            if res.set_levels[s] > 0:
                assert gt(w, cost / (1 + eps))
        for e, v in elements.items():
            assert res.element_levels[e] == max(res.set_levels[s] for s in v)


class TestDescentInvariant:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_targets_never_exceed_round(self, seed):
        rng = random.Random(seed)
        inst = validate_instance(random_raw_instance(rng, rng.randint(1, 8), rng.randint(0, 15), 3))
        ws = RebuildWorkspace(0.1, 30)
        for s, c in enumerate(inst.costs):
            ws.add_set(s, c)
        for e, sets in enumerate(inst.memberships):
            ws.add_pending(e, sets)
        while True:
            for s in ws.undecided_sets():
                assert ws.target[s] <= ws.round
                assert ws.target[s] == ws.compute_target(s)
            if not ws.step():
                break

    def test_tie_break_by_id(self):
        ws = RebuildWorkspace(0.1, 10)
        order = []
        for s in (3, 1, 2):
            ws.add_set(s, 0.5, extra=0.47)
        while True:
            before = set(ws.level)
            if not ws.step():
                break
            order.extend(sorted(set(ws.level) - before))
        assert order == [1, 2, 3]
        assert ws.level == {1: 10, 2: 10, 3: 10}

    def test_neighbor_rebucket(self):
        ws = RebuildWorkspace(0.1, 10)
        ws.add_set("a", 0.5, extra=0.3)
        ws.add_set("b", 0.9, extra=0.0)
        ws.add_pending("x", ("a", "b"))
        ws.add_pending("y", ("b",))
        before = ws.target["b"]
        assert before == target_from_base(0.0, 2, 0.9, 0.1, 10)
        ws.run()
        a_level = ws.level["a"]
        assert ws.elem_level["x"] == a_level
        assert ws.level["b"] == target_from_base(ws.q[a_level], 1, 0.9, 0.1, a_level)
