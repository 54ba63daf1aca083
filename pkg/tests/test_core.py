import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyncover.core import (
    CostOutOfRange,
    DuplicateId,
    EpsilonOutOfRange,
    FrequencyExceeded,
    OrphanElement,
    SetState,
    UnknownSet,
    base_level,
    element_weight,
    ge,
    gt,
    le,
    level_cap,
    lt,
    set_weight_at,
    validate_instance,
)


def raw(sets, elements, f=2, C=10, eps=0.1, **extra):
    return {"epsilon": eps, "C": C, "f": f, "sets": sets, "elements": elements, **extra}


class TestValidateInstance:
    def test_minimal(self):
        inst = validate_instance(raw({"s1": 0.5}, {"e1": ["s1"]}, f=1))
        assert inst.set_ids == ("s1",)
        assert inst.memberships == ((0,),)
        assert inst.set_elements == ((0,),)
        assert inst.n == 1

    def test_record_form_and_inversion(self):
        inst = validate_instance(raw(
            [{"id": "a", "cost": 0.3}, {"id": "b", "cost": 0.4}],
            [{"id": "x", "sets": ["a", "b"]}, {"id": "y", "sets": ["b"]}],
            n=5,
        ))
        assert inst.set_elements == ((0,), (0, 1))
        assert inst.n == 5
        assert validate_instance(inst.to_raw()) == inst

    @pytest.mark.parametrize("cost", [1.0, 0.1, 0.05, 1.5])
    def test_cost_bounds_are_open(self, cost):
        with pytest.raises(CostOutOfRange):
            validate_instance(raw({"s1": cost}, {}))

    def test_frequency(self):
        with pytest.raises(FrequencyExceeded):
            validate_instance(raw({"a": 0.5, "b": 0.5, "c": 0.5}, {"e": ["a", "b", "c"]}, f=2))

    def test_duplicates_and_orphans(self):
        with pytest.raises(DuplicateId):
            validate_instance(raw([("a", 0.5), ("a", 0.6)], {}))
        with pytest.raises(DuplicateId):
            validate_instance(raw({"a": 0.5}, [("e", ["a"]), ("e", ["a"])]))
        with pytest.raises(OrphanElement):
            validate_instance(raw({"a": 0.5}, {"e": []}))
        with pytest.raises(UnknownSet):
            validate_instance(raw({"a": 0.5}, {"e": ["zz"]}))

    @pytest.mark.parametrize("eps", [0.0, -0.1, 0.2, 0.1000001])
    def test_epsilon_range(self, eps):
        with pytest.raises(EpsilonOutOfRange):
            validate_instance(raw({"a": 0.5}, {}, eps=eps))

    def test_epsilon_upper_endpoint_accepted(self):
        assert validate_instance(raw({"a": 0.5}, {}, eps=0.1)).epsilon == 0.1


class TestLevelArithmetic:
    @pytest.mark.parametrize("C,n,expected", [(10, 100, 74), (2, 8, 31), (1.25, 1, 4)])
    def test_level_cap(self, C, n, expected):
        assert level_cap(C, n, 0.1) == expected

    @pytest.mark.parametrize("cost,expected", [(0.5, 7), (0.95, 0), (0.2, 16)])
    def test_base_level(self, cost, expected):
        assert base_level(cost, 0.1) == expected

    def test_base_level_exact_power(self):
        # 1/cost is exactly (1.1)^3 up to rounding; the guard keeps level 3.
        assert base_level(1.1 ** -3, 0.1) == 3

    @pytest.mark.parametrize("level,expected", [(0, 1.0), (5, 0.620921), (10, 0.385543)])
    def test_element_weight(self, level, expected):
        assert element_weight(level, 0.1) == pytest.approx(expected, abs=5e-7)

    @given(st.integers(0, 400), st.floats(0.001, 0.1))
    def test_weight_ratio(self, level, eps):
        ratio = element_weight(level, eps) / element_weight(level + 1, eps)
        assert ratio == pytest.approx(1 + eps, rel=1e-12)

    @given(st.floats(1.01, 1e4), st.integers(1, 10**6), st.floats(0.001, 0.1))
    def test_level_cap_definition(self, C, n, eps):
        L = level_cap(C, n, eps)
        exact = math.log(C * n) / math.log1p(eps)
        assert L - 1 >= exact - 1e-9
        assert L - 2 < exact + 1e-9


class TestSetWeightAt:
    def make(self):
        s = SetState(level=2, cost=0.9)
        s.add("e1", 2)
        s.add("e2", 3)
        return s, {"e2": 3}

    def test_examples(self):
        s, nbr = self.make()
        assert set_weight_at(s, 2, nbr, 0.1) == pytest.approx(1.577761, abs=1e-6)
        assert set_weight_at(s, 5, nbr, 0.1) == pytest.approx(1.241842, abs=1e-6)
        assert set_weight_at(SetState(level=0, cost=0.5), 7, {}, 0.1) == 0

    @given(st.lists(st.one_of(st.none(), st.integers(0, 30)), max_size=8), st.integers(0, 30))
    def test_monotone(self, neighbors, i):
        s = SetState(level=0, cost=0.5)
        nbr = {}
        for idx, lvl in enumerate(neighbors):
            s.add(idx, 0)
            nbr[idx] = lvl
        assert set_weight_at(s, i, nbr, 0.1) >= set_weight_at(s, i + 1, nbr, 0.1)


class TestComparisons:
    def test_tolerant_strictness(self):
        assert not gt(1.0 + 1e-12, 1.0)
        assert gt(1.0 + 1e-6, 1.0)
        assert not lt(1.0 - 1e-12, 1.0)
        assert ge(1.0 - 1e-12, 1.0)
        assert le(1.0 + 1e-12, 1.0)

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_duality(self, a, b):
        assert gt(a, b) == lt(b, a)
        assert not (gt(a, b) and lt(a, b))
