import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from aggaccess.errors import AnnotationParseError, DomainTooLarge, NotMonotone
from aggaccess.semiring import (AvgPair, Counting, Direction, MaxTropical, MinTropical,
                                Numeric, SetSemiring, instantiate, parse_number)

DOM = ("a", "b", "c", "d", "e")

rationals = st.fractions(min_value=-20, max_value=20, max_denominator=6).map(
    lambda f: int(f) if f.denominator == 1 else f)

VALUES = {
    "counting": (Counting(), st.integers(0, 50)),
    "numeric": (Numeric(), rationals),
    "mintrop": (MinTropical(), st.one_of(rationals, st.just(math.inf))),
    "maxtrop": (MaxTropical(), st.one_of(rationals, st.just(-math.inf))),
    "set": (SetSemiring(DOM), st.integers(0, 2 ** len(DOM) - 1)),
    "avg": (AvgPair(), st.one_of(
        st.just((0, 0)), st.tuples(rationals, st.integers(1, 5)))),
}


def triple(kind):
    s, values = VALUES[kind]
    return st.tuples(st.just(s), values, values, values)


# --- examples ----------------------------------------------------------------


def test_identities():
    assert (Counting().zero, Counting().one) == (0, 1)
    assert (MaxTropical().zero, MaxTropical().one) == (-math.inf, 0)
    s = SetSemiring(("a", "b", "c"))
    assert s.members(s.zero) == [] and s.members(s.one) == [0, 1, 2]


def test_plus_examples():
    assert Counting().plus(2, 3) == 5
    assert MaxTropical().plus(2, 3) == 3
    s = SetSemiring(("a", "b", "c"))
    assert s.plus(s.singleton("a"), s.singleton("b")) == s.parse("{a|b}")


def test_times_examples():
    assert MinTropical().times(2, 3) == 5
    assert Counting().times(0, 7) == 0
    assert AvgPair().times((3, 1), (5, 1)) == (8, 1)


def test_compare_examples():
    assert Numeric().compare(-1, 2) == -1
    s = SetSemiring(("a", "b", "c"))
    assert s.compare(s.parse("a|b"), s.parse("c")) == 1
    assert AvgPair().compare((4, 2), (3, 1)) == -1
    assert AvgPair().compare((0, 0), (-5, 1)) == -1


def test_set_order_matches_enumeration():
    s = SetSemiring(("a", "b", "c"))
    order = ["{}", "{a}", "{b}", "{c}", "{a|b}", "{a|c}", "{b|c}", "{a|b|c}"]
    values = [s.parse(t) for t in order]
    assert sorted(values, key=s.sort_key) == values


def test_monotone_direction():
    assert Numeric().monotone_direction(-2) is Direction.NON_INCREASING
    assert Numeric().monotone_direction(0) is Direction.NON_DECREASING
    assert MaxTropical().monotone_direction(7) is Direction.NON_DECREASING
    with pytest.raises(NotMonotone):
        SetSemiring(DOM).monotone_direction(1)


def test_set_domain_bounds():
    with pytest.raises(DomainTooLarge):
        SetSemiring(range(65))
    with pytest.raises(DomainTooLarge):
        SetSemiring(())
    assert len(SetSemiring(range(64)).domain) == 64


def test_literals_round_trip():
    assert parse_number("1.5") == Fraction(3, 2)
    assert MinTropical().parse("inf") == math.inf
    assert MaxTropical().parse("-inf") == -math.inf
    assert AvgPair().parse("7:2") == (7, 2)
    assert Numeric().format(Fraction(3, 2)) == "3/2"
    with pytest.raises(AnnotationParseError):
        Numeric().parse("abc")
    with pytest.raises(AnnotationParseError):
        AvgPair().parse("3:0")
    with pytest.raises(AnnotationParseError):
        Counting().parse("-1")


def test_instantiate_by_name():
    assert instantiate("maxtrop") == MaxTropical()
    assert instantiate("set", DOM) == SetSemiring(DOM)


# --- axioms (1000 random triples per kind) -----------------------------------


@pytest.mark.parametrize("kind", sorted(VALUES))
def test_axioms(kind):
    @settings(max_examples=1000, deadline=None)
    @given(triple(kind))
    def check(t):
        s, a, b, c = t
        for v in (a, b, c):
            assert s.contains(v)
        assert s.plus(a, b) == s.plus(b, a)
        assert s.times(a, b) == s.times(b, a)
        assert s.plus(s.plus(a, b), c) == s.plus(a, s.plus(b, c))
        assert s.times(s.times(a, b), c) == s.times(a, s.times(b, c))
        assert s.times(a, s.plus(b, c)) == s.plus(s.times(a, b), s.times(a, c))
        assert s.plus(a, s.zero) == a
        assert s.times(a, s.one) == a
        assert s.times(a, s.zero) == s.zero
        assert (s.plus(a, a) == a) or not s.plus_idempotent
        assert s.contains(s.plus(a, b)) and s.contains(s.times(a, b))

    check()


@pytest.mark.parametrize("kind", sorted(VALUES))
def test_idempotence_flag(kind):
    s, values = VALUES[kind]
    assert s.plus_idempotent == (kind in {"mintrop", "maxtrop", "set"})

    @settings(max_examples=200, deadline=None)
    @given(values)
    def check(a):
        if s.plus_idempotent:
            assert s.plus(a, a) == a

    check()
    if not s.plus_idempotent:
        assert s.plus(s.one, s.one) != s.one


@pytest.mark.parametrize("kind", sorted(VALUES))
def test_compare_total_order(kind):
    @settings(max_examples=1000, deadline=None)
    @given(triple(kind))
    def check(t):
        s, a, b, c = t
        assert s.compare(a, b) == -s.compare(b, a)
        if s.compare(a, b) <= 0 and s.compare(b, c) <= 0:
            assert s.compare(a, c) <= 0

    check()


@pytest.mark.parametrize("kind", [k for k in sorted(VALUES) if k != "set"])
def test_monotone_direction_is_sound(kind):
    @settings(max_examples=1000, deadline=None)
    @given(triple(kind))
    def check(t):
        s, c, a, b = t
        if s.compare(a, b) > 0:
            a, b = b, a
        d = s.monotone_direction(c)
        ca, cb = s.times(c, a), s.times(c, b)
        if d is Direction.NON_DECREASING:
            assert s.compare(ca, cb) <= 0
        else:
            assert s.compare(ca, cb) >= 0

    check()
