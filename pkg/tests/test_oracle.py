import pytest

from aggaccess.errors import InstanceTooLarge
from aggaccess.model import annotate_database, database_from, parse_query, translate_acq
from aggaccess.oracle import brute_force, homomorphisms
from aggaccess.semiring import Counting, MinTropical, Numeric

from named import REPLAYS_ACQ, REPLAYS_ANSWERS, REPLAYS_WEIGHTS, REPLAYS_STAR, REPLAYS_TABLES


def test_replays_both_routes():
    db = database_from(Counting(), REPLAYS_TABLES)
    assert brute_force(parse_query(REPLAYS_ACQ), db) == REPLAYS_ANSWERS
    annotated = database_from(Numeric(), REPLAYS_TABLES, {"Replays": REPLAYS_WEIGHTS})
    assert brute_force(parse_query(REPLAYS_STAR), annotated) == REPLAYS_ANSWERS


def test_replays_translation_route():
    q_star, s, rule = translate_acq(parse_query(REPLAYS_ACQ))
    adb = annotate_database(database_from(Counting(), REPLAYS_TABLES).plain(), s, rule)
    assert brute_force(q_star, adb) == REPLAYS_ANSWERS


def test_empty_database():
    q = parse_query("Q(x, *) :- R(x, y), S(y).")
    assert brute_force(q, database_from(Counting(), {"R": [(1, 2)], "S": []})) == []


def test_counting_projection():
    q = parse_query("Q(x, *) :- R(x, y), S(y, z).")
    db = database_from(Counting(), {"R": [(1, 2), (1, 3), (2, 3)], "S": [(2, 7), (3, 7), (3, 8)]})
    assert brute_force(q, db) == [(1, 3), (2, 2)]


def test_star_position_orders_answers():
    q = parse_query("Q(*, x) :- R(x).")
    db = database_from(MinTropical(), {"R": [(1,), (2,), (3,)]}, {"R": [5, 2, 5]})
    assert brute_force(q, db) == [(2, 2), (5, 1), (5, 3)]


def test_aggregates_direct():
    q = parse_query("Q(x, Avg(w)) :- R(x, w).")
    db = database_from(Counting(), {"R": [(1, 2), (1, 5), (2, 4)]})
    assert brute_force(q, db) == [(1, 7 / 2), (2, 4)]
    q = parse_query("Q(x, CountD(w), Count()) :- R(x, w, v).")
    db = database_from(Counting(), {"R": [(1, 2, 0), (1, 2, 1), (1, 3, 0)]})
    assert brute_force(q, db) == [(1, 2, 3)]


def test_limit():
    q = parse_query("Q(x, y) :- R(x), S(y).")
    db = database_from(Counting(), {"R": [(i,) for i in range(20)], "S": [(i,) for i in range(20)]})
    with pytest.raises(InstanceTooLarge):
        brute_force(q, db, limit=100)
    assert sum(1 for _ in homomorphisms(q, db)) == 400
