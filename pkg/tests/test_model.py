import random
from fractions import Fraction

import pytest

from aggaccess.errors import (AnnotationParseError, ArityMismatch, DuplicateFact,
                              MissingDomain, QuerySemanticError, QuerySyntaxError)
from aggaccess.model import (Agg, AnnotationRule, Star, Var, annotate_database,
                             carrier_atom, const_key, database_from, finalize,
                             load_relation, parse_constant, parse_query, pretty_print,
                             split_aggregates, translate_acq)
from aggaccess.oracle import brute_force
from aggaccess.semiring import Counting, Kind, Numeric, SetSemiring

from generators import numeric_database, random_query

REPLAYS = "Q(c, Sum(t)) :- Teams(p, c), Goals(g, p, t), Replays(g, t)."


def test_parse_sponsors():
    q = parse_query("Q(p,c,o,t) :- Teams(p,c), Sponsors(o,c), Goals(g,p,t).")
    assert q.free == {"p", "c", "o", "t"}
    assert q.existential == {"g"}
    assert q.is_self_join_free()


def test_parse_star_and_aggregates():
    q = parse_query("Q(x,*) :- R(x,y).")
    assert q.head == (Var("x"), Star()) and q.star_position == 1
    q = parse_query("Q(x, sum(w), COUNT()) :- R(x, w)")
    assert q.aggregates == (Agg("Sum", "w"), Agg("Count", None))


@pytest.mark.parametrize("text", [
    "Q(x,z) :- R(x,y).",
    "Q(x,x) :- R(x).",
    "Q(*, *) :- R(x).",
    "Q(*, Sum(y)) :- R(x, y).",
    "Q(Sum(y), Count(), x) :- R(x, y).",
    "Q(x, Sum(x)) :- R(x).",
    "Q(Count(x)) :- R(x).",
])
def test_semantic_errors(text):
    with pytest.raises(QuerySemanticError):
        parse_query(text)


def test_syntax_error_position():
    with pytest.raises(QuerySyntaxError) as e:
        parse_query("Q(x) :- R(x) $")
    assert e.value.position == 13
    with pytest.raises(QuerySyntaxError):
        parse_query("Q(x) :- r(x).")


def test_round_trip_random_queries():
    rng = random.Random(3)
    seen = 0
    while seen < 100:
        q = random_query(rng, rng.choice(["star", "plain", "acq", "multi"]))
        if q is None:
            continue
        assert parse_query(pretty_print(q)) == q
        seen += 1


def test_constants_order():
    values = [parse_constant(t) for t in ["b", "10", "2", "a", "1.5", "-3"]]
    assert sorted(values, key=const_key) == [-3, Fraction(3, 2), 2, 10, "a", "b"]


def test_load_relation(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,5\n2,5\n")
    rel, raw = load_relation(str(p), "R", 2)
    assert rel.facts == ((1, 5), (2, 5)) and raw is None

    p.write_text("1,1,1\n1,31,31\n1,50,50\n2,5,5\n1,90,90\n")
    rel, raw = load_relation(str(p), "Replays", 2, annotated=True)
    assert len(rel.facts) == 5
    db = annotate_database({"Replays": rel}, Numeric(), raw={"Replays": raw})
    assert list(db.facts("Replays").values()) == [1, 31, 50, 5, 90]

    p.write_text("1,2,3\n")
    with pytest.raises(ArityMismatch) as e:
        load_relation(str(p), "R", 2)
    assert e.value.row == 1

    p.write_text("1,2\n1,2\n")
    with pytest.raises(DuplicateFact):
        load_relation(str(p), "R", 2)

    p.write_text("1,abc\n")
    rel, raw = load_relation(str(p), "R", 1, annotated=True)
    with pytest.raises(AnnotationParseError):
        annotate_database({"R": rel}, Numeric(), raw={"R": raw})


def test_translate_replays():
    q_star, s, rule = translate_acq(parse_query(REPLAYS))
    assert s.kind is Kind.NUMERIC
    assert q_star.has_star and q_star.star_last
    assert (rule.relation, rule.column) == ("Replays", 1)


def test_translate_count_and_countd():
    q = parse_query("Q(p,c,o,Count()) :- Teams(p,c), Sponsors(o,c), Goals(g,p,t).")
    _, s, rule = translate_acq(q)
    assert s.kind is Kind.COUNTING and rule.relation is None
    q = parse_query("Q(x, CountD(g)) :- R(x, g).")
    with pytest.raises(MissingDomain):
        translate_acq(q)
    _, s, rule = translate_acq(q, ["g1", "g2"])
    assert isinstance(s, SetSemiring) and rule.relation == "R"


def test_carrier_prefers_fewest_variables():
    q = parse_query("Q(x, Sum(w)) :- R(x, w, v), S(w, v), T(w).")
    assert carrier_atom(q, "w") == 2


def test_annotation_profile():
    s = Numeric()
    db = database_from(s, {"R": [(1,), (2,)], "S": [(3,)]})
    assert db.locally_annotated and db.annotated_relation is None
    db = database_from(s, {"R": [(1,), (2,)], "S": [(3,)]}, {"R": [1, 4]})
    assert db.locally_annotated and db.annotated_relation == "R"
    db = database_from(s, {"R": [(1,), (2,)], "S": [(3,)]}, {"R": [1, 4], "S": [2]})
    assert not db.locally_annotated


def test_split_aggregates():
    q = parse_query("Q(x, Sum(w), Count()) :- R(x, w).")
    parts = split_aggregates(q)
    assert [p.aggregates for p in parts] == [(Agg("Sum", "w"),), (Agg("Count", None),)]


def _translated_oracle(q, db, domain):
    q_star, s, rule = translate_acq(q, domain)
    adb = annotate_database(db.plain(), s, rule)
    func = q.aggregates[0].func
    pos = q.star_position
    out = []
    for row in brute_force(q_star, adb):
        row = list(row)
        row[pos] = finalize(func, s, row[pos])
        out.append(tuple(row))
    return sorted(out, key=lambda r: tuple(const_key(v) for v in r))


@pytest.mark.parametrize("func", ["Count", "Sum", "Min", "Max", "Avg", "CountD"])
def test_translation_preserves_aggregates(func):
    rng = random.Random(hash(func) % 1000)
    checked = 0
    domain = tuple(range(8))
    while checked < 150:
        q = random_query(rng, "acq")
        if q is None:
            continue
        agg = q.aggregates[0]
        if func != "Count" and agg.arg is None:
            continue
        new = Agg(func, None if func == "Count" else agg.arg)
        q = q.with_head([new if isinstance(e, Agg) else e for e in q.head])
        db = numeric_database(q, rng)
        direct = sorted(brute_force(q, db), key=lambda r: tuple(const_key(v) for v in r))
        assert direct == _translated_oracle(q, db, domain)
        checked += 1
