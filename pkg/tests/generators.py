"""Random queries and annotated databases shared by the test modules."""

from __future__ import annotations

import random
from fractions import Fraction

from aggaccess.model import Agg, AnnotatedDatabase, Atom, Query, Star, Var, validate_query
from aggaccess.planner import Profile, classify, profile_of
from aggaccess.semiring import (AvgPair, Counting, MaxTropical, MinTropical, Numeric,
                                SetSemiring)
from aggaccess.errors import AggAccessError

DOMAIN = 8
SET_DOMAIN = tuple(range(DOMAIN))


def semirings():
    return [Counting(), Numeric(), MinTropical(), MaxTropical(), SetSemiring(SET_DOMAIN), AvgPair()]


def random_value(s, rng: random.Random):
    name = s.name
    if name == "counting":
        return rng.randint(0, 4)
    if name == "numeric":
        return rng.choice([-2, -1, 0, 1, 2, 3, Fraction(1, 2), Fraction(-3, 2)])
    if name == "mintrop":
        return rng.choice([s.zero, -2, -1, 0, 1, 2, 3])
    if name == "maxtrop":
        return rng.choice([s.zero, -2, -1, 0, 1, 2, 3])
    if name == "set":
        return rng.getrandbits(len(SET_DOMAIN)) & rng.getrandbits(len(SET_DOMAIN))
    if name == "avg":
        count = rng.randint(0, 3)
        return (rng.randint(-3, 6) if count else 0, count)
    raise ValueError(name)


def random_body(rng: random.Random, max_atoms=4, max_arity=4, max_vars=5, self_joins=0.1):
    nvars = rng.randint(1, max_vars)
    names = [f"v{i}" for i in range(nvars)]
    body = []
    arities = {}
    for k in range(rng.randint(1, max_atoms)):
        if body and rng.random() < self_joins:
            rel = rng.choice(list(arities))
            arity = arities[rel]
        else:
            rel = f"R{k}"
            arity = rng.randint(1, min(max_arity, nvars))
            arities[rel] = arity
        if rng.random() < 0.05 and arity >= 2:
            terms = [rng.choice(names) for _ in range(arity)]
        else:
            terms = rng.sample(names, arity) if arity <= nvars else [rng.choice(names) for _ in range(arity)]
        body.append(Atom(rel, tuple(terms)))
    used = []
    for a in body:
        for t in a.terms:
            if t not in used:
                used.append(t)
    return body, used


def random_query(rng: random.Random, mode: str = "star", **kw) -> Query | None:
    """A random valid query; ``mode`` is ``star``, ``plain``, ``acq`` or ``multi``."""
    body, used = random_body(rng, **kw)
    free = [v for v in used if rng.random() < 0.6]
    rng.shuffle(free)
    head = [Var(v) for v in free]
    existential = [v for v in used if v not in free]
    if mode == "star":
        head.insert(rng.randint(0, len(head)), Star())
    elif mode in ("acq", "multi"):
        n = 1 if mode == "acq" else rng.randint(2, 3)
        aggs = []
        for _ in range(n):
            func = rng.choice(["Count", "Sum", "Min", "Max", "Avg", "CountD"])
            if func == "Count":
                aggs.append(Agg("Count", None))
            elif existential:
                aggs.append(Agg(func, rng.choice(existential)))
            else:
                return None
        if mode == "acq":
            head.insert(rng.randint(0, len(head)), aggs[0])
        else:
            head.extend(aggs)
    q = Query(tuple(head), tuple(body))
    try:
        validate_query(q)
    except AggAccessError:
        return None
    return q


def random_database(q: Query, s, rng: random.Random, profile: str = "generic",
                    max_facts: int = 25, domain: int | None = None) -> AnnotatedDatabase:
    """Random facts for every relation of ``q``; ``profile`` is generic, local or ones."""
    domain = domain or rng.randint(2, 4)
    arities = {a.relation: len(a.terms) for a in q.body}
    names = sorted(arities)
    local = rng.choice(names) if profile == "local" else None
    rels = {}
    for name in names:
        arity = arities[name]
        cap = min(max_facts, domain ** arity)
        facts = set()
        for _ in range(rng.randint(cap // 2, cap)):
            facts.add(tuple(rng.randrange(domain) for _ in range(arity)))
        table = {}
        for f in sorted(facts):
            if profile == "generic" or name == local:
                table[f] = random_value(s, rng)
            else:
                table[f] = s.one
        rels[name] = table
    return AnnotatedDatabase(s, rels, arities)


def empty_database(q: Query, s=None) -> AnnotatedDatabase:
    s = s or Counting()
    return AnnotatedDatabase(s, {a.relation: {} for a in q.body},
                             {a.relation: len(a.terms) for a in q.body})


def numeric_database(q: Query, rng: random.Random, max_facts: int = 25,
                     domain: int | None = None) -> AnnotatedDatabase:
    """Plain facts for aggregate queries (every annotation is one)."""
    return random_database(q, Counting(), rng, "ones", max_facts, domain)


def instances_for(tag: str, rng: random.Random, attempts: int = 200):
    """Draw ``(query, semiring, database, certificate)`` whose plan is ``tag``, or None."""
    for _ in range(attempts):
        drawn = _draw(tag, rng)
        if drawn is None:
            continue
        q, s, adb, domain = drawn
        cert = classify(q, s, profile_of(adb), domain)
        if cert.tractable and _tag_of(cert) == tag:
            return q, s, adb, cert
    return None


def _tag_of(cert) -> str:
    if cert.plan.tag == "StarLast" and cert.query.is_acq and cert.query.aggregates[0].func == "Avg":
        return "Avg"
    return cert.plan.tag


def _draw(tag: str, rng: random.Random):
    if tag == "CountProduct":
        x, y, w, z = "x", "y", "w", "z"
        if rng.random() < 0.3:
            z = w = "w"
        body = (Atom("R", (x, w) if rng.random() < 0.5 else (w, x)),
                Atom("S", (y, z) if rng.random() < 0.5 else (z, y)))
        q = Query((Agg("Count", None), Var(x), Var(y)), body)
        if w == z:
            return None
        return q, None, numeric_database(q, rng), None
    if tag in ("Avg", "MultiAggregateStarLast"):
        q = random_query(rng, "acq" if tag == "Avg" else "multi")
        if q is None:
            return None
        if tag == "Avg":
            agg = q.aggregates[0]
            if agg.arg is None:
                return None
            head = [e for e in q.head if not isinstance(e, Agg)] + [Agg("Avg", agg.arg)]
            q = q.with_head(head)
        return q, None, numeric_database(q, rng), SET_DOMAIN
    if tag in ("FullDeannotate", "IdempotentLocal") and rng.random() < 0.5:
        q = random_query(rng, "acq")
        if q is None:
            return None
        return q, None, numeric_database(q, rng), SET_DOMAIN
    q = random_query(rng, "star" if tag != "StarLast" or rng.random() < 0.8 else "plain")
    if q is None:
        return None
    s = rng.choice(semirings())
    if tag == "IdempotentLocal":
        s = rng.choice([MinTropical(), MaxTropical(), SetSemiring(SET_DOMAIN)])
    profile = rng.choice(["generic", "local", "ones"])
    if tag in ("FullDeannotate", "IdempotentLocal"):
        profile = "local"
    return q, s, random_database(q, s, rng, profile), None
