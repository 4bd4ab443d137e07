"""Tractability classification and engine assembly.

:func:`classify` maps a query, a semiring and an annotation profile to a
:class:`Certificate`.  Tractable certificates carry a :class:`Plan` whose
rewrite chain was obtained by running the real rewrites on an empty
database; :func:`prepare` replays the chain on data and builds the access
structure behind a uniform :class:`Engine`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .access import (LexIndex, MonotonePair, build_count_product, build_lex,
                     count_product_shape)
from .errors import MissingDomain, UsageError
from .hypergraph import (CyclicWitness, NotConnex, Tree, TrioWitness,
                         ext_connex_tree, find_disruptive_trio, gyo_acyclic,
                         hypergraph_of)
from .model import (Agg, AnnotatedDatabase, AnnotationRule, Query, Star, Var,
                    finalize, pretty_print, split_aggregates, translate_acq,
                    validate_query)
from .rewrite import (deannotate, eliminate_existentials, extend_with_annotation_var,
                      full_reduce, idempotent_eliminate, make_self_join_free,
                      project_private, z_block_ok)
from .semiring import Counting, Kind, Numeric, Semiring, normalize

STAR_LAST = "StarLast"
ZBLOCK = "ZBlockMonotone"
FULL_DEANNOTATE = "FullDeannotate"
IDEMPOTENT_LOCAL = "IdempotentLocal"
COUNT_PRODUCT = "CountProduct"
MULTI = "MultiAggregateStarLast"

# identifiers of the results each verdict rests on
POSITIVE = {
    STAR_LAST: "Thm 4.2(1)",
    ZBLOCK: "Thm 5.5",
    FULL_DEANNOTATE: "Thm 5.7(1)",
    IDEMPOTENT_LOCAL: "Thm 5.9(1)",
    COUNT_PRODUCT: "Prop 5.4",
    MULTI: "Cor 4.3",
}
STRUCTURAL = "Thm 4.2(2)"
COUNTD = "Thm 4.4"
STAR_FIRST = "Thm 5.1"
LOCAL_FULL = "Thm 5.7(2)"
LOCAL_IDEMPOTENT = "Thm 5.9(2)"

_NAMED_KINDS = {Kind.COUNTING, Kind.NUMERIC, Kind.MIN_TROPICAL, Kind.MAX_TROPICAL}


# ---------------------------------------------------------------------------
# profiles, plans, certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    """Which facts may carry non-one annotations.

    ``local`` with ``relation=None`` means every annotation is one.
    """

    local: bool
    relation: str | None = None

    @classmethod
    def generic(cls) -> "Profile":
        return cls(False)

    @classmethod
    def all_ones(cls) -> "Profile":
        return cls(True)

    @classmethod
    def at(cls, relation: str) -> "Profile":
        return cls(True, relation)


def profile_of(adb: AnnotatedDatabase) -> Profile:
    if not adb.locally_annotated:
        return Profile.generic()
    return Profile(True, adb.annotated_relation)


@dataclass
class Plan:
    tag: str
    atom: int | None = None
    relation: str | None = None
    chain: list = field(default_factory=list)
    final_query: str = ""
    options: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"tag": self.tag, "chain": [str(s) for s in self.chain],
               "final_query": self.final_query}
        if self.relation is not None:
            out["relation"] = self.relation
        if self.options:
            out["options"] = dict(self.options)
        return out


@dataclass
class Certificate:
    verdict: str  # "tractable" | "intractable" | "unknown"
    query: Query
    semiring: Semiring | None = None
    plan: Plan | None = None
    theorem: str | None = None
    hypothesis: str | None = None
    witness: Any = None
    reason: str = ""
    domain: tuple | None = None
    local: Any = None

    @property
    def tractable(self) -> bool:
        return self.verdict == "tractable"

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "query": pretty_print(self.query)}
        if self.plan is not None:
            out["plan"] = self.plan.to_json()
        if self.witness is not None:
            out["witness"] = _witness_json(self.witness)
        out["theorem"] = self.theorem
        if self.hypothesis:
            out["hypothesis"] = self.hypothesis
        if self.reason:
            out["reason"] = self.reason
        if self.semiring is not None:
            out["semiring"] = self.semiring.name
        return out


def _witness_json(w):
    if isinstance(w, TrioWitness):
        return {"trio": list(w.as_tuple())}
    if isinstance(w, (CyclicWitness, NotConnex)):
        return {"residue": [sorted(e) for e in w.residue]}
    if isinstance(w, dict):
        return w
    return {"condition": str(w)}


def _tractable(q, s, plan, domain=None, local=None) -> Certificate:
    return Certificate("tractable", q, s, plan, POSITIVE[plan.tag], domain=domain, local=local)


def _intractable(q, s, theorem, hypothesis, witness, reason) -> Certificate:
    return Certificate("intractable", q, s, None, theorem, hypothesis, witness, reason)


def _unknown(q, s, reason, witness=None) -> Certificate:
    return Certificate("unknown", q, s, None, None, None, witness, reason)


# ---------------------------------------------------------------------------
# structural tests
# ---------------------------------------------------------------------------


def structural_obstacle(q: Query):
    """``None`` if ``q`` is free-connex without a disruptive trio, else a witness."""
    h = hypergraph_of(q)
    tree = gyo_acyclic(h)
    if not isinstance(tree, Tree):
        return tree
    ext = ext_connex_tree(h, q.free)
    if not isinstance(ext, Tree):
        return ext
    return find_disruptive_trio(q)


def _deannotation_obstacle(q: Query):
    """Acyclicity and trio test for a deannotated (full) query."""
    tree = gyo_acyclic(hypergraph_of(q))
    if not isinstance(tree, Tree):
        return tree
    return find_disruptive_trio(q)


def _structural_verdict(q, s, witness, sjf, context=""):
    if not sjf:
        return _unknown(q, s, f"self-joins present{context}; hardness results assume self-join-free queries",
                        witness)
    if isinstance(witness, CyclicWitness):
        return _intractable(q, s, STRUCTURAL, "HYPERCLIQUE", witness, "query is cyclic")
    if isinstance(witness, NotConnex):
        return _intractable(q, s, STRUCTURAL, "SparseBMM", witness, "query is not free-connex")
    return _intractable(q, s, STRUCTURAL, "SparseBMM", witness, "disruptive trio in the head order")


def matches_star_first_shape(q: Query) -> bool:
    """``Q(*, x, y) :- R(x), S(y)`` with distinct relations."""
    if len(q.head) != 3 or not isinstance(q.head[0], Star) or len(q.body) != 2:
        return False
    x, y = q.head[1], q.head[2]
    r, s = q.body
    return (isinstance(x, Var) and isinstance(y, Var) and r.relation != s.relation
            and len(r.terms) == 1 and len(s.terms) == 1
            and {r.terms[0], s.terms[0]} == {x.name, y.name} and x.name != y.name)


def matches_countd_shape(q: Query) -> bool:
    """``Q(x, CountD(y)) :- R(x, w), S(y, w)`` with distinct relations."""
    if len(q.head) != 2 or len(q.body) != 2:
        return False
    x, agg = q.head
    if not (isinstance(x, Var) and isinstance(agg, Agg) and agg.func == "CountD"):
        return False
    r, s = q.body
    if r.relation == s.relation or len(r.terms) != 2 or len(s.terms) != 2:
        return False
    if x.name not in r.vars:
        r, s = s, r
    if x.name not in r.vars or agg.arg not in s.vars:
        return False
    w = (r.vars - {x.name})
    return len(w) == 1 and w == s.vars - {agg.arg} and len({x.name, agg.arg} | w) == 3


# ---------------------------------------------------------------------------
# pipelines (shared by classification and preparation)
# ---------------------------------------------------------------------------


def _empty_db(q: Query, s: Semiring) -> AnnotatedDatabase:
    return AnnotatedDatabase(s, {a.relation: {} for a in q.body},
                             {a.relation: len(a.terms) for a in q.body})


def _pipeline(tag, q, adb, atom=None, options=None, trace=None):
    """Run the rewrites of a plan; return ``(final query, structure inputs)``."""
    options = options or {}
    if tag == STAR_LAST:
        q_full, adb2 = eliminate_existentials(q, adb, trace=trace)
        return q_full, (q_full, adb2)
    if tag == ZBLOCK:
        q_full, adb2 = eliminate_existentials(q, adb, trace=trace)
        return q_full, (q_full, adb2)
    if tag in (FULL_DEANNOTATE, IDEMPOTENT_LOCAL):
        q, adb = make_self_join_free(q, adb, trace)
        relation = q.body[atom].relation
        if tag == IDEMPOTENT_LOCAL:
            q, relation, adb = idempotent_eliminate(q, relation, adb, trace)
        elif options.get("project_private"):
            q, adb = project_private(q, relation, adb, trace)
        adb = full_reduce(q, adb, trace)
        q_r, db_r = extend_with_annotation_var(q, relation, adb, keep_annotations=True, trace=trace)
        return q_r, (q, q_r, db_r)
    raise ValueError(tag)


def _plan(tag, q, s, atom=None, options=None) -> Plan:
    trace = []
    final, _ = _pipeline(tag, q, _empty_db(q, s), atom, options, trace)
    relation = q.body[atom].relation if atom is not None else None
    return Plan(tag, atom, relation, trace, pretty_print(final), dict(options or {}))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def _local_atom(q: Query, profile: Profile):
    """Index of the annotated atom, ``"all"`` when every annotation is one, else ``None``."""
    if not profile.local:
        return None
    if profile.relation is None or profile.relation not in q.relations():
        return "all"
    uses = [i for i, a in enumerate(q.body) if a.relation == profile.relation]
    return uses[0] if len(uses) == 1 else None


def classify(q: Query, semiring: Semiring | None = None, profile: Profile | None = None,
             domain=None) -> Certificate:
    """Decide which direct-access pipeline (if any) serves ``q``."""
    validate_query(q)
    if q.is_acq:
        return _classify_acq(q, domain)
    s = semiring or Counting()
    if profile is None:
        profile = Profile.generic() if q.has_star else Profile.all_ones()
    return _classify_star(q, s, _local_atom(q, profile), q.is_self_join_free())


def _classify_acq(q: Query, domain) -> Certificate:
    sjf = q.is_self_join_free()
    if count_product_shape(q) is not None:
        return _tractable(q, Counting(), Plan(COUNT_PRODUCT, final_query=pretty_print(q)))
    aggs = q.aggregates
    base = q.with_head([e for e in q.head if isinstance(e, Var)])
    needs_domain = any(a.func == "CountD" for a in aggs) and domain is None
    if len(aggs) > 1:
        obstacle = structural_obstacle(base)
        if obstacle is not None:
            return _structural_verdict(q, None, obstacle, sjf)
        if needs_domain:
            return _unknown(q, None, "CountD needs a declared bounded domain")
        subs = [classify(sub, domain=domain) for sub in split_aggregates(q)]
        plan = Plan(MULTI, final_query=pretty_print(base),
                    options={"parts": [c.plan.to_json() for c in subs]})
        return _tractable(q, None, plan, tuple(domain) if domain else None)
    agg = aggs[0]
    if needs_domain:
        if q.star_last:
            obstacle = structural_obstacle(base)
            if obstacle is not None:
                return _structural_verdict(q, None, obstacle, sjf)
        if matches_countd_shape(q):
            return _intractable(q, None, COUNTD, "HSC", {"condition": "CountD without a bounded domain"},
                                "count-distinct over an unbounded domain")
        return _unknown(q, None, "CountD needs a declared bounded domain")
    q_star, s, rule = translate_acq(q, domain)
    local = rule.atom if rule.atom is not None else "all"
    cert = _classify_star(q_star, s, local, sjf, acq=True)
    cert.query = q
    cert.domain = tuple(domain) if domain is not None else None
    if cert.plan is not None and agg.func == "Avg" and cert.plan.tag == STAR_LAST:
        cert.plan.options["avg"] = "paired sum/count"
    return cert


def _classify_star(q: Query, s: Semiring, local, sjf: bool, acq: bool = False) -> Certificate:
    qn, _ = make_self_join_free(q, _empty_db(q, s))
    obstacle = structural_obstacle(qn)
    if q.star_last:
        if obstacle is None:
            return _tractable(q, s, _plan(STAR_LAST, qn, s), local=local)
        return _structural_verdict(q, s, obstacle, sjf)

    # (c) suffix block with a monotone product
    if obstacle is None and s.times_monotone and z_block_ok(qn):
        return _tractable(q, s, _plan(ZBLOCK, qn, s), local=local)

    candidates = [] if local is None else (list(range(len(qn.body))) if local == "all" else [local])
    fc = obstacle is None or isinstance(obstacle, TrioWitness)

    # (d) full query, annotation in one relation
    if candidates and qn.is_full:
        first = None
        for a in candidates:
            w = _deannotation_obstacle(deannotate(qn, qn.body[a].relation))
            if w is None:
                return _tractable(q, s, _plan(FULL_DEANNOTATE, qn, s, a), local=a)
            first = first or (a, w)
        return _local_verdict(q, s, sjf, LOCAL_FULL, first, qn)

    # (e) idempotent addition keeps the database locally annotated
    if candidates and s.plus_idempotent and fc:
        first = None
        for a in candidates:
            q_full, r2, _ = idempotent_eliminate(qn, qn.body[a].relation, _empty_db(qn, s))
            w = _deannotation_obstacle(deannotate(q_full, r2))
            if w is None:
                return _tractable(q, s, _plan(IDEMPOTENT_LOCAL, qn, s, a), local=a)
            first = first or (a, w)
        return _local_verdict(q, s, sjf, LOCAL_IDEMPOTENT, first, qn)

    # existentials private to the annotated atom can be summed out in place
    if isinstance(local, int) and fc:
        others = set().union(*(x.vars for i, x in enumerate(qn.body) if i != local))
        if not (qn.existential & others):
            relation = qn.body[local].relation
            q_p, _ = project_private(qn, relation, _empty_db(qn, s))
            w = _deannotation_obstacle(deannotate(q_p, relation))
            opts = {"project_private": True}
            if w is None:
                return _tractable(q, s, _plan(FULL_DEANNOTATE, qn, s, local, opts), local=local)
            return _local_verdict(q, s, sjf, LOCAL_FULL, (local, w), qn)

    # (f) arbitrary annotations with the value first
    if local is None and sjf and matches_star_first_shape(q) and s.kind in _NAMED_KINDS:
        return _intractable(q, s, STAR_FIRST, "3SUM", {"condition": "annotation-first order over a product"},
                            "ordering by the annotation first is 3SUM-hard")

    if obstacle is not None:
        return _structural_verdict(q, s, obstacle, sjf)
    return _unknown(q, s, "no positive or negative result applies to this order and annotation profile")


def _local_verdict(q, s, sjf, theorem, first, qn):
    atom, witness = first
    if not sjf:
        return _unknown(q, s, "self-joins present; hardness results assume self-join-free queries", witness)
    if not s.contains_naturals:
        return _unknown(q, s, f"{s.name} is finite; hardness needs unboundedly many values", witness)
    hyp = "HYPERCLIQUE" if isinstance(witness, CyclicWitness) else "SparseBMM"
    reason = f"deannotation at {qn.body[atom].relation} is not free of obstacles"
    return _intractable(q, s, theorem, hyp, witness, reason)


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


class Engine:
    """Uniform ``get``/``count`` over a prepared plan."""

    def __init__(self, cert: Certificate, count, get):
        self.certificate = cert
        self._count = count
        self._get = get

    def count(self) -> int:
        return self._count()

    def get(self, i: int):
        return self._get(i)

    def __iter__(self):
        for i in range(1, self.count() + 1):
            yield self.get(i)


def _acq_database(q_star: Query, s: Semiring, rule: AnnotationRule, agg: Agg, db: AnnotatedDatabase):
    """Normalize and annotate facts for a translated aggregate query."""
    tables = rule.alias({n: dict.fromkeys(t, s.one) for n, t in db.relations.items()})
    arities = rule.alias(db.arities)
    plain = AnnotatedDatabase(s, tables, arities)
    qn, adb = make_self_join_free(q_star, plain)
    if rule.atom is None:
        return qn, adb
    atom = qn.body[rule.atom]
    col = atom.terms.index(agg.arg)
    rels = dict(adb.relations)
    rels[atom.relation] = {f: s.from_constant(f[col]) for f in rels[atom.relation]}
    return qn, adb.with_relations(rels, adb.arities)


def _place(head, values_by_var, computed):
    out = []
    for e in head:
        out.append(values_by_var[e.name] if isinstance(e, Var) else computed)
    return tuple(out)


def prepare(cert: Certificate, db: AnnotatedDatabase, bigint: bool = False) -> Engine:
    """Build the structure behind a tractable certificate over ``db``."""
    if not cert.tractable:
        raise UsageError(f"cannot prepare a {cert.verdict} certificate")
    q = cert.query
    tag = cert.plan.tag
    if tag == COUNT_PRODUCT:
        cp = build_count_product(q, db)
        return Engine(cert, cp.count, cp.access)
    if tag == MULTI:
        return _prepare_multi(cert, db, bigint)
    if q.is_acq:
        agg = q.aggregates[0]
        if agg.func == "Avg" and tag == STAR_LAST:
            return _prepare_avg_pair(cert, db, bigint)
        q_star, s, rule = translate_acq(q, cert.domain)
        qn, adb = _acq_database(q_star, s, rule, agg, db)
        fin = lambda v: finalize(agg.func, s, v)
        return _prepare_star(cert, qn, adb, q.head, fin, lambda v: fin(v), bigint)
    s = db.semiring
    qn, adb = make_self_join_free(q, db)
    return _prepare_star(cert, qn, adb, q.head, lambda v: v, s.sort_key, bigint)


def _prepare_star(cert, qn, adb, head, fin, value_key, bigint):
    plan = cert.plan
    tag = plan.tag
    q_head = qn.head
    if tag == STAR_LAST:
        _, (q_full, adb2) = _pipeline(tag, qn, adb)
        index = build_lex(q_full, adb2, None, bigint)
        order = q_full.head_vars
        star = q_full.has_star

        def get(i):
            raw = index.access_raw(i)
            if raw is None:
                return None
            values, annot = raw
            return _place(head, dict(zip(order, values)), fin(annot) if star else None)
        return Engine(cert, index.count, get)
    if tag == ZBLOCK:
        _, (q_full, adb2) = _pipeline(tag, qn, adb)
        pair = MonotonePair(q_full, adb2, value_key, bigint)
        names = pair.x + ("*",) + pair.z

        def get(i):
            row = pair.access(i)
            if row is None:
                return None
            by = dict(zip(names, row))
            return _place(head, by, fin(by["*"]))
        return Engine(cert, pair.count, get)
    if tag in (FULL_DEANNOTATE, IDEMPOTENT_LOCAL):
        _, (q_loc, q_r, db_r) = _pipeline(tag, qn, adb, plan.atom, plan.options)
        y = next(v for v in q_r.head_vars if v not in q_loc.head_vars)
        index = build_lex(q_r, db_r, {y: value_key}, bigint)
        order = q_r.head_vars

        def get(i):
            raw = index.access_raw(i)
            if raw is None:
                return None
            values, annot = raw
            return _place(head, dict(zip(order, values)), fin(annot))
        return Engine(cert, index.count, get)
    raise UsageError(f"unknown plan {tag}")


def _prepare_avg_pair(cert, db, bigint):
    q = cert.query
    agg = q.aggregates[0]
    parts = []
    for func in ("Sum", "Count"):
        head = [Agg(func, agg.arg if func == "Sum" else None) if isinstance(e, Agg) else e for e in q.head]
        sub = q.with_head(head)
        c = classify(sub)
        parts.append(prepare(c, db, bigint))
    pos = q.star_position
    sums, counts = parts

    def get(i):
        a = sums.get(i)
        if a is None:
            return None
        b = counts.get(i)
        row = list(a)
        row[pos] = normalize(Fraction(a[pos]) / b[pos])
        return tuple(row)
    return Engine(cert, sums.count, get)


def _prepare_multi(cert, db, bigint):
    q = cert.query
    parts = [prepare(classify(sub, domain=cert.domain), db, bigint) for sub in split_aggregates(q)]
    agg_pos = [i for i, e in enumerate(q.head) if isinstance(e, Agg)]

    def get(i):
        rows = [p.get(i) for p in parts]
        if rows[0] is None:
            return None
        base = list(rows[0][:-1])
        out = []
        vals = iter(base)
        k = 0
        for j, e in enumerate(q.head):
            if isinstance(e, Agg):
                out.append(rows[k][-1])
                k += 1
            else:
                out.append(next(vals))
        return tuple(out)
    return Engine(cert, parts[0].count, get)
